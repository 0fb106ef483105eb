//! Output files. Every file starts with the config fingerprint: a
//! `# config_fingerprint=` line for CSV and TOML, a `config_fingerprint`
//! field for JSON.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nflab_core::dynamics::StepDiagnostics;
use nflab_core::grid::GridFunction;
use serde::Serialize;

/// Floats are written with 17 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Output directory bound to a config fingerprint.
#[derive(Debug, Clone)]
pub struct Output {
    dir: PathBuf,
    fingerprint: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_fingerprint: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

impl Output {
    pub fn create(dir: &Path, fingerprint: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            fingerprint: fingerprint.to_string(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header(&self) -> String {
        format!("# config_fingerprint={}\n", self.fingerprint)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut file =
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        file.write_all(self.header().as_bytes())?;
        file.write_all(body.as_bytes())?;
        Ok(path)
    }

    pub fn csv<I>(&self, name: &str, columns: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(columns)?;
        for row in rows {
            writer.write_record(&row)?;
        }
        let bytes = writer.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.text(name, std::str::from_utf8(&bytes)?)
    }

    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let envelope = Envelope {
            config_fingerprint: &self.fingerprint,
            body,
        };
        let mut text = serde_json::to_string_pretty(&envelope)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// A state as `x,value` rows.
    pub fn state(&self, name: &str, u: &GridFunction) -> Result<PathBuf> {
        let g = u.grid();
        let rows = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| vec![fmt(g.point(i)), fmt(*v)]);
        self.csv(name, &["x", "value"], rows)
    }

    /// Trajectory diagnostics, one row per step.
    pub fn trajectory(&self, name: &str, diagnostics: &[StepDiagnostics]) -> Result<PathBuf> {
        let rows = diagnostics.iter().map(|d| {
            vec![
                fmt(d.t),
                fmt(d.l2_norm),
                fmt(d.lyapunov),
                fmt(d.min_u),
                fmt(d.max_u),
            ]
        });
        self.csv(name, &["t", "l2_norm", "lyapunov", "min_u", "max_u"], rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nflab_core::grid::CircleGrid;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        let x = 2.4885652156858526;
        assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn files_carry_the_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output::create(dir.path(), "abc").unwrap();
        let g = CircleGrid::new(1.2, 8).unwrap();
        let p = out.state("u.csv", &GridFunction::constant(g, 1.0)).unwrap();
        let text = fs::read_to_string(p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config_fingerprint=abc"));
        assert_eq!(lines.next(), Some("x,value"));
        assert_eq!(text.lines().count(), 10);

        let p = out
            .json("r.json", &serde_json::json!({"pass": true}))
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["config_fingerprint"], "abc");
        assert_eq!(v["pass"], true);
    }
}
