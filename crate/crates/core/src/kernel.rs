//! Connectivity kernels on the circle.
//!
//! A profile `J̃` on ℝ supported in `[−1, 1]` is restricted to `[−τ, τ)`,
//! extended periodically, sampled on the grid and normalized so that its
//! discrete `L¹` norm is exactly one. Normalizing at the discrete level keeps
//! constants exact fixed points of `m ↦ J∗m`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::fft::Fft;
use crate::grid::{CircleGrid, GridFunction};
use crate::{Error, Result};

/// Relative tolerance of the evenness check.
pub const EVEN_TOL: f64 = 1e-12;

/// Shape of a connectivity profile on ℝ.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum KernelProfile {
    /// `e^{−1/(1−x²)}` on `|x| < 1`.
    Bump,
    /// `e^{−1/(1−(x/a)²)}` on `|x| < a`, `0 < a ≤ 1`.
    ScaledBump { a: f64 },
    /// Difference of unit-mass Gaussians `√(b₁/π)e^{−b₁x²} − ½√(b₂/π)e^{−b₂x²}`
    /// with `b₁ > b₂ > 0`, cut off at `|x| = 1`. Sign-indefinite, so it is
    /// not a member of the non-negative kernel class.
    TruncatedMexicanHat { b1: f64, b2: f64 },
    /// Piecewise-linear interpolation of `(x, value)` pairs, zero outside the
    /// table.
    Table { points: Vec<(f64, f64)> },
}

impl KernelProfile {
    pub fn name(&self) -> &'static str {
        match self {
            KernelProfile::Bump => "bump",
            KernelProfile::ScaledBump { .. } => "scaled_bump",
            KernelProfile::TruncatedMexicanHat { .. } => "truncated_mexican_hat",
            KernelProfile::Table { .. } => "table",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            KernelProfile::Bump => Ok(()),
            KernelProfile::ScaledBump { a } => {
                if *a > 0.0 && *a <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidKernel(format!(
                        "scaled_bump half-width must lie in (0, 1], got {a}"
                    )))
                }
            }
            KernelProfile::TruncatedMexicanHat { b1, b2 } => {
                if *b2 > 0.0 && b1 > b2 && b1.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidKernel(format!(
                        "mexican hat needs b1 > b2 > 0, got b1={b1}, b2={b2}"
                    )))
                }
            }
            KernelProfile::Table { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidKernel("table needs at least two rows".into()));
                }
                if points.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
                    return Err(Error::InvalidKernel(
                        "table contains non-finite entries".into(),
                    ));
                }
                if points.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidKernel(
                        "table abscissae must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Evaluates `J̃(x)` on ℝ (before normalization).
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            KernelProfile::Bump => bump(x),
            KernelProfile::ScaledBump { a } => bump(x / a),
            KernelProfile::TruncatedMexicanHat { b1, b2 } => {
                if x.abs() >= 1.0 {
                    0.0
                } else {
                    (b1 / PI).sqrt() * (-b1 * x * x).exp()
                        - 0.5 * (b2 / PI).sqrt() * (-b2 * x * x).exp()
                }
            }
            KernelProfile::Table { points } => interpolate(points, x),
        }
    }

    /// Whether the profile family is non-negative by construction.
    pub fn is_nonnegative_family(&self) -> bool {
        !matches!(self, KernelProfile::TruncatedMexicanHat { .. })
    }
}

fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x < first.0 || x > last.0 {
        return 0.0;
    }
    let idx = points.partition_point(|p| p.0 <= x);
    if idx == 0 {
        return first.1;
    }
    if idx == points.len() {
        return last.1;
    }
    let (x0, y0) = points[idx - 1];
    let (x1, y1) = points[idx];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Periodized, normalized kernel sampled on a grid.
#[derive(Debug, Clone)]
pub struct Kernel {
    grid: CircleGrid,
    profile: KernelProfile,
    /// `J(x_i)` indexed by grid position.
    samples: GridFunction,
    /// `J(d·Δ)` for signed offsets `d = 0..n` (first row of the circulant).
    offsets: Vec<f64>,
    linf: f64,
    fourier: Vec<f64>,
    multipliers: Option<Vec<Complex64>>,
    fft: Option<Fft>,
}

/// Class-membership diagnostics of a kernel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassReport {
    /// Largest `|J(x) − J(−x)|` over mirrored grid points.
    pub even_defect: f64,
    pub min_value: f64,
    /// Largest `|J(x_i)|` with `|x_i| > 1`.
    pub support_defect: f64,
    pub l1_norm: f64,
    pub fourier0: f64,
    pub even: bool,
    pub nonnegative: bool,
    pub supported: bool,
    pub normalized: bool,
}

impl ClassReport {
    pub fn in_class(&self) -> bool {
        self.even && self.nonnegative && self.supported && self.normalized
    }
}

impl Kernel {
    /// Samples and normalizes `profile` on `grid`.
    ///
    /// Rejects profiles that are not even on the grid, have support beyond
    /// `[−1, 1]`, or integrate to a non-positive value.
    pub fn new(profile: KernelProfile, grid: CircleGrid) -> Result<Self> {
        profile.validate()?;
        let n = grid.len();
        let raw: Vec<f64> = (0..n).map(|i| profile.eval(grid.point(i))).collect();
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let scale = raw.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::InvalidKernel("profile vanishes on the grid".into()));
        }
        let defect = even_defect(&raw, grid.origin_index());
        if defect > EVEN_TOL * scale {
            return Err(Error::InvalidKernel(format!(
                "profile is not even (defect {defect:e})"
            )));
        }
        let outside = support_defect(&raw, &grid);
        if outside > 0.0 {
            return Err(Error::InvalidKernel(format!(
                "profile is nonzero outside [-1, 1] (max {outside:e})"
            )));
        }
        let w = grid.weight();
        let signed: f64 = w * raw.iter().sum::<f64>();
        if signed <= 0.0 {
            return Err(Error::InvalidKernel(format!(
                "profile integrates to {signed:e} <= 0"
            )));
        }
        let l1: f64 = w * raw.iter().map(|v| v.abs()).sum::<f64>();
        let values: Vec<f64> = raw.iter().map(|v| v / l1).collect();
        let samples = GridFunction::new(grid, values)?;
        let origin = grid.origin_index();
        // position origin + d holds J(d·Δ) (indices wrap at the period)
        let offsets: Vec<f64> = (0..n).map(|d| samples.values()[(origin + d) % n]).collect();
        let linf = samples.linf_norm();
        let fourier = cosine_coefficients(&grid, &offsets);
        let (fft, multipliers) = if n.is_power_of_two() {
            let fft = Fft::new(n);
            let mut m = fft.forward_real(&offsets);
            for c in m.iter_mut() {
                *c *= w;
            }
            (Some(fft), Some(m))
        } else {
            (None, None)
        };
        Ok(Kernel {
            grid,
            profile,
            samples,
            offsets,
            linf,
            fourier,
            multipliers,
            fft,
        })
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    /// Kernel values indexed by grid position.
    pub fn samples(&self) -> &GridFunction {
        &self.samples
    }

    /// `J(d·Δ)` for `d = 0..n`, i.e. the first column of the convolution
    /// circulant.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn linf_norm(&self) -> f64 {
        self.linf
    }

    pub fn l1_norm(&self) -> f64 {
        self.samples.l1_norm()
    }

    /// Whether [`convolve`](Self::convolve) uses the FFT path.
    pub fn has_fast_path(&self) -> bool {
        self.multipliers.is_some()
    }

    /// `Ĵ_0 .. Ĵ_kmax` with `Ĵ_k = ∫ J(x) cos(πkx/τ) dx`; requires `kmax < n/2`.
    pub fn fourier_coefficients(&self, kmax: usize) -> Result<Vec<f64>> {
        if kmax >= self.grid.len() / 2 {
            return Err(Error::InvalidParameter(format!(
                "kmax = {kmax} must be below n/2 = {}",
                self.grid.len() / 2
            )));
        }
        Ok(self.fourier[..=kmax].to_vec())
    }

    /// `Ĵ_k` for any `0 ≤ k ≤ n/2`.
    pub fn fourier_coefficient(&self, k: usize) -> f64 {
        self.fourier[k.min(self.grid.len() / 2)]
    }

    /// All multipliers `Ĵ_0 .. Ĵ_{n/2}`.
    pub fn fourier_all(&self) -> &[f64] {
        &self.fourier
    }

    /// `(J∗m)(x_i) = Δ·Σ_j J(x_i − x_j)·m_j`.
    pub fn convolve(&self, m: &GridFunction) -> Result<GridFunction> {
        if self.has_fast_path() {
            self.convolve_fft(m)
        } else {
            self.convolve_direct(m)
        }
    }

    /// Direct O(n²) circular sum; the definition of the discrete convolution.
    pub fn convolve_direct(&self, m: &GridFunction) -> Result<GridFunction> {
        self.check_grid(m)?;
        let n = self.grid.len();
        let w = self.grid.weight();
        let mv = m.values();
        let values = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (j, &mj) in mv.iter().enumerate() {
                    acc += self.offsets[(i + n - j) % n] * mj;
                }
                w * acc
            })
            .collect();
        Ok(GridFunction::from_vec_unchecked(self.grid, values))
    }

    /// FFT convolution; falls back to the direct sum on non-power-of-two grids.
    pub fn convolve_fft(&self, m: &GridFunction) -> Result<GridFunction> {
        self.check_grid(m)?;
        let (Some(fft), Some(mult)) = (&self.fft, &self.multipliers) else {
            return self.convolve_direct(m);
        };
        let mut spectrum = fft.forward_real(m.values());
        for (c, k) in spectrum.iter_mut().zip(mult) {
            *c *= k;
        }
        debug_assert_eq!(fft.len(), m.len());
        Ok(GridFunction::from_vec_unchecked(
            self.grid,
            fft.inverse_real(spectrum),
        ))
    }

    /// Discrete `‖J₁ − J₂‖_{L¹}`.
    pub fn l1_distance(&self, other: &Kernel) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.samples.sub(&other.samples)?.l1_norm())
    }

    /// Evenness, sign, support and normalization diagnostics.
    pub fn class_report(&self) -> ClassReport {
        let values = self.samples.values();
        let scale = self.linf.max(f64::MIN_POSITIVE);
        let even_defect = even_defect(values, self.grid.origin_index());
        let min_value = self.samples.min();
        let support_defect = support_defect(values, &self.grid);
        let l1_norm = self.l1_norm();
        let fourier0 = self.fourier[0];
        ClassReport {
            even_defect,
            min_value,
            support_defect,
            l1_norm,
            fourier0,
            even: even_defect <= EVEN_TOL * scale,
            nonnegative: min_value >= 0.0,
            supported: support_defect == 0.0,
            normalized: (l1_norm - 1.0).abs() <= 1e-10,
        }
    }

    fn check_grid(&self, m: &GridFunction) -> Result<()> {
        if *m.grid() == self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

fn even_defect(values: &[f64], origin: usize) -> f64 {
    (1..origin)
        .map(|k| (values[origin + k] - values[origin - k]).abs())
        .fold(0.0, f64::max)
}

fn support_defect(values: &[f64], grid: &CircleGrid) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.point(*i).abs() > 1.0)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

fn cosine_coefficients(grid: &CircleGrid, offsets: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let w = grid.weight();
    (0..=n / 2)
        .map(|k| {
            w * offsets
                .iter()
                .enumerate()
                .map(|(d, &j)| {
                    let phase = ((k * d) % n) as f64 / n as f64;
                    j * (2.0 * PI * phase).cos()
                })
                .sum::<f64>()
        })
        .collect()
}

/// Human-readable description used in reports.
pub fn describe(profile: &KernelProfile) -> String {
    match profile {
        KernelProfile::Bump => "bump".into(),
        KernelProfile::ScaledBump { a } => format!("scaled_bump(a={a})"),
        KernelProfile::TruncatedMexicanHat { b1, b2 } => {
            format!("truncated_mexican_hat(b1={b1}, b2={b2})")
        }
        KernelProfile::Table { points } => format!("table({} rows)", points.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // ∫_{−1}^{1} e^{−1/(1−x²)} dx by adaptive Gauss-Kronrod (scipy quad, 1e−15)
    const BUMP_INTEGRAL: f64 = 0.443_993_816_168_079_37;

    fn grid(n: usize) -> CircleGrid {
        CircleGrid::new(1.2, n).unwrap()
    }

    #[test]
    fn bump_quadrature_matches_oracle() {
        let g = grid(1024);
        let raw = GridFunction::from_fn(g, |x| KernelProfile::Bump.eval(x)).unwrap();
        assert!((raw.integrate() - BUMP_INTEGRAL).abs() < 1e-12);
    }

    #[test]
    fn bump_sup_norm() {
        let k = Kernel::new(KernelProfile::Bump, grid(1024)).unwrap();
        let expected = (-1.0f64).exp() / BUMP_INTEGRAL;
        assert!((k.linf_norm() - expected).abs() < 1e-10);
        assert!((k.linf_norm() - 0.828_568_839_869_105_3).abs() < 1e-10);
    }

    #[test]
    fn normalization_and_symmetry() {
        for n in [64, 256, 1024] {
            let k = Kernel::new(KernelProfile::Bump, grid(n)).unwrap();
            let report = k.class_report();
            assert!(report.in_class(), "{report:?}");
            assert!((k.samples().integrate() - 1.0).abs() < 1e-10);
            assert!((k.fourier_coefficients(0).unwrap()[0] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn shifted_profile_is_rejected() {
        let points: Vec<(f64, f64)> = (0..=200)
            .map(|i| {
                let x = -1.0 + i as f64 * 0.01;
                (x, bump((x - 0.5) / 0.5))
            })
            .collect();
        let err = Kernel::new(KernelProfile::Table { points }, grid(256)).unwrap_err();
        assert!(matches!(err, Error::InvalidKernel(ref m) if m.contains("not even")));
    }

    #[test]
    fn wide_table_is_rejected() {
        let points = alloc::vec![(-1.15, 1.0), (0.0, 2.0), (1.15, 1.0)];
        assert!(Kernel::new(KernelProfile::Table { points }, grid(256)).is_err());
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(Kernel::new(KernelProfile::ScaledBump { a: 1.3 }, grid(64)).is_err());
        assert!(Kernel::new(KernelProfile::ScaledBump { a: 0.0 }, grid(64)).is_err());
        assert!(Kernel::new(
            KernelProfile::TruncatedMexicanHat { b1: 1.0, b2: 2.0 },
            grid(64)
        )
        .is_err());
        let negative = alloc::vec![(-0.5, 0.0), (0.0, -1.0), (0.5, 0.0)];
        assert!(Kernel::new(KernelProfile::Table { points: negative }, grid(64)).is_err());
    }

    #[test]
    fn mexican_hat_is_flagged() {
        let k = Kernel::new(
            KernelProfile::TruncatedMexicanHat { b1: 20.0, b2: 2.0 },
            grid(256),
        )
        .unwrap();
        let report = k.class_report();
        assert!(!report.nonnegative);
        assert!(!report.in_class());
        assert!(report.even);
        assert!((k.l1_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_are_fixed() {
        let k = Kernel::new(KernelProfile::Bump, grid(256)).unwrap();
        let c = GridFunction::constant(*k.grid(), 1.0);
        let out = k.convolve(&c).unwrap();
        assert!(out.sub(&c).unwrap().linf_norm() < 1e-13);
        let out = k.convolve_direct(&c.scale(-2.5)).unwrap();
        assert!(out.axpy(2.5, &c).unwrap().linf_norm() < 1e-13);
    }

    #[test]
    fn cosine_modes_are_eigenfunctions() {
        let g = grid(256);
        let k = Kernel::new(KernelProfile::Bump, g).unwrap();
        let coeffs = k.fourier_coefficients(8).unwrap();
        for (mode, jk) in coeffs.iter().enumerate() {
            let cos = GridFunction::from_fn(g, |x| (PI * mode as f64 * x / 1.2).cos()).unwrap();
            let out = k.convolve(&cos).unwrap();
            let err = out.axpy(-jk, &cos).unwrap().linf_norm();
            assert!(err <= 1e-10, "mode {mode}: {err:e}");
        }
    }

    #[test]
    fn fourier_coefficients_range() {
        let k = Kernel::new(KernelProfile::Bump, grid(256)).unwrap();
        assert!(k.fourier_coefficients(128).is_err());
        assert!(k.fourier_coefficients(127).is_ok());
    }

    #[test]
    fn non_power_of_two_uses_direct_path() {
        let g = CircleGrid::new(1.2, 96).unwrap();
        let k = Kernel::new(KernelProfile::Bump, g).unwrap();
        assert!(!k.has_fast_path());
        let m = GridFunction::from_fn(g, |x| (2.0 * x).sin()).unwrap();
        assert_eq!(k.convolve(&m).unwrap(), k.convolve_direct(&m).unwrap());
    }

    #[test]
    fn l1_distance_basics() {
        let g = grid(1024);
        let base = Kernel::new(KernelProfile::Bump, g).unwrap();
        assert_eq!(base.l1_distance(&base).unwrap(), 0.0);
        let other = Kernel::new(KernelProfile::Bump, grid(512)).unwrap();
        assert_eq!(base.l1_distance(&other), Err(Error::GridMismatch));
    }
}
