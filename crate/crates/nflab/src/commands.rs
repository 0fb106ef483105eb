//! Command implementations. Each command writes its artifacts into the
//! output directory and reports invariant violations and warnings.

use std::collections::BTreeMap;
use std::f64::consts::E;

use anyhow::{Context, Result};
use nflab_core::attractor::{
    continuity_sweep_with, equilibrium_energy_range, sample_attractor_with, sample_energies,
    ContinuityReport, ParamsFingerprint, PointSource, SweepMember, SweepSpec,
};
use nflab_core::dynamics::{simulate, FlowParams, Trajectory};
use nflab_core::energy::{self, dissipation_check};
use nflab_core::equilibria::{self, analytic_constant_spectrum, EquilibriumKind, EquilibriumSet};
use nflab_core::firing::{check_hypotheses, reference_checks, HypothesisCheck, SampleSpec};
use nflab_core::grid::GridFunction;
use nflab_core::kernel::{self, ClassReport, KernelProfile};
use nflab_core::random::{rng_for, state_in_ball, stream_id};
use serde::Serialize;

use crate::config::Loaded;
use crate::io::{fmt, Output};
use crate::runner::Pool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Equilibria,
    Spectrum,
    Lyapunov,
    Attractor,
    Sweep,
    CheckHypotheses,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibria => "equilibria",
            Command::Spectrum => "spectrum",
            Command::Lyapunov => "lyapunov",
            Command::Attractor => "attractor",
            Command::Sweep => "sweep",
            Command::CheckHypotheses => "check-hypotheses",
        }
    }
}

/// Result of a command: hard-invariant violations fail the run, warnings
/// do not.
#[derive(Debug, Default, Clone)]
pub struct Outcome {
    pub summary: String,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn run(command: Command, loaded: &Loaded, out: &Output, pool: &Pool) -> Result<Outcome> {
    out.text("effective_config.toml", &loaded.effective_toml())?;
    let p = loaded.params()?;
    let outcome = match command {
        Command::Simulate => simulate_cmd(loaded, &p, out, pool),
        Command::Lyapunov => lyapunov_cmd(loaded, &p, out, pool),
        Command::Equilibria => equilibria_cmd(loaded, &p, out),
        Command::Spectrum => spectrum_cmd(loaded, &p, out),
        Command::Attractor => attractor_cmd(loaded, &p, out, pool),
        Command::Sweep => sweep_cmd(loaded, out, pool),
        Command::CheckHypotheses => hypotheses_cmd(loaded, &p, out),
    };
    outcome.with_context(|| format!("{} failed", command.name()))
}

/// Seeded initial conditions inside `ic_radius` times the absorbing ball.
pub fn initial_conditions(loaded: &Loaded, p: &FlowParams) -> Vec<GridFunction> {
    let sim = &loaded.config.sim;
    let radius = sim.ic_radius * p.absorbing_radius().l2;
    let grid = *p.kernel().grid();
    (0..sim.n_ic as u32)
        .map(|i| {
            let mut rng = rng_for(sim.seed, stream_id(0, i));
            state_in_ball(grid, &mut rng, sim.ic_modes, radius)
        })
        .collect()
}

#[derive(Serialize)]
struct TrajectorySummary {
    index: usize,
    initial_l2: f64,
    final_l2: f64,
    energy_min: f64,
    energy_max: f64,
    max_increase: f64,
    max_relative_increase: f64,
    energy_pass: bool,
    /// Largest `‖u(t)‖ − (e^{−t}‖u₀‖ + R√(2τ))`.
    absorbing_excess: f64,
    absorbing_pass: bool,
}

fn summarize(
    loaded: &Loaded,
    p: &FlowParams,
    index: usize,
    traj: &Trajectory,
) -> TrajectorySummary {
    let tol = &loaded.config.tolerances;
    let report = dissipation_check(traj, tol.energy_tol);
    let n0 = traj.diagnostics[0].l2_norm;
    let r = p.absorbing_radius().l2;
    let excess = traj
        .diagnostics
        .iter()
        .map(|d| d.l2_norm - ((-d.t).exp() * n0 + r))
        .fold(f64::NEG_INFINITY, f64::max);
    TrajectorySummary {
        index,
        initial_l2: n0,
        final_l2: traj.diagnostics.last().map_or(n0, |d| d.l2_norm),
        energy_min: report.min,
        energy_max: report.max,
        max_increase: report.max_increase,
        max_relative_increase: report.max_relative_increase,
        energy_pass: report.pass,
        absorbing_excess: excess,
        absorbing_pass: excess <= tol.ball_tol,
    }
}

fn trajectories(loaded: &Loaded, p: &FlowParams, pool: &Pool) -> Result<Vec<Trajectory>> {
    let sim = &loaded.config.sim;
    let ics = initial_conditions(loaded, p);
    pool.map(&ics, |u0| simulate(p, u0, sim.t_end, sim.stride))
        .into_iter()
        .collect::<nflab_core::Result<Vec<_>>>()
        .map_err(Into::into)
}

fn trajectory_violations(summaries: &[TrajectorySummary], outcome: &mut Outcome) {
    for s in summaries {
        if !s.energy_pass {
            outcome.violations.push(format!(
                "trajectory {}: Lyapunov functional increased by {:e} (relative)",
                s.index, s.max_relative_increase
            ));
        }
        if !s.absorbing_pass {
            outcome.violations.push(format!(
                "trajectory {}: absorbing estimate exceeded by {:e}",
                s.index, s.absorbing_excess
            ));
        }
    }
}

fn simulate_cmd(loaded: &Loaded, p: &FlowParams, out: &Output, pool: &Pool) -> Result<Outcome> {
    let trajs = trajectories(loaded, p, pool)?;
    let width = digits(trajs.len());
    let mut summaries = Vec::new();
    for (i, traj) in trajs.iter().enumerate() {
        out.trajectory(&format!("trajectory_{i:0width$}.csv"), &traj.diagnostics)?;
        if loaded.config.sim.snapshots {
            for (t, u) in traj.times.iter().zip(&traj.states) {
                out.state(&format!("states_{i:0width$}/state_{t:.4}.csv"), u)?;
            }
        }
        summaries.push(summarize(loaded, p, i, traj));
    }
    #[derive(Serialize)]
    struct Report<'a> {
        absorbing_radius: nflab_core::dynamics::AbsorbingRadius,
        trajectories: &'a [TrajectorySummary],
    }
    out.json(
        "simulate.json",
        &Report {
            absorbing_radius: p.absorbing_radius(),
            trajectories: &summaries,
        },
    )?;
    let mut outcome = Outcome {
        summary: format!(
            "{} trajectories to T = {}",
            trajs.len(),
            loaded.config.sim.t_end
        ),
        ..Outcome::default()
    };
    trajectory_violations(&summaries, &mut outcome);
    Ok(outcome)
}

fn lyapunov_cmd(loaded: &Loaded, p: &FlowParams, out: &Output, pool: &Pool) -> Result<Outcome> {
    let trajs = trajectories(loaded, p, pool)?;
    let summaries: Vec<TrajectorySummary> = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| summarize(loaded, p, i, t))
        .collect();
    let lower = energy::lower_bound(p);
    let min = summaries
        .iter()
        .map(|s| s.energy_min)
        .fold(f64::INFINITY, f64::min);
    let rows = trajs.iter().enumerate().flat_map(|(i, traj)| {
        traj.diagnostics
            .iter()
            .map(move |d| vec![i.to_string(), fmt(d.t), fmt(d.lyapunov)])
    });
    out.csv("lyapunov.csv", &["ic", "t", "lyapunov"], rows)?;
    #[derive(Serialize)]
    struct Report<'a> {
        lower_bound: f64,
        integrand_bound: f64,
        min: f64,
        pass: bool,
        trajectories: &'a [TrajectorySummary],
    }
    let mut outcome = Outcome {
        summary: format!(
            "{} trajectories, min F = {min:.6}, lower bound {lower:.6}",
            trajs.len()
        ),
        ..Outcome::default()
    };
    for s in &summaries {
        if !s.energy_pass {
            outcome.violations.push(format!(
                "trajectory {}: Lyapunov functional increased by {:e} (relative)",
                s.index, s.max_relative_increase
            ));
        }
    }
    if min < lower - loaded.config.tolerances.energy_tol * (1.0 + lower.abs()) {
        outcome.violations.push(format!(
            "Lyapunov functional {min} fell below its lower bound {lower}"
        ));
    }
    out.json(
        "lyapunov.json",
        &Report {
            lower_bound: lower,
            integrand_bound: p.firing().lyapunov_bound(),
            min,
            pass: outcome.ok(),
            trajectories: &summaries,
        },
    )?;
    Ok(outcome)
}

#[derive(Serialize)]
struct OrbitRecord {
    orbit_id: usize,
    kind: &'static str,
    residual: f64,
    lyapunov_value: f64,
    mean: f64,
    spread: f64,
    eigenvalues: Vec<f64>,
    zero_is_simple: bool,
    hyperbolic: bool,
    unstable_count: usize,
    nearest_zero: f64,
    next_nearest: f64,
    eigvec_alignment: Option<f64>,
    newton_iterations: usize,
}

fn kind_name(kind: EquilibriumKind) -> &'static str {
    match kind {
        EquilibriumKind::Constant => "constant",
        EquilibriumKind::Nonconstant => "nonconstant",
    }
}

fn orbit_records(loaded: &Loaded, set: &EquilibriumSet) -> Vec<OrbitRecord> {
    let kmax = loaded.config.equilibria.kmax;
    set.orbits
        .iter()
        .map(|o| {
            let eq = &o.equilibrium;
            let s = &o.spectrum;
            OrbitRecord {
                orbit_id: eq.orbit_id,
                kind: kind_name(eq.kind),
                residual: eq.residual,
                lyapunov_value: o.lyapunov,
                mean: eq.state.integrate() / eq.state.grid().measure(),
                spread: eq.state.spread(),
                eigenvalues: s.eigenvalues.iter().take(kmax).copied().collect(),
                zero_is_simple: s.zero_is_simple,
                hyperbolic: s.hyperbolic,
                unstable_count: s.unstable_count(),
                nearest_zero: s.nearest_zero,
                next_nearest: s.next_nearest,
                eigvec_alignment: s.eigvec_alignment,
                newton_iterations: eq.iterations,
            }
        })
        .collect()
}

fn equilibria_cmd(loaded: &Loaded, p: &FlowParams, out: &Output) -> Result<Outcome> {
    let set = equilibria::find_equilibria(p, &loaded.multistart(), &[])?;
    let records = orbit_records(loaded, &set);
    for (i, o) in set.orbits.iter().enumerate() {
        out.state(&format!("equilibrium_{i}.csv"), &o.equilibrium.state)?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        seeds_tried: usize,
        converged: usize,
        orbits: &'a [OrbitRecord],
    }
    out.json(
        "equilibria.json",
        &Report {
            seeds_tried: set.seeds_tried,
            converged: set.converged,
            orbits: &records,
        },
    )?;
    let mut outcome = Outcome {
        summary: format!(
            "{} orbits ({} nonconstant) from {} seeds",
            set.orbits.len(),
            set.nonconstant().count(),
            set.seeds_tried
        ),
        ..Outcome::default()
    };
    if set.converged < set.seeds_tried {
        outcome.warnings.push(format!(
            "{} of {} Newton starts did not converge",
            set.seeds_tried - set.converged,
            set.seeds_tried
        ));
    }
    for o in set.nonconstant() {
        if !o.spectrum.zero_is_simple {
            outcome.warnings.push(format!(
                "orbit {}: zero eigenvalue is not simple (nearest {:e}, next {:e})",
                o.equilibrium.orbit_id, o.spectrum.nearest_zero, o.spectrum.next_nearest
            ));
        }
    }
    Ok(outcome)
}

fn spectrum_cmd(loaded: &Loaded, p: &FlowParams, out: &Output) -> Result<Outcome> {
    #[derive(Serialize)]
    struct ConstantSpectrum {
        c: f64,
        residual: f64,
        leading: f64,
        hyperbolic: bool,
        unstable_count: usize,
        max_abs_diff: f64,
        pass: bool,
        eigenvalues: Vec<f64>,
    }
    let tol = loaded.config.tolerances.spectrum_tol;
    let kmax = loaded.config.equilibria.kmax;
    let mut records = Vec::new();
    let mut outcome = Outcome::default();
    for (i, eq) in equilibria::constant_equilibria(p)?.into_iter().enumerate() {
        let c = eq.state.values()[0];
        let dense = equilibria::spectrum(p, &eq.state, &loaded.spectrum_options())?;
        let analytic = analytic_constant_spectrum(p, c);
        let diff = dense
            .eigenvalues
            .iter()
            .zip(&analytic)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let rows = dense
            .eigenvalues
            .iter()
            .zip(&analytic)
            .enumerate()
            .map(|(k, (a, b))| vec![k.to_string(), fmt(*a), fmt(*b)]);
        out.csv(
            &format!("spectrum_{i}.csv"),
            &["index", "dense", "analytic"],
            rows,
        )?;
        if diff > tol {
            outcome.violations.push(format!(
                "constant {c}: dense and analytic spectra differ by {diff:e}"
            ));
        }
        records.push(ConstantSpectrum {
            c,
            residual: eq.residual,
            leading: dense.leading(),
            hyperbolic: dense.hyperbolic,
            unstable_count: dense.unstable_count(),
            max_abs_diff: diff,
            pass: diff <= tol,
            eigenvalues: dense.eigenvalues.iter().take(kmax).copied().collect(),
        });
    }
    outcome.summary = format!(
        "{} constant equilibria, leading eigenvalues {:?}",
        records.len(),
        records.iter().map(|r| r.leading).collect::<Vec<_>>()
    );
    #[derive(Serialize)]
    struct Report<'a> {
        tolerance: f64,
        constants: &'a [ConstantSpectrum],
    }
    out.json(
        "spectrum.json",
        &Report {
            tolerance: tol,
            constants: &records,
        },
    )?;
    Ok(outcome)
}

fn source_name(source: &PointSource) -> &'static str {
    match source {
        PointSource::TrajectoryTail { .. } => "trajectory_tail",
        PointSource::UnstableTrace { .. } => "unstable_trace",
        PointSource::ConnectionTrace { .. } => "connection_trace",
        PointSource::Equilibrium { .. } => "equilibrium",
    }
}

fn attractor_cmd(loaded: &Loaded, p: &FlowParams, out: &Output, pool: &Pool) -> Result<Outcome> {
    let set = equilibria::find_equilibria(p, &loaded.multistart(), &[])?;
    let spec = loaded.attractor();
    let sample = sample_attractor_with(p, &set, &spec, 0, pool)?;
    let energies = sample_energies(p, &sample)?;
    let (lo, hi) = equilibrium_energy_range(&set);
    let tol = loaded.config.tolerances.energy_tol;
    let slack = |x: f64| tol * (1.0 + x.abs());
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let e_max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let energy_pass = e_min >= lo - slack(lo) && e_max <= hi + slack(hi);
    let max_norm = sample.max_norm();
    let ball_pass = sample.discarded == 0;

    let mut sources: BTreeMap<&'static str, usize> = BTreeMap::new();
    for pt in &sample.points {
        *sources.entry(source_name(&pt.source)).or_default() += 1;
    }
    let rows = sample
        .points
        .iter()
        .zip(&energies)
        .enumerate()
        .map(|(i, (pt, e))| {
            vec![
                i.to_string(),
                source_name(&pt.source).to_string(),
                fmt(pt.state.l2_norm()),
                fmt(*e),
            ]
        });
    out.csv(
        "attractor_samples.csv",
        &["index", "source", "l2_norm", "lyapunov"],
        rows,
    )?;
    if loaded.config.attractor.dump_points {
        let width = digits(sample.len());
        for (i, pt) in sample.points.iter().enumerate() {
            out.state(
                &format!("attractor_points/point_{i:0width$}.csv"),
                &pt.state,
            )?;
        }
    }
    #[derive(Serialize)]
    struct Report<'a> {
        params: ParamsFingerprint,
        points: usize,
        discarded: usize,
        radius: f64,
        max_norm: f64,
        ball_pass: bool,
        equilibrium_energy_range: (f64, f64),
        energy_min: f64,
        energy_max: f64,
        energy_pass: bool,
        sources: &'a BTreeMap<&'static str, usize>,
        orbits: Vec<OrbitRecord>,
    }
    out.json(
        "attractor.json",
        &Report {
            params: sample.fingerprint.clone(),
            points: sample.len(),
            discarded: sample.discarded,
            radius: sample.radius,
            max_norm,
            ball_pass,
            equilibrium_energy_range: (lo, hi),
            energy_min: e_min,
            energy_max: e_max,
            energy_pass,
            sources: &sources,
            orbits: orbit_records(loaded, &set),
        },
    )?;
    let mut outcome = Outcome {
        summary: format!(
            "{} sample points from {} orbits, max norm {max_norm:.6} (ball {:.6})",
            sample.len(),
            set.orbits.len(),
            sample.radius
        ),
        ..Outcome::default()
    };
    if !ball_pass {
        outcome.violations.push(format!(
            "{} sample points left the absorbing ball",
            sample.discarded
        ));
    }
    if !energy_pass {
        outcome.violations.push(format!(
            "sample energies [{e_min}, {e_max}] exceed the equilibrium range [{lo}, {hi}]"
        ));
    }
    Ok(outcome)
}

/// Sweep family in configured order; the last member is the reference.
pub fn sweep_family(loaded: &Loaded) -> Vec<SweepMember> {
    loaded
        .config
        .sweep
        .values
        .iter()
        .map(|&a| SweepMember {
            s: a,
            profile: KernelProfile::ScaledBump { a },
        })
        .collect()
}

pub fn sweep_report(loaded: &Loaded, pool: &Pool) -> Result<ContinuityReport> {
    let family = sweep_family(loaded);
    let reference = family.last().expect("validated non-empty").profile.clone();
    let base = loaded.params_with(reference)?;
    let spec = SweepSpec {
        attractor: loaded.attractor(),
        multistart: loaded.multistart(),
    };
    Ok(continuity_sweep_with(&base, &family, &spec, pool)?)
}

fn sweep_cmd(loaded: &Loaded, out: &Output, pool: &Pool) -> Result<Outcome> {
    let report = sweep_report(loaded, pool)?;
    let rows = report.rows.iter().map(|r| {
        vec![
            fmt(r.s),
            fmt(r.l1_dist),
            fmt(r.de_fwd),
            fmt(r.de_bwd),
            fmt(r.da_fwd),
            fmt(r.da_bwd),
            r.n_orbits_found.to_string(),
        ]
    });
    out.csv(
        "sweep.csv",
        &[
            "s",
            "l1_dist",
            "dE_fwd",
            "dE_bwd",
            "dA_fwd",
            "dA_bwd",
            "n_orbits_found",
        ],
        rows,
    )?;
    let within_floor = report.final_within_floor(3.0);
    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        report: &'a ContinuityReport,
        final_within_3x_floor: bool,
    }
    out.json(
        "sweep.json",
        &Report {
            report: &report,
            final_within_3x_floor: within_floor,
        },
    )?;
    let mut outcome = Outcome {
        summary: format!(
            "{} members, {} skipped, sampling floor {:e}",
            report.rows.len(),
            report.skipped.len(),
            report.sampling_floor
        ),
        ..Outcome::default()
    };
    for s in &report.skipped {
        outcome
            .warnings
            .push(format!("member s = {} skipped: {}", s.s, s.reason));
    }
    if !report.monotone.all() {
        outcome.warnings.push(format!(
            "distances are not monotone in s: {:?}",
            report.monotone
        ));
    }
    if !within_floor {
        outcome
            .warnings
            .push("reference row exceeds three times the sampling floor".into());
    }
    Ok(outcome)
}

/// Kernel class checks in the same shape as the firing-rate checks.
pub fn kernel_checks(report: &ClassReport, profile: &KernelProfile) -> Vec<HypothesisCheck> {
    let check =
        |name: &str, pass: bool, measured: f64, bound: f64, tolerance: f64| HypothesisCheck {
            hypothesis: format!("J ({}): {name}", kernel::describe(profile)),
            pass,
            measured,
            bound,
            tolerance,
        };
    vec![
        check(
            "even",
            report.even,
            report.even_defect,
            0.0,
            kernel::EVEN_TOL,
        ),
        check(
            "nonnegative",
            report.nonnegative,
            report.min_value,
            0.0,
            0.0,
        ),
        check(
            "supported in [-1, 1]",
            report.supported,
            report.support_defect,
            0.0,
            0.0,
        ),
        check(
            "unit L1 norm",
            report.normalized,
            report.l1_norm,
            1.0,
            1e-10,
        ),
    ]
}

/// `2τ/e < 1`.
pub fn tau_check(tau: f64) -> HypothesisCheck {
    let measured = 2.0 * tau / E;
    HypothesisCheck {
        hypothesis: "tau: 2 tau / e < 1".into(),
        pass: measured < 1.0,
        measured,
        bound: 1.0,
        tolerance: 0.0,
    }
}

fn hypotheses_cmd(loaded: &Loaded, p: &FlowParams, out: &Output) -> Result<Outcome> {
    let sample = SampleSpec {
        seed: loaded.config.sim.seed,
        ..SampleSpec::default()
    };
    let firing = check_hypotheses(p.firing(), &sample);
    let mut checks = firing.checks.clone();
    checks.extend(reference_checks(p.firing(), &firing));
    let class = p.kernel().class_report();
    checks.extend(kernel_checks(&class, p.kernel().profile()));
    checks.push(tau_check(p.kernel().grid().tau()));
    let all_pass = checks.iter().all(|c| c.pass);
    #[derive(Serialize)]
    struct Report<'a> {
        all_pass: bool,
        checks: &'a [HypothesisCheck],
        kernel: &'a ClassReport,
        samples: usize,
        sup_derivative: f64,
        sup_second_derivative: f64,
        sup_primitive: f64,
    }
    out.json(
        "hypotheses.json",
        &Report {
            all_pass,
            checks: &checks,
            kernel: &class,
            samples: firing.samples,
            sup_derivative: firing.sup_derivative,
            sup_second_derivative: firing.sup_second_derivative,
            sup_primitive: firing.sup_primitive,
        },
    )?;
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| {
            format!(
                "{} failed (measured {}, bound {})",
                c.hypothesis, c.measured, c.bound
            )
        })
        .collect();
    Ok(Outcome {
        summary: format!(
            "{} of {} checks pass",
            checks.len() - failed.len(),
            checks.len()
        ),
        violations: failed,
        warnings: Vec::new(),
    })
}

fn digits(count: usize) -> usize {
    count.saturating_sub(1).max(1).to_string().len()
}
