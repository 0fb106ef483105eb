//! Acceptance criteria 1 through 10, one pass/fail line each.

use std::f64::consts::LN_2;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nflab::commands::{sweep_report, tau_check};
use nflab::config::parse_str;
use nflab::runner::Pool;
use nflab_core::attractor::{semidistance, semidistance_pruned};
use nflab_core::dynamics::{simulate, FlowParams, Integrator};
use nflab_core::energy::{dissipation_check, lyapunov};
use nflab_core::equilibria::{
    analytic_constant_spectrum, constant_roots, newton_solve, rotation_orbit, solve_constant,
    spectrum, turing_scan, Equilibrium, EquilibriumKind, NewtonOptions, SpectrumOptions,
};
use nflab_core::firing::FiringRate;
use nflab_core::grid::{CircleGrid, GridFunction};
use nflab_core::kernel::{Kernel, KernelProfile};
use nflab_core::random::{rng_for, rough_state, smooth_state, state_in_ball, stream_id};
use rand::Rng;

/// Constant equilibrium at the defaults (bisection oracle).
const C_DEFAULT: f64 = 1.282_951_823_074_055_3;
/// `R = 2τ‖J‖∞S_max + h` at the defaults (quadrature oracle).
const R_DEFAULT: f64 = 2.488_565_215_685_852_6;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn params(n: usize, beta: f64, theta: f64, h: f64, dt: f64) -> FlowParams {
    let g = CircleGrid::new(1.2, n).unwrap();
    let k = Kernel::new(KernelProfile::Bump, g).unwrap();
    FlowParams::new(k, FiringRate::new(beta, theta).unwrap(), h, dt).unwrap()
}

fn defaults(n: usize, dt: f64) -> FlowParams {
    params(n, 1.0, 0.0, 0.5, dt)
}

fn gradient_structure() -> Verdict {
    let start = Instant::now();
    let p = defaults(256, 0.05);
    let g = *p.kernel().grid();
    let radius = p.absorbing_radius().l2;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for i in 0..100 {
        let mut rng = rng_for(1, stream_id(0, i));
        let u0 = state_in_ball(g, &mut rng, 12, radius);
        let traj = simulate(&p, &u0, 40.0, 100).unwrap();
        let report = dissipation_check(&traj, 1e-9);
        worst = worst.max(report.max_relative_increase);
        failures += usize::from(!report.pass);
    }
    let elapsed = start.elapsed();
    ensure(
        failures == 0 && elapsed <= Duration::from_secs(120),
        format!(
            "100 trajectories, worst relative step change {worst:.3e}, {failures} failures, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn absorbing_estimate() -> Verdict {
    let p = defaults(256, 0.05);
    let g = *p.kernel().grid();
    let radius = p.absorbing_radius();
    let r_ok = (radius.pointwise - R_DEFAULT).abs() <= 1e-12
        && (radius.l2 - R_DEFAULT * (2.4f64).sqrt()).abs() <= 1e-12;
    let mut margin = f64::INFINITY;
    for i in 0..50 {
        let mut rng = rng_for(2, stream_id(0, i));
        let u0 = state_in_ball(g, &mut rng, 12, 10.0 * radius.l2);
        let n0 = u0.l2_norm();
        let traj = simulate(&p, &u0, 20.0, 1).unwrap();
        for d in &traj.diagnostics {
            margin = margin.min((-d.t).exp() * n0 + radius.l2 - d.l2_norm);
        }
    }
    ensure(
        r_ok && margin >= -1e-6,
        format!(
            "R = {:.10}, R*sqrt(2 tau) = {:.10}, smallest margin to the bound {margin:.3e}",
            radius.pointwise, radius.l2
        ),
    )
}

fn analytic_spectrum() -> Verdict {
    let p = defaults(128, 0.05);
    let eq = solve_constant(&p).unwrap();
    let c = eq.state.values()[0];
    let dense = spectrum(&p, &eq.state, &SpectrumOptions::default()).unwrap();
    let analytic = analytic_constant_spectrum(&p, c);
    let diff = dense
        .eigenvalues
        .iter()
        .zip(&analytic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let leading = dense.leading();
    ensure(
        (c - C_DEFAULT).abs() <= 1e-12
            && (c - 1.28300).abs() <= 1e-4
            && dense.eigenvalues.len() == analytic.len()
            && diff <= 1e-8
            && leading <= -0.8,
        format!(
            "c = {c:.13}, max |dense - analytic| = {diff:.2e}, leading eigenvalue {leading:.6}"
        ),
    )
}

fn turing_params(n: usize, h: f64) -> FlowParams {
    params(n, 12.0, 1.0, h, 0.05)
}

fn nonconstant(n: usize, h: f64) -> Result<Equilibrium, String> {
    let p = turing_params(n, h);
    let roots = constant_roots(&p);
    for &c in &roots {
        let guess = GridFunction::from_fn(*p.kernel().grid(), |x| {
            c + 0.1 * (std::f64::consts::PI * x / 1.2).cos()
        })
        .unwrap();
        if let Some(eq) = newton_solve(&p, &guess, &NewtonOptions::default())
            .map_err(|e| e.to_string())?
            .converged()
        {
            if eq.kind == EquilibriumKind::Nonconstant {
                return Ok(eq);
            }
        }
    }
    Err(format!(
        "no nonconstant equilibrium from constants {roots:?}"
    ))
}

fn scanned_h() -> Result<f64, String> {
    let p = turing_params(256, 0.05);
    let point = turing_scan(&p, 1, 0.05, 0.05, 3.0, 0.0)
        .map_err(|e| e.to_string())?
        .ok_or("mode 1 never destabilizes")?;
    Ok(point.h)
}

fn zero_mode() -> Verdict {
    let h = scanned_h()?;
    let eq = nonconstant(512, h)?;
    let p = turing_params(512, h);
    let report = spectrum(&p, &eq.state, &SpectrumOptions::default()).map_err(|e| e.to_string())?;
    let zero = report.zero_index.map(|i| report.eigenvalues[i].abs());
    let alignment = report.eigvec_alignment.unwrap_or(f64::INFINITY);
    ensure(
        eq.residual <= 1e-10
            && zero.is_some_and(|z| z <= 1e-6)
            && alignment <= 1e-4
            && report.next_nearest >= 1e-3,
        format!(
            "h = {h}, residual {:.2e}, |lambda_0| = {:.2e}, alignment {alignment:.2e} rad, next |lambda| = {:.4}",
            eq.residual,
            zero.unwrap_or(f64::NAN),
            report.next_nearest
        ),
    )
}

fn rotation_curve() -> Verdict {
    let h = scanned_h()?;
    let eq = nonconstant(256, h)?;
    let p = turing_params(256, h);
    let orbit = rotation_orbit(&p, &eq).map_err(|e| e.to_string())?;
    let e0 = lyapunov(&p, &eq.state).unwrap();
    let max_residual = orbit.iter().map(|m| m.residual).fold(0.0, f64::max);
    let max_energy_gap = orbit
        .iter()
        .map(|m| (lyapunov(&p, &m.state).unwrap() - e0).abs())
        .fold(0.0, f64::max);
    let mut min_pair = f64::INFINITY;
    for i in 0..orbit.len() {
        for j in i + 1..orbit.len() {
            min_pair = min_pair.min(orbit[i].state.l2_distance(&orbit[j].state).unwrap());
        }
    }
    ensure(
        orbit.len() == 256 && max_residual <= 1e-10 && max_energy_gap <= 1e-10 && min_pair > 0.0,
        format!(
            "{} rotations, max residual {max_residual:.2e}, max energy gap {max_energy_gap:.2e}, min pairwise distance {min_pair:.3e}",
            orbit.len()
        ),
    )
}

fn equivariance() -> Verdict {
    let mut worst_step = 0.0f64;
    let mut worst_conv = 0.0f64;
    for n in [64usize, 256] {
        for integrator in [Integrator::Etd1, Integrator::Rk4] {
            let p = params(n, 12.0, 1.0, 0.35, 0.05).with_integrator(integrator);
            let g = *p.kernel().grid();
            for i in 0..3 {
                let mut rng = rng_for(6, stream_id(n as u32, i));
                let u = rough_state(g, &mut rng, 3.0);
                let step = p.step(&u).unwrap();
                let conv = p.kernel().convolve(&u).unwrap();
                for k in 0..n as i64 {
                    let r = u.rotate(k);
                    worst_step = worst_step.max(
                        p.step(&r)
                            .unwrap()
                            .sub(&step.rotate(k))
                            .unwrap()
                            .linf_norm(),
                    );
                    worst_conv = worst_conv.max(
                        p.kernel()
                            .convolve(&r)
                            .unwrap()
                            .sub(&conv.rotate(k))
                            .unwrap()
                            .linf_norm(),
                    );
                }
            }
        }
    }
    ensure(
        worst_step <= 1e-13 && worst_conv <= 1e-13,
        format!(
            "n in {{64, 256}}, all shifts: step {worst_step:.2e}, convolution {worst_conv:.2e}"
        ),
    )
}

fn lyapunov_integrand() -> Verdict {
    let f = FiringRate::new(1.0, 0.0).unwrap();
    let mut worst = 0.0f64;
    for i in 1..=99 {
        let s = i as f64 / 100.0;
        // Φ(1/2) = −ln 2, Φ′ = f⁻¹
        let quad =
            quadrature::double_exponential::integrate(|t| f.inverse(t).unwrap(), 0.5, s, 1e-14);
        let oracle = -LN_2 + quad.integral;
        let closed = s * s.ln() + (1.0 - s) * (1.0 - s).ln();
        let lib = f.primitive_of_inverse(s).unwrap();
        worst = worst.max((closed - oracle).abs()).max((lib - oracle).abs());
    }
    let sup = (0..=10_000)
        .map(|i| f.primitive_of_inverse(i as f64 / 10_000.0).unwrap().abs())
        .fold(0.0, f64::max);
    let bound = f.lyapunov_bound();
    ensure(
        worst <= 1e-10 && (sup - LN_2).abs() <= 1e-9 && (bound - LN_2).abs() <= 1e-9,
        format!("max |Phi - quadrature| over 99 points {worst:.2e}, sup |Phi| = {sup:.12} (ln 2 = {LN_2:.12})"),
    )
}

fn continuity_sweep() -> Verdict {
    let start = Instant::now();
    let cfg = "[grid]\nn = 128\n[firing]\nbeta = 12.0\ntheta = 1.0\n[dynamics]\nh = 0.35\n\
               [sweep]\nfamily = \"scaled_bump\"\nvalues = [0.90, 0.95, 0.99, 1.0]\n";
    let loaded = parse_str(cfg, std::path::Path::new(".")).map_err(|e| e.to_string())?;
    let pool = Pool::from_env().map_err(|e| e.to_string())?;
    let report = sweep_report(&loaded, &pool).map_err(|e| format!("{e:#}"))?;
    let elapsed = start.elapsed();
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "a={}: [{:.4}, {:.4}, {:.4}, {:.4}]",
                r.s, r.de_fwd, r.de_bwd, r.da_fwd, r.da_bwd
            )
        })
        .collect();
    ensure(
        report.skipped.is_empty()
            && report.rows.len() == 4
            && report.monotone.all()
            && report.final_within_floor(3.0)
            && elapsed <= Duration::from_secs(15 * 60),
        format!(
            "{}; floor {:.2e}; monotone {}; {:.0}s",
            rows.join(", "),
            report.sampling_floor,
            report.monotone.all(),
            elapsed.as_secs_f64()
        ),
    )
}

fn random_profile<R: Rng>(rng: &mut R) -> KernelProfile {
    match rng.random_range(0..3) {
        0 => KernelProfile::Bump,
        1 => KernelProfile::ScaledBump {
            a: rng.random_range(0.2..1.0),
        },
        _ => {
            let b2 = rng.random_range(1.0..6.0);
            KernelProfile::TruncatedMexicanHat { b1: 3.0 * b2, b2 }
        }
    }
}

fn oracle_equivalence() -> Verdict {
    let mut rng = rng_for(9, 0);
    let mut fft_worst = 0.0f64;
    for case in 0..20 {
        let n = [64usize, 128, 256, 512, 1024][case % 5];
        let g = CircleGrid::new(1.2, n).unwrap();
        let k = Kernel::new(random_profile(&mut rng), g).unwrap();
        let u = rough_state(g, &mut rng, 5.0);
        let fast = k.convolve_fft(&u).unwrap();
        let direct = k.convolve_direct(&u).unwrap();
        fft_worst = fft_worst.max(fast.sub(&direct).unwrap().linf_norm() / direct.linf_norm());
    }
    let mut identical = 0;
    for _ in 0..20 {
        let g = CircleGrid::new(1.2, 32).unwrap();
        let na = rng.random_range(1..60);
        let nb = rng.random_range(1..60);
        let a: Vec<GridFunction> = (0..na).map(|_| smooth_state(g, &mut rng, 6, 2.0)).collect();
        let b: Vec<GridFunction> = (0..nb).map(|_| smooth_state(g, &mut rng, 6, 2.0)).collect();
        let brute = semidistance(&a, &b).unwrap();
        let fast = semidistance_pruned(&a, &b).unwrap();
        identical += usize::from(brute.to_bits() == fast.to_bits());
    }
    let p = defaults(256, 0.01);
    let q = p.clone().with_integrator(Integrator::Rk4);
    let mut ode_worst = 0.0f64;
    let mut transient = 0.0f64;
    for i in 0..5 {
        let mut rng = rng_for(10, i);
        let u0 = smooth_state(*p.kernel().grid(), &mut rng, 8, 2.0);
        let a = simulate(&p, &u0, 10.0, 1).unwrap();
        let b = simulate(&q, &u0, 10.0, 1).unwrap();
        ode_worst = ode_worst.max(a.final_state().sub(b.final_state()).unwrap().linf_norm());
        for (x, y) in a.states.iter().zip(&b.states) {
            transient = transient.max(x.sub(y).unwrap().linf_norm());
        }
    }
    ensure(
        fft_worst <= 1e-12 && identical == 20 && ode_worst <= 1e-4,
        format!(
            "fft vs direct {fft_worst:.2e} relative, semidistance bit-identical {identical}/20, ETD1 vs RK4 at T = 10 {ode_worst:.2e} (largest along the way {transient:.2e})"
        ),
    )
}

fn hypothesis_gate() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let output = Command::new(env!("CARGO_BIN_EXE_nflab"))
        .args(["check-hypotheses", "--out"])
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    let text =
        std::fs::read_to_string(dir.path().join("hypotheses.json")).map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let checks = report["checks"].as_array().ok_or("no checks")?;
    let passing = |prefix: &str| {
        let matching: Vec<_> = checks
            .iter()
            .filter(|c| c["hypothesis"].as_str().unwrap_or("").starts_with(prefix))
            .collect();
        !matching.is_empty() && matching.iter().all(|c| c["pass"] == true)
    };
    let groups = ["H1", "H2", "H4", "J (bump)", "tau"];
    let all = groups.iter().all(|g| passing(g));
    let tau = tau_check(1.2);
    ensure(
        output.status.success() && report["all_pass"] == true && all && tau.pass,
        format!(
            "exit {:?}, {} checks, groups {groups:?} pass, 2 tau / e = {:.4}",
            output.status.code(),
            checks.len(),
            tau.measured
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient structure", gradient_structure),
        ("absorbing estimate", absorbing_estimate),
        ("analytic spectrum oracle", analytic_spectrum),
        ("zero-mode simplicity", zero_mode),
        ("rotation-curve structure", rotation_curve),
        ("exact equivariance", equivariance),
        ("Lyapunov-integrand oracle", lyapunov_integrand),
        ("continuity sweep", continuity_sweep),
        ("oracle equivalence", oracle_equivalence),
        ("hypothesis gate", hypothesis_gate),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let verdict =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        match verdict {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
