//! Attractor sampling, Hausdorff semidistances and continuity sweeps in `J`.
//!
//! A sample pools three kinds of states: tails of trajectories started in
//! the absorbing ball, traces of unstable manifolds of the found equilibria,
//! and connection traces. A connection trace follows the boundary between
//! two basins inside a plane of unstable directions (edge tracking by
//! repeated bisection); it runs into the saddle that separates them, which
//! plain eigenvector traces miss.
//!
//! Sampling is split into independent [`SampleJob`]s. A [`JobMap`] decides
//! how they run; results are always assembled in job order, so the sample
//! does not depend on scheduling.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::FlowParams;
use crate::energy;
use crate::equilibria::{self, EquilibriumSet, MultistartSpec};
use crate::fft::Fft;
use crate::grid::{l2_distance_raw, CircleGrid, GridFunction};
use crate::kernel::{describe, Kernel, KernelProfile};
use crate::random::{rng_for, state_in_ball, stream_id};
use crate::{Error, Result};

fn common_grid(a: &[GridFunction], b: &[GridFunction]) -> Result<CircleGrid> {
    let first = a.first().ok_or(Error::EmptySet)?;
    if b.is_empty() {
        return Err(Error::EmptySet);
    }
    let grid = *first.grid();
    if a.iter().chain(b).any(|u| *u.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    Ok(grid)
}

/// `max_{x∈A} min_{y∈B} ‖x − y‖_{L²}` by the direct double loop.
pub fn semidistance(a: &[GridFunction], b: &[GridFunction]) -> Result<f64> {
    let w = common_grid(a, b)?.weight();
    let mut worst = 0.0f64;
    for x in a {
        let mut best = f64::INFINITY;
        for y in b {
            let d = l2_distance_raw(w, x.values(), y.values());
            if d < best {
                best = d;
            }
        }
        if best > worst {
            worst = best;
        }
    }
    Ok(worst)
}

/// Same value as [`semidistance`], bit for bit, with pruning: partial sums
/// are abandoned once they exceed the best candidate, norm differences rule
/// out far points, and a row stops as soon as it cannot raise the maximum.
pub fn semidistance_pruned(a: &[GridFunction], b: &[GridFunction]) -> Result<f64> {
    let w = common_grid(a, b)?.weight();
    let norm = |u: &GridFunction| u.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let b_norms: Vec<f64> = b.iter().map(norm).collect();
    let mut worst_sq = 0.0f64;
    let mut hint = 0usize;
    for x in a {
        let xv = x.values();
        let x_norm = norm(x);
        let mut best_sq = f64::INFINITY;
        let first = hint;
        let order = core::iter::once(first).chain((0..b.len()).filter(move |&j| j != first));
        for j in order {
            let gap = (x_norm - b_norms[j]).abs() - 1e-10 * (x_norm + b_norms[j]);
            if gap > 0.0 && gap * gap > best_sq {
                continue;
            }
            let yv = b[j].values();
            let mut acc = 0.0;
            let mut complete = true;
            for (p, q) in xv.iter().zip(yv) {
                let d = p - q;
                acc += d * d;
                if acc > best_sq {
                    complete = false;
                    break;
                }
            }
            if complete && acc < best_sq {
                best_sq = acc;
                hint = j;
                if best_sq <= worst_sq {
                    break;
                }
            }
        }
        if best_sq > worst_sq {
            worst_sq = best_sq;
        }
    }
    Ok((w * worst_sq).sqrt())
}

/// Point cloud prepared for distances modulo grid rotations,
/// `d(x, B) = min_{y∈B} min_k ‖x − rot_k y‖_{L²}`.
///
/// Rotations only change Fourier phases, so `Σ_k (|x̂_k| − |ŷ_k|)²` bounds
/// the squared distance from below and discards most candidates; survivors
/// get the best shift from an FFT cross-correlation, then an exact direct
/// evaluation at that shift.
#[derive(Debug, Clone)]
pub struct OrbitCloud {
    grid: CircleGrid,
    fft: Fft,
    points: Vec<GridFunction>,
    spectra: Vec<Vec<Complex64>>,
    magnitudes: Vec<Vec<f64>>,
}

struct Prepared {
    spectrum: Vec<Complex64>,
    magnitudes: Vec<f64>,
}

impl OrbitCloud {
    pub fn new(points: &[GridFunction]) -> Result<Self> {
        let grid = common_grid(points, points)?;
        let fft = Fft::new(grid.len());
        let mut spectra = Vec::with_capacity(points.len());
        let mut magnitudes = Vec::with_capacity(points.len());
        for p in points {
            let prep = prepare(&fft, p);
            spectra.push(prep.spectrum);
            magnitudes.push(prep.magnitudes);
        }
        Ok(OrbitCloud {
            grid,
            fft,
            points: points.to_vec(),
            spectra,
            magnitudes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `d(x, B)` modulo rotations.
    pub fn distance(&self, x: &GridFunction) -> Result<f64> {
        if *x.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let prep = prepare(&self.fft, x);
        let (best, _) = self.nearest_sq(x, &prep, 0.0, 0);
        Ok((self.grid.weight() * best).sqrt())
    }

    /// `max_{x∈A} d(x, B)` modulo rotations.
    pub fn semidistance_from(&self, a: &[GridFunction]) -> Result<f64> {
        common_grid(a, &self.points)?;
        let mut worst_sq = 0.0f64;
        let mut hint = 0;
        for x in a {
            let prep = prepare(&self.fft, x);
            let (best, j) = self.nearest_sq(x, &prep, worst_sq, hint);
            hint = j;
            worst_sq = worst_sq.max(best);
        }
        Ok((self.grid.weight() * worst_sq).sqrt())
    }

    /// Smallest unweighted squared distance, stopping early once it drops to
    /// `stop_at` (the caller's running maximum).
    fn nearest_sq(
        &self,
        x: &GridFunction,
        prep: &Prepared,
        stop_at: f64,
        hint: usize,
    ) -> (f64, usize) {
        let mut best_sq = f64::INFINITY;
        let mut best_j = hint.min(self.points.len() - 1);
        let first = best_j;
        let order = core::iter::once(first).chain((0..self.points.len()).filter(|&j| j != first));
        for j in order {
            let cutoff = best_sq * (1.0 + 1e-9);
            let mut lb = 0.0;
            for (p, q) in prep.magnitudes.iter().zip(&self.magnitudes[j]) {
                let d = p - q;
                lb += d * d;
                if lb > cutoff {
                    break;
                }
            }
            if lb > cutoff {
                continue;
            }
            let d = self.exact_shift_min(x, &prep.spectrum, j, best_sq);
            if d < best_sq {
                best_sq = d;
                best_j = j;
                if best_sq <= stop_at {
                    break;
                }
            }
        }
        (best_sq, best_j)
    }

    fn exact_shift_min(&self, x: &GridFunction, x_spec: &[Complex64], j: usize, bound: f64) -> f64 {
        let cross: Vec<Complex64> = x_spec
            .iter()
            .zip(&self.spectra[j])
            .map(|(a, b)| a.conj() * b)
            .collect();
        let corr = self.fft.inverse_real(cross);
        let top = corr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xv = x.values();
        let yv = self.points[j].values();
        let scale = xv.iter().chain(yv).map(|v| v * v).sum::<f64>();
        let slack = 1e-9 * scale.max(f64::MIN_POSITIVE);
        let n = xv.len();
        let mut best = bound;
        for (k, &c) in corr.iter().enumerate() {
            if c < top - slack {
                continue;
            }
            let mut acc = 0.0;
            for i in 0..n {
                let d = xv[i] - yv[(i + k) % n];
                acc += d * d;
                if acc >= best {
                    break;
                }
            }
            if acc < best {
                best = acc;
            }
        }
        best
    }
}

/// Spectrum plus `√(m_k/n)·|x̂_k|` for `k = 0..=n/2` (`m_k` counts `±k`), so
/// that squared differences of the scaled magnitudes sum to a lower bound of
/// the squared distance.
fn prepare(fft: &Fft, u: &GridFunction) -> Prepared {
    let n = u.len();
    let spectrum = fft.forward_real(u.values());
    let magnitudes = (0..=n / 2)
        .map(|k| {
            let m = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            (m / n as f64).sqrt() * spectrum[k].norm()
        })
        .collect();
    Prepared {
        spectrum,
        magnitudes,
    }
}

/// Semidistance between the rotation closures of `a` and `b`.
pub fn orbit_semidistance(a: &[GridFunction], b: &[GridFunction]) -> Result<f64> {
    OrbitCloud::new(b)?.semidistance_from(a)
}

/// Both semidistances between equilibrium sets, each orbit expanded to all
/// its grid rotations first. Returns `(dist(E0→E1), dist(E1→E0))`.
pub fn equilibrium_set_distance(e0: &[GridFunction], e1: &[GridFunction]) -> Result<(f64, f64)> {
    let expand = |set: &[GridFunction]| -> Vec<GridFunction> {
        let mut out = Vec::new();
        for u in set {
            if equilibria::classify(u) == equilibria::EquilibriumKind::Constant {
                out.push(u.clone());
            } else {
                out.extend((0..u.len() as i64).map(|k| u.rotate(k)));
            }
        }
        out
    };
    let a = expand(e0);
    let b = expand(e1);
    Ok((semidistance_pruned(&a, &b)?, semidistance_pruned(&b, &a)?))
}

/// Sampling parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AttractorSpec {
    /// Initial conditions drawn in the absorbing ball.
    pub n_ic: usize,
    /// Fourier modes of the random initial conditions.
    pub ic_modes: usize,
    pub burn_in: f64,
    pub tail_count: usize,
    /// Time between tail states.
    pub tail_stride: f64,
    /// Integration time of unstable traces.
    pub trace_time: f64,
    /// Steps between recorded trace states.
    pub trace_stride: usize,
    /// Seeding distance; `None` means `min(1e−3·R_l2, 0.1·gap)`.
    pub epsilon: Option<f64>,
    /// Edge-tracked connection traces between unstable directions.
    pub connections: bool,
    /// Upper bound on connection traces per equilibrium.
    pub max_connections: usize,
    pub connection_time: f64,
    /// Integration time used to decide which basin a state belongs to.
    pub edge_horizon: f64,
    /// Bisection stops when the bracketing states are this close.
    pub edge_tol: f64,
    /// Bracketing states are re-bisected once they separate this far.
    pub edge_separation: f64,
    pub seed: u64,
}

impl Default for AttractorSpec {
    fn default() -> Self {
        AttractorSpec {
            n_ic: 64,
            ic_modes: 8,
            burn_in: 60.0,
            tail_count: 20,
            tail_stride: 0.5,
            trace_time: 40.0,
            trace_stride: 2,
            epsilon: None,
            connections: true,
            max_connections: 8,
            connection_time: 60.0,
            edge_horizon: 40.0,
            edge_tol: 1e-11,
            edge_separation: 1e-5,
            seed: 0,
        }
    }
}

/// Where a sample point came from.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum PointSource {
    TrajectoryTail {
        seed: u64,
        stream: u64,
        t: f64,
    },
    UnstableTrace {
        orbit_id: usize,
        eig_index: usize,
        sign: i8,
        epsilon: f64,
        t: f64,
    },
    ConnectionTrace {
        orbit_id: usize,
        eig_indices: [usize; 2],
        signs: [i8; 2],
        epsilon: f64,
        t: f64,
    },
    Equilibrium {
        orbit_id: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub state: GridFunction,
    pub source: PointSource,
}

/// Parameters a sample was drawn at.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamsFingerprint {
    pub kernel: String,
    pub h: f64,
    pub beta: f64,
    pub theta: f64,
    pub tau: f64,
    pub n: usize,
    pub dt: f64,
}

impl ParamsFingerprint {
    pub fn of(p: &FlowParams) -> Self {
        ParamsFingerprint {
            kernel: describe(p.kernel().profile()),
            h: p.h(),
            beta: p.firing().beta(),
            theta: p.firing().theta(),
            tau: p.kernel().grid().tau(),
            n: p.kernel().grid().len(),
            dt: p.dt(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttractorSample {
    pub points: Vec<SamplePoint>,
    pub fingerprint: ParamsFingerprint,
    /// Absorbing-ball radius `R√(2τ)`.
    pub radius: f64,
    /// Points dropped for leaving the ball (expected zero).
    pub discarded: usize,
}

impl AttractorSample {
    pub fn states(&self) -> Vec<GridFunction> {
        self.points.iter().map(|p| p.state.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.state.l2_norm())
            .fold(0.0, f64::max)
    }

    /// States produced by unstable or connection traces.
    pub fn trace_states(&self) -> Vec<GridFunction> {
        self.points
            .iter()
            .filter(|p| {
                matches!(
                    p.source,
                    PointSource::UnstableTrace { .. } | PointSource::ConnectionTrace { .. }
                )
            })
            .map(|p| p.state.clone())
            .collect()
    }
}

/// One independent unit of sampling work.
#[derive(Debug, Clone)]
pub enum SampleJob {
    Tail {
        stream: u64,
    },
    Trace {
        orbit_id: usize,
        eig_index: usize,
        sign: i8,
        epsilon: f64,
        state: GridFunction,
        direction: GridFunction,
    },
    Connection {
        orbit_id: usize,
        eig_indices: [usize; 2],
        signs: [i8; 2],
        epsilon: f64,
        state: GridFunction,
        directions: [GridFunction; 2],
        sinks: Vec<GridFunction>,
    },
    Equilibrium {
        orbit_id: usize,
        state: GridFunction,
    },
}

/// Runs a batch of jobs and returns their results in job order.
pub trait JobMap {
    fn map_jobs(
        &self,
        jobs: &[SampleJob],
        run: &(dyn Fn(&SampleJob) -> Result<Vec<SamplePoint>> + Sync),
    ) -> Vec<Result<Vec<SamplePoint>>>;
}

/// Runs jobs one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl JobMap for Sequential {
    fn map_jobs(
        &self,
        jobs: &[SampleJob],
        run: &(dyn Fn(&SampleJob) -> Result<Vec<SamplePoint>> + Sync),
    ) -> Vec<Result<Vec<SamplePoint>>> {
        jobs.iter().map(run).collect()
    }
}

/// `min(1e−3·R_l2, 0.1·gap)`, the gap being the smallest `|λ|` apart from
/// the rotation zero mode.
pub fn default_epsilon(p: &FlowParams, spectrum: &equilibria::SpectrumReport) -> f64 {
    let gap = spectrum
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != spectrum.zero_index)
        .map(|(_, l)| l.abs())
        .fold(f64::INFINITY, f64::min);
    (1e-3 * p.absorbing_radius().l2).min(0.1 * gap)
}

/// Recorded `(t, state)` pairs of one integration.
pub type Trace = Vec<(f64, GridFunction)>;

/// Integrates from `start` for `t_end`, keeping every `stride`-th state
/// (the start and the final state included).
pub fn trace_from(
    p: &FlowParams,
    start: &GridFunction,
    t_end: f64,
    stride: usize,
) -> Result<Trace> {
    let stride = stride.max(1);
    let steps = p.steps_for(t_end);
    let mut u = start.clone();
    let mut out = vec![(0.0, u.clone())];
    for k in 1..=steps {
        u = p.step(&u)?;
        if !u.is_finite() {
            return Err(Error::Diverged {
                t: k as f64 * p.dt(),
            });
        }
        if k % stride == 0 || k == steps {
            out.push((k as f64 * p.dt(), u.clone()));
        }
    }
    Ok(out)
}

/// Traces `u₀ ± ε·φ/‖φ‖` along every unstable direction of `eq`.
///
/// Returns `(eig_index, sign, trace)` triples; empty for stable equilibria.
pub fn trace_unstable_manifold(
    p: &FlowParams,
    eq: &GridFunction,
    spectrum: &equilibria::SpectrumReport,
    epsilon: f64,
    t_end: f64,
    stride: usize,
) -> Result<Vec<(usize, i8, Trace)>> {
    let mut out = Vec::new();
    for mode in &spectrum.unstable {
        for sign in [1i8, -1] {
            let start = seed_state(eq, &mode.direction, sign as f64 * epsilon)?;
            out.push((mode.index, sign, trace_from(p, &start, t_end, stride)?));
        }
    }
    Ok(out)
}

fn seed_state(u0: &GridFunction, direction: &GridFunction, epsilon: f64) -> Result<GridFunction> {
    let norm = direction.l2_norm();
    u0.axpy(epsilon / norm, direction)
}

/// Index of the sink nearest (modulo rotations) to the state reached after
/// `steps` steps.
fn basin(p: &FlowParams, u: &GridFunction, steps: usize, sinks: &[GridFunction]) -> Result<usize> {
    let end = p.advance(u, steps)?;
    let mut best = (f64::INFINITY, 0);
    for (i, s) in sinks.iter().enumerate() {
        let d = equilibria::orbit_distance(&end, s)?;
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

/// Edge tracking between two unstable directions of `u0`.
///
/// Bisects the angle `α` of `u0 + ε(cos α·d₀ + sin α·d₁)` between two
/// starts that end in different basins, then follows the pair of
/// bracketing states, re-bisecting along the segment between them whenever
/// they drift apart. Returns `None` when both starts share a basin.
#[allow(clippy::too_many_arguments)]
pub fn connection_trace(
    p: &FlowParams,
    u0: &GridFunction,
    directions: [&GridFunction; 2],
    epsilon: f64,
    sinks: &[GridFunction],
    spec: &AttractorSpec,
) -> Result<Option<Trace>> {
    if sinks.len() < 2 {
        return Ok(None);
    }
    let horizon = p.steps_for(spec.edge_horizon);
    let d0 = directions[0].scale(1.0 / directions[0].l2_norm());
    let d1 = directions[1].scale(1.0 / directions[1].l2_norm());
    let start = |alpha: f64| -> Result<GridFunction> {
        let (s, c) = alpha.sin_cos();
        u0.axpy(epsilon * c, &d0)?.axpy(epsilon * s, &d1)
    };
    let (mut lo, mut hi) = (0.0f64, FRAC_PI_2);
    let class_lo = basin(p, &start(lo)?, horizon, sinks)?;
    if basin(p, &start(hi)?, horizon, sinks)? == class_lo {
        return Ok(None);
    }
    for _ in 0..200 {
        if epsilon * (hi - lo) <= spec.edge_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if basin(p, &start(mid)?, horizon, sinks)? == class_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut a = start(lo)?;
    let mut b = start(hi)?;
    let stride = spec.trace_stride.max(1);
    let steps = p.steps_for(spec.connection_time);
    let mut out = vec![(0.0, a.clone())];
    for k in 1..=steps {
        a = p.step(&a)?;
        b = p.step(&b)?;
        if a.l2_distance(&b)? > spec.edge_separation {
            let (na, nb) = refine_edge(p, a, b, class_lo, horizon, sinks, spec.edge_tol)?;
            a = na;
            b = nb;
        }
        if k % stride == 0 || k == steps {
            out.push((k as f64 * p.dt(), a.clone()));
        }
    }
    Ok(Some(out))
}

fn refine_edge(
    p: &FlowParams,
    mut a: GridFunction,
    mut b: GridFunction,
    class_a: usize,
    horizon: usize,
    sinks: &[GridFunction],
    tol: f64,
) -> Result<(GridFunction, GridFunction)> {
    for _ in 0..200 {
        if a.l2_distance(&b)? <= tol {
            break;
        }
        let mid = a.zip_with(&b, |x, y| 0.5 * (x + y))?;
        if mid == a || mid == b {
            break;
        }
        if basin(p, &mid, horizon, sinks)? == class_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a, b))
}

/// Jobs making up one sample. `member` selects the random streams of the
/// tail initial conditions.
pub fn sampling_jobs(
    p: &FlowParams,
    eqs: &EquilibriumSet,
    spec: &AttractorSpec,
    member: u32,
) -> Result<Vec<SampleJob>> {
    let mut jobs: Vec<SampleJob> = (0..spec.n_ic as u32)
        .map(|i| SampleJob::Tail {
            stream: stream_id(member, i),
        })
        .collect();
    let sinks: Vec<GridFunction> = eqs
        .orbits
        .iter()
        .filter(|o| o.spectrum.unstable.is_empty())
        .map(|o| o.equilibrium.state.clone())
        .collect();
    for found in &eqs.orbits {
        let eq = &found.equilibrium;
        jobs.push(SampleJob::Equilibrium {
            orbit_id: eq.orbit_id,
            state: eq.state.clone(),
        });
        let epsilon = spec
            .epsilon
            .unwrap_or_else(|| default_epsilon(p, &found.spectrum));
        let modes = &found.spectrum.unstable;
        for mode in modes {
            for sign in [1i8, -1] {
                jobs.push(SampleJob::Trace {
                    orbit_id: eq.orbit_id,
                    eig_index: mode.index,
                    sign,
                    epsilon,
                    state: eq.state.clone(),
                    direction: mode.direction.clone(),
                });
            }
        }
        if !spec.connections || sinks.len() < 2 {
            continue;
        }
        let mut count = 0;
        'pairs: for i in 0..modes.len() {
            for j in i + 1..modes.len() {
                for si in [1i8, -1] {
                    for sj in [1i8, -1] {
                        if count >= spec.max_connections {
                            break 'pairs;
                        }
                        jobs.push(SampleJob::Connection {
                            orbit_id: eq.orbit_id,
                            eig_indices: [modes[i].index, modes[j].index],
                            signs: [si, sj],
                            epsilon,
                            state: eq.state.clone(),
                            directions: [
                                modes[i].direction.scale(si as f64),
                                modes[j].direction.scale(sj as f64),
                            ],
                            sinks: sinks.clone(),
                        });
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Executes one job.
pub fn run_job(p: &FlowParams, spec: &AttractorSpec, job: &SampleJob) -> Result<Vec<SamplePoint>> {
    match job {
        SampleJob::Tail { stream } => {
            let grid = *p.kernel().grid();
            let mut rng = rng_for(spec.seed, *stream);
            let u0 = state_in_ball(grid, &mut rng, spec.ic_modes, p.absorbing_radius().l2);
            let mut u = p.advance(&u0, p.steps_for(spec.burn_in))?;
            let stride = p.steps_for(spec.tail_stride).max(1);
            let mut out = Vec::with_capacity(spec.tail_count);
            for i in 0..spec.tail_count {
                if i > 0 {
                    u = p.advance(&u, stride)?;
                }
                out.push(SamplePoint {
                    state: u.clone(),
                    source: PointSource::TrajectoryTail {
                        seed: spec.seed,
                        stream: *stream,
                        t: spec.burn_in + (i * stride) as f64 * p.dt(),
                    },
                });
            }
            Ok(out)
        }
        SampleJob::Trace {
            orbit_id,
            eig_index,
            sign,
            epsilon,
            state,
            direction,
        } => {
            let start = seed_state(state, direction, *sign as f64 * epsilon)?;
            let trace = trace_from(p, &start, spec.trace_time, spec.trace_stride)?;
            Ok(trace
                .into_iter()
                .map(|(t, state)| SamplePoint {
                    state,
                    source: PointSource::UnstableTrace {
                        orbit_id: *orbit_id,
                        eig_index: *eig_index,
                        sign: *sign,
                        epsilon: *epsilon,
                        t,
                    },
                })
                .collect())
        }
        SampleJob::Connection {
            orbit_id,
            eig_indices,
            signs,
            epsilon,
            state,
            directions,
            sinks,
        } => {
            let trace = connection_trace(
                p,
                state,
                [&directions[0], &directions[1]],
                *epsilon,
                sinks,
                spec,
            )?;
            Ok(trace
                .unwrap_or_default()
                .into_iter()
                .map(|(t, state)| SamplePoint {
                    state,
                    source: PointSource::ConnectionTrace {
                        orbit_id: *orbit_id,
                        eig_indices: *eig_indices,
                        signs: *signs,
                        epsilon: *epsilon,
                        t,
                    },
                })
                .collect())
        }
        SampleJob::Equilibrium { orbit_id, state } => Ok(vec![SamplePoint {
            state: state.clone(),
            source: PointSource::Equilibrium {
                orbit_id: *orbit_id,
            },
        }]),
    }
}

/// Samples the attractor with the given job runner.
pub fn sample_attractor_with(
    p: &FlowParams,
    eqs: &EquilibriumSet,
    spec: &AttractorSpec,
    member: u32,
    runner: &dyn JobMap,
) -> Result<AttractorSample> {
    let jobs = sampling_jobs(p, eqs, spec, member)?;
    let results = runner.map_jobs(&jobs, &|job| run_job(p, spec, job));
    let radius = p.absorbing_radius().l2;
    let mut points = Vec::new();
    let mut discarded = 0;
    for result in results {
        for point in result? {
            if point.state.l2_norm() <= radius + 1e-6 {
                points.push(point);
            } else {
                discarded += 1;
            }
        }
    }
    Ok(AttractorSample {
        points,
        fingerprint: ParamsFingerprint::of(p),
        radius,
        discarded,
    })
}

/// Samples the attractor sequentially.
pub fn sample_attractor(
    p: &FlowParams,
    eqs: &EquilibriumSet,
    spec: &AttractorSpec,
    member: u32,
) -> Result<AttractorSample> {
    sample_attractor_with(p, eqs, spec, member, &Sequential)
}

/// Range of `ℱ` over the found equilibria.
pub fn equilibrium_energy_range(eqs: &EquilibriumSet) -> (f64, f64) {
    eqs.orbits
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| {
            (lo.min(o.lyapunov), hi.max(o.lyapunov))
        })
}

/// `ℱ` on every sample point.
pub fn sample_energies(p: &FlowParams, sample: &AttractorSample) -> Result<Vec<f64>> {
    sample
        .points
        .iter()
        .map(|pt| energy::lyapunov(p, &pt.state))
        .collect()
}

/// Settings of a continuity sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepSpec {
    pub attractor: AttractorSpec,
    pub multistart: MultistartSpec,
}

/// One kernel of a sweep family, tagged with its sweep parameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepMember {
    pub s: f64,
    pub profile: KernelProfile,
}

/// Equilibria and attractor sample of one sweep member.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub s: f64,
    pub params: FlowParams,
    pub equilibria: EquilibriumSet,
    pub sample: AttractorSample,
}

impl MemberRun {
    pub fn equilibrium_states(&self) -> Vec<GridFunction> {
        self.equilibria.states()
    }
}

/// Rebuilds the kernel of `base` for `member`, finds equilibria warm-started
/// from `warm` and samples the attractor with random streams `index`.
pub fn run_member(
    base: &FlowParams,
    member: &SweepMember,
    warm: &[GridFunction],
    spec: &SweepSpec,
    index: u32,
    runner: &dyn JobMap,
) -> Result<MemberRun> {
    let kernel = Kernel::new(member.profile.clone(), *base.kernel().grid())?;
    let params = base.with_kernel(kernel);
    let equilibria = equilibria::find_equilibria(&params, &spec.multistart, warm)?;
    if equilibria.orbits.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no equilibrium converged for s = {}",
            member.s
        )));
    }
    let sample = sample_attractor_with(&params, &equilibria, &spec.attractor, index, runner)?;
    Ok(MemberRun {
        s: member.s,
        params,
        equilibria,
        sample,
    })
}

/// One row of a [`ContinuityReport`]; `fwd` is measured from the reference
/// set, `bwd` towards it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContinuityRow {
    pub s: f64,
    pub l1_dist: f64,
    pub de_fwd: f64,
    pub de_bwd: f64,
    pub da_fwd: f64,
    pub da_bwd: f64,
    pub n_orbits_found: usize,
}

impl ContinuityRow {
    pub fn distances(&self) -> [f64; 4] {
        [self.de_fwd, self.de_bwd, self.da_fwd, self.da_bwd]
    }
}

/// Distances of `member` from the reference run.
pub fn compare(reference: &MemberRun, member: &MemberRun) -> Result<ContinuityRow> {
    let l1_dist = member
        .params
        .kernel()
        .l1_distance(reference.params.kernel())?;
    let (de_fwd, de_bwd) = equilibrium_set_distance(
        &reference.equilibrium_states(),
        &member.equilibrium_states(),
    )?;
    let a0 = reference.sample.states();
    let a1 = member.sample.states();
    let da_fwd = orbit_semidistance(&a0, &a1)?;
    let da_bwd = orbit_semidistance(&a1, &a0)?;
    Ok(ContinuityRow {
        s: member.s,
        l1_dist,
        de_fwd,
        de_bwd,
        da_fwd,
        da_bwd,
        n_orbits_found: member.equilibria.orbits.len(),
    })
}

/// Larger of the two attractor semidistances between two samples drawn at
/// the same parameters with different random streams.
pub fn sampling_floor(a: &AttractorSample, b: &AttractorSample) -> Result<f64> {
    let sa = a.states();
    let sb = b.states();
    Ok(orbit_semidistance(&sa, &sb)?.max(orbit_semidistance(&sb, &sa)?))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SkippedMember {
    pub s: f64,
    pub reason: String,
}

/// Trend flags along the rows (in family order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonotoneFlags {
    /// `‖J_s − J₀‖_{L¹}` strictly decreasing.
    pub l1_dist: bool,
    pub de_fwd: bool,
    pub de_bwd: bool,
    pub da_fwd: bool,
    pub da_bwd: bool,
}

impl MonotoneFlags {
    pub fn all(&self) -> bool {
        self.l1_dist && self.de_fwd && self.de_bwd && self.da_fwd && self.da_bwd
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContinuityReport {
    pub rows: Vec<ContinuityRow>,
    pub skipped: Vec<SkippedMember>,
    pub sampling_floor: f64,
    pub monotone: MonotoneFlags,
}

impl ContinuityReport {
    pub fn new(rows: Vec<ContinuityRow>, skipped: Vec<SkippedMember>, sampling_floor: f64) -> Self {
        let nonincreasing =
            |f: fn(&ContinuityRow) -> f64| rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]));
        let monotone = MonotoneFlags {
            l1_dist: rows.windows(2).all(|w| w[1].l1_dist < w[0].l1_dist),
            de_fwd: nonincreasing(|r| r.de_fwd),
            de_bwd: nonincreasing(|r| r.de_bwd),
            da_fwd: nonincreasing(|r| r.da_fwd),
            da_bwd: nonincreasing(|r| r.da_bwd),
        };
        ContinuityReport {
            rows,
            skipped,
            sampling_floor,
            monotone,
        }
    }

    /// Whether the last row's four distances are at most `factor` times the
    /// sampling floor.
    pub fn final_within_floor(&self, factor: f64) -> bool {
        self.rows.last().is_some_and(|r| {
            r.distances()
                .iter()
                .all(|d| *d <= factor * self.sampling_floor)
        })
    }
}

/// Full sweep, run sequentially. The base kernel must be the last family
/// member; its run is the reference and the sampling floor compares it with
/// a second sample on an extra random stream.
pub fn continuity_sweep(
    base: &FlowParams,
    family: &[SweepMember],
    spec: &SweepSpec,
) -> Result<ContinuityReport> {
    continuity_sweep_with(base, family, spec, &Sequential)
}

pub fn continuity_sweep_with(
    base: &FlowParams,
    family: &[SweepMember],
    spec: &SweepSpec,
    runner: &dyn JobMap,
) -> Result<ContinuityReport> {
    let last = family.last().ok_or(Error::EmptySet)?;
    if last.profile != *base.kernel().profile() {
        return Err(Error::InvalidParameter(
            "the sweep family must end with the base kernel".into(),
        ));
    }
    let base_index = (family.len() - 1) as u32;
    let reference = run_member(base, last, &[], spec, base_index, runner)?;
    let warm = reference.equilibrium_states();
    let floor_sample = sample_attractor_with(
        &reference.params,
        &reference.equilibria,
        &spec.attractor,
        family.len() as u32,
        runner,
    )?;
    let floor = sampling_floor(&reference.sample, &floor_sample)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (i, member) in family.iter().enumerate() {
        let run = if i as u32 == base_index {
            Ok(reference.clone())
        } else {
            run_member(base, member, &warm, spec, i as u32, runner)
        };
        match run.and_then(|r| compare(&reference, &r)) {
            Ok(row) => rows.push(row),
            Err(e) => skipped.push(SkippedMember {
                s: member.s,
                reason: format!("{e}"),
            }),
        }
    }
    Ok(ContinuityReport::new(rows, skipped, floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firing::FiringRate;
    use rand::Rng;

    fn grid(n: usize) -> CircleGrid {
        CircleGrid::new(1.2, n).unwrap()
    }

    fn cloud(seed: u64, count: usize, n: usize) -> Vec<GridFunction> {
        let mut rng = rng_for(seed, 0);
        (0..count)
            .map(|_| {
                let v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                GridFunction::new(grid(n), v).unwrap()
            })
            .collect()
    }

    #[test]
    fn constants_scale_with_measure() {
        let a = [GridFunction::zeros(grid(64))];
        let b = [GridFunction::constant(grid(64), 3.0)];
        let d = semidistance(&a, &b).unwrap();
        assert!((d - 3.0 * 2.4f64.sqrt()).abs() < 1e-12);
        assert!((d - 4.64758).abs() < 1e-5);
    }

    #[test]
    fn subset_and_asymmetry() {
        let a = cloud(1, 5, 16);
        let mut b = a.clone();
        b.extend(cloud(2, 3, 16));
        assert_eq!(semidistance(&a, &a).unwrap(), 0.0);
        assert_eq!(semidistance(&a, &b).unwrap(), 0.0);
        assert!(semidistance(&b, &a).unwrap() > 0.0);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let a = cloud(1, 2, 16);
        assert!(matches!(semidistance(&a, &[]), Err(Error::EmptySet)));
        assert!(matches!(semidistance_pruned(&[], &a), Err(Error::EmptySet)));
        assert!(matches!(orbit_semidistance(&a, &[]), Err(Error::EmptySet)));
    }

    #[test]
    fn pruned_is_bit_identical() {
        for seed in 0..20 {
            let a = cloud(seed, 30, 32);
            let b = cloud(seed + 100, 40, 32);
            let brute = semidistance(&a, &b).unwrap();
            let fast = semidistance_pruned(&a, &b).unwrap();
            assert_eq!(brute.to_bits(), fast.to_bits());
        }
    }

    #[test]
    fn orbit_distance_matches_expanded_brute_force() {
        let a = cloud(7, 6, 16);
        let b = cloud(8, 5, 16);
        let expanded: Vec<GridFunction> = b
            .iter()
            .flat_map(|u| (0..16).map(move |k| u.rotate(k)))
            .collect();
        let brute = semidistance(&a, &expanded).unwrap();
        let fast = orbit_semidistance(&a, &b).unwrap();
        assert!((brute - fast).abs() < 1e-12, "{brute} vs {fast}");
        let rotated: Vec<GridFunction> = b.iter().map(|u| u.rotate(5)).collect();
        assert_eq!(orbit_semidistance(&rotated, &b).unwrap(), 0.0);
    }

    #[test]
    fn orbit_distance_of_non_power_of_two_grid() {
        let a = cloud(3, 4, 24);
        let b = cloud(4, 4, 24);
        let expanded: Vec<GridFunction> = b
            .iter()
            .flat_map(|u| (0..24).map(move |k| u.rotate(k)))
            .collect();
        let brute = semidistance(&a, &expanded).unwrap();
        assert!((orbit_semidistance(&a, &b).unwrap() - brute).abs() < 1e-12);
    }

    fn unit_params(n: usize) -> FlowParams {
        let k = Kernel::new(KernelProfile::Bump, grid(n)).unwrap();
        FlowParams::new(k, FiringRate::default(), 0.5, 0.05).unwrap()
    }

    #[test]
    fn contraction_regime_sample_is_one_point() {
        let p = unit_params(64);
        let eqs = equilibria::find_equilibria(&p, &MultistartSpec::default(), &[]).unwrap();
        let spec = AttractorSpec {
            n_ic: 8,
            ..AttractorSpec::default()
        };
        let sample = sample_attractor(&p, &eqs, &spec, 0).unwrap();
        assert_eq!(sample.len(), 8 * 20 + 1);
        assert_eq!(sample.discarded, 0);
        let c = equilibria::constant_roots(&p)[0];
        for pt in &sample.points {
            assert!(pt.state.values().iter().all(|v| (v - c).abs() < 1e-6));
        }
        assert!(sample.trace_states().is_empty());
    }

    #[test]
    fn equilibrium_distance_ignores_kernel_shape_for_constants() {
        let p = unit_params(64);
        let q = p.with_kernel(Kernel::new(KernelProfile::ScaledBump { a: 0.9 }, grid(64)).unwrap());
        let e0 = equilibria::find_equilibria(&p, &MultistartSpec::default(), &[]).unwrap();
        let e1 = equilibria::find_equilibria(&q, &MultistartSpec::default(), &[]).unwrap();
        let (d01, d10) = equilibrium_set_distance(&e0.states(), &e1.states()).unwrap();
        assert!(d01 < 1e-12 && d10 < 1e-12);
    }

    #[test]
    fn single_member_sweep_is_zero() {
        let p = unit_params(32);
        let spec = SweepSpec {
            attractor: AttractorSpec {
                n_ic: 4,
                tail_count: 4,
                ..AttractorSpec::default()
            },
            ..SweepSpec::default()
        };
        let family = [SweepMember {
            s: 1.0,
            profile: KernelProfile::Bump,
        }];
        let report = continuity_sweep(&p, &family, &spec).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].distances(), [0.0; 4]);
        assert_eq!(report.rows[0].l1_dist, 0.0);
        assert!(report.final_within_floor(3.0));
    }

    #[test]
    fn sweep_requires_base_last() {
        let p = unit_params(32);
        let family = [SweepMember {
            s: 0.9,
            profile: KernelProfile::ScaledBump { a: 0.9 },
        }];
        assert!(continuity_sweep(&p, &family, &SweepSpec::default()).is_err());
    }
}
