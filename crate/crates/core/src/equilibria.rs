//! Steady states of `F(u) = −u + J∗f(u) + h` and their linearizations.
//!
//! Constant states solve the scalar equation `c = f(c) + h` (constants are
//! fixed by `J∗·` because `‖J‖_{L¹} = 1`). Nonconstant states are found by
//! damped Newton from perturbed constants. Every nonconstant state comes
//! with the closed curve of its rotations, so the linearization
//! `DF(u₀)v = −v + J∗(f′(u₀)v)` always has `u₀′` in its kernel; Newton steps
//! at nonconstant iterates are therefore taken in the orthogonal complement
//! of `u₀′`.
//!
//! `DF(u₀) = −I + C·D` with `C` the (symmetric) convolution circulant and
//! `D = diag(f′(u₀)) > 0` is similar to `−I + D^{1/2} C D^{1/2}` through
//! `D^{1/2}`; spectra are computed from that symmetric form, so they are real.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::FlowParams;
use crate::energy;
use crate::fft::Fft;
use crate::grid::GridFunction;
use crate::random::rng_for;
use crate::{Error, Result};

/// Spread below which a state counts as constant.
pub const CONSTANT_SPREAD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EquilibriumKind {
    Constant,
    Nonconstant,
}

/// A solved steady state.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub state: GridFunction,
    /// `sup |F(u₀)|`.
    pub residual: f64,
    pub kind: EquilibriumKind,
    /// Groups rotation-equivalent equilibria.
    pub orbit_id: usize,
    /// Newton iterations spent (zero for directly constructed states).
    pub iterations: usize,
}

impl Equilibrium {
    /// Wraps `state` after computing its residual and classification.
    pub fn from_state(p: &FlowParams, state: GridFunction) -> Result<Self> {
        let residual = residual(p, &state)?;
        let kind = classify(&state);
        Ok(Equilibrium {
            state,
            residual,
            kind,
            orbit_id: 0,
            iterations: 0,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.kind == EquilibriumKind::Constant
    }
}

pub fn classify(u: &GridFunction) -> EquilibriumKind {
    if u.spread() <= CONSTANT_SPREAD {
        EquilibriumKind::Constant
    } else {
        EquilibriumKind::Nonconstant
    }
}

/// `sup |F(u)|`.
pub fn residual(p: &FlowParams, u: &GridFunction) -> Result<f64> {
    Ok(p.rhs(u)?.linf_norm())
}

fn scalar_g(p: &FlowParams, c: f64) -> f64 {
    c - p.firing().value(c) - p.h()
}

/// Refines a root of `g(c) = c − f(c) − h` inside a sign-change bracket by
/// bisection, polished with Newton steps that stay in the bracket.
fn refine_root(p: &FlowParams, mut lo: f64, mut hi: f64) -> f64 {
    let f = p.firing();
    let glo = scalar_g(p, lo);
    if glo == 0.0 {
        return lo;
    }
    if scalar_g(p, hi) == 0.0 {
        return hi;
    }
    let lo_negative = glo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = scalar_g(p, mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut c = 0.5 * (lo + hi);
    for _ in 0..3 {
        let dg = 1.0 - f.derivative(c);
        if dg.abs() < 1e-14 {
            break;
        }
        let next = c - scalar_g(p, c) / dg;
        if next < lo || next > hi {
            break;
        }
        c = next;
    }
    c
}

/// All roots of `c = f(c) + h`; they lie in `(h, h + S_max)`.
///
/// Sign changes are detected on a lattice of `4096` cells, then refined.
/// Roots closer than one cell to each other are resolved only when the sign
/// of `g` changes between them.
pub fn constant_roots(p: &FlowParams) -> Vec<f64> {
    let h = p.h();
    let lo = h;
    let hi = h + p.firing().s_max();
    let cells = 4096;
    let xs: Vec<f64> = (0..=cells)
        .map(|i| lo + (hi - lo) * i as f64 / cells as f64)
        .collect();
    let gs: Vec<f64> = xs.iter().map(|&c| scalar_g(p, c)).collect();
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..cells {
        let (g0, g1) = (gs[i], gs[i + 1]);
        if g0 == 0.0 {
            roots.push(xs[i]);
        } else if g0 * g1 < 0.0 {
            roots.push(refine_root(p, xs[i], xs[i + 1]));
        }
    }
    if gs[cells] == 0.0 {
        roots.push(xs[cells]);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    roots
}

/// Lowest constant equilibrium (the unique one whenever `f′ < 1`).
pub fn solve_constant(p: &FlowParams) -> Result<Equilibrium> {
    let c = *constant_roots(p)
        .first()
        .ok_or(Error::LinearAlgebra("no constant equilibrium bracketed"))?;
    Equilibrium::from_state(p, GridFunction::constant(*p.kernel().grid(), c))
}

/// All constant equilibria, lowest first.
pub fn constant_equilibria(p: &FlowParams) -> Result<Vec<Equilibrium>> {
    constant_roots(p)
        .into_iter()
        .map(|c| Equilibrium::from_state(p, GridFunction::constant(*p.kernel().grid(), c)))
        .collect()
}

/// Fourier-multiplier eigenvalue `−1 + f′(c)Ĵ_k` of the linearization at the
/// constant `c`.
pub fn constant_mode_eigenvalue(p: &FlowParams, c: f64, k: usize) -> f64 {
    -1.0 + p.firing().derivative(c) * p.kernel().fourier_coefficient(k)
}

/// Full analytic spectrum at a constant state with multiplicities
/// (`k = 0` and `k = n/2` once, every other `k` twice), sorted descending.
pub fn analytic_constant_spectrum(p: &FlowParams, c: f64) -> Vec<f64> {
    let n = p.kernel().grid().len();
    let mut out = Vec::with_capacity(n);
    for k in 0..=n / 2 {
        let lambda = constant_mode_eigenvalue(p, c, k);
        out.push(lambda);
        if k != 0 && k != n / 2 {
            out.push(lambda);
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Weighted convolution circulant `C_{ij} = Δ·J(x_i − x_j)`.
pub fn convolution_matrix(p: &FlowParams) -> DMatrix<f64> {
    let n = p.kernel().grid().len();
    let w = p.kernel().grid().weight();
    let offsets = p.kernel().offsets();
    DMatrix::from_fn(n, n, |i, j| w * offsets[(i + n - j) % n])
}

/// Dense `A = −I + C·diag(f′(u₀))`.
pub fn linearization_matrix(p: &FlowParams, u0: &GridFunction) -> Result<DMatrix<f64>> {
    if u0.grid() != p.kernel().grid() {
        return Err(Error::GridMismatch);
    }
    let fp: Vec<f64> = u0
        .values()
        .iter()
        .map(|&x| p.firing().derivative(x))
        .collect();
    let mut a = convolution_matrix(p);
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= fp[j];
    }
    for i in 0..a.nrows() {
        a[(i, i)] -= 1.0;
    }
    Ok(a)
}

/// Matrix-free `DF(u₀)v = −v + J∗(f′(u₀)v)`.
pub fn apply_linearization(
    p: &FlowParams,
    u0: &GridFunction,
    v: &GridFunction,
) -> Result<GridFunction> {
    let weighted = u0.zip_with(v, |x, y| p.firing().derivative(x) * y)?;
    p.kernel().convolve(&weighted)?.sub(v)
}

/// Thresholds used to classify spectra.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumOptions {
    /// An eigenvalue with `|λ| ≤ zero_tol` counts as zero.
    pub zero_tol: f64,
    /// Required `|λ|` of the next-nearest eigenvalue for a simple zero.
    pub gap_tol: f64,
    /// Eigenvalues with `λ ≥ hyp_tol` are unstable directions; `min |λ| ≥
    /// hyp_tol` means hyperbolic.
    pub hyp_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            zero_tol: 1e-6,
            gap_tol: 1e-3,
            hyp_tol: 1e-6,
        }
    }
}

/// An unstable eigen-direction, scaled to unit `L²` norm.
#[derive(Debug, Clone)]
pub struct UnstableMode {
    pub index: usize,
    pub eigenvalue: f64,
    pub direction: GridFunction,
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Index (into `eigenvalues`) of the eigenvalue nearest zero, when it is
    /// within `zero_tol`.
    pub zero_index: Option<usize>,
    /// Eigenvalue nearest zero (whether or not it passes `zero_tol`).
    pub nearest_zero: f64,
    /// Magnitude of the second-nearest eigenvalue to zero.
    pub next_nearest: f64,
    pub zero_is_simple: bool,
    /// Angle in radians between the nearest-to-zero eigenvector and `u₀′`
    /// (`None` when `u₀′` vanishes).
    pub eigvec_alignment: Option<f64>,
    pub hyperbolic: bool,
    pub unstable: Vec<UnstableMode>,
}

impl SpectrumReport {
    pub fn leading(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn unstable_count(&self) -> usize {
        self.unstable.len()
    }
}

/// Eigen-decomposition of the symmetrized linearization at `u0`.
pub fn spectrum(
    p: &FlowParams,
    u0: &GridFunction,
    opts: &SpectrumOptions,
) -> Result<SpectrumReport> {
    let grid = *u0.grid();
    let n = grid.len();
    let fp: Vec<f64> = u0
        .values()
        .iter()
        .map(|&x| p.firing().derivative(x))
        .collect();
    if let Some(i) = fp.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "symmetrization needs f'(u0) > 0, got {} at index {i}",
            fp[i]
        )));
    }
    let sqrt_d: Vec<f64> = fp.iter().map(|d| d.sqrt()).collect();
    let c = convolution_matrix(p);
    let sym = DMatrix::from_fn(n, n, |i, j| {
        let v = sqrt_d[i] * c[(i, j)] * sqrt_d[j];
        if i == j {
            v - 1.0
        } else {
            v
        }
    });
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    // eigenvector of A = D^{-1/2} × eigenvector of the symmetric form
    let mapped = |col: usize| -> Vec<f64> {
        (0..n)
            .map(|i| eig.eigenvectors[(i, col)] / sqrt_d[i])
            .collect()
    };

    let mut by_magnitude: Vec<usize> = (0..n).collect();
    by_magnitude.sort_by(|&a, &b| eigenvalues[a].abs().total_cmp(&eigenvalues[b].abs()));
    let nearest = by_magnitude[0];
    let nearest_zero = eigenvalues[nearest];
    let next_nearest = if n > 1 {
        eigenvalues[by_magnitude[1]].abs()
    } else {
        f64::INFINITY
    };
    let zero_index = (nearest_zero.abs() <= opts.zero_tol).then_some(nearest);
    let zero_is_simple = zero_index.is_some() && next_nearest >= opts.gap_tol;
    let hyperbolic = nearest_zero.abs() >= opts.hyp_tol;

    let derivative = u0.spectral_derivative();
    let eigvec_alignment = if derivative.linf_norm() > 0.0 {
        let v = mapped(order[nearest]);
        Some(angle_between(&v, derivative.values()))
    } else {
        None
    };

    let mut unstable = Vec::new();
    let mut k = 0;
    while k < n && eigenvalues[k] >= opts.hyp_tol {
        let degenerate = k + 1 < n
            && (eigenvalues[k] - eigenvalues[k + 1]).abs() <= 1e-8 * eigenvalues[k].abs().max(1.0);
        if degenerate {
            let pair = canonical_pair(
                &mapped(order[k]),
                &mapped(order[k + 1]),
                grid.origin_index(),
            );
            for (offset, dir) in pair.into_iter().enumerate() {
                if eigenvalues[k + offset] >= opts.hyp_tol {
                    unstable.push(unstable_mode(
                        grid,
                        k + offset,
                        eigenvalues[k + offset],
                        dir,
                    ));
                }
            }
            k += 2;
        } else {
            unstable.push(unstable_mode(grid, k, eigenvalues[k], mapped(order[k])));
            k += 1;
        }
    }

    Ok(SpectrumReport {
        eigenvalues,
        zero_index,
        nearest_zero,
        next_nearest,
        zero_is_simple,
        eigvec_alignment,
        hyperbolic,
        unstable,
    })
}

fn unstable_mode(
    grid: crate::grid::CircleGrid,
    index: usize,
    eigenvalue: f64,
    v: Vec<f64>,
) -> UnstableMode {
    let dir = GridFunction::from_vec_unchecked(grid, v);
    let dir = orient(&dir);
    let norm = dir.l2_norm();
    UnstableMode {
        index,
        eigenvalue,
        direction: dir.scale(1.0 / norm),
    }
}

/// Fixes the sign of an eigenvector: positive overlap with `e^{0.37x}`.
fn orient(v: &GridFunction) -> GridFunction {
    let grid = v.grid();
    let overlap: f64 = v
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| x * (0.37 * grid.point(i)).exp())
        .sum();
    if overlap < 0.0 {
        v.scale(-1.0)
    } else {
        v.clone()
    }
}

/// Rotates a degenerate eigenpair so that the first vector is even and the
/// second odd under `x ↦ −x` (as far as the pair allows).
fn canonical_pair(a: &[f64], b: &[f64], origin: usize) -> [Vec<f64>; 2] {
    let n = a.len();
    let reflect = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| v[(2 * origin + n - i) % n]).collect() };
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.iter().zip(y).map(|(p, q)| p * q).sum() };
    let ra = reflect(a);
    let rb = reflect(b);
    let m00 = dot(a, &ra);
    let m11 = dot(b, &rb);
    let m01 = 0.5 * (dot(a, &rb) + dot(b, &ra));
    // eigenvector of [[m00, m01], [m01, m11]] with the larger eigenvalue
    let angle = 0.5 * (2.0 * m01).atan2(m00 - m11);
    let (s, c) = angle.sin_cos();
    let even: Vec<f64> = a.iter().zip(b).map(|(x, y)| c * x + s * y).collect();
    let odd: Vec<f64> = a.iter().zip(b).map(|(x, y)| -s * x + c * y).collect();
    [even, odd]
}

fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = (dot.abs() / (na * nb)).min(1.0);
    // acos loses precision near 1; use the sine of the angle instead
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    sin.atan2(cos)
}

/// Eigenvalues of the non-symmetric `A = −I + C·D` from a real Schur
/// decomposition, sorted by descending real part. Cross-checks
/// [`spectrum`], which works on the symmetrized form.
pub fn general_eigenvalues(p: &FlowParams, u0: &GridFunction) -> Result<Vec<Complex64>> {
    let a = linearization_matrix(p, u0)?;
    let mut out: Vec<Complex64> = a
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    out.sort_by(|x, y| y.re.total_cmp(&x.re));
    Ok(out)
}

/// `‖DF(u₀)u₀′‖ / ‖u₀′‖`, the residual of the rotation zero mode.
pub fn zero_mode_residual(p: &FlowParams, u0: &GridFunction) -> Result<f64> {
    let d = u0.spectral_derivative();
    let norm = d.l2_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(apply_linearization(p, u0, &d)?.l2_norm() / norm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NewtonOptions {
    /// Accept when `sup |F| ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Result of a Newton solve; non-convergence is a normal outcome.
#[derive(Debug, Clone)]
pub enum NewtonOutcome {
    Converged(Equilibrium),
    Failed {
        state: GridFunction,
        residual: f64,
        iterations: usize,
    },
}

impl NewtonOutcome {
    pub fn converged(self) -> Option<Equilibrium> {
        match self {
            NewtonOutcome::Converged(eq) => Some(eq),
            NewtonOutcome::Failed { .. } => None,
        }
    }
}

/// Damped Newton iteration for `F(u) = 0` starting at `guess`.
pub fn newton_solve(
    p: &FlowParams,
    guess: &GridFunction,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome> {
    if guess.grid() != p.kernel().grid() {
        return Err(Error::GridMismatch);
    }
    let mut u = guess.clone();
    let mut f = p.rhs(&u)?;
    let mut sup = f.linf_norm();
    let mut merit = f.l2_norm();
    for iter in 0..opts.max_iter {
        if sup <= opts.tol {
            return Ok(NewtonOutcome::Converged(converged(u, sup, iter)));
        }
        let step = newton_step(p, &u, &f)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = u.axpy(lambda, &step)?;
            if trial.is_finite() {
                let ft = p.rhs(&trial)?;
                let mt = ft.l2_norm();
                if mt < (1.0 - 1e-4 * lambda) * merit {
                    accepted = Some((trial, ft, mt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, ft, mt)) => {
                u = trial;
                sup = ft.linf_norm();
                merit = mt;
                f = ft;
            }
            None => {
                let converged_now = sup <= opts.tol;
                if converged_now {
                    return Ok(NewtonOutcome::Converged(converged(u, sup, iter)));
                }
                return Ok(NewtonOutcome::Failed {
                    state: u,
                    residual: sup,
                    iterations: iter,
                });
            }
        }
    }
    if sup <= opts.tol {
        Ok(NewtonOutcome::Converged(converged(u, sup, opts.max_iter)))
    } else {
        Ok(NewtonOutcome::Failed {
            state: u,
            residual: sup,
            iterations: opts.max_iter,
        })
    }
}

fn converged(state: GridFunction, residual: f64, iterations: usize) -> Equilibrium {
    let kind = classify(&state);
    Equilibrium {
        state,
        residual,
        kind,
        orbit_id: 0,
        iterations,
    }
}

/// Newton correction `du` with `DF(u) du = −F(u)`.
///
/// At nonconstant iterates the system is bordered with the tangent `u′` so
/// the correction is orthogonal to the rotation direction. If the
/// factorization fails, the pseudo-inverse is used and the tangent component
/// removed.
fn newton_step(p: &FlowParams, u: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    let n = u.len();
    let a = linearization_matrix(p, u)?;
    let rhs = DVector::from_iterator(n, f.values().iter().map(|v| -v));
    let tangent = (classify(u) == EquilibriumKind::Nonconstant).then(|| {
        let t = u.spectral_derivative();
        let norm = t.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        (norm > 0.0).then(|| t.scale(1.0 / norm))
    });
    let tangent = tangent.flatten();

    let solved = match &tangent {
        Some(t) => {
            let mut big = DMatrix::zeros(n + 1, n + 1);
            big.view_mut((0, 0), (n, n)).copy_from(&a);
            for i in 0..n {
                big[(i, n)] = t.values()[i];
                big[(n, i)] = t.values()[i];
            }
            let mut b = DVector::zeros(n + 1);
            b.rows_mut(0, n).copy_from(&rhs);
            big.lu().solve(&b).map(|x| x.rows(0, n).into_owned())
        }
        None => a.clone().lu().solve(&rhs),
    };
    let du = match solved {
        Some(x) if x.iter().all(|v| v.is_finite()) => x,
        _ => {
            let svd = a.svd(true, true);
            let mut x = svd.solve(&rhs, 1e-12).map_err(Error::LinearAlgebra)?;
            if let Some(t) = &tangent {
                let tv = DVector::from_column_slice(t.values());
                let proj = tv.dot(&x);
                x -= tv * proj;
            }
            x
        }
    };
    GridFunction::new(*u.grid(), du.iter().copied().collect())
}

/// Rotation curve of an equilibrium: all `n` grid rotations (one element for
/// constants), each with its residual recomputed.
pub fn rotation_orbit(p: &FlowParams, eq: &Equilibrium) -> Result<Vec<Equilibrium>> {
    if eq.is_constant() {
        return Ok(alloc::vec![eq.clone()]);
    }
    (0..eq.state.len() as i64)
        .map(|k| {
            let state = eq.state.rotate(k);
            let residual = residual(p, &state)?;
            Ok(Equilibrium {
                state,
                residual,
                kind: eq.kind,
                orbit_id: eq.orbit_id,
                iterations: eq.iterations,
            })
        })
        .collect()
}

/// Minimum over grid rotations of the `L²` distance between `a` and `b`.
pub fn orbit_distance(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    a.check_same_grid(b)?;
    let n = a.len();
    let w = a.grid().weight();
    let av = a.values();
    let bv = b.values();
    let mut best_sq = f64::INFINITY;
    for k in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            let d = av[i] - bv[(i + k) % n];
            acc += d * d;
            if acc >= best_sq {
                break;
            }
        }
        if acc < best_sq {
            best_sq = acc;
        }
    }
    Ok((w * best_sq).sqrt())
}

/// Minimum over real shifts `s` of `‖a − b(· + sΔ)‖_{L²}`, with the
/// minimizing shift in grid steps.
///
/// On a grid the translation symmetry is only discrete, but for smooth
/// states the equilibrium curve survives to round-off between grid points,
/// so Newton can land on any phase. Deduplication therefore compares states
/// modulo continuous shifts.
pub fn translation_distance(a: &GridFunction, b: &GridFunction) -> Result<(f64, f64)> {
    a.check_same_grid(b)?;
    let n = a.len();
    let fft = Fft::new(n);
    let sa = fft.forward_real(a.values());
    let sb = fft.forward_real(b.values());
    let cross: Vec<Complex64> = sa.iter().zip(&sb).map(|(x, y)| x.conj() * y).collect();
    let corr = fft.inverse_real(cross.clone());
    let mut start = 0;
    for (m, c) in corr.iter().enumerate() {
        if *c > corr[start] {
            start = m;
        }
    }
    // g(s) = Σ_k Re(conj(A_k) B_k e^{2πiks/n}) is maximized by the best shift
    let omega = |k: usize| -> f64 {
        let wave = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        2.0 * core::f64::consts::PI * wave / n as f64
    };
    let derivs = |s: f64| -> (f64, f64) {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (k, c) in cross.iter().enumerate() {
            let w = omega(k);
            let (sin, cos) = (w * s).sin_cos();
            let re = c.re * cos - c.im * sin;
            let im = c.re * sin + c.im * cos;
            d1 -= w * im;
            d2 -= w * w * re;
        }
        (d1, d2)
    };
    let s0 = start as f64;
    let mut s = s0;
    for _ in 0..20 {
        let (d1, d2) = derivs(s);
        if d2.is_nan() || d2 >= 0.0 {
            break;
        }
        let next = (s - d1 / d2).clamp(s0 - 1.0, s0 + 1.0);
        if (next - s).abs() < 1e-13 {
            s = next;
            break;
        }
        s = next;
    }
    let at_grid = a.l2_distance(&b.rotate(start as i64))?;
    let refined = a.l2_distance(&b.translate(s))?;
    let shift = if s > n as f64 / 2.0 { s - n as f64 } else { s };
    if refined < at_grid {
        Ok((refined, shift))
    } else {
        let whole = if start > n / 2 {
            start as f64 - n as f64
        } else {
            start as f64
        };
        Ok((at_grid, whole))
    }
}

/// Seeds for the multistart equilibrium search.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MultistartSpec {
    /// Highest Fourier mode used for structured perturbations.
    pub max_mode: usize,
    /// Amplitudes of structured perturbations (both signs are used).
    pub amplitudes: Vec<f64>,
    /// Perturb only modes whose analytic eigenvalue at the constant is
    /// positive.
    pub destabilized_only: bool,
    /// Number of additional random smooth perturbations per constant root.
    pub random_seeds: usize,
    pub random_amplitude: f64,
    pub seed: u64,
    /// Orbits closer than this (min over translations, `L²`) are identified.
    pub dedup_tol: f64,
    pub newton: NewtonOptions,
    pub spectrum: SpectrumOptions,
}

impl Default for MultistartSpec {
    fn default() -> Self {
        MultistartSpec {
            max_mode: 4,
            amplitudes: alloc::vec![0.1, 0.3, 0.6],
            destabilized_only: true,
            random_seeds: 4,
            random_amplitude: 0.3,
            seed: 0,
            dedup_tol: 1e-6,
            newton: NewtonOptions::default(),
            spectrum: SpectrumOptions::default(),
        }
    }
}

/// An orbit representative with its spectral data.
#[derive(Debug, Clone)]
pub struct FoundEquilibrium {
    pub equilibrium: Equilibrium,
    pub spectrum: SpectrumReport,
    pub lyapunov: f64,
}

#[derive(Debug, Clone)]
pub struct EquilibriumSet {
    pub orbits: Vec<FoundEquilibrium>,
    pub seeds_tried: usize,
    pub converged: usize,
}

impl EquilibriumSet {
    pub fn nonconstant(&self) -> impl Iterator<Item = &FoundEquilibrium> {
        self.orbits.iter().filter(|o| !o.equilibrium.is_constant())
    }

    pub fn states(&self) -> Vec<GridFunction> {
        self.orbits
            .iter()
            .map(|o| o.equilibrium.state.clone())
            .collect()
    }
}

/// Initial guesses in the order they are tried.
pub fn multistart_seeds(p: &FlowParams, spec: &MultistartSpec) -> Vec<GridFunction> {
    let grid = *p.kernel().grid();
    let roots = constant_roots(p);
    let mut seeds = Vec::new();
    for &c in &roots {
        seeds.push(GridFunction::constant(grid, c));
    }
    for &c in &roots {
        for k in 1..=spec.max_mode.min(grid.len() / 2 - 1) {
            if spec.destabilized_only && constant_mode_eigenvalue(p, c, k) <= 0.0 {
                continue;
            }
            let wave = grid.wavenumber(k as i64);
            for &amp in &spec.amplitudes {
                for sign in [1.0, -1.0] {
                    seeds.push(GridFunction::from_vec_unchecked(
                        grid,
                        grid.points()
                            .iter()
                            .map(|&x| c + sign * amp * (wave * x).cos())
                            .collect(),
                    ));
                }
            }
        }
    }
    for (r, &c) in roots.iter().enumerate() {
        for i in 0..spec.random_seeds {
            let mut rng = rng_for(spec.seed, ((r as u64) << 32) | i as u64);
            let modes = spec.max_mode.max(1);
            let coeffs: Vec<(f64, f64)> = (1..=modes)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let pert: Vec<f64> = grid
                .points()
                .iter()
                .map(|&x| {
                    coeffs
                        .iter()
                        .enumerate()
                        .map(|(k, (a, b))| {
                            let arg = grid.wavenumber(k as i64 + 1) * x;
                            a * arg.cos() + b * arg.sin()
                        })
                        .sum::<f64>()
                })
                .collect();
            let scale = pert
                .iter()
                .fold(0.0, |m: f64, v| m.max(v.abs()))
                .max(1e-300);
            seeds.push(GridFunction::from_vec_unchecked(
                grid,
                pert.iter()
                    .map(|v| c + spec.random_amplitude * v / scale)
                    .collect(),
            ));
        }
    }
    seeds
}

/// Multistart Newton search; returns one representative per rotation orbit.
///
/// `warm_starts` are tried before the generated seeds, which makes tracking
/// a continuous family of equilibria across a parameter sweep stable.
pub fn find_equilibria(
    p: &FlowParams,
    spec: &MultistartSpec,
    warm_starts: &[GridFunction],
) -> Result<EquilibriumSet> {
    let mut seeds: Vec<GridFunction> = warm_starts.to_vec();
    seeds.extend(multistart_seeds(p, spec));
    let mut found: Vec<Equilibrium> = Vec::new();
    let mut converged = 0;
    for seed in &seeds {
        let Some(mut eq) = newton_solve(p, seed, &spec.newton)?.converged() else {
            continue;
        };
        converged += 1;
        let mut duplicate = false;
        for other in &found {
            if translation_distance(&other.state, &eq.state)?.0 <= spec.dedup_tol {
                duplicate = true;
                break;
            }
        }
        if !duplicate {
            eq.orbit_id = found.len();
            found.push(eq);
        }
    }
    let orbits = found
        .into_iter()
        .map(|equilibrium| {
            let spectrum = spectrum(p, &equilibrium.state, &spec.spectrum)?;
            let lyapunov = energy::lyapunov(p, &equilibrium.state)?;
            Ok(FoundEquilibrium {
                equilibrium,
                spectrum,
                lyapunov,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumSet {
        orbits,
        seeds_tried: seeds.len(),
        converged,
    })
}

/// Outcome of scanning `h` for a destabilized Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TuringPoint {
    pub h: f64,
    /// Constant state whose mode destabilized.
    pub c: f64,
    pub mode: usize,
    /// `−1 + f′(c)Ĵ_mode > 0`.
    pub growth: f64,
}

/// Scans `h = h_start, h_start + h_step, …` (up to `h_max`) and returns the
/// first value at which some constant equilibrium has
/// `−1 + f′(c)Ĵ_mode > min_growth`.
pub fn turing_scan(
    p: &FlowParams,
    mode: usize,
    h_start: f64,
    h_step: f64,
    h_max: f64,
    min_growth: f64,
) -> Result<Option<TuringPoint>> {
    if !(h_step > 0.0 && h_start > 0.0) {
        return Err(Error::InvalidParameter(
            "scan needs positive h_start and h_step".into(),
        ));
    }
    let mut i = 0u32;
    loop {
        let h = h_start + i as f64 * h_step;
        if h > h_max + 1e-12 {
            return Ok(None);
        }
        let q = p.with_h(h)?;
        for c in constant_roots(&q) {
            let growth = constant_mode_eigenvalue(&q, c, mode);
            if growth > min_growth {
                return Ok(Some(TuringPoint { h, c, mode, growth }));
            }
        }
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firing::FiringRate;
    use crate::grid::CircleGrid;
    use crate::kernel::{Kernel, KernelProfile};

    const C_STAR: f64 = 1.282_951_823_074_055_3;

    fn params(n: usize, beta: f64, theta: f64, h: f64) -> FlowParams {
        let g = CircleGrid::new(1.2, n).unwrap();
        let k = Kernel::new(KernelProfile::Bump, g).unwrap();
        FlowParams::new(k, FiringRate::new(beta, theta).unwrap(), h, 0.05).unwrap()
    }

    #[test]
    fn unit_gain_constant_root() {
        let p = params(64, 1.0, 0.0, 0.5);
        let roots = constant_roots(&p);
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - C_STAR).abs() < 1e-12);
        let eq = solve_constant(&p).unwrap();
        assert!(eq.residual <= 1e-13);
        assert!(eq.is_constant());
    }

    #[test]
    fn small_stimulus_bracket() {
        let p = params(64, 1.0, 0.0, 1e-6);
        assert!(scalar_g(&p, 0.0) < 0.0);
        let c = constant_roots(&p)[0];
        assert!(c > 0.0 && c < 1.0);
        assert!((c - p.firing().value(c) - 1e-6).abs() < 1e-13);
    }

    #[test]
    fn steep_gain_roots_match_scan_oracle() {
        // theta = 0: single root just below 1.05
        let p = params(64, 12.0, 0.0, 0.05);
        let roots = constant_roots(&p);
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - 1.05).abs() < 1e-5);
        // theta = 1: three roots (brentq values)
        let p = params(64, 12.0, 1.0, 0.35);
        let roots = constant_roots(&p);
        assert_eq!(roots.len(), 3);
        let expected = [
            0.350_411_594_240_075_7,
            1.085_020_489_145_478_7,
            1.331_654_474_714_303_3,
        ];
        for (r, e) in roots.iter().zip(expected) {
            assert!((r - e).abs() < 1e-12, "{r} vs {e}");
            assert!(scalar_g(&p, *r).abs() < 1e-13);
        }
    }

    #[test]
    fn matrix_agrees_with_matrix_free_product() {
        let p = params(64, 3.0, 0.2, 0.4);
        let g = *p.kernel().grid();
        let u0 = GridFunction::from_fn(g, |x| 0.5 * (2.0 * x).sin() + 0.3).unwrap();
        let v = GridFunction::from_fn(g, |x| (x * 3.0).cos() - x).unwrap();
        let a = linearization_matrix(&p, &u0).unwrap();
        let dense = &a * DVector::from_column_slice(v.values());
        let free = apply_linearization(&p, &u0, &v).unwrap();
        for i in 0..64 {
            assert!((dense[i] - free.values()[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_derivative_gives_minus_identity() {
        // f'(u0) underflows to 0 far below threshold
        let p = params(16, 1.0, 0.0, 0.5);
        let u0 = GridFunction::constant(*p.kernel().grid(), -1e4);
        let a = linearization_matrix(&p, &u0).unwrap();
        assert_eq!(a, -DMatrix::<f64>::identity(16, 16));
        assert!(spectrum(&p, &u0, &SpectrumOptions::default()).is_err());
    }

    #[test]
    fn constant_state_maps_ones_to_multiple() {
        let p = params(32, 1.0, 0.0, 0.5);
        let c = C_STAR;
        let u0 = GridFunction::constant(*p.kernel().grid(), c);
        let ones = GridFunction::constant(*p.kernel().grid(), 1.0);
        let out = apply_linearization(&p, &u0, &ones).unwrap();
        let expected = -1.0 + p.firing().derivative(c) * p.kernel().fourier_coefficient(0);
        for v in out.values() {
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_spectrum_matches_multipliers() {
        let p = params(64, 1.0, 0.0, 0.5);
        let u0 = GridFunction::constant(*p.kernel().grid(), C_STAR);
        let report = spectrum(&p, &u0, &SpectrumOptions::default()).unwrap();
        let analytic = analytic_constant_spectrum(&p, C_STAR);
        for (a, b) in report.eigenvalues.iter().zip(&analytic) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(report.hyperbolic);
        assert!(report.zero_index.is_none());
        assert!(report.unstable.is_empty());
        assert!(report.eigvec_alignment.is_none());
    }

    #[test]
    fn newton_converges_quickly_from_nearby_constant() {
        let p = params(64, 1.0, 0.0, 0.5);
        let guess = GridFunction::constant(*p.kernel().grid(), 1.28);
        let eq = newton_solve(&p, &guess, &NewtonOptions::default())
            .unwrap()
            .converged()
            .unwrap();
        assert!(eq.iterations <= 5);
        assert!(eq.is_constant());
        assert!((eq.state.values()[0] - C_STAR).abs() < 1e-10);
    }

    #[test]
    fn newton_contracts_back_to_constant() {
        let p = params(64, 1.0, 0.0, 0.5);
        let g = *p.kernel().grid();
        let guess = GridFunction::from_fn(g, |x| {
            C_STAR + 0.3 * (core::f64::consts::PI * x / 1.2).cos()
        })
        .unwrap();
        let eq = newton_solve(&p, &guess, &NewtonOptions::default())
            .unwrap()
            .converged()
            .unwrap();
        assert!(eq.is_constant());
        assert!(eq.state.values().iter().all(|v| (v - C_STAR).abs() < 1e-10));
    }

    #[test]
    fn newton_reports_failure_without_faulting() {
        let p = params(64, 12.0, 1.0, 0.35);
        let g = *p.kernel().grid();
        let guess = GridFunction::from_fn(g, |x| 1.0 + 3.0 * (7.0 * x).sin()).unwrap();
        let opts = NewtonOptions {
            tol: 1e-10,
            max_iter: 1,
        };
        match newton_solve(&p, &guess, &opts).unwrap() {
            NewtonOutcome::Failed { iterations, .. } => assert!(iterations <= 1),
            NewtonOutcome::Converged(_) => panic!("one iteration cannot converge"),
        }
    }

    #[test]
    fn single_orbit_in_contraction_regime() {
        let p = params(64, 1.0, 0.0, 0.5);
        let set = find_equilibria(&p, &MultistartSpec::default(), &[]).unwrap();
        assert_eq!(set.orbits.len(), 1);
        assert!(set.orbits[0].equilibrium.is_constant());
        assert_eq!(
            rotation_orbit(&p, &set.orbits[0].equilibrium)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn turing_scan_finds_first_unstable_stimulus() {
        let p = params(128, 12.0, 1.0, 0.05);
        let point = turing_scan(&p, 1, 0.05, 0.05, 1.0, 0.0).unwrap().unwrap();
        assert!((point.h - 0.35).abs() < 1e-12);
        assert!(point.growth > 0.28 && point.growth < 0.30);
        let none = turing_scan(&params(64, 1.0, 0.0, 0.5), 1, 0.05, 0.05, 1.0, 0.0).unwrap();
        assert!(none.is_none());
    }

    #[test]
    fn translation_distance_finds_subgrid_shift() {
        let g = CircleGrid::new(1.2, 64).unwrap();
        let w = g.wavenumber(1);
        let u = GridFunction::from_fn(g, |x| (w * x).sin() + 0.2 * (2.0 * w * x).cos()).unwrap();
        let (d, s) = translation_distance(&u.translate(3.3), &u).unwrap();
        assert!(d < 1e-10, "{d}");
        assert!((s - 3.3).abs() < 1e-8, "{s}");
        let (d, s) = translation_distance(&u.rotate(-7), &u).unwrap();
        assert!(d < 1e-12 && (s + 7.0).abs() < 1e-9, "{d} {s}");
        assert!(translation_distance(&u, &u.scale(1.5)).unwrap().0 > 0.1);
    }

    #[test]
    fn orbit_distance_detects_rotations() {
        let g = CircleGrid::new(1.2, 64).unwrap();
        let u = GridFunction::from_fn(g, |x| (2.6 * x).sin() + 0.2 * (5.2 * x).cos()).unwrap();
        assert_eq!(orbit_distance(&u, &u.rotate(13)).unwrap(), 0.0);
        assert!(orbit_distance(&u, &u.scale(2.0)).unwrap() > 0.1);
    }
}
