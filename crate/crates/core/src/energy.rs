//! Lyapunov functional
//!
//! ```text
//! ℱ(u) = ∫ [ −½ S (J∗S) + Φ(S) − h S ] dw,   S = f(u),  Φ(s) = ∫₀ˢ f⁻¹
//! ```
//!
//! and checks that it does not increase along computed trajectories.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{FlowParams, Trajectory};
use crate::grid::GridFunction;
use crate::Result;

/// Default relative tolerance for discrete monotonicity.
pub const DEFAULT_TOL: f64 = 1e-9;

/// `ℱ(u)` by the grid quadrature.
pub fn lyapunov(p: &FlowParams, u: &GridFunction) -> Result<f64> {
    let firing = p.firing();
    let s = p.rates(u);
    let js = p.kernel().convolve(&s)?;
    let h = p.h();
    let w = u.grid().weight();
    let mut acc = 0.0;
    for (&si, &ji) in s.values().iter().zip(js.values()) {
        // S = f(u) always lies in [0, 1]
        let phi = firing.primitive_of_inverse(si)?;
        acc += -0.5 * si * ji + phi - h * si;
    }
    Ok(w * acc)
}

/// `dℱ(u)·v`, using `∂ℱ/∂u = −f′(u)·F(u)` pointwise.
pub fn directional_derivative(p: &FlowParams, u: &GridFunction, v: &GridFunction) -> Result<f64> {
    let rhs = p.rhs(u)?;
    let fp = u.map(|x| p.firing().derivative(x));
    let w = u.grid().weight();
    let mut acc = 0.0;
    for i in 0..u.len() {
        acc -= fp.values()[i] * rhs.values()[i] * v.values()[i];
    }
    Ok(w * acc)
}

/// Lower bound `−2τ(½S_max² + L + h S_max)` valid for every state.
pub fn lower_bound(p: &FlowParams) -> f64 {
    let s_max = p.firing().s_max();
    -p.kernel().grid().measure()
        * (0.5 * s_max * s_max + p.firing().lyapunov_bound() + p.h() * s_max)
}

/// Monotonicity verdict for ℱ along a trajectory.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyReport {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Largest positive step `ℱ(t_{k+1}) − ℱ(t_k)`, zero if none.
    pub max_increase: f64,
    /// Largest `(ℱ(t_{k+1}) − ℱ(t_k)) / (1 + |ℱ(t_k)|)`.
    pub max_relative_increase: f64,
    /// Discrete dissipation rates `(ℱ(t_{k+1}) − ℱ(t_k)) / Δt`.
    pub rates: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Evaluates ℱ on the recorded diagnostics of `traj` and checks that no step
/// increases it by more than `tol·(1 + |ℱ|)`.
pub fn dissipation_check(traj: &Trajectory, tol: f64) -> EnergyReport {
    let values = traj.lyapunov_values();
    let times: Vec<f64> = traj.diagnostics.iter().map(|d| d.t).collect();
    report_from_values(values, &times, tol)
}

/// Same as [`dissipation_check`], but recomputes ℱ on the stored states.
pub fn dissipation_check_states(
    p: &FlowParams,
    traj: &Trajectory,
    tol: f64,
) -> Result<EnergyReport> {
    let values = traj
        .states
        .iter()
        .map(|u| lyapunov(p, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(report_from_values(values, &traj.times, tol))
}

pub(crate) fn report_from_values(values: Vec<f64>, times: &[f64], tol: f64) -> EnergyReport {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut max_increase = 0.0f64;
    let mut max_rel = f64::NEG_INFINITY;
    let mut pass = values.iter().all(|v| v.is_finite());
    let mut rates = Vec::with_capacity(values.len().saturating_sub(1));
    for k in 1..values.len() {
        let jump = values[k] - values[k - 1];
        let rel = jump / (1.0 + values[k - 1].abs());
        max_increase = max_increase.max(jump);
        max_rel = max_rel.max(rel);
        if rel > tol {
            pass = false;
        }
        let dt = times[k] - times[k - 1];
        rates.push(jump / dt);
    }
    EnergyReport {
        values,
        min,
        max,
        max_increase,
        max_relative_increase: if max_rel.is_finite() { max_rel } else { 0.0 },
        rates,
        tolerance: tol,
        pass,
    }
}
