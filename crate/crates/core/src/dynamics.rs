//! Right-hand side `F(u) = −u + J∗f(u) + h` and time integration.
//!
//! The default stepper is exponential Euler (ETD1), which discretizes the
//! variation-of-constants form
//!
//! ```text
//! u(t) = e^{−t} u(0) + ∫₀ᵗ e^{−(t−s)} [J∗f(u(s)) + h] ds
//! ```
//!
//! by freezing the bracket over one step. It fixes equilibria exactly and is
//! a convex combination of `u` and a bounded term, so it cannot blow up. RK4
//! is kept as an independent reference integrator.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::energy;
use crate::firing::FiringRate;
use crate::grid::GridFunction;
use crate::kernel::Kernel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Integrator {
    #[default]
    Etd1,
    Rk4,
}

/// Everything that defines the flow `T_J(t)` plus the step size.
#[derive(Debug, Clone)]
pub struct FlowParams {
    h: f64,
    firing: FiringRate,
    kernel: Kernel,
    dt: f64,
    integrator: Integrator,
}

impl FlowParams {
    pub fn new(kernel: Kernel, firing: FiringRate, h: f64, dt: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "stimulus h must be positive, got {h}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "time step dt must be positive, got {dt}"
            )));
        }
        Ok(FlowParams {
            h,
            firing,
            kernel,
            dt,
            integrator: Integrator::Etd1,
        })
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    /// Same flow with a different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Ok(
            FlowParams::new(self.kernel.clone(), self.firing, self.h, dt)?
                .with_integrator(self.integrator),
        )
    }

    /// Same flow with a different stimulus.
    pub fn with_h(&self, h: f64) -> Result<Self> {
        Ok(
            FlowParams::new(self.kernel.clone(), self.firing, h, self.dt)?
                .with_integrator(self.integrator),
        )
    }

    /// Same flow with a different kernel.
    pub fn with_kernel(&self, kernel: Kernel) -> Self {
        FlowParams {
            kernel,
            ..self.clone()
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn firing(&self) -> &FiringRate {
        &self.firing
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn integrator(&self) -> Integrator {
        self.integrator
    }

    /// `S = f(u)` pointwise.
    pub fn rates(&self, u: &GridFunction) -> GridFunction {
        u.map(|v| self.firing.value(v))
    }

    /// `J∗f(u) + h`, the forcing term of the variation-of-constants formula.
    pub fn forcing(&self, u: &GridFunction) -> Result<GridFunction> {
        let conv = self.kernel.convolve(&self.rates(u))?;
        let h = self.h;
        Ok(conv.map(|v| v + h))
    }

    /// `F(u) = −u + J∗f(u) + h`.
    pub fn rhs(&self, u: &GridFunction) -> Result<GridFunction> {
        self.forcing(u)?.sub(u)
    }

    /// One exponential-Euler step: `u⁺ = e^{−dt}u + (1 − e^{−dt})(J∗f(u) + h)`.
    pub fn step_etd1(&self, u: &GridFunction) -> Result<GridFunction> {
        let decay = (-self.dt).exp();
        let gain = -(-self.dt).exp_m1();
        let forcing = self.forcing(u)?;
        u.zip_with(&forcing, |a, b| decay * a + gain * b)
    }

    /// One classical Runge–Kutta step of `u̇ = F(u)`.
    pub fn step_rk4(&self, u: &GridFunction) -> Result<GridFunction> {
        let dt = self.dt;
        let k1 = self.rhs(u)?;
        let k2 = self.rhs(&u.axpy(0.5 * dt, &k1)?)?;
        let k3 = self.rhs(&u.axpy(0.5 * dt, &k2)?)?;
        let k4 = self.rhs(&u.axpy(dt, &k3)?)?;
        let values = u
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                v + dt / 6.0
                    * (k1.values()[i]
                        + 2.0 * k2.values()[i]
                        + 2.0 * k3.values()[i]
                        + k4.values()[i])
            })
            .collect();
        Ok(GridFunction::from_vec_unchecked(*u.grid(), values))
    }

    /// One step with the configured integrator.
    pub fn step(&self, u: &GridFunction) -> Result<GridFunction> {
        match self.integrator {
            Integrator::Etd1 => self.step_etd1(u),
            Integrator::Rk4 => self.step_rk4(u),
        }
    }

    /// Integrates for `steps` steps and returns the final state only.
    pub fn advance(&self, u0: &GridFunction, steps: usize) -> Result<GridFunction> {
        let mut u = u0.clone();
        for k in 0..steps {
            u = self.step(&u)?;
            if !u.is_finite() {
                return Err(Error::Diverged {
                    t: (k + 1) as f64 * self.dt,
                });
            }
        }
        Ok(u)
    }

    /// Absorbing radii `R = 2τ‖J‖_∞ S_max + h` and `R√(2τ)`.
    pub fn absorbing_radius(&self) -> AbsorbingRadius {
        let measure = self.kernel.grid().measure();
        let r = measure * self.kernel.linf_norm() * self.firing.s_max() + self.h;
        AbsorbingRadius {
            pointwise: r,
            l2: r * measure.sqrt(),
        }
    }

    /// Number of steps covering `t`, i.e. `ceil(t/dt)` with a small guard
    /// against round-off in `t/dt`.
    pub fn steps_for(&self, t: f64) -> usize {
        let ratio = t / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() < 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AbsorbingRadius {
    /// Pointwise bound `R`.
    pub pointwise: f64,
    /// `L²` ball radius `R√(2τ)`.
    pub l2: f64,
}

/// Per-step diagnostics of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepDiagnostics {
    pub t: f64,
    pub l2_norm: f64,
    pub lyapunov: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// Sup norm of `F(u)`.
    pub residual: f64,
}

/// Sampled solution of the initial-value problem.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Times of the stored states.
    pub times: Vec<f64>,
    /// Stored states (every `stride`-th step plus the first and last).
    pub states: Vec<GridFunction>,
    /// Diagnostics for every step, including `t = 0`.
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> &GridFunction {
        self.states
            .last()
            .expect("trajectory always stores the initial state")
    }

    pub fn final_time(&self) -> f64 {
        self.diagnostics.last().map(|d| d.t).unwrap_or(0.0)
    }

    pub fn lyapunov_values(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.lyapunov).collect()
    }
}

fn diagnostics(p: &FlowParams, t: f64, u: &GridFunction) -> Result<StepDiagnostics> {
    let forcing = p.forcing(u)?;
    let residual = forcing
        .values()
        .iter()
        .zip(u.values())
        .fold(0.0, |m: f64, (f, v)| m.max((f - v).abs()));
    Ok(StepDiagnostics {
        t,
        l2_norm: u.l2_norm(),
        lyapunov: energy::lyapunov(p, u)?,
        min_u: u.min(),
        max_u: u.max(),
        residual,
    })
}

/// Integrates from `u0` up to time `t_end` (`ceil(t_end/dt)` steps), storing
/// every `stride`-th state. Diagnostics are recorded at every step.
pub fn simulate(
    p: &FlowParams,
    u0: &GridFunction,
    t_end: f64,
    stride: usize,
) -> Result<Trajectory> {
    if t_end.is_nan() || t_end < p.dt() {
        return Err(Error::InvalidParameter(alloc::format!(
            "final time {t_end} must be at least one step ({})",
            p.dt()
        )));
    }
    if *u0.grid() != *p.kernel().grid() {
        return Err(Error::GridMismatch);
    }
    let stride = stride.max(1);
    let steps = p.steps_for(t_end);
    let mut traj = Trajectory {
        times: alloc::vec![0.0],
        states: alloc::vec![u0.clone()],
        diagnostics: Vec::with_capacity(steps + 1),
    };
    traj.diagnostics.push(diagnostics(p, 0.0, u0)?);
    let mut u = u0.clone();
    for k in 1..=steps {
        u = p.step(&u)?;
        let t = k as f64 * p.dt();
        if !u.is_finite() {
            return Err(Error::Diverged { t });
        }
        traj.diagnostics.push(diagnostics(p, t, &u)?);
        if k % stride == 0 || k == steps {
            traj.times.push(t);
            traj.states.push(u.clone());
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CircleGrid;
    use crate::kernel::KernelProfile;

    fn params(n: usize) -> FlowParams {
        let g = CircleGrid::new(1.2, n).unwrap();
        let k = Kernel::new(KernelProfile::Bump, g).unwrap();
        FlowParams::new(k, FiringRate::default(), 0.5, 0.05).unwrap()
    }

    #[test]
    fn rhs_at_zero() {
        let p = params(64);
        let u = GridFunction::zeros(*p.kernel().grid());
        let r = p.rhs(&u).unwrap();
        for v in r.values() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = params(64);
        assert!(p.with_h(0.0).is_err());
        assert!(p.with_h(-1.0).is_err());
        assert!(p.with_dt(0.0).is_err());
    }

    #[test]
    fn spatially_constant_states_follow_scalar_recurrence() {
        let p = params(64);
        let f = *p.firing();
        let mut u = GridFunction::zeros(*p.kernel().grid());
        let mut c: f64 = 0.0;
        let decay = (-0.05f64).exp();
        for _ in 0..100 {
            u = p.step_etd1(&u).unwrap();
            c = decay * c + (1.0 - decay) * (f.value(c) + 0.5);
            for v in u.values() {
                assert!((v - c).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn etd1_is_consistent_with_rhs() {
        let p = params(64).with_dt(1e-4).unwrap();
        let g = *p.kernel().grid();
        let u = GridFunction::from_fn(g, |x| 0.8 * (2.6 * x).cos() + 0.2).unwrap();
        let next = p.step_etd1(&u).unwrap();
        let fd = next.sub(&u).unwrap().scale(1e4);
        let rhs = p.rhs(&u).unwrap();
        let factor = -(-1e-4f64).exp_m1() / 1e-4;
        let exact = fd.sub(&rhs.scale(factor)).unwrap().linf_norm();
        assert!(exact < 1e-9, "{exact:e}");
        let err = fd.sub(&rhs).unwrap().linf_norm();
        assert!(err <= 1e-4 * rhs.linf_norm(), "{err:e}");
    }

    #[test]
    fn absorbing_radius_formula() {
        let p = params(1024);
        let r = p.absorbing_radius();
        assert!((r.pointwise - 2.488_565_215_685_852_6).abs() < 1e-9);
        assert!((r.l2 - 3.855_268_654_520_950_5).abs() < 1e-9);
        let doubled = p.with_h(1.0).unwrap().absorbing_radius();
        assert!((doubled.pointwise - r.pointwise - 0.5).abs() < 1e-14);
    }

    #[test]
    fn simulate_strides_and_rejects_short_runs() {
        let p = params(64);
        let u0 = GridFunction::zeros(*p.kernel().grid());
        let traj = simulate(&p, &u0, 1.0, 7).unwrap();
        assert_eq!(traj.diagnostics.len(), 21);
        assert_eq!(
            traj.times,
            alloc::vec![0.0, 0.35, 0.7, 1.0]
                .into_iter()
                .map(|t: f64| (t / 0.05).round() * 0.05)
                .collect::<Vec<_>>()
        );
        assert!(simulate(&p, &u0, 0.01, 1).is_err());
    }
}
