//! Firing-rate nonlinearity.
//!
//! The rate is the logistic `f(x) = 1 / (1 + e^{−β(x−θ)})` with values in
//! `(0, S_max)`, `S_max = 1`. Besides `f` and its first two derivatives the
//! module provides `f⁻¹`, the primitive `Φ(s) = ∫₀ˢ f⁻¹(r) dr` that enters the
//! Lyapunov functional, and sampling-based checks of the standing
//! hypotheses:
//!
//! - H1: `0 < f′(x) < k₁`,
//! - H2: `f` nondecreasing with values in `[0, S_max]` and `|Φ(s)| ≤ L`,
//! - H4: `f ∈ C²`, checked as a finite bound on `|f″|` that also serves as
//!   a Lipschitz constant for `f′`.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use crate::random::rng_for;
use crate::{Error, Result};

/// Logistic firing rate with gain `beta` and threshold `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FiringRate {
    beta: f64,
    theta: f64,
}

impl Default for FiringRate {
    fn default() -> Self {
        FiringRate {
            beta: 1.0,
            theta: 0.0,
        }
    }
}

impl FiringRate {
    pub fn new(beta: f64, theta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "firing gain beta must be positive, got {beta}"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(
                "firing threshold theta must be finite".into(),
            ));
        }
        Ok(FiringRate { beta, theta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn s_max(&self) -> f64 {
        1.0
    }

    /// Tight Lipschitz constant `sup f′ = β/4`.
    pub fn k1(&self) -> f64 {
        0.25 * self.beta
    }

    /// Intercept of the linear growth bound `|f(x)| ≤ k₁|x| + k₂`.
    ///
    /// For `θ = 0` this is `f(0) = 1/2`; in general `f(0) + k₁|θ|` bounds the
    /// intercept and the tighter value `sup_x (|f(x)| − k₁|x|)` is returned.
    pub fn k2(&self) -> f64 {
        // |f(x)| - k1|x| is maximized on the side x > 0 when theta >= 0; a
        // coarse scan followed by the analytic value at x = 0 is enough here
        let k1 = self.k1();
        let at_zero = self.value(0.0);
        let mut best = at_zero;
        let span = (self.theta.abs() + 40.0 / self.beta).max(1.0);
        let steps = 20_000;
        for i in 0..=steps {
            let x = -span + 2.0 * span * i as f64 / steps as f64;
            best = best.max(self.value(x) - k1 * x.abs());
        }
        best
    }

    /// `L = sup_{s ∈ [0, 1]} |Φ(s)|`.
    ///
    /// `Φ` is convex with `Φ′ = f⁻¹`, so the extremes are the endpoints
    /// `Φ(0) = 0`, `Φ(1) = θ` and the critical point `s = f(0)`.
    pub fn lyapunov_bound(&self) -> f64 {
        let s0 = self.value(0.0);
        self.primitive_of_inverse(s0)
            .map(|v| v.abs())
            .unwrap_or(0.0)
            .max(self.theta.abs())
    }

    /// `f(x)`, evaluated without overflow for large `|x|`.
    pub fn value(&self, x: f64) -> f64 {
        let z = self.beta * (x - self.theta);
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }

    /// `f′(x) = β s (1 − s)`, evaluated as `β e/(1 + e)²` with `e = e^{−|z|}`.
    pub fn derivative(&self, x: f64) -> f64 {
        let e = (-(self.beta * (x - self.theta)).abs()).exp();
        let d = 1.0 + e;
        self.beta * e / (d * d)
    }

    /// `f″(x) = β² s (1 − s)(1 − 2s)`.
    pub fn second_derivative(&self, x: f64) -> f64 {
        let z = self.beta * (x - self.theta);
        let e = (-z.abs()).exp();
        let d = 1.0 + e;
        let mag = self.beta * self.beta * e * (1.0 - e) / (d * d * d);
        if z >= 0.0 {
            -mag
        } else {
            mag
        }
    }

    /// `f`, `f′` or `f″` selected by `order`.
    pub fn eval(&self, x: f64, order: u8) -> Result<f64> {
        match order {
            0 => Ok(self.value(x)),
            1 => Ok(self.derivative(x)),
            2 => Ok(self.second_derivative(x)),
            _ => Err(Error::InvalidParameter(alloc::format!(
                "derivative order must be 0, 1 or 2, got {order}"
            ))),
        }
    }

    /// `f⁻¹(s) = θ + ln(s/(1−s))/β` for `s ∈ (0, 1)`.
    pub fn inverse(&self, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain {
                what: "s",
                value: s,
                domain: "(0, 1)",
            });
        }
        Ok(self.theta + (s.ln() - (-s).ln_1p()) / self.beta)
    }

    /// `Φ(s) = ∫₀ˢ f⁻¹(r) dr = θs + [s ln s + (1−s) ln(1−s)]/β` on `[0, 1]`,
    /// with `0·ln 0 = 0` at the endpoints.
    pub fn primitive_of_inverse(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain {
                what: "s",
                value: s,
                domain: "[0, 1]",
            });
        }
        Ok(self.theta * s + entropy(s) / self.beta)
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `s ln s + (1−s) ln(1−s)`.
fn entropy(s: f64) -> f64 {
    xlogx(s)
        + if s == 1.0 {
            0.0
        } else {
            (1.0 - s) * (-s).ln_1p()
        }
}

/// A scalar nonlinearity that can be screened against the hypotheses.
pub trait RateFunction {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn second_derivative(&self, x: f64) -> f64;
    /// Claimed Lipschitz constant `k₁`.
    fn k1(&self) -> f64;
    fn s_max(&self) -> f64;
    /// `Φ(s) = ∫₀ˢ f⁻¹`, `None` when `f` has no inverse on `(0, S_max)`.
    fn primitive_of_inverse(&self, s: f64) -> Option<f64>;
    /// Claimed bound `L` on `|Φ|`.
    fn lyapunov_bound(&self) -> f64;
}

impl RateFunction for FiringRate {
    fn value(&self, x: f64) -> f64 {
        FiringRate::value(self, x)
    }
    fn derivative(&self, x: f64) -> f64 {
        FiringRate::derivative(self, x)
    }
    fn second_derivative(&self, x: f64) -> f64 {
        FiringRate::second_derivative(self, x)
    }
    fn k1(&self) -> f64 {
        FiringRate::k1(self)
    }
    fn s_max(&self) -> f64 {
        1.0
    }
    fn primitive_of_inverse(&self, s: f64) -> Option<f64> {
        FiringRate::primitive_of_inverse(self, s).ok()
    }
    fn lyapunov_bound(&self) -> f64 {
        FiringRate::lyapunov_bound(self)
    }
}

/// Sampling range and density of the hypothesis checks.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            lo: -50.0,
            hi: 50.0,
            count: 10_000,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

/// One line of a [`HypothesisReport`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisCheck {
    pub hypothesis: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    pub samples: usize,
    /// `sup f′` over the samples.
    pub sup_derivative: f64,
    /// `sup |f″|` over the samples.
    pub sup_second_derivative: f64,
    /// Largest difference quotient of `f′` over adjacent samples.
    pub derivative_lipschitz: f64,
    /// `sup |Φ|` over a uniform grid of `[0, S_max]`.
    pub sup_primitive: f64,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.hypothesis == name)
    }

    /// Pass flag of every check whose name starts with `prefix`.
    pub fn passes(&self, prefix: &str) -> bool {
        self.checks
            .iter()
            .filter(|c| c.hypothesis.starts_with(prefix))
            .all(|c| c.pass)
    }
}

/// Screens `rate` against H1, H2 and H4 on seeded samples of `[lo, hi]`.
pub fn check_hypotheses<F: RateFunction + ?Sized>(rate: &F, spec: &SampleSpec) -> HypothesisReport {
    let tol = spec.tolerance;
    let count = spec.count.max(2);
    // uniform lattice with seeded jitter, sorted for the monotonicity check
    let mut rng = rng_for(spec.seed, 0);
    let h = (spec.hi - spec.lo) / (count - 1) as f64;
    let mut xs: Vec<f64> = (0..count)
        .map(|i| {
            let jitter = if i == 0 || i == count - 1 {
                0.0
            } else {
                (rng.random::<f64>() - 0.5) * h
            };
            spec.lo + i as f64 * h + jitter
        })
        .collect();
    xs.sort_by(|a, b| a.total_cmp(b));

    let values: Vec<f64> = xs.iter().map(|&x| rate.value(x)).collect();
    let d1: Vec<f64> = xs.iter().map(|&x| rate.derivative(x)).collect();
    let d2: Vec<f64> = xs.iter().map(|&x| rate.second_derivative(x)).collect();

    let sup_d1 = d1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_d1 = d1.iter().copied().fold(f64::INFINITY, f64::min);
    let sup_d2 = d2.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let lip = xs
        .windows(2)
        .zip(d1.windows(2))
        .filter(|(x, _)| x[1] > x[0])
        .map(|(x, d)| (d[1] - d[0]).abs() / (x[1] - x[0]))
        .fold(0.0, f64::max);
    let max_drop = values.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let s_max = rate.s_max();
    let range_lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let range_hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let primitive: Option<Vec<f64>> = (0..=1000)
        .map(|i| rate.primitive_of_inverse(s_max * i as f64 / 1000.0))
        .collect();
    let sup_primitive = primitive
        .as_ref()
        .map(|p| p.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
        .unwrap_or(f64::INFINITY);
    let k1 = rate.k1();
    let l_bound = rate.lyapunov_bound();

    let mut checks = Vec::new();
    let mut push = |name: &str, pass: bool, measured: f64, bound: f64| {
        checks.push(HypothesisCheck {
            hypothesis: name.into(),
            pass,
            measured,
            bound,
            tolerance: tol,
        });
    };
    push("H1: f' > 0", min_d1 > 0.0, min_d1, 0.0);
    push("H1: f' < k1", sup_d1 < k1 + tol, sup_d1, k1);
    push("H2: nondecreasing", max_drop <= tol, max_drop, 0.0);
    push("H2: f >= 0", range_lo >= -tol, range_lo, 0.0);
    push("H2: f <= S_max", range_hi <= s_max + tol, range_hi, s_max);
    push(
        "H2: |Phi| <= L",
        primitive.is_some() && sup_primitive <= l_bound + tol,
        sup_primitive,
        l_bound,
    );
    push(
        "H4: f'' bounded",
        sup_d2.is_finite() && d2.iter().all(|v| v.is_finite()),
        sup_d2,
        f64::INFINITY,
    );
    push(
        "H4: f' Lipschitz",
        lip <= sup_d2 * (1.0 + 1e-6) + tol,
        lip,
        sup_d2,
    );

    HypothesisReport {
        checks,
        samples: count,
        sup_derivative: sup_d1,
        sup_second_derivative: sup_d2,
        derivative_lipschitz: lip,
        sup_primitive,
    }
}

/// Extra cross-checks for the unit-gain logistic against the literal
/// constants `k₁ = 1`, `|f″| < 3`, `L = ln 2`, `k₂ = 1/2`.
pub fn reference_checks(rate: &FiringRate, report: &HypothesisReport) -> Vec<HypothesisCheck> {
    let tol = 1e-9;
    let mut out = Vec::new();
    if rate.beta() == 1.0 && rate.theta() == 0.0 {
        out.push(HypothesisCheck {
            hypothesis: "reference: sup f' < 1".into(),
            pass: report.sup_derivative < 1.0,
            measured: report.sup_derivative,
            bound: 1.0,
            tolerance: tol,
        });
        out.push(HypothesisCheck {
            hypothesis: "reference: |f''| < 3".into(),
            pass: report.sup_second_derivative < 3.0,
            measured: report.sup_second_derivative,
            bound: 3.0,
            tolerance: tol,
        });
        out.push(HypothesisCheck {
            hypothesis: "reference: L = ln 2".into(),
            pass: (report.sup_primitive - LN_2).abs() <= tol,
            measured: report.sup_primitive,
            bound: LN_2,
            tolerance: tol,
        });
        let k2 = rate.k2();
        out.push(HypothesisCheck {
            hypothesis: "reference: k2 = 1/2".into(),
            pass: (k2 - 0.5).abs() <= tol,
            measured: k2,
            bound: 0.5,
            tolerance: tol,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> FiringRate {
        FiringRate::default()
    }

    #[test]
    fn values_at_threshold() {
        let f = unit();
        assert_eq!(f.value(0.0), 0.5);
        assert_eq!(f.derivative(0.0), 0.25);
        assert_eq!(f.second_derivative(0.0), 0.0);
        assert_eq!(f.eval(0.0, 1).unwrap(), 0.25);
        assert!(f.eval(0.0, 3).is_err());
    }

    #[test]
    fn stable_for_large_arguments() {
        let f = FiringRate::new(12.0, 1.0).unwrap();
        for x in [-1e6, -800.0, 800.0, 1e6] {
            assert!(f.value(x).is_finite());
            assert!(f.derivative(x).is_finite());
            assert!(f.second_derivative(x).is_finite());
        }
        assert_eq!(f.value(-1e6), 0.0);
        assert_eq!(f.value(1e6), 1.0);
    }

    #[test]
    fn derivatives_match_literal_formulas() {
        let f = unit();
        for i in -40..=40 {
            let x = i as f64 * 0.37;
            let e = (-x).exp();
            let d1 = e / (1.0 + e).powi(2);
            let d2 = 2.0 * e * e / (1.0 + e).powi(3) - e / (1.0 + e).powi(2);
            assert!((f.derivative(x) - d1).abs() < 1e-15);
            assert!((f.second_derivative(x) - d2).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let f = unit();
        assert_eq!(f.inverse(0.5).unwrap(), 0.0);
        assert!((f.inverse(f.value(1.283)).unwrap() - 1.283).abs() < 1e-10);
        for i in 1..1000 {
            let s = i as f64 / 1000.0;
            assert!((f.value(f.inverse(s).unwrap()) - s).abs() < 1e-12);
        }
        // above x ≈ 15 the gap 1 − f(x) keeps too few digits to invert
        for i in -300..=150 {
            let x = i as f64 * 0.1;
            assert!((f.inverse(f.value(x)).unwrap() - x).abs() < 1e-9);
        }
        assert!(matches!(f.inverse(0.0), Err(Error::Domain { .. })));
        assert!(f.inverse(1.0).is_err());
        assert!(f.inverse(f64::NAN).is_err());
    }

    #[test]
    fn primitive_values() {
        let f = unit();
        assert_eq!(f.primitive_of_inverse(0.0).unwrap(), 0.0);
        assert_eq!(f.primitive_of_inverse(1.0).unwrap(), 0.0);
        assert!((f.primitive_of_inverse(0.5).unwrap() + LN_2).abs() < 1e-15);
        // closed form cross-checked against scipy quad of ln(s/(1−s))
        assert!(
            (f.primitive_of_inverse(0.78296).unwrap() - (-0.523_135_977_008_618_4)).abs() < 1e-12
        );
        assert!(f.primitive_of_inverse(1.5).is_err());
        assert!((f.lyapunov_bound() - LN_2).abs() < 1e-15);
    }

    #[test]
    fn primitive_derivative_is_inverse() {
        let f = FiringRate::new(3.0, 0.4).unwrap();
        let h = 1e-6;
        for i in 1..=99 {
            let s = i as f64 / 100.0;
            let fd = (f.primitive_of_inverse(s + h).unwrap()
                - f.primitive_of_inverse(s - h).unwrap())
                / (2.0 * h);
            assert!((fd - f.inverse(s).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn unit_logistic_passes_all() {
        let f = unit();
        let report = check_hypotheses(&f, &SampleSpec::default());
        assert!(report.all_pass(), "{report:?}");
        assert!(report.sup_derivative <= 0.25 && report.sup_derivative > 0.2499);
        assert!(report.sup_second_derivative < 3.0);
        assert!((report.sup_primitive - LN_2).abs() < 1e-9);
        let refs = reference_checks(&f, &report);
        assert_eq!(refs.len(), 4);
        assert!(refs.iter().all(|c| c.pass), "{refs:?}");
    }

    #[test]
    fn steep_logistic_passes() {
        let f = FiringRate::new(12.0, 1.0).unwrap();
        let report = check_hypotheses(&f, &SampleSpec::default());
        assert!(report.all_pass(), "{report:?}");
        assert!(report.sup_derivative <= 3.0 && report.sup_derivative > 2.98);
        assert!(reference_checks(&f, &report).is_empty());
    }

    struct Sine;
    impl RateFunction for Sine {
        fn value(&self, x: f64) -> f64 {
            x.sin()
        }
        fn derivative(&self, x: f64) -> f64 {
            x.cos()
        }
        fn second_derivative(&self, x: f64) -> f64 {
            -x.sin()
        }
        fn k1(&self) -> f64 {
            1.0
        }
        fn s_max(&self) -> f64 {
            1.0
        }
        fn primitive_of_inverse(&self, _s: f64) -> Option<f64> {
            None
        }
        fn lyapunov_bound(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn sine_fails_monotonicity() {
        let report = check_hypotheses(&Sine, &SampleSpec::default());
        assert!(!report.passes("H2"));
        assert!(!report.check("H2: nondecreasing").unwrap().pass);
        assert!(!report.check("H1: f' > 0").unwrap().pass);
        assert!(report.passes("H4"));
    }

    #[test]
    fn lipschitz_and_growth_bounds() {
        let f = unit();
        let k2 = f.k2();
        assert!((k2 - 0.5).abs() < 1e-12);
        let mut rng = rng_for(3, 0);
        for _ in 0..1000 {
            let x = rng.random_range(-30.0..30.0);
            let y = rng.random_range(-30.0..30.0);
            assert!((f.value(x) - f.value(y)).abs() <= f.k1() * (x - y).abs() + 1e-15);
            assert!(f.value(x).abs() <= f.k1() * x.abs() + k2 + 1e-15);
        }
    }

    #[test]
    fn rejects_bad_gain() {
        assert!(FiringRate::new(0.0, 0.0).is_err());
        assert!(FiringRate::new(-1.0, 0.0).is_err());
        assert!(FiringRate::new(1.0, f64::INFINITY).is_err());
    }
}
