//! Uniform periodic discretization of the circle.
//!
//! The circle is identified with the chart `[−τ, τ)`; the arc measure is
//! `dz = (τ/π) dθ`, so the circle has total measure `2τ`. Grid points are
//! `x_i = −τ + i·(2τ/n)` and every point carries the same quadrature weight
//! `2τ/n` (the periodic trapezoid rule).

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::fft::Fft;
use crate::{Error, Result};

/// Smallest admissible number of grid points.
pub const MIN_POINTS: usize = 8;

/// A uniform grid on `[−τ, τ)`.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CircleGrid {
    tau: f64,
    n: usize,
}

impl PartialEq for CircleGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.tau.to_bits() == other.tau.to_bits()
    }
}

impl Eq for CircleGrid {}

impl CircleGrid {
    /// Builds a grid with half-period `tau` and `n` points.
    ///
    /// `tau` must exceed 1 so that kernels supported in `[−1, 1]` do not
    /// overlap themselves after periodization; `n` must be even and at least
    /// [`MIN_POINTS`].
    pub fn new(tau: f64, n: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 1.0) {
            return Err(Error::TauTooSmall(tau));
        }
        if n < MIN_POINTS || !n.is_multiple_of(2) {
            return Err(Error::BadGridSize(n));
        }
        Ok(CircleGrid { tau, n })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing, equal to the quadrature weight.
    pub fn spacing(&self) -> f64 {
        2.0 * self.tau / self.n as f64
    }

    pub fn weight(&self) -> f64 {
        self.spacing()
    }

    /// Total measure of the circle, `2τ`.
    pub fn measure(&self) -> f64 {
        2.0 * self.tau
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.tau + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point at `x = 0`.
    pub fn origin_index(&self) -> usize {
        self.n / 2
    }

    /// Angular wavenumber `πk/τ` of Fourier mode `k`.
    pub fn wavenumber(&self, k: i64) -> f64 {
        PI * k as f64 / self.tau
    }
}

/// Real-valued samples of a function on a [`CircleGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: CircleGrid,
    values: Vec<f64>,
}

/// `L¹`, `L²` and sup norms of a grid function.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl GridFunction {
    /// Wraps `values`; the length must match the grid and every value must be
    /// finite.
    pub fn new(grid: CircleGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(GridFunction { grid, values })
    }

    /// Internal constructor for values known to be well formed.
    pub(crate) fn from_vec_unchecked(grid: CircleGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn from_fn(grid: CircleGrid, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: CircleGrid, c: f64) -> Self {
        GridFunction {
            grid,
            values: alloc::vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: CircleGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::from_vec_unchecked(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        Ok(GridFunction::from_vec_unchecked(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + alpha * b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> GridFunction {
        self.map(|v| alpha * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max − min` of the samples.
    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }

    /// Rectangle-rule quadrature over the circle.
    pub fn integrate(&self) -> f64 {
        self.grid.weight() * self.values.iter().sum::<f64>()
    }

    /// Weighted inner product `(u, v) = ∫ u v dz`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.grid.weight() * dot(&self.values, &other.values))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.weight() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.weight() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn norms(&self) -> Norms {
        Norms {
            l1: self.l1_norm(),
            l2: self.l2_norm(),
            linf: self.linf_norm(),
        }
    }

    /// Weighted `L²` distance.
    pub fn l2_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(l2_distance_raw(
            self.grid.weight(),
            &self.values,
            &other.values,
        ))
    }

    /// Cyclic shift: `out[i] = values[(i + k) mod n]`.
    ///
    /// A shift by `k` grid points realizes the rotation of the circle by the
    /// angle `k·2π/n`.
    pub fn rotate(&self, k: i64) -> GridFunction {
        let n = self.len();
        let shift = k.rem_euclid(n as i64) as usize;
        let mut values = Vec::with_capacity(n);
        values.extend_from_slice(&self.values[shift..]);
        values.extend_from_slice(&self.values[..shift]);
        GridFunction::from_vec_unchecked(self.grid, values)
    }

    /// Fourier-collocation derivative d/dx.
    ///
    /// Mode `k` is multiplied by `i·πk/τ`; the Nyquist mode is dropped.
    pub fn spectral_derivative(&self) -> GridFunction {
        let n = self.len();
        let fft = Fft::new(n);
        let mut spectrum = fft.forward_real(&self.values);
        for (k, c) in spectrum.iter_mut().enumerate() {
            let wave = if k < n / 2 {
                k as i64
            } else if k == n / 2 {
                0
            } else {
                k as i64 - n as i64
            };
            *c *= Complex64::new(0.0, self.grid.wavenumber(wave));
        }
        GridFunction::from_vec_unchecked(self.grid, fft.inverse_real(spectrum))
    }

    /// Trigonometric-interpolation shift: `u(x_i + s·Δ)` for a real number
    /// of grid steps `s`. Agrees with [`rotate`](Self::rotate) up to round-off
    /// for integer `s`.
    pub fn translate(&self, s: f64) -> GridFunction {
        let n = self.len();
        let fft = Fft::new(n);
        let mut spectrum = fft.forward_real(&self.values);
        for (k, c) in spectrum.iter_mut().enumerate() {
            if k == n / 2 {
                *c *= (PI * s).cos();
            } else {
                let wave = if k < n / 2 {
                    k as f64
                } else {
                    k as f64 - n as f64
                };
                *c *= Complex64::from_polar(1.0, 2.0 * PI * wave * s / n as f64);
            }
        }
        GridFunction::from_vec_unchecked(self.grid, fft.inverse_real(spectrum))
    }

    /// Second-order central difference, kept as a cross-check for
    /// [`spectral_derivative`](Self::spectral_derivative).
    pub fn central_difference(&self) -> GridFunction {
        let n = self.len();
        let h2 = 2.0 * self.grid.spacing();
        let values = (0..n)
            .map(|i| (self.values[(i + 1) % n] - self.values[(i + n - 1) % n]) / h2)
            .collect();
        GridFunction::from_vec_unchecked(self.grid, values)
    }
}

/// Norms of `u` together with the inner product `(u, v)`.
pub fn norms_and_inner(u: &GridFunction, v: &GridFunction) -> Result<(Norms, f64)> {
    let inner = u.inner(v)?;
    Ok((u.norms(), inner))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_distance_raw(weight: f64, a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    (weight * s).sqrt()
}
