//! Numerics for the nonlocal neural-field equation
//!
//! ```text
//! ∂u/∂t = −u + J∗(f∘u) + h        on S¹ ≅ [−τ, τ)
//! ```
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: the periodic grid, connectivity kernels and circular
//! convolution, the firing-rate nonlinearity, time stepping, the Lyapunov
//! functional, equilibrium solving with spectral analysis of the
//! linearization, and attractor sampling with Hausdorff semidistances.
//! File formats, configuration and the command line live in the `nflab`
//! companion crate.
//!
//! Module map:
//!
//! - [`grid`]: uniform periodic grid, quadrature, norms, rotations, Fourier
//!   differentiation.
//! - [`kernel`]: kernel profiles, periodization and normalization, circular
//!   convolution (direct and FFT), Fourier coefficients.
//! - [`firing`]: logistic firing rate, inverse, primitive of the inverse,
//!   hypothesis checks.
//! - [`dynamics`]: right-hand side, ETD1 / RK4 steps, trajectories, absorbing
//!   radius.
//! - [`energy`]: Lyapunov functional and dissipation checks.
//! - [`equilibria`]: constant and nonconstant steady states, linearization,
//!   spectra, rotation orbits, multistart search.
//! - [`attractor`]: semidistances, unstable-manifold traces, attractor samples,
//!   continuity sweeps in the kernel.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod attractor;
pub mod dynamics;
pub mod energy;
pub mod equilibria;
mod error;
mod fft;
pub mod firing;
pub mod grid;
pub mod kernel;
pub mod random;

pub use error::{Error, Result};
