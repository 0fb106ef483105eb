//! Seeded random states.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! `(seed, stream)`, so results do not depend on the order in which jobs run.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[allow(unused_imports)]
use num_traits::Float;

use crate::grid::{CircleGrid, GridFunction};

/// Deterministic generator for job `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for the `index`-th job of sweep member `member`.
pub fn stream_id(member: u32, index: u32) -> u64 {
    ((member as u64) << 32) | index as u64
}

/// A smooth random state with exactly the given `L²` norm.
///
/// The state is a random trigonometric polynomial with modes `0..=modes` and
/// amplitudes decaying like `1/(1+k)`.
pub fn smooth_state<R: Rng + ?Sized>(
    grid: CircleGrid,
    rng: &mut R,
    modes: usize,
    l2_norm: f64,
) -> GridFunction {
    let coeffs: Vec<(f64, f64)> = (0..=modes)
        .map(|k| {
            let decay = 1.0 / (1.0 + k as f64);
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            (a * decay, if k == 0 { 0.0 } else { b * decay })
        })
        .collect();
    let values = grid
        .points()
        .into_iter()
        .map(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let arg = PI * k as f64 * x / grid.tau();
                    a * arg.cos() + b * arg.sin()
                })
                .sum()
        })
        .collect();
    let u = GridFunction::from_vec_unchecked(grid, values);
    let norm = u.l2_norm();
    if norm > 0.0 {
        u.scale(l2_norm / norm)
    } else {
        GridFunction::constant(grid, l2_norm / grid.measure().sqrt())
    }
}

/// Smooth state with `L²` norm drawn uniformly from `[0, radius]`.
pub fn state_in_ball<R: Rng + ?Sized>(
    grid: CircleGrid,
    rng: &mut R,
    modes: usize,
    radius: f64,
) -> GridFunction {
    let r = radius * rng.random::<f64>();
    smooth_state(grid, rng, modes, r)
}

/// White-noise state (independent normal samples) rescaled to the given norm.
pub fn rough_state<R: Rng + ?Sized>(grid: CircleGrid, rng: &mut R, l2_norm: f64) -> GridFunction {
    let values = (0..grid.len())
        .map(|_| StandardNormal.sample(rng))
        .collect::<Vec<f64>>();
    let u = GridFunction::from_vec_unchecked(grid, values);
    let norm = u.l2_norm();
    u.scale(l2_norm / norm)
}
