//! Deterministic test fields: random band-limited data and node-free variants.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::field::{Grid1D, WaveField};

fn random_modes(grid: &Grid1D, max_mode: i64, seed: u64) -> Vec<(f64, Complex64)> {
    let max_mode = max_mode.min(grid.len() as i64 / 2 - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (-max_mode..=max_mode)
        .map(|q| {
            let k = grid.wavenumber(q).expect("mode below Nyquist");
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            (k, Complex64::new(re, im) / (1.0 + q.abs() as f64))
        })
        .collect()
}

fn synthesize(grid: Grid1D, modes: &[(f64, Complex64)], offset: Complex64) -> WaveField {
    WaveField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|&(k, c)| c * Complex64::from_polar(1.0, k * x))
            .sum::<Complex64>()
            + offset
    })
    .expect("finite synthesis")
}

/// Random field containing modes `|q| <= max_mode` plus a real offset.
pub fn band_limited(grid: Grid1D, max_mode: i64, offset: f64, seed: u64) -> WaveField {
    let modes = random_modes(&grid, max_mode, seed);
    synthesize(grid, &modes, Complex64::new(offset, 0.0))
}

/// Band-limited field whose modulus stays above the sum of its oscillating
/// amplitudes, so it has no nodes and a well-conditioned logarithm.
pub fn node_free(grid: Grid1D, max_mode: i64, seed: u64) -> WaveField {
    let modes = random_modes(&grid, max_mode, seed);
    let total: f64 = modes.iter().map(|(_, c)| c.norm()).sum();
    synthesize(grid, &modes, Complex64::new(2.0 * total, 0.5 * total))
}

/// [`node_free`] rescaled to unit `norm²`.
pub fn normalized_node_free(grid: Grid1D, max_mode: i64, seed: u64) -> WaveField {
    let f = node_free(grid, max_mode, seed);
    let s = 1.0 / f.l2_norm();
    f.scaled(Complex64::new(s, 0.0))
}
