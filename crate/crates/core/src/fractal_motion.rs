//! Velocity scaling of Wiener paths and the two-regime fractal function.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64` and one stream per time step, so estimates are portable
//! and reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{LabError, Result};

pub const MIN_SAMPLES: usize = 10_000;
/// Batches used for the batch-means confidence interval.
pub const BATCHES: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct ScalingEstimate {
    /// `(dt, ⟨v²⟩)` with `v = Δx/dt`.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `ln⟨v²⟩` against `ln dt`.
    pub slope: f64,
    /// Two standard errors of the slope across batches.
    pub half_width: f64,
    pub samples: usize,
    /// `⟨Δx⟩/√(2D dt)` per time step; zero up to `O(1/√n)`.
    pub mean_increment_z: Vec<f64>,
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Samples Gaussian increments of variance `2·diffusion·dt` for every `dt`
/// and fits the scaling of the mean squared velocity.
pub fn wiener_velocity_scaling(diffusion: f64, dt_list: &[f64], n_samples: usize, seed: u64) -> Result<ScalingEstimate> {
    if !(diffusion > 0.0) {
        return Err(LabError::InvalidArgument(format!("diffusion must be positive, got {diffusion}")));
    }
    if dt_list.iter().any(|&dt| !(dt > 0.0 && dt.is_finite())) {
        return Err(LabError::InvalidArgument("time steps must be positive".into()));
    }
    let lo = dt_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = dt_list.iter().cloned().fold(0.0, f64::max);
    if dt_list.len() < 2 || hi / lo < 100.0 {
        return Err(LabError::InvalidArgument("time steps must span at least two decades".into()));
    }
    if n_samples < MIN_SAMPLES {
        return Err(LabError::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }

    let batch_len = n_samples / BATCHES;
    let mut batch_means = vec![vec![0.0; dt_list.len()]; BATCHES];
    let mut points = Vec::with_capacity(dt_list.len());
    let mut mean_increment_z = Vec::with_capacity(dt_list.len());
    for (i, &dt) in dt_list.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let scale = (2.0 * diffusion * dt).sqrt();
        let (mut sum_v2, mut sum_z) = (0.0, 0.0);
        for s in 0..n_samples {
            let z: f64 = rng.sample(StandardNormal);
            let v = scale * z / dt;
            sum_v2 += v * v;
            sum_z += z;
            let b = s / batch_len;
            if b < BATCHES {
                batch_means[b][i] += v * v / batch_len as f64;
            }
        }
        points.push((dt, sum_v2 / n_samples as f64));
        mean_increment_z.push(sum_z / n_samples as f64);
    }

    let log_dt: Vec<f64> = dt_list.iter().map(|dt| dt.ln()).collect();
    let log_v2: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let slope = fit_slope(&log_dt, &log_v2);
    let batch_slopes: Vec<f64> = batch_means
        .iter()
        .map(|means| fit_slope(&log_dt, &means.iter().map(|m| m.ln()).collect::<Vec<_>>()))
        .collect();
    let mean = batch_slopes.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;

    Ok(ScalingEstimate {
        points,
        slope,
        half_width: 2.0 * (var / BATCHES as f64).sqrt(),
        samples: n_samples,
        mean_increment_z,
    })
}

/// Parameters of `f(x, ε) = f₀(x)[1 + ζ(x)(λ/ε)^{−b_rg}]` with constant
/// `f₀` and `ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractalFunctionParams {
    pub f0: f64,
    pub zeta: f64,
    pub lambda: f64,
    pub b_rg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    ScaleDependent,
    Crossover,
    ScaleIndependent,
}

impl Regime {
    fn classify(term: f64) -> Self {
        if term > 10.0 {
            Regime::ScaleDependent
        } else if term < 0.1 {
            Regime::ScaleIndependent
        } else {
            Regime::Crossover
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FractalFunctionValues {
    pub values: Vec<f64>,
    /// `|ζ(x)(λ/ε)^{−b_rg}|` per sample.
    pub scale_terms: Vec<f64>,
    pub regimes: Vec<Regime>,
}

pub fn fractal_function_eval(x_samples: &[f64], epsilon: f64, params: &FractalFunctionParams) -> Result<FractalFunctionValues> {
    fractal_function_eval_with(x_samples, epsilon, params.lambda, params.b_rg, |_| params.f0, |_| params.zeta)
}

/// As [`fractal_function_eval`] with position-dependent `f₀(x)` and `ζ(x)`.
pub fn fractal_function_eval_with(
    x_samples: &[f64],
    epsilon: f64,
    lambda: f64,
    b_rg: f64,
    f0: impl Fn(f64) -> f64,
    zeta: impl Fn(f64) -> f64,
) -> Result<FractalFunctionValues> {
    if !(epsilon > 0.0) {
        return Err(LabError::InvalidArgument(format!("resolution must be positive, got {epsilon}")));
    }
    if !(lambda > 0.0) {
        return Err(LabError::InvalidArgument(format!("transition scale must be positive, got {lambda}")));
    }
    if !(b_rg < 0.0) {
        return Err(LabError::InvalidArgument(format!("exponent b_rg must be negative, got {b_rg}")));
    }
    let power = (lambda / epsilon).powf(-b_rg);
    let mut out = FractalFunctionValues {
        values: Vec::with_capacity(x_samples.len()),
        scale_terms: Vec::with_capacity(x_samples.len()),
        regimes: Vec::with_capacity(x_samples.len()),
    };
    for &x in x_samples {
        let term = zeta(x) * power;
        out.values.push(f0(x) * (1.0 + term));
        out.scale_terms.push(term.abs());
        out.regimes.push(Regime::classify(term.abs()));
    }
    Ok(out)
}

/// Slope of `ln f` against `ln(λ/ε)` between two resolutions at `x`.
pub fn scale_log_slope(params: &FractalFunctionParams, x: f64, eps_a: f64, eps_b: f64) -> Result<f64> {
    let fa = fractal_function_eval(&[x], eps_a, params)?.values[0];
    let fb = fractal_function_eval(&[x], eps_b, params)?.values[0];
    let la = (params.lambda / eps_a).ln();
    let lb = (params.lambda / eps_b).ln();
    Ok((fa.abs().ln() - fb.abs().ln()) / (la - lb))
}
