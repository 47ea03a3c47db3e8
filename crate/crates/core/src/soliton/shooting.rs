use num_complex::Complex64;
use serde::Serialize;

use super::SolitonProfile;
use crate::error::{LabError, Result};
use crate::field::Grid1D;

/// Envelope value below which the profile counts as having reached zero.
const ZERO_EVENT: f64 = 1e-9;
/// Envelope value above which the profile counts as non-localized.
const ESCAPE_EVENT: f64 = 10.0;
/// Steps never exceed this fraction of `F/|F′|`.
const STEP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KinematicProblem {
    pub m: f64,
    pub hbar0: f64,
    pub a: f64,
    pub energy: f64,
    pub momentum: f64,
}

impl KinematicProblem {
    /// `c = 1 + a/m`.
    pub fn c(&self) -> f64 {
        1.0 + self.a / self.m
    }

    /// `κ = [2mE − p²(1 + a/m)]/ħ₀²`.
    pub fn kappa(&self) -> f64 {
        (2.0 * self.m * self.energy - self.momentum * self.momentum * self.c()) / (self.hbar0 * self.hbar0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    /// Integration covered the whole half-domain.
    Reached,
    /// `F` reached zero at `y`; the profile is zero beyond.
    Zero { y: f64 },
    /// `|F|` exceeded the escape bound at `y`: the solution is not localized.
    Escape { y: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct KinematicShot {
    pub profile: SolitonProfile,
    pub termination: Termination,
}

/// Closed form of the profile equation `−F″F − (a/m)F′² + κF² = 0` with
/// `F(0) = 1`, `F′(0) = 0`: `cos^{1/c}(√(−κc)·y)` up to its first zero (and
/// zero beyond), `cosh^{1/c}(√(κc)·y)` for `κ > 0`.
pub fn riccati_profile(a: f64, m: f64, kappa: f64, y: f64) -> f64 {
    let c = 1.0 + a / m;
    if kappa == 0.0 {
        return 1.0;
    }
    let w = (kappa.abs() * c).sqrt();
    if kappa > 0.0 {
        return (w * y).cosh().powf(1.0 / c);
    }
    let arg = w * y.abs();
    if arg >= std::f64::consts::FRAC_PI_2 {
        0.0
    } else {
        arg.cos().powf(1.0 / c)
    }
}

fn rhs(state: [f64; 2], kappa: f64, ratio: f64) -> [f64; 2] {
    let [f, fp] = state;
    [fp, (kappa * f * f - ratio * fp * fp) / f]
}

fn rk4(state: [f64; 2], h: f64, kappa: f64, ratio: f64) -> [f64; 2] {
    let add = |s: [f64; 2], k: [f64; 2], w: f64| [s[0] + w * k[0], s[1] + w * k[1]];
    let k1 = rhs(state, kappa, ratio);
    let k2 = rhs(add(state, k1, 0.5 * h), kappa, ratio);
    let k3 = rhs(add(state, k2, 0.5 * h), kappa, ratio);
    let k4 = rhs(add(state, k3, h), kappa, ratio);
    [
        state[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates from `y = 0` through the targets `i·dy`, landing on each.
/// Returns the samples reached and how integration stopped.
fn integrate(kappa: f64, ratio: f64, dy: f64, count: usize, h_max: f64) -> (Vec<f64>, Termination) {
    let mut out = vec![1.0];
    let mut state: [f64; 2] = [1.0, 0.0];
    let mut y = 0.0;
    for i in 1..count {
        let target = i as f64 * dy;
        while target - y > 1e-12 * target {
            let slope = state[1].abs();
            let mut h = h_max.min(target - y);
            if slope > 0.0 {
                h = h.min(STEP_FRACTION * state[0] / slope);
            }
            let next = rk4(state, h, kappa, ratio);
            if !(next[0] > ZERO_EVENT) || h < 1e-15 * target {
                return (out, Termination::Zero { y });
            }
            if next[0] > ESCAPE_EVENT {
                return (out, Termination::Escape { y: y + h });
            }
            state = next;
            y += h;
        }
        y = target;
        out.push(state[0]);
    }
    (out, Termination::Reached)
}

/// Shoots the kinematic profile equation on `[−y_max, y_max)` sampled at
/// `n` nodes, mirroring the `y ≥ 0` solution. The reported residual is the
/// step-doubling estimate of the integration error; `tol` bounds it for
/// `converged`.
pub fn shoot_kinematic_profile(problem: &KinematicProblem, y_max: f64, n: usize, tol: f64) -> Result<KinematicShot> {
    let KinematicProblem { m, hbar0, a, energy, momentum } = *problem;
    if !(m > 0.0) || !(hbar0 > 0.0) {
        return Err(LabError::InvalidArgument("mass and Planck constant must be positive".into()));
    }
    let c = problem.c();
    if !(c > 0.0) {
        return Err(LabError::InvalidArgument(format!("need a > −m so that 1 + a/m > 0, got {c}")));
    }
    let grid = Grid1D::new(2.0 * y_max, n)?;
    let dy = grid.dx();
    let half = n / 2;
    let kappa = problem.kappa();
    let ratio = a / m;
    let h_max = dy.min(0.01);

    let (coarse, termination) = integrate(kappa, ratio, dy, half + 1, h_max);
    let (fine, _) = integrate(kappa, ratio, dy, half + 1, 0.5 * h_max);
    let residual = coarse
        .iter()
        .zip(&fine)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);

    let sample = |i: usize| coarse.get(i).copied();
    let mut f = vec![0.0; n];
    let mut floored = vec![true; n];
    for (j, (fj, fl)) in f.iter_mut().zip(floored.iter_mut()).enumerate() {
        let i = j.abs_diff(half);
        if let Some(v) = sample(i) {
            *fj = v;
            *fl = false;
        }
    }
    let profile = SolitonProfile {
        grid,
        center: y_max,
        f,
        g: vec![0.0; n],
        wavenumber: momentum / hbar0,
        momentum,
        energy,
        speed: momentum / m,
        time_scale: Complex64::new(hbar0, 0.0),
        residual,
        converged: residual <= tol,
        iterations: 1,
        floored,
    };
    Ok(KinematicShot { profile, termination })
}
