use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::lm::{self, LmOptions};
use super::{ansatz_defect, ansatz_residual, grid_carrier, SolitonProfile};
use crate::error::{LabError, Result};
use crate::models::{ModelSpec, Variant};

/// Which Planck constant divides `Et` in the temporal factor. The spatial
/// carrier always uses `k = p/α` so that it stays periodic on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierConvention {
    /// `e^{−iEt/ħ}` with the complex `ħ = α + iβ`.
    #[default]
    Complex,
    /// `e^{−iEt/α}`.
    RealPart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollocationOptions {
    /// Target relative PDE residual.
    pub tol: f64,
    pub max_iter: usize,
    pub convention: CarrierConvention,
}

impl Default for CollocationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 30,
            convention: CarrierConvention::Complex,
        }
    }
}

/// Solves for `(F, G, V)` making the traveling ansatz satisfy the fractal
/// equation at every node, by Levenberg-Marquardt on the PDE residual.
///
/// The complex scale of the envelope is pinned at the node nearest the
/// guess's centre: `F` keeps its guessed value there and `G` is zero.
pub fn collocation_solve_fractal(
    model: &ModelSpec,
    momentum: f64,
    energy: f64,
    guess: &SolitonProfile,
    opts: CollocationOptions,
) -> Result<SolitonProfile> {
    if model.variant != Variant::Fractal {
        return Err(LabError::NotApplicable(format!("collocation targets the fractal model, not {}", model.variant)));
    }
    let grid = guess.grid;
    model.validate(&grid)?;
    let n = grid.len();
    if guess.f.len() != n || guess.g.len() != n {
        return Err(LabError::Shape("initial guess length".into()));
    }
    if guess.f.iter().chain(&guess.g).all(|&v| v == 0.0) {
        return Err(LabError::RankDeficient { damping_history: vec![LmOptions::default().initial_damping] });
    }
    let k = grid_carrier(&grid, momentum / model.alpha)?;
    let time_scale = match opts.convention {
        CarrierConvention::Complex => model.hbar_eff(),
        CarrierConvention::RealPart => Complex64::new(model.alpha, 0.0),
    };
    let pin = ((guess.center / grid.dx()).round() as usize) % n;
    let pin_value = guess.f[pin];

    let build = |x: &[f64]| SolitonProfile {
        grid,
        center: guess.center,
        f: x[..n].to_vec(),
        g: x[n..2 * n].to_vec(),
        wavenumber: k,
        momentum,
        energy,
        speed: x[2 * n],
        time_scale,
        residual: f64::NAN,
        converged: false,
        iterations: 0,
        floored: guess.floored.clone(),
    };

    let x0: Vec<f64> = guess.f.iter().chain(&guess.g).copied().chain([guess.speed]).collect();
    let scale = {
        let (_, h) = ansatz_defect(model, &build(&x0), 0.0)?;
        1.0 / h.l2_norm().max(f64::MIN_POSITIVE)
    };
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let (defect, _) = ansatz_defect(model, &build(x), 0.0)?;
        let mut r: Vec<f64> = defect
            .values()
            .iter()
            .flat_map(|z| [z.re * scale, z.im * scale])
            .collect();
        r.push(x[pin] - pin_value);
        r.push(x[n + pin]);
        Ok(r)
    };
    let lm_opts = LmOptions {
        max_iter: opts.max_iter,
        tol: 0.5 * opts.tol,
        ..LmOptions::default()
    };
    let out = lm::solve(residual, &x0, lm_opts)?;
    let mut profile = build(&out.x);
    profile.residual = ansatz_residual(model, &profile, &[0.0])?;
    profile.converged = profile.residual < opts.tol;
    profile.iterations = out.iterations;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid1D;
    use crate::soliton::{shoot_kinematic_profile, KinematicProblem};
    use std::f64::consts::PI;

    fn flat_guess(grid: Grid1D, speed: f64) -> SolitonProfile {
        let n = grid.len();
        SolitonProfile {
            grid,
            center: 0.5 * grid.length(),
            f: vec![1.0; n],
            g: vec![0.0; n],
            wavenumber: 0.0,
            momentum: 0.0,
            energy: 0.0,
            speed,
            time_scale: Complex64::new(1.0, 0.0),
            residual: f64::NAN,
            converged: false,
            iterations: 0,
            floored: vec![false; n],
        }
    }

    #[test]
    fn linear_reduction_converges_immediately() {
        let grid = Grid1D::new(16.0 * PI, 64).unwrap();
        let model = ModelSpec::fractal(1.0, 1.0, 0.0);
        let prof = collocation_solve_fractal(&model, 1.0, 0.5, &flat_guess(grid, 1.0), CollocationOptions::default())
            .unwrap();
        assert!(prof.converged);
        assert!(prof.iterations <= 2);
        assert!(prof.residual < 1e-10, "{}", prof.residual);
    }

    #[test]
    fn zero_guess_is_rank_deficient() {
        let grid = Grid1D::new(16.0 * PI, 64).unwrap();
        let mut guess = flat_guess(grid, 1.0);
        guess.f.iter_mut().for_each(|f| *f = 0.0);
        let err = collocation_solve_fractal(&ModelSpec::fractal(1.0, 1.0, 0.05), 1.0, 0.5, &guess, CollocationOptions::default())
            .unwrap_err();
        assert!(matches!(err, LabError::RankDeficient { ref damping_history } if !damping_history.is_empty()));
    }

    #[test]
    fn off_grid_momentum_is_rejected() {
        let grid = Grid1D::new(16.0 * PI, 64).unwrap();
        let err = collocation_solve_fractal(
            &ModelSpec::fractal(1.0, 1.0, 0.05),
            0.3,
            0.5,
            &flat_guess(grid, 0.3),
            CollocationOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, LabError::InvalidArgument(_)));
    }

    /// Continuation from the compacton guess does not reach a solution:
    /// the solver stops with a large residual.
    #[test]
    fn compacton_continuation_does_not_converge() {
        let problem = KinematicProblem { m: 1.0, hbar0: 1.0, a: 1.0, energy: 0.5, momentum: 1.0 };
        let shot = shoot_kinematic_profile(&problem, 8.0 * PI, 128, 1e-7).unwrap();
        let model = ModelSpec::fractal(1.0, 1.0, 0.05);
        let opts = CollocationOptions { max_iter: 5, ..CollocationOptions::default() };
        let prof = collocation_solve_fractal(&model, 1.0, 0.5, &shot.profile, opts).unwrap();
        assert!(!prof.converged);
        assert!(prof.residual > 1e-6);
    }
}
