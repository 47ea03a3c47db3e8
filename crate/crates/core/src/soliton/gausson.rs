use num_complex::Complex64;
use serde::Serialize;

use super::lm::{self, LmOptions};
use super::{ansatz_defect, ansatz_residual, grid_carrier, SolitonProfile};
use crate::error::{LabError, Result};
use crate::evolution::{evolve, EvolveConfig, Integrator};
use crate::field::{Grid1D, WaveField};
use crate::models::{ModelSpec, Variant};

/// Largest relative Gaussian tail allowed at the domain edge.
pub const GAUSSON_TAIL: f64 = 1e-12;

/// `ψ = C·e^{−(B/4)(x − Vt + d)²}·e^{ikx − iωt}`, with any constant prefactor
/// folded into `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussonParams {
    pub amplitude: Complex64,
    pub width_b: f64,
    pub offset: f64,
    pub wavenumber: f64,
    pub omega: f64,
    /// `ħ₀k/m`.
    pub speed: f64,
}

impl GaussonParams {
    pub fn new(model: &ModelSpec, amplitude: Complex64, width_b: f64, offset: f64, wavenumber: f64, omega: f64) -> Self {
        Self {
            amplitude,
            width_b,
            offset,
            wavenumber,
            omega,
            speed: model.hbar0 * wavenumber / model.m,
        }
    }

    /// Gaussian width `√(2/B)` of `|ψ|`.
    pub fn width(&self) -> f64 {
        (2.0 / self.width_b).sqrt()
    }

    fn check(&self, grid: &Grid1D) -> Result<()> {
        if !(self.width_b > 0.0) {
            return Err(LabError::InvalidArgument(format!("width parameter must be positive, got {}", self.width_b)));
        }
        let half = 0.5 * grid.length();
        let tail = (-0.25 * self.width_b * half * half).exp();
        if tail >= GAUSSON_TAIL {
            return Err(LabError::DomainTooSmall { tail });
        }
        Ok(())
    }

    /// The gausson as a [`SolitonProfile`] with `E = ħ₀ω`.
    pub fn profile(&self, model: &ModelSpec, grid: Grid1D) -> Result<SolitonProfile> {
        self.check(&grid)?;
        let length = grid.length();
        let center = (-self.offset).rem_euclid(length);
        let (f, g) = grid
            .coordinates()
            .iter()
            .map(|&x| {
                let s = min_image(x - center, length);
                let a = self.amplitude * (-0.25 * self.width_b * s * s).exp();
                (a.re, a.im)
            })
            .unzip();
        Ok(SolitonProfile {
            grid,
            center,
            f,
            g,
            wavenumber: self.wavenumber,
            momentum: model.hbar0 * self.wavenumber,
            energy: model.hbar0 * self.omega,
            speed: self.speed,
            time_scale: Complex64::new(model.hbar0, 0.0),
            residual: f64::NAN,
            converged: false,
            iterations: 0,
            floored: vec![false; grid.len()],
        })
    }
}

fn min_image(s: f64, length: f64) -> f64 {
    s - length * (s / length).round()
}

/// Samples the gausson at time `t`, wrapping the Gaussian periodically.
pub fn gausson_field(grid: Grid1D, params: &GaussonParams, t: f64) -> Result<WaveField> {
    params.check(&grid)?;
    let length = grid.length();
    let b = params.width_b;
    WaveField::from_fn(grid, |x| {
        let s = min_image(x - params.speed * t + params.offset, length);
        params.amplitude
            * (-0.25 * b * s * s).exp()
            * Complex64::from_polar(1.0, params.wavenumber * x - params.omega * t)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutcome {
    pub params: GaussonParams,
    /// Relative PDE residual of the fitted ansatz.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Least-squares fit of `(B, ω)` to the log-birula PDE residual, starting
/// from `B = 1` and the free-particle frequency.
pub fn fit_gausson(model: &ModelSpec, grid: Grid1D, amplitude: Complex64, q: i64) -> Result<FitOutcome> {
    if model.variant != Variant::LogBirula {
        return Err(LabError::NotApplicable(format!("gausson fit needs log-birula, not {}", model.variant)));
    }
    model.validate(&grid)?;
    let k = grid_carrier(&grid, grid.wavenumber(q)?)?;
    let params_of = |x: &[f64]| GaussonParams::new(model, amplitude, x[0], 0.0, k, x[1]);
    let sqrt_dx = grid.dx().sqrt();
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let profile = params_of(x).profile(model, grid)?;
        let (defect, _) = ansatz_defect(model, &profile, 0.0)?;
        let scale = sqrt_dx / profile.envelope().l2_norm();
        Ok(defect
            .values()
            .iter()
            .flat_map(|z| [z.re * scale, z.im * scale])
            .collect())
    };
    let x0 = [1.0, model.hbar0 * k * k / (2.0 * model.m)];
    let opts = LmOptions { max_iter: 200, tol: 1e-12, ..LmOptions::default() };
    let out = lm::solve(residual, &x0, opts)?;
    let params = params_of(&out.x);
    let profile = params.profile(model, grid)?;
    Ok(FitOutcome {
        params,
        residual: ansatz_residual(model, &profile, &[0.0])?,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// Evolves the gausson with split steps for `t_final` and returns the
/// relative L² distance from the exact traveling form.
pub fn gausson_drift(model: &ModelSpec, grid: Grid1D, params: &GaussonParams, dt: f64, t_final: f64) -> Result<f64> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(LabError::InvalidArgument("need dt > 0 and T >= 0".into()));
    }
    let steps = (t_final / dt).round() as usize;
    let config = EvolveConfig::new(t_final / steps.max(1) as f64, steps, steps.max(1))
        .with_integrator(Integrator::SplitStep);
    let start = gausson_field(grid, params, 0.0)?;
    let end = evolve(model, &start, &config)?.field;
    let exact = gausson_field(grid, params, steps as f64 * config.dt)?;
    let diff = end.zip_map(&exact, |a, b| a - b)?;
    Ok(diff.l2_norm() / exact.l2_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid1D {
        Grid1D::new(16.0 * PI, 256).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn peak_sits_at_origin() {
        let model = ModelSpec::log_birula(1.0, 1.0, 0.1);
        let p = GaussonParams::new(&model, c(0.3, 0.4), 0.4, 0.0, 0.0, 0.0);
        let psi = gausson_field(grid(), &p, 0.0).unwrap();
        assert!((psi.values()[0].norm() - 0.5).abs() < 1e-15);
        assert!((psi.max_abs() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn translation_by_whole_nodes() {
        let g = grid();
        let model = ModelSpec::log_birula(1.0, 1.0, 0.1);
        let k = g.wavenumber(8).unwrap();
        let p = GaussonParams::new(&model, c(1.0, 0.0), 0.4, 0.0, k, 0.0);
        // V = 1, so t = 5·dx moves the packet five nodes.
        let t = 5.0 * g.dx();
        let later = gausson_field(g, &p, t).unwrap();
        let now = gausson_field(g, &p, 0.0).unwrap();
        let n = g.len();
        for j in 0..n {
            let expected = now.values()[(j + n - 5) % n].norm();
            assert!((later.values()[j].norm() - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn narrow_domain_is_rejected() {
        let model = ModelSpec::log_birula(1.0, 1.0, 0.1);
        let p = GaussonParams::new(&model, c(1.0, 0.0), 0.01, 0.0, 0.0, 0.0);
        assert!(matches!(gausson_field(grid(), &p, 0.0), Err(LabError::DomainTooSmall { .. })));
    }

    #[test]
    fn fitted_width_matches_coefficient_oracle() {
        // Matching x² coefficients: (ħ₀²/2m)(B²/4) = bB/2.
        for b in [0.1, 0.2] {
            let model = ModelSpec::log_birula(1.0, 1.0, b);
            let fit = fit_gausson(&model, grid(), c(1.0, 0.0), 8).unwrap();
            assert!(fit.converged, "{fit:?}");
            assert!((fit.params.width_b - 4.0 * b).abs() < 1e-6, "{fit:?}");
            assert!(fit.residual < 1e-8, "{}", fit.residual);
        }
    }

    #[test]
    fn fitted_frequency_matches_substitution() {
        let model = ModelSpec::log_birula(1.0, 1.0, 0.1);
        let amp = c(0.7, 0.2);
        let fit = fit_gausson(&model, grid(), amp, 8).unwrap();
        let (k, bw) = (fit.params.wavenumber, fit.params.width_b);
        let omega = k * k / 2.0 + bw / 4.0 - 0.1 * amp.norm_sqr().ln();
        assert!((fit.params.omega - omega).abs() < 1e-8, "{} vs {omega}", fit.params.omega);
    }

    #[test]
    fn evolved_gausson_keeps_its_shape() {
        let model = ModelSpec::log_birula(1.0, 1.0, 0.2);
        let fit = fit_gausson(&model, grid(), c(1.0, 0.0), 8).unwrap();
        let travel = fit.params.width() / fit.params.speed;
        let drift = gausson_drift(&model, grid(), &fit.params, 2e-3, travel).unwrap();
        assert!(drift < 1e-4, "{drift}");
    }

    #[test]
    fn no_gausson_without_nonlinearity() {
        let model = ModelSpec::log_birula(1.0, 1.0, 0.0);
        let fit = fit_gausson(&model, grid(), c(1.0, 0.0), 0).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn perturbed_profile_is_detected() {
        let model = ModelSpec::log_birula(1.0, 1.0, 0.1);
        let fit = fit_gausson(&model, grid(), c(1.0, 0.0), 8).unwrap();
        let mut profile = fit.params.profile(&model, grid()).unwrap();
        profile.f.iter_mut().for_each(|f| *f *= 1.01);
        assert!(ansatz_residual(&model, &profile, &[0.0]).unwrap() > 1e-3);
    }
}
