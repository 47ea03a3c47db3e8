//! Time stepping (explicit RK4 and Strang splitting) with per-record diagnostics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{inner_product, integrate, WaveField};
use crate::models::{self, ModelSpec};

/// Default CFL factor for the explicit RK4 guard.
pub const DEFAULT_CFL: f64 = 0.5;
/// Growth factor (relative to the initial peak) treated as blow-up.
pub const BLOW_UP_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    #[default]
    Rk4,
    SplitStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub record_every: usize,
    pub integrator: Integrator,
    pub cfl: f64,
    /// Keep a copy of the field at every record.
    pub keep_snapshots: bool,
}

impl EvolveConfig {
    pub fn new(dt: f64, n_steps: usize, record_every: usize) -> Self {
        Self {
            dt,
            n_steps,
            record_every,
            integrator: Integrator::Rk4,
            cfl: DEFAULT_CFL,
            keep_snapshots: false,
        }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 || self.record_every == 0 {
            return Err(LabError::InvalidArgument(
                "n_steps and record_every must be positive".into(),
            ));
        }
        if !(self.cfl > 0.0) {
            return Err(LabError::InvalidArgument("cfl must be positive".into()));
        }
        Ok(())
    }
}

/// Largest RK4 step allowed: `cfl · (2m/ħ_lin) · dx²`.
pub fn stability_limit(model: &ModelSpec, dx: f64, cfl: f64) -> f64 {
    cfl * 2.0 * model.m / model.hbar_linear() * dx * dx
}

fn lincomb(base: &WaveField, terms: &[(Complex64, &WaveField)]) -> WaveField {
    let mut out = base.values().to_vec();
    for (c, f) in terms {
        for (o, v) in out.iter_mut().zip(f.values()) {
            *o += c * v;
        }
    }
    WaveField::from_parts_unchecked(*base.grid(), out)
}

fn rk4_generic(
    rhs: impl Fn(&WaveField) -> Result<WaveField>,
    psi: &WaveField,
    dt: f64,
) -> Result<WaveField> {
    let h = Complex64::new(dt, 0.0);
    let half = h * 0.5;
    let k1 = rhs(psi)?;
    let k2 = rhs(&lincomb(psi, &[(half, &k1)]))?;
    let k3 = rhs(&lincomb(psi, &[(half, &k2)]))?;
    let k4 = rhs(&lincomb(psi, &[(h, &k3)]))?;
    let sixth = h / 6.0;
    Ok(lincomb(
        psi,
        &[(sixth, &k1), (2.0 * sixth, &k2), (2.0 * sixth, &k3), (sixth, &k4)],
    ))
}

fn finite_or_blowup(f: WaveField, step: usize, time: f64) -> Result<WaveField> {
    f.check_finite("step").map_err(|_| LabError::BlowUp {
        step,
        time,
        reason: "non-finite amplitude".into(),
    })?;
    Ok(f)
}

/// One classical RK4 step with the CFL guard `|dt| ≤ cfl·(2m/ħ_lin)·dx²`.
pub fn step_rk4_with_cfl(model: &ModelSpec, psi: &WaveField, dt: f64, cfl: f64) -> Result<WaveField> {
    let limit = stability_limit(model, psi.grid().dx(), cfl);
    if !(dt.abs() <= limit) {
        return Err(LabError::Stability { dt, limit });
    }
    let out = rk4_generic(|f| Ok(models::time_derivative(model, f)?.dpsi_dt), psi, dt)?;
    finite_or_blowup(out, 1, dt)
}

pub fn step_rk4(model: &ModelSpec, psi: &WaveField, dt: f64) -> Result<WaveField> {
    step_rk4_with_cfl(model, psi, dt, DEFAULT_CFL)
}

/// Exact evolution under `∂ψ/∂t = c∇²ψ` for time `dt`.
pub fn linear_flow(model: &ModelSpec, psi: &WaveField, dt: f64) -> WaveField {
    let c = model.linear_rate_coefficient();
    let phase = |k: f64| (c * (-k * k * dt)).exp();
    psi.apply_symbol(phase, phase)
}

/// Strang splitting: exact half-steps of the dispersive part around an RK4
/// step of the local (potential and nonlinear) part. No CFL guard applies.
pub fn step_split(model: &ModelSpec, psi: &WaveField, dt: f64) -> Result<WaveField> {
    model.validate(psi.grid())?;
    let half = linear_flow(model, psi, 0.5 * dt);
    let mid = rk4_generic(|f| models::local_rate(model, f), &half, dt)?;
    finite_or_blowup(linear_flow(model, &mid, 0.5 * dt), 1, dt)
}

fn step_with(model: &ModelSpec, psi: &WaveField, dt: f64, config: &EvolveConfig) -> Result<WaveField> {
    match config.integrator {
        Integrator::Rk4 => step_rk4_with_cfl(model, psi, dt, config.cfl),
        Integrator::SplitStep => step_split(model, psi, dt),
    }
}

/// Observables recorded along a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub norm_sqr: f64,
    pub energy_qm: Complex64,
    pub energy_ft: Complex64,
    /// `(‖step(ψ, dt)‖² − ‖step(ψ, −dt)‖²) / 2dt` with the run's integrator.
    pub norm_rate_numeric: f64,
    /// `2 Re⟨ψ, ∂ψ/∂t⟩`.
    pub norm_rate_analytic: f64,
    pub floored_nodes: usize,
}

/// Norm-rate budget of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRate {
    /// `2 Re⟨ψ, ∂ψ/∂t⟩`.
    pub analytic: f64,
    /// Contribution of the dispersive and external-potential terms.
    pub hermitian: f64,
    /// Contribution of the nonlinear potential; for the complex-ħ model this
    /// is the source `2 Re⟨ψ, (1/iħ)(iW)ψ⟩`.
    pub anti_hermitian: f64,
}

pub fn norm_rate_check(model: &ModelSpec, psi: &WaveField) -> Result<NormRate> {
    let out = models::time_derivative(model, psi)?;
    let analytic = 2.0 * inner_product(psi, &out.dpsi_dt)?.re;
    // Without U, the local rate is exactly the nonlinear term's contribution.
    let free = ModelSpec { potential: None, ..model.clone() };
    let nonlinear = models::local_rate(&free, psi)?;
    let anti_hermitian = 2.0 * inner_product(psi, &nonlinear)?.re;
    Ok(NormRate {
        analytic,
        hermitian: analytic - anti_hermitian,
        anti_hermitian,
    })
}

fn record(
    model: &ModelSpec,
    psi: &WaveField,
    step: usize,
    t: f64,
    config: &EvolveConfig,
) -> Result<DiagnosticsRecord> {
    let out = models::time_derivative(model, psi)?;
    let energy_qm = inner_product(psi, &out.h_action)?;
    let energy_ft = integrate(psi.grid(), &models::hamiltonian_density(model, psi)?);
    let fwd = step_with(model, psi, config.dt, config)?;
    let bwd = step_with(model, psi, -config.dt, config)?;
    Ok(DiagnosticsRecord {
        step,
        t,
        norm_sqr: psi.norm_sqr(),
        energy_qm,
        energy_ft,
        norm_rate_numeric: (fwd.norm_sqr() - bwd.norm_sqr()) / (2.0 * config.dt),
        norm_rate_analytic: 2.0 * inner_product(psi, &out.dpsi_dt)?.re,
        floored_nodes: out.floored_count(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub field: WaveField,
    pub records: Vec<DiagnosticsRecord>,
    /// `(t, ψ)` at every record when requested.
    pub snapshots: Vec<(f64, WaveField)>,
}

fn at_time(time: f64) -> impl FnOnce(LabError) -> LabError {
    move |e| LabError::AtTime { time, source: Box::new(e) }
}

/// Integrates `n_steps` steps, recording at step 0, every `record_every`
/// steps, and at the final step.
pub fn evolve(model: &ModelSpec, psi0: &WaveField, config: &EvolveConfig) -> Result<Evolution> {
    config.validate()?;
    model.validate(psi0.grid())?;
    if config.integrator == Integrator::Rk4 {
        let limit = stability_limit(model, psi0.grid().dx(), config.cfl);
        if config.dt > limit {
            return Err(LabError::Stability { dt: config.dt, limit });
        }
    }
    let ceiling = BLOW_UP_FACTOR * psi0.max_abs();
    let mut psi = psi0.clone();
    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut keep = |psi: &WaveField, step: usize, records: &mut Vec<DiagnosticsRecord>| -> Result<()> {
        let t = step as f64 * config.dt;
        records.push(record(model, psi, step, t, config).map_err(at_time(t))?);
        if config.keep_snapshots {
            snapshots.push((t, psi.clone()));
        }
        Ok(())
    };
    keep(&psi, 0, &mut records)?;
    for step in 1..=config.n_steps {
        let t = step as f64 * config.dt;
        psi = step_with(model, &psi, config.dt, config).map_err(|e| match e {
            LabError::BlowUp { reason, .. } => LabError::BlowUp { step, time: t, reason },
            other => LabError::AtTime { time: t, source: Box::new(other) },
        })?;
        if psi.max_abs() > ceiling {
            return Err(LabError::BlowUp {
                step,
                time: t,
                reason: format!("amplitude exceeded {BLOW_UP_FACTOR:e} x initial peak"),
            });
        }
        if step % config.record_every == 0 || step == config.n_steps {
            keep(&psi, step, &mut records)?;
        }
    }
    Ok(Evolution { field: psi, records, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid1D;
    use crate::fixtures;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid() -> Grid1D {
        Grid1D::new(2.0 * PI * 8.0, 256).unwrap()
    }

    fn bump(g: Grid1D, width: f64) -> WaveField {
        let x0 = g.length() / 2.0;
        WaveField::from_fn(g, |x| c((-(x - x0).powi(2) / (2.0 * width * width)).exp(), 0.0)).unwrap()
    }

    #[test]
    fn plane_wave_phase_accumulates() {
        let g = grid();
        let k = g.wavenumber(3).unwrap();
        let psi0 = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let model = ModelSpec::linear(1.0, 1.0);
        let cfg = EvolveConfig::new(0.01, 500, 500);
        let run = evolve(&model, &psi0, &cfg).unwrap();
        let t = 5.0;
        let expect = psi0.scaled(Complex64::from_polar(1.0, -k * k / 2.0 * t));
        assert!(run.field.max_abs_diff(&expect).unwrap() < 1e-8);
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let g = Grid1D::new(2.0 * PI, 32).unwrap();
        let psi = fixtures::node_free(g, 2, 9);
        let psi = psi.scaled(c(1.0 / psi.max_abs(), 0.0));
        let model = ModelSpec::cubic_gp(1.0, 1.0, 1.0);
        let err = |dt: f64| {
            let one = step_rk4(&model, &psi, dt).unwrap();
            let two = step_rk4(&model, &step_rk4(&model, &psi, dt / 2.0).unwrap(), dt / 2.0).unwrap();
            one.max_abs_diff(&two).unwrap()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        let order = (e1 / e2).log2() - 1.0;
        assert!((3.7..=4.3).contains(&order), "observed order {order}");
    }

    #[test]
    fn guard_rejects_large_steps() {
        let g = grid();
        let psi = bump(g, 2.0);
        let model = ModelSpec::linear(1.0, 1.0);
        let limit = stability_limit(&model, g.dx(), DEFAULT_CFL);
        assert!(matches!(step_rk4(&model, &psi, 2.0 * limit), Err(LabError::Stability { .. })));
        let cfg = EvolveConfig::new(2.0 * limit, 10, 1);
        assert!(matches!(evolve(&model, &psi, &cfg), Err(LabError::Stability { .. })));
    }

    #[test]
    fn split_step_is_exact_for_linear_model() {
        let g = grid();
        let model = ModelSpec::linear(1.0, 1.0);
        for dt in [0.01, 0.7, 13.0] {
            let k = g.wavenumber(5).unwrap();
            let psi = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
            let out = step_split(&model, &psi, dt).unwrap();
            let expect = psi.scaled(Complex64::from_polar(1.0, -k * k / 2.0 * dt));
            assert!(out.max_abs_diff(&expect).unwrap() < 1e-12, "dt = {dt}");
        }
    }

    #[test]
    fn split_and_rk4_agree_to_second_order() {
        let g = grid();
        let psi = bump(g, 2.0).map(|z| z + c(0.3, 0.0));
        let model = ModelSpec::fractal(1.0, 1.0, 0.05);
        let diff = |dt: f64| {
            let n = (0.2 / dt).round() as usize;
            let a = evolve(&model, &psi, &EvolveConfig::new(dt, n, n)).unwrap();
            let b = evolve(&model, &psi, &EvolveConfig::new(dt, n, n).with_integrator(Integrator::SplitStep))
                .unwrap();
            a.field.max_abs_diff(&b.field).unwrap()
        };
        let (d1, d2) = (diff(0.02), diff(0.01));
        let order = (d1 / d2).log2();
        assert!((1.7..=2.3).contains(&order), "order {order} ({d1:e}, {d2:e})");
    }

    #[test]
    fn cubic_pulse_norm_conserved_by_split_step() {
        let g = grid();
        let psi = bump(g, 1.5);
        let model = ModelSpec::cubic_gp(1.0, 1.0, -1.0);
        let cfg = EvolveConfig::new(0.005, 1000, 1000).with_integrator(Integrator::SplitStep);
        let run = evolve(&model, &psi, &cfg).unwrap();
        assert!((run.field.norm_sqr() - psi.norm_sqr()).abs() < 1e-10);
    }

    #[test]
    fn linear_norm_and_energy_conserved_by_rk4() {
        let g = grid();
        let psi = bump(g, 2.0).map(|z| z * c(1.0, 0.5));
        let model = ModelSpec::linear(1.0, 1.0);
        let cfg = EvolveConfig::new(0.002, 10_000, 2_500);
        let run = evolve(&model, &psi, &cfg).unwrap();
        let n0 = run.records[0].norm_sqr;
        let e0 = run.records[0].energy_qm;
        for r in &run.records {
            assert!((r.norm_sqr - n0).abs() < 1e-10);
            assert!((r.energy_qm - e0).norm() < 1e-9);
        }
        assert_eq!(run.records.len(), 5);
        assert_eq!(run.records.last().unwrap().step, 10_000);
    }

    #[test]
    fn records_include_final_step() {
        let g = grid();
        let psi = bump(g, 2.0);
        let cfg = EvolveConfig::new(0.01, 7, 3).with_snapshots();
        let run = evolve(&ModelSpec::linear(1.0, 1.0), &psi, &cfg).unwrap();
        let steps: Vec<usize> = run.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 3, 6, 7]);
        assert_eq!(run.snapshots.len(), 4);
    }

    #[test]
    fn norm_rate_linear_is_zero() {
        let g = grid();
        let psi = fixtures::node_free(g, 5, 1);
        let r = norm_rate_check(&ModelSpec::linear(1.0, 1.0), &psi).unwrap();
        assert!(r.analytic.abs() < 1e-12);
    }

    #[test]
    fn norm_rate_fractal_plane_wave() {
        // Oracle: ∂ψ/∂t = (β − iα)k²/(2m) ψ for ψ = e^{ikx}, so the rate is
        // (β k²/m)·‖ψ‖², all of it from the W term.
        let g = grid();
        let k = g.wavenumber(2).unwrap();
        let psi = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let (m, beta) = (1.0, 0.2);
        let r = norm_rate_check(&ModelSpec::fractal(m, 1.0, beta), &psi).unwrap();
        let expect = beta * k * k / m * psi.norm_sqr();
        assert!((r.analytic - expect).abs() < 1e-10);
        assert!((r.anti_hermitian - expect).abs() < 1e-10);
        assert!(r.hermitian.abs() < 1e-10);
    }

    #[test]
    fn norm_rate_matches_finite_difference() {
        let g = grid();
        let psi = bump(g, 2.0).map(|z| z + c(0.2, 0.1));
        let model = ModelSpec::fractal(1.0, 1.0, 0.1);
        let h = 1e-4;
        let back = step_rk4(&model, &psi, -h).unwrap();
        let fwd = step_rk4(&model, &psi, h).unwrap();
        let fd = (fwd.norm_sqr() - back.norm_sqr()) / (2.0 * h);
        let r = norm_rate_check(&model, &psi).unwrap();
        assert!(r.analytic.abs() > 1e-3);
        assert!((fd - r.analytic).abs() < 1e-6, "{fd} vs {}", r.analytic);
    }

    #[test]
    fn diagnostics_rate_consistency_improves_with_dt() {
        let g = grid();
        let psi = bump(g, 2.0).map(|z| z + c(0.2, 0.1));
        let model = ModelSpec::fractal(1.0, 1.0, 0.1);
        let gap = |dt: f64| {
            let run = evolve(&model, &psi, &EvolveConfig::new(dt, 1, 1)).unwrap();
            let r = &run.records[0];
            (r.norm_rate_numeric - r.norm_rate_analytic).abs()
        };
        let (g1, g2) = (gap(0.02), gap(0.01));
        assert!(g2 < g1 / 3.0, "{g1:e} -> {g2:e}");
    }

    #[test]
    fn blow_up_reports_step() {
        let g = Grid1D::new(2.0 * PI, 16).unwrap();
        let psi = WaveField::constant(g, c(1.0, 0.0));
        // With ħ ≈ i the potential term gives ∂ψ/∂t ≈ ψ: exponential growth.
        let mut grow = ModelSpec::fractal(1.0, 1e-3, 1.0).with_potential(vec![-1.0; 16]);
        grow.hbar0 = 1e-3;
        let cfg = EvolveConfig::new(0.01, 1_000_000, 1_000_000);
        match evolve(&grow, &psi, &cfg) {
            Err(LabError::BlowUp { step, .. }) => assert!(step > 0),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }
}
