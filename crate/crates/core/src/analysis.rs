//! Plane-wave dispersion, functional-derivative and linearization checks.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::evolution::step_rk4;
use crate::field::{Grid1D, WaveField, DEFAULT_FLOOR};
use crate::models::{self, hamiltonian_density_with, DensityOptions, ModelSpec, Variant};

pub use crate::models::{energy_ft, energy_qm};

/// Largest relative deviation from a pure plane wave tolerated by
/// [`measure_dispersion`].
pub const SHAPE_TOLERANCE: f64 = 1e-6;

/// Largest single-node phase jump accepted when unwrapping.
pub const MAX_PHASE_JUMP: f64 = 0.9 * PI;

/// `amplitude·exp(i k_q x)` with `k_q = 2πq/L`.
pub fn plane_wave(grid: Grid1D, q: i64, amplitude: Complex64) -> Result<WaveField> {
    let k = grid.wavenumber(q)?;
    WaveField::from_fn(grid, |x| amplitude * Complex64::from_polar(1.0, k * x))
}

/// Closed-form plane-wave energy for real momentum `p` and amplitude `C`.
///
/// For the fractal model the expression is evaluated through the complex
/// chain `(ħ²/2m)(α/ħ)(p/ħ)² + i(β/ħ)(p²/2m)`, which collapses to `p²/2m`.
pub fn predicted_dispersion(model: &ModelSpec, momentum: f64, amplitude: Complex64) -> Result<Complex64> {
    if model.has_potential() {
        return Err(LabError::NotApplicable(
            "plane waves solve the equation only without an external potential".into(),
        ));
    }
    let m = model.m;
    let free = momentum * momentum / (2.0 * m);
    let rho = amplitude.norm_sqr();
    let log_shift = || {
        if rho == 0.0 {
            Err(LabError::InvalidArgument("logarithmic dispersion needs a nonzero amplitude".into()))
        } else {
            Ok(-model.b * rho.ln())
        }
    };
    let e = match model.variant {
        Variant::Linear | Variant::Nabla2Log => free,
        Variant::Kinematic => free * (1.0 + model.a / m),
        Variant::LogBirula => free + log_shift()?,
        Variant::HydroCombined => free * (1.0 + model.a / m) + log_shift()?,
        Variant::CubicGp => free + model.g * rho,
        Variant::Fractal => {
            let h = model.hbar_eff();
            let p = Complex64::new(momentum, 0.0);
            let dispersive = h * h / (2.0 * m) * (model.alpha / h) * (p / h) * (p / h);
            let drift = Complex64::i() * (model.beta / h) * p * p / (2.0 * m);
            return Ok(dispersive + drift);
        }
    };
    Ok(Complex64::new(e, 0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionResult {
    pub q: i64,
    pub wavenumber: f64,
    /// `p = ħ_lin·k`.
    pub momentum: f64,
    pub e_pred: Complex64,
    /// `ħ_lin·ω`, the energy read off the rotation frequency.
    pub e_meas: Complex64,
    /// `iħ_eff·λ`, the eigenvalue of `H` on the plane wave.
    pub e_operator: Complex64,
    pub omega: f64,
    pub growth_rate: f64,
    /// `|E_meas − E_pred| / max(|E_pred|, ε)`.
    pub deviation: f64,
    pub shape_deviation: f64,
}

/// Evolves a plane wave with RK4 and fits `ψ(T)/ψ(0) = e^{λT}` at node 0.
/// The amplitude growth rate `Re λ` is reported separately from `E_meas`.
pub fn measure_dispersion(
    model: &ModelSpec,
    grid: Grid1D,
    q: i64,
    amplitude: Complex64,
    dt: f64,
    t_final: f64,
) -> Result<DispersionResult> {
    if !(dt > 0.0) || !(t_final >= dt) {
        return Err(LabError::InvalidArgument(format!(
            "need 0 < dt <= T, got dt = {dt}, T = {t_final}"
        )));
    }
    let k = grid.wavenumber(q)?;
    let hbar = model.hbar_linear();
    let momentum = hbar * k;
    let e_pred = predicted_dispersion(model, momentum, amplitude)?;
    let psi0 = plane_wave(grid, q, amplitude)?;

    let n_steps = (t_final / dt).round() as usize;
    let mut psi = psi0.clone();
    let mut log_ratio = Complex64::new(0.0, 0.0);
    for _ in 0..n_steps {
        let next = step_rk4(model, &psi, dt)?;
        log_ratio += (next.values()[0] / psi.values()[0]).ln();
        psi = next;
    }
    let t = n_steps as f64 * dt;
    let lambda = log_ratio / t;

    let factor = log_ratio.exp();
    let shape_deviation = psi
        .values()
        .iter()
        .zip(psi0.values())
        .map(|(&z, &z0)| (z - z0 * factor).norm())
        .fold(0.0, f64::max)
        / psi.max_abs();
    if !(shape_deviation <= SHAPE_TOLERANCE) {
        return Err(LabError::NotASolution { deviation: shape_deviation });
    }

    let i = Complex64::i();
    let e_meas = Complex64::new(-hbar * lambda.im, 0.0);
    let scale = e_pred.norm().max(f64::EPSILON);
    Ok(DispersionResult {
        q,
        wavenumber: k,
        momentum,
        e_pred,
        e_meas,
        e_operator: i * model.hbar_eff() * lambda,
        omega: -lambda.im,
        growth_rate: lambda.re,
        deviation: (e_meas - e_pred).norm() / scale,
        shape_deviation,
    })
}

/// `E_FT − E_QM`.
pub fn energy_gap(model: &ModelSpec, psi: &WaveField) -> Result<Complex64> {
    Ok(energy_ft(model, psi)? - energy_qm(model, psi)?)
}

/// `E_FT − E_QM` implied by the density conventions: `b·‖ψ‖²` for the
/// logarithmic variants, `−(g/2)∫|ψ|⁴` for the cubic one, zero otherwise.
pub fn expected_energy_gap(model: &ModelSpec, psi: &WaveField) -> Complex64 {
    match model.variant {
        Variant::LogBirula | Variant::HydroCombined => Complex64::new(model.b * psi.norm_sqr(), 0.0),
        Variant::CubicGp => {
            let quartic: f64 = psi.values().iter().map(|z| z.norm_sqr().powi(2)).sum();
            Complex64::new(-0.5 * model.g * quartic * psi.grid().dx(), 0.0)
        }
        _ => Complex64::new(0.0, 0.0),
    }
}

/// Closed form of [`models::homogeneity_defect`], ignoring the amplitude
/// floor: `−(b/iħ₀)ln|λ|²·λψ` for the logarithmic variants,
/// `(g/iħ₀)(|λ|² − 1)λ|ψ|²ψ` for the cubic one, zero for the rest.
pub fn homogeneity_closed_form(model: &ModelSpec, psi: &WaveField, lambda: Complex64) -> WaveField {
    let i_hbar = Complex64::new(0.0, model.hbar0);
    match model.variant {
        Variant::LogBirula | Variant::HydroCombined => {
            let c = -model.b * lambda.norm_sqr().ln() / i_hbar * lambda;
            psi.scaled(c)
        }
        Variant::CubicGp => {
            let c = model.g * (lambda.norm_sqr() - 1.0) / i_hbar * lambda;
            psi.map(|z| c * z.norm_sqr() * z)
        }
        _ => psi.scaled(Complex64::new(0.0, 0.0)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeinbergReport {
    /// `max_j |δE/δψ*_j − (Hψ)_j| / max_j |(Hψ)_j|`.
    pub max_rel_deviation: f64,
    pub probe: f64,
    /// Set when the probe lies outside `[1e-8, 1e-4]` and rounding or
    /// truncation may dominate the deviation.
    pub noise_flagged: bool,
}

pub fn weinberg_check(model: &ModelSpec, psi: &WaveField, probe: f64) -> Result<WeinbergReport> {
    weinberg_check_with(model, psi, probe, DensityOptions::default())
}

/// Central differences of `E_FT` in each `ψ*_j`, with `ψ` held fixed.
pub fn weinberg_check_with(
    model: &ModelSpec,
    psi: &WaveField,
    probe: f64,
    opts: DensityOptions,
) -> Result<WeinbergReport> {
    match model.variant {
        Variant::Linear | Variant::LogBirula | Variant::CubicGp | Variant::Fractal => {}
        other => {
            return Err(LabError::NotApplicable(format!(
                "functional-derivative check is defined for linear, log-birula, cubic-gp and fractal, not {other}"
            )))
        }
    }
    if !(probe > 0.0) {
        return Err(LabError::InvalidArgument(format!("probe must be positive, got {probe}")));
    }
    let h = models::time_derivative(model, psi)?.h_action;
    let conj: Vec<Complex64> = psi.values().iter().map(|z| z.conj()).collect();
    let mut worst: f64 = 0.0;
    let mut shifted = conj.clone();
    for j in 0..psi.len() {
        shifted[j] = conj[j] + probe;
        let up = hamiltonian_density_with(model, psi, &shifted, opts)?;
        shifted[j] = conj[j] - probe;
        let down = hamiltonian_density_with(model, psi, &shifted, opts)?;
        shifted[j] = conj[j];
        // ΔE/(ε dx) with ΔE = Σ Δdensity·dx.
        let derivative: Complex64 =
            up.iter().zip(&down).map(|(u, d)| u - d).sum::<Complex64>() / (2.0 * probe);
        worst = worst.max((derivative - h.values()[j]).norm());
    }
    Ok(WeinbergReport {
        max_rel_deviation: worst / h.max_abs().max(f64::MIN_POSITIVE),
        probe,
        noise_flagged: !(1e-8..=1e-4).contains(&probe),
    })
}

/// Phase of `ψ` unwrapped left to right, plus the periodic winding number.
///
/// The start value is `arg ψ_0`, or the branch of it closest to
/// `reference` when given.
pub fn unwrap_phase(psi: &WaveField, reference: Option<f64>) -> Result<(Vec<f64>, i64)> {
    let v = psi.values();
    let wrap = |d: f64| d - 2.0 * PI * (d / (2.0 * PI)).round();
    let mut start = v[0].arg();
    if let Some(r) = reference {
        start = r + wrap(start - r);
    }
    let mut phase = Vec::with_capacity(v.len());
    phase.push(start);
    for j in 1..v.len() {
        let jump = wrap(v[j].arg() - v[j - 1].arg());
        if jump.abs() > MAX_PHASE_JUMP {
            return Err(LabError::PhaseUnwrap { node: j - 1, next: j, jump });
        }
        phase.push(phase[j - 1] + jump);
    }
    let last = v.len() - 1;
    let closing = wrap(v[0].arg() - v[last].arg());
    if closing.abs() > MAX_PHASE_JUMP {
        return Err(LabError::PhaseUnwrap { node: last, next: 0, jump: closing });
    }
    let winding = ((phase[last] + closing - phase[0]) / (2.0 * PI)).round() as i64;
    Ok((phase, winding))
}

#[derive(Debug, Clone)]
pub struct Linearized {
    pub field: WaveField,
    pub winding: i64,
    /// Unwrapped phase of the input at node 0.
    pub start_phase: f64,
}

/// `ψ′ = exp(iS/ħ_second)` with `S = ħ₀(θ − i ln|ψ|)`, i.e. `ψ^{ħ₀/ħ_second}`
/// on the unwrapped branch.
pub fn linearization_map(psi: &WaveField, hbar0: f64, hbar_second: f64) -> Result<Linearized> {
    linearization_map_from(psi, hbar0, hbar_second, None)
}

/// [`linearization_map`] with the starting branch chosen nearest
/// `reference`, keeping consecutive time slices on one branch.
pub fn linearization_map_from(
    psi: &WaveField,
    hbar0: f64,
    hbar_second: f64,
    reference: Option<f64>,
) -> Result<Linearized> {
    if !(hbar0 > 0.0) || !(hbar_second > 0.0) {
        return Err(LabError::InvalidArgument("Planck constants must be positive".into()));
    }
    let peak = psi.max_abs();
    if peak == 0.0 {
        return Err(LabError::DegenerateField);
    }
    let threshold = DEFAULT_FLOOR * peak;
    if let Some(j) = psi.values().iter().position(|z| z.norm() < threshold) {
        return Err(LabError::InvalidArgument(format!("field is floored at node {j}")));
    }
    let (phase, winding) = unwrap_phase(psi, reference)?;
    let r = hbar0 / hbar_second;
    let values = psi
        .values()
        .iter()
        .zip(&phase)
        .map(|(z, &theta)| (Complex64::new(z.norm().ln(), theta) * r).exp())
        .collect();
    Ok(Linearized {
        field: WaveField::new(*psi.grid(), values)?,
        winding,
        start_phase: phase[0],
    })
}

/// Smooth node-free periodic packet `exp(c·cos(2πx/L))`.
pub fn periodic_gaussian(grid: Grid1D, c: Complex64) -> Result<WaveField> {
    let k = 2.0 * PI / grid.length();
    WaveField::from_fn(grid, |x| (c * (k * x).cos()).exp())
}

/// Evolves `psi0` under a nabla2log model to `t_final`, maps three
/// consecutive slices, and returns `‖iħ₂ψ′_t − Hψ′‖/‖Hψ′‖` for the linear
/// model with `ħ₂`, using a central difference in time.
pub fn linearization_residual(model: &ModelSpec, psi0: &WaveField, dt: f64, t_final: f64) -> Result<f64> {
    if model.variant != Variant::Nabla2Log {
        return Err(LabError::NotApplicable(format!(
            "linearization applies to nabla2log, not {}",
            model.variant
        )));
    }
    if !(dt > 0.0) || !(t_final >= dt) {
        return Err(LabError::InvalidArgument("need 0 < dt <= T".into()));
    }
    let n = (t_final / dt).round() as usize;
    let mut psi = psi0.clone();
    for _ in 0..n - 1 {
        psi = step_rk4(model, &psi, dt)?;
    }
    let before = psi;
    let now = step_rk4(model, &before, dt)?;
    let after = step_rk4(model, &now, dt)?;

    let (h0, h2) = (model.hbar0, model.hbar_second);
    let centre = linearization_map(&now, h0, h2)?;
    let reference = Some(centre.start_phase * h2 / h0);
    let minus = linearization_map_from(&before, h0, h2, reference)?;
    let plus = linearization_map_from(&after, h0, h2, reference)?;

    let linear = ModelSpec::linear(model.m, h2);
    let h = models::time_derivative(&linear, &centre.field)?.h_action;
    let i_hbar = Complex64::new(0.0, h2);
    let lhs = plus
        .field
        .zip_map(&minus.field, |p, q| i_hbar * (p - q) / (2.0 * dt))?;
    let diff = lhs.zip_map(&h, |a, b| a - b)?;
    Ok(diff.l2_norm() / h.l2_norm().max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SignSelection {
    pub sigma: f64,
    pub residual_minus: f64,
    pub residual_plus: f64,
}

/// Runs [`linearization_residual`] for `σ = ±1` and keeps the smaller.
pub fn select_nabla2log_sign(
    m: f64,
    hbar0: f64,
    hbar_second: f64,
    psi0: &WaveField,
    dt: f64,
    t_final: f64,
) -> Result<SignSelection> {
    let residual = |sigma| {
        linearization_residual(&ModelSpec::nabla2log(m, hbar0, hbar_second, sigma), psi0, dt, t_final)
    };
    let residual_minus = residual(-1.0)?;
    let residual_plus = residual(1.0)?;
    let sigma = if residual_minus <= residual_plus { -1.0 } else { 1.0 };
    Ok(SignSelection { sigma, residual_minus, residual_plus })
}
