//! The family of Schrödinger-type equations behind a single interface.
//!
//! Every variant is written as `i ħ_eff ∂ψ/∂t = Hψ`; [`time_derivative`]
//! returns both `Hψ` and `∂ψ/∂t`. For the complex-ħ variant `ħ_eff = α + iβ`,
//! otherwise `ħ_eff = ħ₀`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{
    floored_sample, integrate, inner_product, laplacian, log_gradient, Grid1D,
    LogGradient, Scheme, WaveField, DEFAULT_FLOOR,
};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `iħ₀ψ_t = −(ħ₀²/2m)∇²ψ + Uψ`
    Linear,
    /// Linear plus the logarithmic potential `−b ln(ψ*ψ)`.
    LogBirula,
    /// Linear plus `(ħ₀²/2m)(a/m)|∇ln ψ|²`.
    Kinematic,
    /// Logarithmic potential plus the phase-gradient pressure term.
    HydroCombined,
    /// Complex ħ = α + iβ with the `(∇ln ψ)²` partner of the kinetic term.
    Fractal,
    /// Gross-Pitaevskii cubic term `g|ψ|²ψ`.
    CubicGp,
    /// Linear plus `σ(ħ₀/2m)(ħ − ħ₀)(∇² ln ψ)ψ`.
    #[serde(rename = "nabla2log")]
    Nabla2Log,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Linear,
        Variant::LogBirula,
        Variant::Kinematic,
        Variant::HydroCombined,
        Variant::Fractal,
        Variant::CubicGp,
        Variant::Nabla2Log,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Linear => "linear",
            Variant::LogBirula => "log-birula",
            Variant::Kinematic => "kinematic",
            Variant::HydroCombined => "hydro-combined",
            Variant::Fractal => "fractal",
            Variant::CubicGp => "cubic-gp",
            Variant::Nabla2Log => "nabla2log",
        }
    }

    /// Whether the Hamiltonian is Hermitian (real ħ, real potential).
    pub fn is_hermitian(self) -> bool {
        !matches!(self, Variant::Fractal | Variant::Nabla2Log)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| LabError::InvalidArgument(format!("unknown model variant '{s}'")))
    }
}

/// Model selection and physical parameters. Parameters that the active
/// variant does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub variant: Variant,
    pub m: f64,
    pub hbar0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub g: f64,
    pub hbar_second: f64,
    /// Side of the equation the `∇² ln ψ` correction sits on (±1).
    pub sigma: f64,
    /// External potential sampled on the grid; `None` means `U = 0`.
    pub potential: Option<Vec<f64>>,
    /// Relative amplitude floor for logarithmic terms.
    pub floor: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            variant: Variant::Linear,
            m: 1.0,
            hbar0: 1.0,
            alpha: 1.0,
            beta: 0.0,
            a: 0.0,
            b: 0.0,
            g: 0.0,
            hbar_second: 1.0,
            sigma: -1.0,
            potential: None,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl ModelSpec {
    pub fn linear(m: f64, hbar0: f64) -> Self {
        Self { m, hbar0, ..Self::default() }
    }

    pub fn log_birula(m: f64, hbar0: f64, b: f64) -> Self {
        Self { variant: Variant::LogBirula, m, hbar0, b, ..Self::default() }
    }

    pub fn kinematic(m: f64, hbar0: f64, a: f64) -> Self {
        Self { variant: Variant::Kinematic, m, hbar0, a, ..Self::default() }
    }

    pub fn hydro_combined(m: f64, hbar0: f64, a: f64, b: f64) -> Self {
        Self { variant: Variant::HydroCombined, m, hbar0, a, b, ..Self::default() }
    }

    pub fn fractal(m: f64, alpha: f64, beta: f64) -> Self {
        Self { variant: Variant::Fractal, m, alpha, beta, hbar0: alpha, ..Self::default() }
    }

    pub fn cubic_gp(m: f64, hbar0: f64, g: f64) -> Self {
        Self { variant: Variant::CubicGp, m, hbar0, g, ..Self::default() }
    }

    pub fn nabla2log(m: f64, hbar0: f64, hbar_second: f64, sigma: f64) -> Self {
        Self { variant: Variant::Nabla2Log, m, hbar0, hbar_second, sigma, ..Self::default() }
    }

    pub fn with_potential(mut self, potential: Vec<f64>) -> Self {
        self.potential = Some(potential);
        self
    }

    /// `ħ_eff` on the left of `iħ_eff ∂ψ/∂t`.
    pub fn hbar_eff(&self) -> Complex64 {
        match self.variant {
            Variant::Fractal => Complex64::new(self.alpha, self.beta),
            _ => Complex64::new(self.hbar0, 0.0),
        }
    }

    /// Real Planck constant multiplying the dispersive part: α or ħ₀.
    pub fn hbar_linear(&self) -> f64 {
        match self.variant {
            Variant::Fractal => self.alpha,
            _ => self.hbar0,
        }
    }

    /// Coefficient `c` with `Hψ ⊃ c ∇²ψ`.
    fn kinetic_coefficient(&self) -> Complex64 {
        match self.variant {
            // −(ħ²/2m)(α/ħ) = −ħα/2m
            Variant::Fractal => -self.hbar_eff() * self.alpha / (2.0 * self.m),
            _ => Complex64::new(-self.hbar0 * self.hbar0 / (2.0 * self.m), 0.0),
        }
    }

    /// Coefficient `c` with `∂ψ/∂t ⊃ c ∇²ψ` (purely imaginary).
    pub fn linear_rate_coefficient(&self) -> Complex64 {
        Complex64::new(0.0, self.hbar_linear() / (2.0 * self.m))
    }

    pub fn has_potential(&self) -> bool {
        self.potential
            .as_ref()
            .is_some_and(|u| u.iter().any(|&v| v != 0.0))
    }

    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        let bad = |msg: String| Err(LabError::InvalidArgument(msg));
        if !(self.m > 0.0) {
            return bad(format!("mass must be positive, got {}", self.m));
        }
        if !(self.hbar0 > 0.0) {
            return bad(format!("hbar0 must be positive, got {}", self.hbar0));
        }
        if self.variant == Variant::Fractal && !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.variant == Variant::Nabla2Log && !(self.hbar_second > 0.0) {
            return bad(format!("hbar_second must be positive, got {}", self.hbar_second));
        }
        if self.variant == Variant::Nabla2Log && self.sigma.abs() != 1.0 {
            return bad(format!("sigma must be +1 or -1, got {}", self.sigma));
        }
        if !(self.floor > 0.0) {
            return bad(format!("floor must be positive, got {}", self.floor));
        }
        if let Some(u) = &self.potential {
            if u.len() != grid.len() {
                return Err(LabError::Shape(format!(
                    "potential has {} samples, grid has {}",
                    u.len(),
                    grid.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return bad("potential contains non-finite samples".into());
            }
        }
        let params = [self.alpha, self.beta, self.a, self.b, self.g, self.hbar_second];
        if params.iter().any(|v| !v.is_finite()) {
            return bad("non-finite model parameter".into());
        }
        Ok(())
    }

    fn potential_at(&self, j: usize) -> f64 {
        self.potential.as_ref().map_or(0.0, |u| u[j])
    }
}

/// Result of evaluating a model on a field.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub dpsi_dt: WaveField,
    pub h_action: WaveField,
    pub floored: Vec<bool>,
}

impl ModelOutput {
    pub fn floored_count(&self) -> usize {
        self.floored.iter().filter(|&&b| b).count()
    }
}

/// `ln(ψ*ψ)` with the modulus floored at `floor · max|ψ|`.
fn log_density(psi: &WaveField, floor: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    let peak = psi.max_abs();
    if peak == 0.0 {
        return Err(LabError::DegenerateField);
    }
    let threshold = floor * peak;
    Ok(psi
        .values()
        .iter()
        .map(|&z| {
            let (zf, hit) = floored_sample(z, threshold);
            (zf.norm_sqr().ln(), hit)
        })
        .unzip())
}

fn merge_mask(into: &mut [bool], from: &[bool]) {
    into.iter_mut().zip(from).for_each(|(a, &b)| *a |= b);
}

/// Per-node nonlinear potentials, i.e. `Hψ = c∇²ψ + Σ V_j ψ_j`.
struct Potentials {
    /// Multiplicative potential at each node (includes U).
    values: Vec<Complex64>,
    floored: Vec<bool>,
}

fn potentials(model: &ModelSpec, psi: &WaveField) -> Result<Potentials> {
    let n = psi.len();
    let mut values: Vec<Complex64> = (0..n)
        .map(|j| Complex64::new(model.potential_at(j), 0.0))
        .collect();
    let mut floored = vec![false; n];
    let log_grad = |floored: &mut Vec<bool>| -> Result<LogGradient> {
        let lg = log_gradient(psi, model.floor)?;
        merge_mask(floored, &lg.floored);
        Ok(lg)
    };
    let (m, h0) = (model.m, model.hbar0);
    match model.variant {
        Variant::Linear => {}
        Variant::LogBirula => {
            let (ln_rho, mask) = log_density(psi, model.floor)?;
            merge_mask(&mut floored, &mask);
            for (v, l) in values.iter_mut().zip(ln_rho) {
                *v -= model.b * l;
            }
        }
        Variant::Kinematic => {
            let lg = log_grad(&mut floored)?;
            let c = h0 * h0 / (2.0 * m) * (model.a / m);
            for (v, z) in values.iter_mut().zip(lg.field.values()) {
                *v += c * z.norm_sqr();
            }
        }
        Variant::HydroCombined => {
            let (ln_rho, mask) = log_density(psi, model.floor)?;
            merge_mask(&mut floored, &mask);
            let lg = log_grad(&mut floored)?;
            // ∇ln(ψ/ψ*) = 2i ∇θ, so −(aħ²/8m²)(∇ln(ψ/ψ*))² = (aħ²/2m²)(∇θ)².
            let c = model.a * h0 * h0 / (2.0 * m * m);
            for ((v, l), z) in values.iter_mut().zip(ln_rho).zip(lg.field.values()) {
                *v += -model.b * l + c * z.im * z.im;
            }
        }
        Variant::Fractal => {
            if model.beta != 0.0 {
                let lg = log_grad(&mut floored)?;
                // −i(ħ²/2m)(β/ħ) = −iħβ/2m
                let c = -I * model.hbar_eff() * model.beta / (2.0 * m);
                for (v, z) in values.iter_mut().zip(lg.field.values()) {
                    *v += c * z * z;
                }
            }
        }
        Variant::CubicGp => {
            for (v, z) in values.iter_mut().zip(psi.values()) {
                *v += model.g * z.norm_sqr();
            }
        }
        Variant::Nabla2Log => {
            let lg = log_grad(&mut floored)?;
            // ∇²ln ψ with 2/3-rule dealiasing.
            let cutoff = 2.0 / 3.0 * std::f64::consts::PI / psi.grid().dx();
            let lap_log = lg.field.apply_symbol(
                |k| if k.abs() < cutoff { I * k } else { Complex64::new(0.0, 0.0) },
                |_| Complex64::new(0.0, 0.0),
            );
            let c = model.sigma * h0 / (2.0 * m) * (model.hbar_second - h0);
            for (v, z) in values.iter_mut().zip(lap_log.values()) {
                *v += c * z;
            }
        }
    }
    Ok(Potentials { values, floored })
}

fn to_rate(model: &ModelSpec, h: &WaveField) -> WaveField {
    let denom = I * model.hbar_eff();
    h.map(|z| z / denom)
}

/// `Hψ` and `∂ψ/∂t` for the active variant.
pub fn time_derivative(model: &ModelSpec, psi: &WaveField) -> Result<ModelOutput> {
    model.validate(psi.grid())?;
    let pot = potentials(model, psi)?;
    let lap = laplacian(psi, Scheme::Spectral);
    let c = model.kinetic_coefficient();
    let values = lap
        .values()
        .iter()
        .zip(psi.values())
        .zip(&pot.values)
        .map(|((&l, &z), &v)| c * l + v * z)
        .collect();
    let h_action = WaveField::new(*psi.grid(), values)
        .map_err(|_| LabError::NonFinite(format!("{} right-hand side", model.variant)))?;
    Ok(ModelOutput {
        dpsi_dt: to_rate(model, &h_action),
        h_action,
        floored: pot.floored,
    })
}

/// The part of `∂ψ/∂t` that is not `c∇²ψ`: external and nonlinear potentials.
pub fn local_rate(model: &ModelSpec, psi: &WaveField) -> Result<WaveField> {
    model.validate(psi.grid())?;
    let pot = potentials(model, psi)?;
    let values = pot.values.iter().zip(psi.values()).map(|(&v, &z)| v * z).collect();
    let h = WaveField::new(*psi.grid(), values)
        .map_err(|_| LabError::NonFinite(format!("{} local term", model.variant)))?;
    Ok(to_rate(model, &h))
}

/// Switches for [`hamiltonian_density_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensityOptions {
    /// Drop the `+bψ*ψ` term of the logarithmic density.
    pub omit_log_constant: bool,
}

/// Hamiltonian density with `ψ` and `ψ*` supplied as independent samples.
pub fn hamiltonian_density_with(
    model: &ModelSpec,
    psi: &WaveField,
    conj: &[Complex64],
    opts: DensityOptions,
) -> Result<Vec<Complex64>> {
    model.validate(psi.grid())?;
    if conj.len() != psi.len() {
        return Err(LabError::Shape("conjugate samples length".into()));
    }
    let lap = laplacian(psi, Scheme::Spectral);
    let c = model.kinetic_coefficient();
    let base = |j: usize| {
        let z = psi.values()[j];
        conj[j] * (c * lap.values()[j] + model.potential_at(j) * z)
    };
    let n = psi.len();
    let out: Vec<Complex64> = match model.variant {
        Variant::LogBirula | Variant::HydroCombined => {
            let peak = psi.max_abs();
            if peak == 0.0 {
                return Err(LabError::DegenerateField);
            }
            let thr2 = (model.floor * peak).powi(2);
            let extra = if model.variant == Variant::HydroCombined {
                let lg = log_gradient(psi, model.floor)?;
                let ca = model.a * model.hbar0 * model.hbar0 / (2.0 * model.m * model.m);
                lg.field.values().iter().map(|z| ca * z.im * z.im).collect()
            } else {
                vec![0.0; n]
            };
            (0..n)
                .map(|j| {
                    let z = psi.values()[j];
                    let rho = conj[j] * z;
                    let ln_rho = if rho.norm() < thr2 {
                        Complex64::new(thr2.ln(), rho.arg())
                    } else {
                        rho.ln()
                    };
                    let mut d = base(j) - model.b * conj[j] * ln_rho * z + conj[j] * extra[j] * z;
                    if !opts.omit_log_constant {
                        d += model.b * rho;
                    }
                    d
                })
                .collect()
        }
        Variant::CubicGp => (0..n)
            .map(|j| {
                let rho = conj[j] * psi.values()[j];
                base(j) + 0.5 * model.g * rho * rho
            })
            .collect(),
        // Densities of the remaining variants are ψ* times their local action.
        _ => {
            let pot = potentials(model, psi)?;
            (0..n)
                .map(|j| conj[j] * (c * lap.values()[j] + pot.values[j] * psi.values()[j]))
                .collect()
        }
    };
    if out.iter().any(|z: &Complex64| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::NonFinite("hamiltonian density".into()));
    }
    Ok(out)
}

/// Field-theory Hamiltonian density; its integral is `E_FT`.
pub fn hamiltonian_density(model: &ModelSpec, psi: &WaveField) -> Result<Vec<Complex64>> {
    let conj: Vec<Complex64> = psi.values().iter().map(|z| z.conj()).collect();
    hamiltonian_density_with(model, psi, &conj, DensityOptions::default())
}

/// `E_QM = ⟨ψ, Hψ⟩`.
pub fn energy_qm(model: &ModelSpec, psi: &WaveField) -> Result<Complex64> {
    let out = time_derivative(model, psi)?;
    inner_product(psi, &out.h_action)
}

/// `E_FT = ∫ H(ψ, ψ*) dx`.
pub fn energy_ft(model: &ModelSpec, psi: &WaveField) -> Result<Complex64> {
    Ok(integrate(psi.grid(), &hamiltonian_density(model, psi)?))
}

/// `time_derivative(λψ) − λ·time_derivative(ψ)`.
pub fn homogeneity_defect(model: &ModelSpec, psi: &WaveField, lambda: Complex64) -> Result<WaveField> {
    if lambda.norm() == 0.0 {
        return Err(LabError::InvalidArgument("homogeneity scale must be nonzero".into()));
    }
    let scaled = time_derivative(model, &psi.scaled(lambda))?;
    let base = time_derivative(model, psi)?;
    scaled.dpsi_dt.zip_map(&base.dpsi_dt, |a, b| a - lambda * b)
}

/// Max-abs of `∇ln(ψ/ψ*)·∇ln(ψ*/ψ) + (∇ln(ψ/ψ*))²`, each logarithmic
/// gradient taken from its own ratio field.
pub fn log_identity_check(psi: &WaveField) -> Result<f64> {
    let peak = psi.max_abs();
    if peak == 0.0 {
        return Err(LabError::DegenerateField);
    }
    let threshold = DEFAULT_FLOOR * peak;
    if psi.values().iter().any(|z| z.norm() < threshold) {
        return Err(LabError::InvalidArgument("field has nodes below the floor".into()));
    }
    let ratio = psi.map(|z| z / z.conj());
    let inverse = psi.map(|z| z.conj() / z);
    let u = log_gradient(&ratio, DEFAULT_FLOOR)?.field;
    let v = log_gradient(&inverse, DEFAULT_FLOOR)?.field;
    Ok(u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&a, &b)| (a * b + a * a).norm())
        .fold(0.0, f64::max))
}
