//! Named experiments driven by a JSON config, with JSON and CSV outputs.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::analysis;
use crate::error::{LabError, Result};
use crate::evolution::{evolve, EvolveConfig, Integrator};
use crate::field::{Grid1D, WaveField};
use crate::fixtures;
use crate::fractal_motion::{self, FractalFunctionParams, Regime};
use crate::models::{self, DensityOptions, ModelSpec, Variant};
use crate::soliton::{self, CarrierConvention, CollocationOptions, KinematicProblem, SolitonProfile};

pub const ENV_OUT: &str = "NLSE_LAB_OUT";
pub const DEFAULT_OUT: &str = "nlse-lab-out";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Dispersion,
    EnergyFunctionals,
    Evolve,
    FractalFunction,
    Homogeneity,
    Linearize,
    SolitonFractal,
    SolitonGausson,
    SolitonKinematic,
    Weinberg,
    WienerScaling,
}

impl ExperimentKind {
    /// Alphabetical.
    pub const ALL: [ExperimentKind; 11] = [
        ExperimentKind::Dispersion,
        ExperimentKind::EnergyFunctionals,
        ExperimentKind::Evolve,
        ExperimentKind::FractalFunction,
        ExperimentKind::Homogeneity,
        ExperimentKind::Linearize,
        ExperimentKind::SolitonFractal,
        ExperimentKind::SolitonGausson,
        ExperimentKind::SolitonKinematic,
        ExperimentKind::Weinberg,
        ExperimentKind::WienerScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Dispersion => "dispersion",
            ExperimentKind::EnergyFunctionals => "energy-functionals",
            ExperimentKind::Evolve => "evolve",
            ExperimentKind::FractalFunction => "fractal-function",
            ExperimentKind::Homogeneity => "homogeneity",
            ExperimentKind::Linearize => "linearize",
            ExperimentKind::SolitonFractal => "soliton-fractal",
            ExperimentKind::SolitonGausson => "soliton-gausson",
            ExperimentKind::SolitonKinematic => "soliton-kinematic",
            ExperimentKind::Weinberg => "weinberg",
            ExperimentKind::WienerScaling => "wiener-scaling",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentKind::Dispersion => "plane-wave energy-momentum relation, measured against the closed form",
            ExperimentKind::EnergyFunctionals => "gap between the field-theory and expectation-value energies",
            ExperimentKind::Evolve => "time evolution with norm, energy and norm-rate diagnostics",
            ExperimentKind::FractalFunction => "two-regime fractal function across resolutions",
            ExperimentKind::Homogeneity => "degree-one homogeneity defect against its closed form",
            ExperimentKind::Linearize => "map nabla2log solutions to linear ones and select the sign",
            ExperimentKind::SolitonFractal => "collocation solve for a traveling envelope of the complex-hbar equation",
            ExperimentKind::SolitonGausson => "fit the gausson width and frequency, then evolve it",
            ExperimentKind::SolitonKinematic => "shoot the kinematic profile and compare with the closed form",
            ExperimentKind::Weinberg => "functional derivative of the energy against the equation of motion",
            ExperimentKind::WienerScaling => "mean squared velocity of Brownian increments versus time step",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One line per experiment, alphabetical.
pub fn catalog() -> String {
    let mut out = String::new();
    for kind in ExperimentKind::ALL {
        let _ = writeln!(out, "  {:<20}{}", kind.name(), kind.description());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub length: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { length: 16.0 * std::f64::consts::PI, n: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub dispersion: f64,
    /// Optional bound on the plane-wave amplitude growth rate.
    pub growth: Option<f64>,
    pub energy: f64,
    pub homogeneity: f64,
    pub weinberg: f64,
    pub width: f64,
    pub residual: f64,
    pub drift: f64,
    pub profile: f64,
    pub collocation: f64,
    pub linearization: f64,
    pub round_trip: f64,
    pub slope: f64,
    pub log_slope: f64,
    pub norm: f64,
    pub norm_rate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            dispersion: 1e-6,
            growth: None,
            energy: 1e-8,
            homogeneity: 1e-10,
            weinberg: 1e-5,
            width: 1e-6,
            residual: 1e-8,
            drift: 1e-4,
            profile: 1e-6,
            collocation: 1e-6,
            linearization: 1e-4,
            round_trip: 1e-10,
            slope: 0.02,
            log_slope: 1e-3,
            norm: 1e-9,
            norm_rate: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessKind {
    /// Compacton from the kinematic shooting problem with `a = guess_a`.
    #[default]
    Kinematic,
    /// `F = 1`, `G = 0`.
    Flat,
}

fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub seed: u64,
    pub integrator: Integrator,
    pub snapshots: bool,
    /// Highest Fourier mode in random fields.
    pub max_mode: i64,
    /// Number of random fields for ensemble checks.
    pub fields: usize,
    pub q: i64,
    pub amplitude: [f64; 2],
    pub probe: f64,
    pub lambdas: Vec<[f64; 2]>,
    pub energy: f64,
    pub momentum: f64,
    pub guess: GuessKind,
    pub guess_a: f64,
    pub max_iter: usize,
    pub convention: CarrierConvention,
    /// Complex `c` of the packet `exp(c·cos(2πx/L))`.
    pub packet: [f64; 2],
    pub diffusion: f64,
    pub dt_list: Vec<f64>,
    pub n_samples: usize,
    pub f0: f64,
    pub zeta: f64,
    pub lambda: f64,
    pub b_rg: f64,
    /// Resolutions in units of `lambda`.
    pub epsilons: Vec<f64>,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            record_every: 100,
            seed: 0,
            integrator: Integrator::Rk4,
            snapshots: true,
            max_mode: 4,
            fields: 10,
            q: 2,
            amplitude: [1.0, 0.0],
            probe: 1e-6,
            lambdas: vec![[2.0, 0.0], [0.0, 1.0], [0.5, 0.3]],
            energy: 0.5,
            momentum: 1.0,
            guess: GuessKind::Kinematic,
            guess_a: 1.0,
            max_iter: 30,
            convention: CarrierConvention::Complex,
            packet: [1.0, 0.3],
            diffusion: 0.5,
            dt_list: log_spaced(-3.0, -1.0, 5),
            n_samples: 100_000,
            f0: 1.0,
            zeta: 1.0,
            lambda: 1.0,
            b_rg: -1.0,
            epsilons: log_spaced(-4.0, 4.0, 17),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: vec![Format::Json, Format::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Rejected configuration, reported with exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text).map_err(|e| ConfigError(format!("parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn grid(&self) -> std::result::Result<Grid1D, ConfigError> {
        Grid1D::new(self.grid.length, self.grid.n).map_err(|e| ConfigError(format!("grid: {e}")))
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let grid = self.grid()?;
        self.model
            .validate(&grid)
            .map_err(|e| ConfigError(format!("model: {e}")))?;
        let run = &self.run;
        let bad = |field: &str, why: &str| Err(ConfigError(format!("run.{field}: {why}")));
        if !(run.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if !(run.t_final >= run.dt) {
            return bad("t_final", "must be at least dt");
        }
        if run.record_every == 0 {
            return bad("record_every", "must be at least 1");
        }
        if run.fields == 0 {
            return bad("fields", "must be at least 1");
        }
        let need = |variants: &[Variant]| {
            if variants.contains(&self.model.variant) {
                Ok(())
            } else {
                let names: Vec<&str> = variants.iter().map(|v| v.name()).collect();
                Err(ConfigError(format!(
                    "model.variant: experiment {} needs one of {}, got {}",
                    self.experiment,
                    names.join(", "),
                    self.model.variant
                )))
            }
        };
        match self.experiment {
            ExperimentKind::Weinberg => need(&[Variant::Linear, Variant::LogBirula, Variant::CubicGp, Variant::Fractal]),
            ExperimentKind::SolitonGausson => need(&[Variant::LogBirula]),
            ExperimentKind::SolitonKinematic => need(&[Variant::Kinematic]),
            ExperimentKind::SolitonFractal => need(&[Variant::Fractal]),
            ExperimentKind::Linearize => need(&[Variant::Nabla2Log]),
            ExperimentKind::Dispersion => {
                if self.model.has_potential() {
                    return Err(ConfigError("model.potential: dispersion needs U = 0".into()));
                }
                if run.q.unsigned_abs() as usize >= grid.len() / 2 {
                    return bad("q", "must satisfy |q| < n/2");
                }
                Ok(())
            }
            ExperimentKind::FractalFunction => {
                if run.epsilons.len() < 2 || run.epsilons.iter().any(|&e| !(e > 0.0)) {
                    return bad("epsilons", "need at least two positive resolutions");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `"max"` when `value ≤ bound` passes, `"min"` when `value ≥ bound` does.
    pub kind: &'static str,
    pub passed: bool,
}

impl Check {
    fn max(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, kind: "max", passed: value <= bound }
    }

    fn min(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, kind: "min", passed: value >= bound }
    }

    fn holds(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, bound: 1.0, kind: "min", passed: ok }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Series {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Everything an experiment produces before it is written out.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Map<String, Value>,
    pub checks: Vec<Check>,
    pub series: Series,
    pub snapshots: Vec<(f64, WaveField)>,
}

impl Outcome {
    fn put(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn field_csv(t: f64, field: &WaveField) -> String {
    let mut out = format!("# t = {t:.16e}\nx,re,im,abs2\n");
    for (j, z) in field.values().iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            field.grid().x(j),
            z.re,
            z.im,
            z.norm_sqr()
        );
    }
    out
}

fn complex(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

/// Runs the configured experiment. Errors are numerical failures.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let grid = Grid1D::new(config.grid.length, config.grid.n)?;
    let mut out = Outcome::default();
    match config.experiment {
        ExperimentKind::Dispersion => dispersion(config, grid, &mut out)?,
        ExperimentKind::EnergyFunctionals => energy_functionals(config, grid, &mut out)?,
        ExperimentKind::Evolve => evolution(config, grid, &mut out)?,
        ExperimentKind::FractalFunction => fractal_function(config, &mut out)?,
        ExperimentKind::Homogeneity => homogeneity(config, grid, &mut out)?,
        ExperimentKind::Linearize => linearize(config, grid, &mut out)?,
        ExperimentKind::SolitonFractal => soliton_fractal(config, grid, &mut out)?,
        ExperimentKind::SolitonGausson => soliton_gausson(config, grid, &mut out)?,
        ExperimentKind::SolitonKinematic => soliton_kinematic(config, grid, &mut out)?,
        ExperimentKind::Weinberg => weinberg(config, grid, &mut out)?,
        ExperimentKind::WienerScaling => wiener(config, &mut out)?,
    }
    Ok(out)
}

fn dispersion(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let run = &cfg.run;
    let r = analysis::measure_dispersion(&cfg.model, grid, run.q, complex(run.amplitude), run.dt, run.t_final)?;
    out.put("dispersion", &r);
    out.checks.push(Check::max("deviation", r.deviation, run.tolerances.dispersion));
    if let Some(bound) = run.tolerances.growth {
        out.checks.push(Check::max("growth_rate", r.growth_rate.abs(), bound));
    }
    out.series = Series::new(&["q", "k", "p", "e_pred_re", "e_pred_im", "e_meas", "omega", "growth_rate"]);
    out.series.push(vec![
        r.q as f64,
        r.wavenumber,
        r.momentum,
        r.e_pred.re,
        r.e_pred.im,
        r.e_meas.re,
        r.omega,
        r.growth_rate,
    ]);
    Ok(())
}

fn random_field(cfg: &ExperimentConfig, grid: Grid1D, offset: u64) -> WaveField {
    fixtures::normalized_node_free(grid, cfg.run.max_mode, cfg.run.seed.wrapping_add(offset))
}

fn energy_functionals(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let model = &cfg.model;
    out.series = Series::new(&["field", "gap_re", "gap_im", "expected_re", "expected_im", "energy_qm_im"]);
    let mut worst: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in 0..cfg.run.fields {
        let psi = random_field(cfg, grid, s as u64);
        let qm = models::energy_qm(model, &psi)?;
        let gap = models::energy_ft(model, &psi)? - qm;
        let expected = analysis::expected_energy_gap(model, &psi);
        worst = worst.max((gap - expected).norm());
        lo = lo.min(gap.re);
        hi = hi.max(gap.re);
        out.series.push(vec![s as f64, gap.re, gap.im, expected.re, expected.im, qm.im]);
    }
    out.put("max_gap_error", worst);
    out.put("gap_spread", hi - lo);
    out.checks.push(Check::max("gap_error", worst, cfg.run.tolerances.energy));
    Ok(())
}

fn evolution(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let run = &cfg.run;
    let model = &cfg.model;
    let psi0 = random_field(cfg, grid, 0);
    let steps = (run.t_final / run.dt).round() as usize;
    let mut config = EvolveConfig::new(run.dt, steps, run.record_every).with_integrator(run.integrator);
    if run.snapshots {
        config = config.with_snapshots();
    }
    let ev = evolve(model, &psi0, &config)?;
    out.series = Series::new(&[
        "step",
        "t",
        "norm_sqr",
        "energy_qm_re",
        "energy_qm_im",
        "energy_ft_re",
        "energy_ft_im",
        "norm_rate_numeric",
        "norm_rate_analytic",
        "floored_nodes",
    ]);
    for r in &ev.records {
        out.series.push(vec![
            r.step as f64,
            r.t,
            r.norm_sqr,
            r.energy_qm.re,
            r.energy_qm.im,
            r.energy_ft.re,
            r.energy_ft.im,
            r.norm_rate_numeric,
            r.norm_rate_analytic,
            r.floored_nodes as f64,
        ]);
    }
    let first = &ev.records[0];
    let last = ev.records.last().expect("final record");
    let drift = ev
        .records
        .iter()
        .map(|r| (r.norm_sqr - first.norm_sqr).abs())
        .fold(0.0, f64::max)
        / first.norm_sqr
        / last.t.max(f64::MIN_POSITIVE);
    out.put("norm_drift_per_time", drift);
    out.put("final_time", last.t);
    let rate_error = ev
        .records
        .iter()
        .map(|r| (r.norm_rate_numeric - r.norm_rate_analytic).abs() / r.norm_rate_analytic.abs().max(1e-300))
        .fold(0.0, f64::max);
    out.put("norm_rate_rel_error", rate_error);
    if model.variant.is_hermitian() {
        out.checks.push(Check::max("norm_drift_per_time", drift, run.tolerances.norm));
    } else if model.variant == Variant::Fractal && model.beta != 0.0 {
        out.checks.push(Check::max("norm_rate_rel_error", rate_error, run.tolerances.norm_rate));
    }
    out.snapshots = ev.snapshots;
    Ok(())
}

fn homogeneity(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let psi = random_field(cfg, grid, 0);
    out.series = Series::new(&["lambda_re", "lambda_im", "defect_max", "closed_form_error"]);
    let mut worst: f64 = 0.0;
    for &l in &cfg.run.lambdas {
        let lambda = complex(l);
        let defect = models::homogeneity_defect(&cfg.model, &psi, lambda)?;
        let closed = analysis::homogeneity_closed_form(&cfg.model, &psi, lambda);
        let err = defect.max_abs_diff(&closed)?;
        worst = worst.max(err);
        out.series.push(vec![l[0], l[1], defect.max_abs(), err]);
    }
    out.put("max_closed_form_error", worst);
    out.checks.push(Check::max("closed_form_error", worst, cfg.run.tolerances.homogeneity));
    Ok(())
}

fn weinberg(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let psi = random_field(cfg, grid, 0);
    let report = analysis::weinberg_check(&cfg.model, &psi, cfg.run.probe)?;
    out.put("weinberg", &report);
    if cfg.model.variant == Variant::LogBirula {
        let opts = DensityOptions { omit_log_constant: true };
        let without = analysis::weinberg_check_with(&cfg.model, &psi, cfg.run.probe, opts)?;
        out.put("deviation_without_log_constant", without.max_rel_deviation);
    }
    out.checks.push(Check::max("max_rel_deviation", report.max_rel_deviation, cfg.run.tolerances.weinberg));
    Ok(())
}

fn profile_series(profile: &SolitonProfile) -> Series {
    let mut s = Series::new(&["y", "f", "g"]);
    for j in 0..profile.grid.len() {
        s.push(vec![profile.grid.x(j) - profile.center, profile.f[j], profile.g[j]]);
    }
    s
}

fn soliton_gausson(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let model = &cfg.model;
    let run = &cfg.run;
    let fit = soliton::fit_gausson(model, grid, complex(run.amplitude), run.q)?;
    let expected_b = 4.0 * model.m * model.b / (model.hbar0 * model.hbar0);
    let travel = if fit.params.speed != 0.0 { fit.params.width() / fit.params.speed.abs() } else { run.t_final };
    let drift = soliton::gausson_drift(model, grid, &fit.params, run.dt, travel)?;
    out.put("fit", &fit);
    out.put("expected_width_b", expected_b);
    out.put("travel_time", travel);
    out.put("shape_drift", drift);
    out.checks.push(Check::holds("converged", fit.converged));
    out.checks.push(Check::max("width_error", (fit.params.width_b - expected_b).abs(), run.tolerances.width));
    out.checks.push(Check::max("residual", fit.residual, run.tolerances.residual));
    out.checks.push(Check::max("shape_drift", drift, run.tolerances.drift));
    let profile = fit.params.profile(model, grid)?;
    out.series = profile_series(&profile);
    out.snapshots = vec![(0.0, soliton::gausson_field(grid, &fit.params, 0.0)?)];
    Ok(())
}

fn kinematic_problem(cfg: &ExperimentConfig, a: f64, hbar: f64) -> KinematicProblem {
    KinematicProblem {
        m: cfg.model.m,
        hbar0: hbar,
        a,
        energy: cfg.run.energy,
        momentum: cfg.run.momentum,
    }
}

fn soliton_kinematic(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let problem = kinematic_problem(cfg, cfg.model.a, cfg.model.hbar0);
    let tol = cfg.run.tolerances.profile;
    let shot = soliton::shoot_kinematic_profile(&problem, 0.5 * grid.length(), grid.len(), tol)?;
    let prof = &shot.profile;
    let mut series = Series::new(&["y", "f", "f_closed_form"]);
    let mut worst: f64 = 0.0;
    for j in 0..prof.grid.len() {
        let y = prof.grid.x(j) - prof.center;
        let closed = soliton::riccati_profile(problem.a, problem.m, problem.kappa(), y);
        worst = worst.max((prof.f[j] - closed).abs());
        series.push(vec![y, prof.f[j], closed]);
    }
    out.put("kappa", problem.kappa());
    out.put("c", problem.c());
    out.put("termination", shot.termination);
    out.put("integration_error", prof.residual);
    out.put("speed", prof.speed);
    out.put("max_closed_form_error", worst);
    out.checks.push(Check::max("closed_form_error", worst, tol));
    let v = soliton::imaginary_part_speed_check(problem.a, problem.m, problem.momentum);
    out.checks.push(Check::holds("speed_law", prof.speed == v));
    out.series = series;
    Ok(())
}

fn soliton_fractal(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let model = &cfg.model;
    let run = &cfg.run;
    let guess = match run.guess {
        GuessKind::Kinematic => {
            let problem = kinematic_problem(cfg, run.guess_a, model.alpha);
            let mut shot = soliton::shoot_kinematic_profile(&problem, 0.5 * grid.length(), grid.len(), run.tolerances.profile)?;
            shot.profile.speed = run.momentum / model.m;
            shot.profile
        }
        GuessKind::Flat => {
            let n = grid.len();
            SolitonProfile {
                grid,
                center: 0.5 * grid.length(),
                f: vec![1.0; n],
                g: vec![0.0; n],
                wavenumber: 0.0,
                momentum: run.momentum,
                energy: run.energy,
                speed: run.momentum / model.m,
                time_scale: model.hbar_eff(),
                residual: f64::NAN,
                converged: false,
                iterations: 0,
                floored: vec![false; n],
            }
        }
    };
    let opts = CollocationOptions {
        tol: run.tolerances.collocation,
        max_iter: run.max_iter,
        convention: run.convention,
    };
    let prof = soliton::collocation_solve_fractal(model, run.momentum, run.energy, &guess, opts)?;
    let g_max = prof.g.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    out.put("residual", prof.residual);
    out.put("converged", prof.converged);
    out.put("iterations", prof.iterations);
    out.put("speed", prof.speed);
    out.put("max_abs_g", g_max);
    out.checks.push(Check::holds("converged", prof.converged));
    out.checks.push(Check::max("residual", prof.residual, run.tolerances.collocation));
    out.checks.push(Check::min("max_abs_g", g_max, 1e-8));
    out.series = profile_series(&prof);
    Ok(())
}

fn linearize(cfg: &ExperimentConfig, grid: Grid1D, out: &mut Outcome) -> Result<()> {
    let model = &cfg.model;
    let run = &cfg.run;
    let psi0 = analysis::periodic_gaussian(grid, complex(run.packet))?;
    let sel = analysis::select_nabla2log_sign(model.m, model.hbar0, model.hbar_second, &psi0, run.dt, run.t_final)?;
    let there = analysis::linearization_map(&psi0, model.hbar0, model.hbar_second)?;
    let back = analysis::linearization_map(&there.field, model.hbar_second, model.hbar0)?;
    let round_trip = back.field.max_abs_diff(&psi0)? / psi0.max_abs();
    let residual = sel.residual_minus.min(sel.residual_plus);
    out.put("selection", sel);
    out.put("residual", residual);
    out.put("round_trip_error", round_trip);
    out.put("winding", there.winding);
    out.checks.push(Check::max("residual", residual, run.tolerances.linearization));
    out.checks.push(Check::max("round_trip_error", round_trip, run.tolerances.round_trip));
    out.series = Series::new(&["x", "re", "im", "mapped_re", "mapped_im"]);
    for (j, (z, w)) in psi0.values().iter().zip(there.field.values()).enumerate() {
        out.series.push(vec![grid.x(j), z.re, z.im, w.re, w.im]);
    }
    Ok(())
}

fn wiener(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let run = &cfg.run;
    let est = fractal_motion::wiener_velocity_scaling(run.diffusion, &run.dt_list, run.n_samples, run.seed)?;
    out.put("slope", est.slope);
    out.put("half_width", est.half_width);
    out.put("samples", est.samples);
    out.checks.push(Check::max("slope_error", (est.slope + 1.0).abs(), run.tolerances.slope));
    out.series = Series::new(&["dt", "mean_v2", "mean_increment_z"]);
    for (&(dt, v2), &z) in est.points.iter().zip(&est.mean_increment_z) {
        out.series.push(vec![dt, v2, z]);
    }
    Ok(())
}

fn fractal_function(cfg: &ExperimentConfig, out: &mut Outcome) -> Result<()> {
    let run = &cfg.run;
    let params = FractalFunctionParams { f0: run.f0, zeta: run.zeta, lambda: run.lambda, b_rg: run.b_rg };
    out.series = Series::new(&["epsilon", "lambda_over_epsilon", "f", "scale_term", "regime_code"]);
    for &e in &run.epsilons {
        let eps = e * run.lambda;
        let v = fractal_motion::fractal_function_eval(&[0.0], eps, &params)?;
        let code = match v.regimes[0] {
            Regime::ScaleDependent => 1.0,
            Regime::Crossover => 0.0,
            Regime::ScaleIndependent => -1.0,
        };
        out.series.push(vec![eps, run.lambda / eps, v.values[0], v.scale_terms[0], code]);
    }
    let mut sorted = run.epsilons.clone();
    sorted.sort_by(f64::total_cmp);
    let slope = fractal_motion::scale_log_slope(&params, 0.0, sorted[0] * run.lambda, sorted[1] * run.lambda)?;
    out.put("deep_log_slope", slope);
    out.put("expected_slope", -run.b_rg);
    out.checks.push(Check::max("log_slope_error", (slope + run.b_rg).abs(), run.tolerances.log_slope));
    Ok(())
}

/// Output directory: flag, then config, then `NLSE_LAB_OUT`, then the
/// working-directory default.
pub fn output_dir(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.output.directory {
        return p.clone();
    }
    std::env::var_os(ENV_OUT)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn summary_json(config: &ExperimentConfig, result: &std::result::Result<Outcome, LabError>) -> Value {
    let (status, outcome, error) = match result {
        Ok(o) if o.passed() => (EXIT_PASS, Some(o), Value::Null),
        Ok(o) => (EXIT_CHECK_FAILED, Some(o), Value::Null),
        Err(e) => (EXIT_NUMERICAL, None, Value::String(e.to_string())),
    };
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "artifact": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "experiment": config.experiment,
        "status": status,
        "passed": status == EXIT_PASS,
        "parameters": config,
        "results": outcome.map(|o| Value::Object(o.results.clone())).unwrap_or(Value::Null),
        "checks": outcome.map(|o| serde_json::to_value(&o.checks).unwrap_or(Value::Null)).unwrap_or(Value::Null),
        "error": error,
        "metadata": { "timestamp_unix": timestamp },
    })
}

/// Writes `summary.json`, `series.csv` and `field_t<k>.csv` as configured.
pub fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    result: &std::result::Result<Outcome, LabError>,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    if config.output.formats.contains(&Format::Json) || result.is_err() {
        let text = serde_json::to_string_pretty(&summary_json(config, result)).map_err(std::io::Error::other)?;
        fs::write(dir.join("summary.json"), text + "\n")?;
    }
    if let (Ok(outcome), true) = (result, config.output.formats.contains(&Format::Csv)) {
        if !outcome.series.columns.is_empty() {
            fs::write(dir.join("series.csv"), outcome.series.to_csv())?;
        }
        for (k, (t, field)) in outcome.snapshots.iter().enumerate() {
            fs::write(dir.join(format!("field_t{k}.csv")), field_csv(*t, field))?;
        }
    }
    Ok(())
}

pub struct RunRequest<'a> {
    pub config_path: &'a Path,
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

/// Loads, runs and writes one experiment; returns the process exit status.
pub fn run_file(req: &RunRequest<'_>) -> i32 {
    let text = match fs::read_to_string(req.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config error: {}: {e}", req.config_path.display());
            return EXIT_CONFIG;
        }
    };
    let mut config = match ExperimentConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = req.seed {
        config.run.seed = seed;
    }
    let result = run_experiment(&config);
    let dir = output_dir(req.out, &config);
    if let Err(e) = write_outputs(&dir, &config, &result) {
        eprintln!("cannot write outputs to {}: {e}", dir.display());
        return EXIT_NUMERICAL;
    }
    let status = match &result {
        Ok(o) if o.passed() => EXIT_PASS,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(_) => EXIT_NUMERICAL,
    };
    if !req.quiet {
        match &result {
            Ok(o) => {
                for c in &o.checks {
                    let verdict = if c.passed { "pass" } else { "FAIL" };
                    println!("{verdict}  {:<24} {:.6e} ({} {:.1e})", c.name, c.value, c.kind, c.bound);
                }
            }
            Err(e) => println!("error: {e}"),
        }
        println!("{} -> {} (status {status})", config.experiment, dir.display());
    }
    if let Err(e) = &result {
        eprintln!("{}: {e}", config.experiment);
    }
    status
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_alphabetical_and_complete() {
        let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(catalog().lines().count(), 11);
    }

    #[test]
    fn names_round_trip_through_serde() {
        for kind in ExperimentKind::ALL {
            let v = serde_json::to_value(kind).unwrap();
            assert_eq!(v, Value::String(kind.name().into()));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "evolve", "grid": {"lenght": 3}}"#).unwrap_err();
        assert!(err.0.contains("lenght"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"experiment": "evolve", "colour": 1}"#).unwrap_err();
        assert!(err.0.contains("colour"), "{err}");
    }

    #[test]
    fn small_grid_names_the_constraint() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "evolve", "grid": {"n": 4}}"#).unwrap_err();
        assert!(err.0.starts_with("grid:"), "{err}");
    }

    #[test]
    fn variant_mismatch_is_a_config_error() {
        let err = ExperimentConfig::from_json(r#"{"experiment": "soliton-gausson"}"#).unwrap_err();
        assert!(err.0.contains("log-birula"), "{err}");
    }

    #[test]
    fn csv_keeps_full_precision() {
        let mut s = Series::new(&["a"]);
        s.push(vec![0.1]);
        let text = s.to_csv();
        let value: f64 = text.lines().nth(1).unwrap().parse().unwrap();
        assert_eq!(value, 0.1);
    }
}
