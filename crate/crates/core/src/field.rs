//! Periodic 1-D grids and complex fields sampled on them.
//!
//! Derivatives come in two flavours: a spectral scheme (FFT, exact for
//! band-limited data) and a second-order central-difference scheme kept as
//! an independent cross-check.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Default relative amplitude floor for logarithmic derivatives.
pub const DEFAULT_FLOOR: f64 = 1e-12;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Uniform periodic grid on `[0, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    length: f64,
    n: usize,
}

impl Grid1D {
    pub const MIN_POINTS: usize = 8;

    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(LabError::InvalidArgument(format!(
                "grid length must be positive, got {length}"
            )));
        }
        if n < Self::MIN_POINTS {
            return Err(LabError::InvalidArgument(format!(
                "grid needs n >= {} points, got {n}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { length, n })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Wavenumber `2πq/L` of an admissible plane-wave index.
    pub fn wavenumber(&self, q: i64) -> Result<f64> {
        if q.unsigned_abs() as usize >= self.n / 2 {
            return Err(LabError::Aliasing { q, n: self.n });
        }
        Ok(2.0 * PI * q as f64 / self.length)
    }

    /// FFT-ordered wavenumbers; index `n/2` holds the (negative) Nyquist value.
    pub fn fft_wavenumbers(&self) -> Vec<f64> {
        let n = self.n as i64;
        let base = 2.0 * PI / self.length;
        (0..n)
            .map(|j| if j < (n + 1) / 2 { j } else { j - n })
            .map(|j| j as f64 * base)
            .collect()
    }

    fn nyquist_index(&self) -> Option<usize> {
        self.n.is_multiple_of(2).then_some(self.n / 2)
    }
}

/// Complex samples `ψ_j` on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: Grid1D,
    values: Vec<Complex64>,
}

impl WaveField {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::Shape(format!(
                "{} samples for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let field = Self { grid, values };
        field.check_finite("WaveField::new")?;
        Ok(field)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid1D, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.coordinates().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Grid1D, value: Complex64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(LabError::NonFinite(context.to_string()))
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Σ|ψ_j|² dx`.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, lambda: Complex64) -> Self {
        self.map(|z| z * lambda)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map(
        &self,
        other: &WaveField,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_grid(&self, other: &WaveField) -> Result<()> {
        if self.grid != other.grid {
            return Err(LabError::Shape(format!(
                "grid mismatch: (L={}, n={}) vs (L={}, n={})",
                self.grid.length, self.grid.n, other.grid.length, other.grid.n
            )));
        }
        Ok(())
    }

    /// Largest pointwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &WaveField) -> Result<f64> {
        Ok(self.zip_map(other, |a, b| a - b)?.max_abs())
    }

    /// Spectral coefficients (unnormalised forward DFT).
    pub fn spectrum(&self) -> Vec<Complex64> {
        let (fwd, _) = plans(self.len());
        let mut buf = self.values.clone();
        fwd.process(&mut buf);
        buf
    }

    /// Inverse of [`WaveField::spectrum`].
    pub fn from_spectrum(grid: Grid1D, mut spectrum: Vec<Complex64>) -> Result<Self> {
        if spectrum.len() != grid.len() {
            return Err(LabError::Shape("spectrum length".into()));
        }
        let (_, inv) = plans(grid.len());
        inv.process(&mut spectrum);
        let scale = 1.0 / grid.len() as f64;
        spectrum.iter_mut().for_each(|z| *z *= scale);
        Ok(Self::from_parts_unchecked(grid, spectrum))
    }

    /// Multiplies every Fourier mode by `symbol(k)`; the Nyquist mode uses
    /// `nyquist` instead so odd-order operators can zero it.
    pub fn apply_symbol(
        &self,
        symbol: impl Fn(f64) -> Complex64,
        nyquist: impl Fn(f64) -> Complex64,
    ) -> Self {
        let mut spec = self.spectrum();
        let ks = self.grid.fft_wavenumbers();
        let nyq = self.grid.nyquist_index();
        for (j, (z, &k)) in spec.iter_mut().zip(&ks).enumerate() {
            *z *= if Some(j) == nyq { nyquist(k) } else { symbol(k) };
        }
        Self::from_spectrum(self.grid, spec).expect("length preserved")
    }

    /// Periodic translation by an arbitrary distance (band-limited interpolation).
    pub fn shifted(&self, distance: f64) -> Self {
        self.apply_symbol(
            |k| Complex64::from_polar(1.0, -k * distance),
            |k| Complex64::new((k * distance).cos(), 0.0),
        )
    }
}

/// Differentiation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    Spectral,
    Central2,
}

pub fn gradient(f: &WaveField, scheme: Scheme) -> WaveField {
    match scheme {
        Scheme::Spectral => f.apply_symbol(|k| Complex64::new(0.0, k), |_| Complex64::new(0.0, 0.0)),
        Scheme::Central2 => {
            let n = f.len();
            let inv = 1.0 / (2.0 * f.grid.dx());
            let v = &f.values;
            let values = (0..n)
                .map(|j| (v[(j + 1) % n] - v[(j + n - 1) % n]) * inv)
                .collect();
            WaveField::from_parts_unchecked(f.grid, values)
        }
    }
}

pub fn laplacian(f: &WaveField, scheme: Scheme) -> WaveField {
    match scheme {
        Scheme::Spectral => f.apply_symbol(
            |k| Complex64::new(-k * k, 0.0),
            |k| Complex64::new(-k * k, 0.0),
        ),
        Scheme::Central2 => {
            let n = f.len();
            let inv = 1.0 / (f.grid.dx() * f.grid.dx());
            let v = &f.values;
            let values = (0..n)
                .map(|j| (v[(j + 1) % n] - 2.0 * v[j] + v[(j + n - 1) % n]) * inv)
                .collect();
            WaveField::from_parts_unchecked(f.grid, values)
        }
    }
}

/// `∇ψ/ψ` together with the nodes where the amplitude floor was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct LogGradient {
    pub field: WaveField,
    pub floored: Vec<bool>,
}

impl LogGradient {
    pub fn floored_count(&self) -> usize {
        self.floored.iter().filter(|&&b| b).count()
    }
}

/// Returns `ψ_j` with its modulus raised to `threshold` when it falls below it,
/// keeping the phase (phase 0 for exact zeros).
pub(crate) fn floored_sample(z: Complex64, threshold: f64) -> (Complex64, bool) {
    let r = z.norm();
    if r >= threshold {
        (z, false)
    } else if r > 0.0 {
        (Complex64::from_polar(threshold, z.arg()), true)
    } else {
        (Complex64::new(threshold, 0.0), true)
    }
}

/// Spectral `∇ ln ψ = ∇ψ/ψ` with relative amplitude floor `floor`.
pub fn log_gradient(f: &WaveField, floor: f64) -> Result<LogGradient> {
    if !(floor > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "log-gradient floor must be positive, got {floor}"
        )));
    }
    let peak = f.max_abs();
    if peak == 0.0 {
        return Err(LabError::DegenerateField);
    }
    let threshold = floor * peak;
    let grad = gradient(f, Scheme::Spectral);
    let mut floored = vec![false; f.len()];
    let values = grad
        .values
        .iter()
        .zip(&f.values)
        .zip(floored.iter_mut())
        .map(|((&g, &z), flag)| {
            let (denom, hit) = floored_sample(z, threshold);
            *flag = hit;
            g / denom
        })
        .collect();
    let field = WaveField::from_parts_unchecked(f.grid, values);
    field.check_finite("log_gradient")?;
    Ok(LogGradient { field, floored })
}

/// `Σ_j conj(f_j) g_j dx`.
pub fn inner_product(f: &WaveField, g: &WaveField) -> Result<Complex64> {
    f.same_grid(g)?;
    let s: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a.conj() * b).sum();
    Ok(s * f.grid.dx())
}

/// Norm computed in wavenumber space (Parseval): `Σ|ψ̂_k|² dx / n`.
pub fn spectral_norm_sqr(f: &WaveField) -> f64 {
    let n = f.len() as f64;
    f.spectrum().iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid.dx() / n
}

/// Integrates real samples with the periodic rectangle rule.
pub fn integrate(grid: &Grid1D, samples: &[Complex64]) -> Complex64 {
    samples.iter().sum::<Complex64>() * grid.dx()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_spacing_and_nodes() {
        let g = Grid1D::new(2.0 * PI, 8).unwrap();
        assert!((g.dx() - PI / 4.0).abs() < 1e-15);
        assert!((g.x(3) - 3.0 * PI / 4.0).abs() < 1e-15);
        let g = Grid1D::new(10.0, 256).unwrap();
        assert_eq!(g.dx(), 0.0390625);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(Grid1D::new(1.0, 4), Err(LabError::InvalidArgument(_))));
        assert!(matches!(Grid1D::new(0.0, 16), Err(LabError::InvalidArgument(_))));
        assert!(matches!(Grid1D::new(-3.0, 16), Err(LabError::InvalidArgument(_))));
    }

    #[test]
    fn spectral_gradient_of_plane_wave() {
        let g = Grid1D::new(7.3, 64).unwrap();
        let k = g.wavenumber(3).unwrap();
        let f = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, k * x)).unwrap();
        let d = gradient(&f, Scheme::Spectral);
        let expect = f.scaled(c(0.0, k));
        assert!(d.max_abs_diff(&expect).unwrap() < 1e-10);
        let l = laplacian(&f, Scheme::Spectral);
        assert!(l.max_abs_diff(&f.scaled(c(-k * k, 0.0))).unwrap() < 1e-10);
    }

    #[test]
    fn derivatives_of_constant_vanish() {
        let g = Grid1D::new(3.0, 32).unwrap();
        let f = WaveField::constant(g, c(1.5, -0.5));
        for s in [Scheme::Spectral, Scheme::Central2] {
            assert!(gradient(&f, s).max_abs() < 1e-13);
            assert!(laplacian(&f, s).max_abs() < 1e-12);
        }
    }

    fn central_sine_error(n: usize) -> f64 {
        let len = 5.0;
        let g = Grid1D::new(len, n).unwrap();
        let w = 2.0 * PI / len;
        let f = WaveField::from_fn(g, |x| c((w * x).sin(), 0.0)).unwrap();
        let exact = WaveField::from_fn(g, |x| c(w * (w * x).cos(), 0.0)).unwrap();
        gradient(&f, Scheme::Central2).max_abs_diff(&exact).unwrap()
    }

    #[test]
    fn central_gradient_is_second_order() {
        let e1 = central_sine_error(256);
        let e2 = central_sine_error(512);
        let e3 = central_sine_error(1024);
        assert!(e1 < 1e-3);
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!((1.8..=2.2).contains(&o1), "order {o1}");
        assert!((1.8..=2.2).contains(&o2), "order {o2}");
        assert!(((e1 / e2) - 4.0).abs() < 0.1);
    }

    #[test]
    fn laplacian_matches_composed_gradient() {
        let g = Grid1D::new(11.0, 128).unwrap();
        let f = fixtures::band_limited(g, 6, 0.0, 17);
        let a = laplacian(&f, Scheme::Spectral);
        let b = gradient(&gradient(&f, Scheme::Spectral), Scheme::Spectral);
        assert!(a.max_abs_diff(&b).unwrap() < 1e-9);
    }

    #[test]
    fn log_gradient_of_plane_wave_is_ik() {
        let g = Grid1D::new(2.0 * PI, 32).unwrap();
        let f = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, 3.0 * x)).unwrap();
        let lg = log_gradient(&f, DEFAULT_FLOOR).unwrap();
        assert_eq!(lg.floored_count(), 0);
        let expect = WaveField::constant(g, c(0.0, 3.0));
        assert!(lg.field.max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn log_gradient_of_gaussian_is_linear() {
        let g = Grid1D::new(40.0, 512).unwrap();
        let x0 = 20.0;
        let f = WaveField::from_fn(g, |x| c((-(x - x0).powi(2) / 2.0).exp(), 0.0)).unwrap();
        let lg = log_gradient(&f, DEFAULT_FLOOR).unwrap();
        for (j, z) in lg.field.values().iter().enumerate() {
            let y = g.x(j) - x0;
            if y.abs() < 5.0 {
                assert!((z - c(-y, 0.0)).norm() < 1e-6, "y = {y}: {z}");
            }
        }
    }

    #[test]
    fn floor_keeps_phase_of_subnormal_samples() {
        let z = Complex64::from_polar(5e-324, 1.0);
        let (f, hit) = floored_sample(z, 1e-12);
        assert!(hit);
        assert!((f.norm() - 1e-12).abs() < 1e-24 && (f.arg() - z.arg()).abs() < 1e-12, "{f}");
    }

    #[test]
    fn log_gradient_floors_nodes() {
        let g = Grid1D::new(2.0 * PI, 32).unwrap();
        let f = WaveField::from_fn(g, |x| c(x.sin(), 0.0)).unwrap();
        let mut v = f.into_values();
        v[0] = c(0.0, 0.0);
        let f = WaveField::new(g, v).unwrap();
        let lg = log_gradient(&f, DEFAULT_FLOOR).unwrap();
        assert!(lg.floored[0]);
        lg.field.check_finite("test").unwrap();
        let zero = WaveField::constant(g, c(0.0, 0.0));
        assert_eq!(log_gradient(&zero, DEFAULT_FLOOR), Err(LabError::DegenerateField));
    }

    #[test]
    fn inner_products() {
        let g = Grid1D::new(2.0 * PI, 64).unwrap();
        let e1 = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, x)).unwrap();
        let e2 = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, 2.0 * x)).unwrap();
        assert!((inner_product(&e1, &e1).unwrap() - c(2.0 * PI, 0.0)).norm() < 1e-12);
        assert!(inner_product(&e1, &e2).unwrap().norm() < 1e-12);
        let other = Grid1D::new(2.0 * PI, 32).unwrap();
        let e3 = WaveField::constant(other, c(1.0, 0.0));
        assert!(matches!(inner_product(&e1, &e3), Err(LabError::Shape(_))));
    }

    #[test]
    fn parseval_holds() {
        let g = Grid1D::new(9.0, 128).unwrap();
        let f = fixtures::band_limited(g, 10, 0.3, 5);
        assert!((f.norm_sqr() - spectral_norm_sqr(&f)).abs() < 1e-10);
    }

    #[test]
    fn plane_wave_index_must_be_below_nyquist() {
        let g = Grid1D::new(2.0 * PI, 16).unwrap();
        assert!(g.wavenumber(7).is_ok());
        assert_eq!(g.wavenumber(8), Err(LabError::Aliasing { q: 8, n: 16 }));
    }
}
