//! Spectral densities on a uniform frequency grid over `[0, pi]`.
//!
//! Convention: `gamma(h) = int_{-pi}^{pi} e^{i h lambda} f(lambda) d lambda`, so a
//! white noise of variance `s2` has the flat density `s2 / (2 pi)`. All
//! integrals are composite trapezoid sums on the grid; spectra are even, so
//! integrals over the full circle are twice the half-range value.

mod flattop;
mod var;

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flattop::{
    default_threshold, flat_top_spectral_matrix, flat_top_weight, FlatTopDiagnostics,
};
pub use var::{fit_var, var_spectral_matrix, Mat2, VarModel};

/// Default number of grid intervals on `[0, pi]`.
pub const DEFAULT_GRID_N: usize = 2048;

/// `lambda_j = pi j / N` for `j = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    n: usize,
}

impl FrequencyGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!(
                "frequency grid needs N >= 2, got {n}"
            )));
        }
        Ok(Self { n })
    }

    /// Number of intervals; there are `N + 1` points.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        PI / self.n as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        if j == self.n {
            PI
        } else {
            PI * j as f64 / self.n as f64
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|j| self.point(j))
    }

    /// Trapezoid weights summing to `pi`.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.n + 1];
        w[0] = h / 2.0;
        w[self.n] = h / 2.0;
        w
    }

    /// `int_0^pi v(lambda) d lambda` by the trapezoid rule.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.len());
        let h = self.step();
        let inner: f64 = v[1..self.n].iter().sum();
        h * (inner + 0.5 * (v[0] + v[self.n]))
    }

    /// Running integral, starting at 0, of an even 2π-periodic function.
    ///
    /// Each cell uses the four-point rule `h/24 (-v[j-1] + 13 v[j] + 13 v[j+1] - v[j+2])`
    /// with values reflected about 0 and π. The final entry equals [`Self::integrate`].
    pub fn cumulative(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.len());
        let n = self.n as isize;
        let h = self.step();
        let at = |j: isize| -> f64 {
            let r = if j < 0 {
                -j
            } else if j > n {
                2 * n - j
            } else {
                j
            };
            v[r.clamp(0, n) as usize]
        };
        let mut out = Vec::with_capacity(v.len());
        let mut acc = 0.0;
        out.push(0.0);
        for j in 0..n {
            acc += h / 24.0 * (-at(j - 1) + 13.0 * at(j) + 13.0 * at(j + 1) - at(j + 2));
            out.push(acc);
        }
        out
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self { n: DEFAULT_GRID_N }
    }
}

/// A univariate spectral density sampled on a [`FrequencyGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    grid: FrequencyGrid,
    values: Vec<f64>,
}

impl SpectralDensity {
    pub fn new(grid: FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!(
                "spectral density must be finite and non-negative (index {i}: {})",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: FrequencyGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `int_0^pi f`.
    pub fn total(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Autocovariance `gamma(h) = 2 int_0^pi cos(h lambda) f(lambda) d lambda`.
    pub fn acvf(&self, h: usize) -> f64 {
        let hf = h as f64;
        let v: Vec<f64> = self
            .grid
            .points()
            .zip(&self.values)
            .map(|(l, f)| (hf * l).cos() * f)
            .collect();
        2.0 * self.grid.integrate(&v)
    }

    /// `gamma(0..=max_lag)` computed with a cosine recurrence.
    pub fn acvf_sequence(&self, max_lag: usize) -> Vec<f64> {
        let w = self.grid.weights();
        let mut out = vec![0.0; max_lag + 1];
        for (j, lambda) in self.grid.points().enumerate() {
            let wf = 2.0 * w[j] * self.values[j];
            if wf == 0.0 {
                continue;
            }
            // cos((h+1)l) = 2 cos(l) cos(hl) - cos((h-1)l), stable for these lags
            let c1 = lambda.cos();
            let mut prev = 1.0;
            let mut cur = c1;
            out[0] += wf;
            if max_lag >= 1 {
                out[1] += wf * c1;
            }
            for slot in out.iter_mut().skip(2) {
                let next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
                *slot += wf * cur;
            }
        }
        out
    }

    /// `sup_lambda |pi f(lambda) / int_0^pi f - 1|`.
    pub fn sup_normalized_deviation(&self) -> Result<f64> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(self
            .values
            .iter()
            .map(|v| (PI * v / total - 1.0).abs())
            .fold(0.0, f64::max))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = File::create(path)?;
        writeln!(out, "lambda,value")?;
        for (l, v) in self.grid.points().zip(&self.values) {
            writeln!(out, "{l},{v}")?;
        }
        Ok(())
    }
}

/// One grid point of a bivariate spectral matrix `[[f_X, f_XZ], [conj f_XZ, f_Z]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSpectrum {
    pub fx: f64,
    pub fz: f64,
    pub fxz: Complex64,
}

impl CrossSpectrum {
    pub fn det(&self) -> f64 {
        self.fx * self.fz - self.fxz.norm_sqr()
    }

    /// Eigenvalues, larger first.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.fx + self.fz);
        let half = 0.5 * (self.fx - self.fz);
        let r = (half * half + self.fxz.norm_sqr()).sqrt();
        (mid + r, mid - r)
    }

    /// Projects onto the positive semidefinite cone by zeroing negative
    /// eigenvalues. Returns whether anything changed.
    pub fn clip_psd(&mut self) -> bool {
        let (l1, l2) = self.eigenvalues();
        if l2 >= 0.0 {
            return false;
        }
        if l1 <= 0.0 {
            *self = CrossSpectrum {
                fx: 0.0,
                fz: 0.0,
                fxz: Complex64::new(0.0, 0.0),
            };
            return true;
        }
        // unit eigenvector of l1: (b, l1 - a) or the x-axis when b = 0
        let (v1, v2) = if self.fxz.norm() > 0.0 {
            let v1 = self.fxz;
            let v2 = Complex64::new(l1 - self.fx, 0.0);
            let nrm = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
            (v1 / nrm, v2 / nrm)
        } else if self.fx >= self.fz {
            (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
        } else {
            (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
        };
        self.fx = l1 * v1.norm_sqr();
        self.fz = l1 * v2.norm_sqr();
        self.fxz = v1 * v2.conj() * l1;
        true
    }
}

/// Hermitian 2x2 spectral matrix of `(X, Z)` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMatrix {
    grid: FrequencyGrid,
    points: Vec<CrossSpectrum>,
}

impl SpectralMatrix {
    pub fn new(grid: FrequencyGrid, points: Vec<CrossSpectrum>) -> Result<Self> {
        if points.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: points.len(),
            });
        }
        Ok(Self { grid, points })
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn points(&self) -> &[CrossSpectrum] {
        &self.points
    }

    pub fn fx(&self) -> Result<SpectralDensity> {
        SpectralDensity::new(
            self.grid,
            self.points.iter().map(|p| p.fx.max(0.0)).collect(),
        )
    }

    pub fn fz(&self) -> Result<SpectralDensity> {
        SpectralDensity::new(
            self.grid,
            self.points.iter().map(|p| p.fz.max(0.0)).collect(),
        )
    }

    /// Smallest eigenvalue over the grid relative to the largest trace.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        let scale = self
            .points
            .iter()
            .map(|p| p.fx + p.fz)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        self.points
            .iter()
            .map(|p| p.eigenvalues().1 / scale)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = File::create(path)?;
        writeln!(out, "lambda,f_x,f_z,f_xz_re,f_xz_im")?;
        for (l, p) in self.grid.points().zip(&self.points) {
            writeln!(out, "{l},{},{},{},{}", p.fx, p.fz, p.fxz.re, p.fxz.im)?;
        }
        Ok(())
    }
}

/// Residual spectrum `f_X - |f_XZ|^2 / f_Z` of `X` after linear prediction from all of `Z`.
///
/// Values are clipped to `[0, f_X]`. `f_Z` is floored at
/// `1e-10 * int f_Z / pi` before dividing.
pub fn conditional_spectrum(m: &SpectralMatrix) -> Result<SpectralDensity> {
    let grid = m.grid();
    let fz: Vec<f64> = m.points().iter().map(|p| p.fz.max(0.0)).collect();
    let fx: Vec<f64> = m.points().iter().map(|p| p.fx.max(0.0)).collect();
    let fz_total = grid.integrate(&fz);
    if !(fz_total > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let floor = 1e-10 * fz_total / PI;
    let values: Vec<f64> = m
        .points()
        .iter()
        .zip(&fx)
        .zip(&fz)
        .map(|((p, &x), &z)| {
            let denom = z.max(floor);
            (x - p.fxz.norm_sqr() / denom).clamp(0.0, x)
        })
        .collect();
    let fx_total = grid.integrate(&fx);
    let mass = grid.integrate(&values);
    if !(fx_total > 0.0) || mass <= 1e-12 * fx_total {
        return Err(Error::PerfectPrediction { mass });
    }
    SpectralDensity::new(grid, values)
}

/// Cumulative distribution of the normalized density over `[0, pi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralCdf {
    grid: FrequencyGrid,
    values: Vec<f64>,
}

impl SpectralCdf {
    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Builds directly from CDF values; they are validated and the endpoints pinned.
    pub fn from_values(grid: FrequencyGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if values.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return Err(Error::Config("CDF values must be non-decreasing".into()));
        }
        if values[0].abs() > 1e-8 || (values[grid.n()] - 1.0).abs() > 1e-8 {
            return Err(Error::Config("CDF must run from 0 to 1".into()));
        }
        values[0] = 0.0;
        let last = values.len() - 1;
        values[last] = 1.0;
        Ok(Self { grid, values })
    }
}

/// `F(lambda_j) = int_0^{lambda_j} f / int_0^pi f`.
pub fn spectral_cdf(f: &SpectralDensity) -> Result<SpectralCdf> {
    let grid = f.grid();
    let total = f.total();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let mut values: Vec<f64> = grid
        .cumulative(f.values())
        .into_iter()
        .map(|c| (c / total).min(1.0))
        .collect();
    let last = values.len() - 1;
    values[last] = 1.0;
    Ok(SpectralCdf { grid, values })
}
