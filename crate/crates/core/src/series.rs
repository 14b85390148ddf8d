//! Time-series container, CSV ingestion, standardization and polynomial trends.
//!
//! Time is indexed `t = 1..=T` throughout. Trend polynomials are fitted on a
//! centered and scaled copy of that index so the normal equations stay well
//! conditioned for the low orders used here, and are reported in the raw
//! `t` basis.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest polynomial trend order accepted by [`detrend_ols`].
pub const MAX_TREND_ORDER: usize = 5;

/// A regularly sampled, finite, non-empty real-valued series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    label: String,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation with the `T - 1` divisor.
    pub fn sample_sd(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (n as f64 - 1.0)).sqrt()
    }

    /// Writes `t,<label>` rows with `t = 1..=T`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = File::create(path)?;
        let label = if self.label.is_empty() {
            "value"
        } else {
            &self.label
        };
        writeln!(out, "t,{label}")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, v)?;
        }
        Ok(())
    }
}

/// Reads one column of a headed, comma-separated file.
///
/// `column = None` selects the last column, which covers the common
/// `date,value` layout. Rows are numbered from 1, not counting the header.
pub fn load_csv(path: impl AsRef<Path>, column: Option<&str>) -> Result<TimeSeries> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = match column {
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?,
        None => {
            if headers.is_empty() {
                return Err(Error::MissingColumn("<any>".into()));
            }
            headers.len() - 1
        }
    };
    let label = headers.get(idx).unwrap_or("value").to_string();

    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = record.get(idx).ok_or_else(|| Error::Parse {
            row,
            message: "missing cell".into(),
        })?;
        if cell.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty cell".into(),
            });
        }
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            row,
            message: format!("`{cell}` is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("`{cell}` is not finite"),
            });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    TimeSeries::new(values, label)
}

/// Location and scale removed by [`standardize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| (v - self.mean) / self.sd).collect()
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v * self.sd + self.mean).collect()
    }
}

/// Centers by the sample mean and scales by the sample standard deviation.
pub fn standardize(x: &TimeSeries) -> Result<(TimeSeries, Standardization)> {
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            actual: x.len(),
        });
    }
    let mean = x.mean();
    let sd = x.sample_sd();
    if !(sd > 0.0) || sd <= f64::EPSILON * mean.abs().max(1.0) {
        return Err(Error::ConstantSeries);
    }
    let s = Standardization { mean, sd };
    let out = TimeSeries::new(s.apply(x.values()), x.label())?;
    Ok((out, s))
}

/// Polynomial trend fitted by ordinary least squares on `t = 1..=T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrendFit {
    order: usize,
    len: usize,
    /// `c_0..c_d` of `sum_k c_k t^k`.
    coefficients: Vec<f64>,
    /// Coefficients in the centered basis `u = (t - center) / scale`.
    centered: Vec<f64>,
    center: f64,
    scale: f64,
    /// Residual variance estimate `RSS / (T - d - 1)`.
    sigma2: f64,
    /// `(U'U)^{-1}` in the centered basis, row-major `(d+1)^2`.
    gram_inv: Vec<f64>,
    residuals: TimeSeries,
    fitted: TimeSeries,
}

impl TrendFit {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Raw-basis coefficients `c_0..c_d`.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn residuals(&self) -> &TimeSeries {
        &self.residuals
    }

    pub fn fitted(&self) -> &TimeSeries {
        &self.fitted
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Evaluates the fitted polynomial at (possibly out-of-sample) time `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let u = (t - self.center) / self.scale;
        self.centered.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    /// Conventional OLS standard errors of the raw-basis coefficients.
    pub fn std_errors(&self) -> Vec<f64> {
        let p = self.order + 1;
        let map = centered_to_raw(p, self.center, self.scale);
        // Cov_raw = L Cov_u L'
        let mut se = vec![0.0; p];
        for (i, s) in se.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..p {
                for b in 0..p {
                    acc += map[i * p + a] * self.gram_inv[a * p + b] * map[i * p + b];
                }
            }
            *s = (self.sigma2 * acc).max(0.0).sqrt();
        }
        se
    }
}

/// Matrix `L` (row-major) with `raw = L * centered` for `u = (t - m) / s`.
fn centered_to_raw(p: usize, m: f64, s: f64) -> Vec<f64> {
    // u^k = s^{-k} sum_j C(k, j) t^j (-m)^{k-j}
    let mut l = vec![0.0; p * p];
    for k in 0..p {
        let mut binom = 1.0;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            l[j * p + k] += binom * (-m).powi((k - j) as i32) / s.powi(k as i32);
        }
    }
    l
}

/// Fits `sum_{k=0}^{d} c_k t^k` to `x` by least squares.
pub fn detrend_ols(x: &TimeSeries, d: usize) -> Result<TrendFit> {
    if d > MAX_TREND_ORDER {
        return Err(Error::Config(format!(
            "trend order {d} exceeds the supported maximum {MAX_TREND_ORDER}"
        )));
    }
    let n = x.len();
    let p = d + 1;
    if n < d + 2 {
        return Err(Error::InsufficientData {
            needed: d + 2,
            actual: n,
        });
    }
    let center = (n as f64 + 1.0) / 2.0;
    let scale = ((n as f64 - 1.0) / 2.0).max(1.0);
    let design = DMatrix::from_fn(n, p, |i, k| {
        let u = ((i + 1) as f64 - center) / scale;
        u.powi(k as i32)
    });
    let y = DVector::from_column_slice(x.values());
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &y;
    let chol = gram.clone().cholesky().ok_or(Error::RankDeficient)?;
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let gram_inv = chol.inverse();

    let centered: Vec<f64> = beta.iter().copied().collect();
    let map = centered_to_raw(p, center, scale);
    let coefficients: Vec<f64> = (0..p)
        .map(|i| (0..p).map(|k| map[i * p + k] * centered[k]).sum())
        .collect();

    let fitted_vals: Vec<f64> = (0..n)
        .map(|i| {
            let u = ((i + 1) as f64 - center) / scale;
            centered.iter().rev().fold(0.0, |acc, c| acc * u + c)
        })
        .collect();
    let resid_vals: Vec<f64> = x
        .values()
        .iter()
        .zip(&fitted_vals)
        .map(|(v, f)| v - f)
        .collect();
    let rss: f64 = resid_vals.iter().map(|r| r * r).sum();
    let dof = (n - p).max(1) as f64;

    Ok(TrendFit {
        order: d,
        len: n,
        coefficients,
        centered,
        center,
        scale,
        sigma2: rss / dof,
        gram_inv: gram_inv.transpose().iter().copied().collect(),
        residuals: TimeSeries::new(resid_vals, x.label())?,
        fitted: TimeSeries::new(fitted_vals, format!("{}_trend", x.label()))?,
    })
}

/// Trend values for `M` steps before the sample (`t = -M+1..=0`, chronological)
/// and `M` steps after it (`t = T+1..=T+M`).
pub fn extrapolate_trend(fit: &TrendFit, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let m = steps as i64;
    let t_len = fit.len as i64;
    let prefix = (-m + 1..=0).map(|t| fit.eval(t as f64)).collect();
    let suffix = (t_len + 1..=t_len + m)
        .map(|t| fit.eval(t as f64))
        .collect();
    (prefix, suffix)
}

/// Writes several equal-length columns with a leading `t` index.
pub fn write_columns_csv(path: impl AsRef<Path>, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut out = File::create(path)?;
    let n = columns.first().map(|c| c.1.len()).unwrap_or(0);
    if let Some((_, c)) = columns.iter().find(|c| c.1.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: c.len(),
        });
    }
    let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
    writeln!(out, "t,{}", header.join(","))?;
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| c.1[i].to_string()).collect();
        writeln!(out, "{},{}", i + 1, row.join(","))?;
    }
    Ok(())
}
