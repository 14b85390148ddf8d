//! Privacy and utility measures.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{PhaseDesignRecord, PhaseFunction};
use crate::series::TimeSeries;
use crate::spectra::SpectralDensity;

/// Default maximum lag for [`d_acf`].
pub const DEFAULT_ACF_LAGS: usize = 24;

/// Privacy and utility of one release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    /// Feasible LIP: exact phase against the estimated residual spectrum.
    pub lip: f64,
    pub delta: f64,
    /// Normalized by the sample variance of the original detrended series.
    pub d_path: f64,
    pub d_acf: f64,
    pub acf_lags: usize,
    pub provenance: Option<PhaseDesignRecord>,
}

/// LIP of a real-coefficient filter with response `psi[j] = Psi(e^{-i lambda_j})`.
///
/// `1 - <Psi, f>^2 / (<|Psi|^2, f> <f>)`; for real filters the imaginary part
/// of `<Psi, f>` cancels over the full circle.
pub fn lip_general(psi: &[Complex64], f: &SpectralDensity) -> Result<f64> {
    let grid = f.grid();
    if psi.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            actual: psi.len(),
        });
    }
    let total = f.total();
    if !(total > 0.0) {
        return Err(Error::PerfectPrediction { mass: total });
    }
    let re: Vec<f64> = psi.iter().zip(f.values()).map(|(p, v)| p.re * v).collect();
    let sq: Vec<f64> = psi
        .iter()
        .zip(f.values())
        .map(|(p, v)| p.norm_sqr() * v)
        .collect();
    let inner = grid.integrate(&re);
    let energy = grid.integrate(&sq);
    if !(energy > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok((1.0 - inner * inner / (energy * total)).clamp(0.0, 1.0))
}

/// `1 - (int_0^pi cos(g) f / int_0^pi f)^2` for `Psi = exp(i g)`.
pub fn lip_allpass(g: &PhaseFunction, f: &SpectralDensity) -> Result<f64> {
    if g.grid() != f.grid() {
        return Err(Error::Config(
            "phase and spectrum live on different grids".into(),
        ));
    }
    let total = f.total();
    if !(total > 0.0) {
        return Err(Error::PerfectPrediction { mass: total });
    }
    let c: Vec<f64> = g
        .values()
        .iter()
        .zip(f.values())
        .map(|(p, v)| p.cos() * v)
        .collect();
    let rho = f.grid().integrate(&c) / total;
    Ok((1.0 - rho * rho).clamp(0.0, 1.0))
}

fn check_lengths(x: &TimeSeries, xhat: &TimeSeries) -> Result<()> {
    if x.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: xhat.len(),
        });
    }
    Ok(())
}

/// `mean((x - xhat)^2) / var(x)`, with the `T - 1` sample variance.
pub fn d_path(x: &TimeSeries, xhat: &TimeSeries) -> Result<f64> {
    check_lengths(x, xhat)?;
    let var = x.sample_sd().powi(2);
    if !(var > 0.0) {
        return Err(Error::ConstantSeries);
    }
    let mse = x
        .values()
        .iter()
        .zip(xhat.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len() as f64;
    Ok(mse / var)
}

/// Sample autocorrelations `rho(0..=max_lag)` with divisor `T`.
pub fn sample_acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let t = x.len();
    if t <= max_lag {
        return Err(Error::InsufficientData {
            needed: max_lag + 1,
            actual: t,
        });
    }
    let m = x.iter().sum::<f64>() / t as f64;
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = d.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok((0..=max_lag)
        .map(|h| d[h..].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() / c0)
        .collect())
}

/// `H^{-1} sum_{h=0}^{H} (rho_h - rho^_h)^2`.
pub fn d_acf(x: &TimeSeries, xhat: &TimeSeries, lags: usize) -> Result<f64> {
    check_lengths(x, xhat)?;
    if lags == 0 {
        return Err(Error::Config("ACF lag count must be at least 1".into()));
    }
    let a = sample_acf(x.values(), lags)?;
    let b = sample_acf(xhat.values(), lags)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / lags as f64)
}

/// `A = SNR / (1 + SNR)`, the factor by which added white noise shrinks every
/// nonzero-lag autocorrelation.
pub fn noise_baseline_attenuation(signal_var: f64, noise_var: f64) -> Result<f64> {
    if !(signal_var > 0.0) || !(noise_var > 0.0) {
        return Err(Error::Config("variances must be positive".into()));
    }
    let snr = signal_var / noise_var;
    Ok(snr / (1.0 + snr))
}
