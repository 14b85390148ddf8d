//! Nonparametric cross-spectrum from tapered sample autocovariances.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CrossSpectrum, FrequencyGrid, SpectralMatrix};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Consecutive small correlations required before a lag counts as the cutoff.
const RUN_LENGTH: usize = 5;

/// Trapezoidal flat-top lag window: 1 on `|u| <= 1/2`, linear to 0 at `|u| = 1`.
pub fn flat_top_weight(u: f64) -> f64 {
    let a = u.abs();
    if a <= 0.5 {
        1.0
    } else if a <= 1.0 {
        2.0 * (1.0 - a)
    } else {
        0.0
    }
}

/// `max(1/T, 2 sqrt(log10(T) / T))`.
pub fn default_threshold(t: usize) -> f64 {
    let tf = t as f64;
    (1.0 / tf).max(2.0 * (tf.log10() / tf).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatTopDiagnostics {
    /// Empirical cutoff lag.
    pub q_hat: usize,
    /// Lag-window bandwidth `2 q_hat` (at least 1).
    pub bandwidth: usize,
    pub threshold: f64,
    /// Grid points whose 2x2 estimate needed eigenvalue clipping.
    pub clipped: usize,
}

/// Sample cross-covariances `Gamma(h) = T^{-1} sum_t W_{t+h} W_t'` of the demeaned pair.
fn sample_cross_covariances(x: &[f64], z: &[f64], max_lag: usize) -> Vec<[[f64; 2]; 2]> {
    let t = x.len();
    let mx = x.iter().sum::<f64>() / t as f64;
    let mz = z.iter().sum::<f64>() / t as f64;
    let w: Vec<[f64; 2]> = x.iter().zip(z).map(|(a, b)| [a - mx, b - mz]).collect();
    (0..=max_lag.min(t - 1))
        .map(|h| {
            let mut g = [[0.0; 2]; 2];
            for i in 0..t - h {
                for r in 0..2 {
                    for s in 0..2 {
                        g[r][s] += w[i + h][r] * w[i][s];
                    }
                }
            }
            for row in g.iter_mut() {
                for v in row.iter_mut() {
                    *v /= t as f64;
                }
            }
            g
        })
        .collect()
}

/// Flat-top lag-window estimate of the spectral matrix of `(x, z)`.
///
/// The cutoff `q_hat` is the smallest lag after which every auto- and
/// cross-correlation (both lag signs) stays below `threshold` for
/// [`RUN_LENGTH`] consecutive lags. `threshold = None` uses [`default_threshold`].
pub fn flat_top_spectral_matrix(
    x: &TimeSeries,
    z: &TimeSeries,
    grid: FrequencyGrid,
    threshold: Option<f64>,
) -> Result<(SpectralMatrix, FlatTopDiagnostics)> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    let t = x.len();
    if t < 8 {
        return Err(Error::InsufficientData {
            needed: 8,
            actual: t,
        });
    }
    let c = threshold.unwrap_or_else(|| default_threshold(t));
    if !(c > 0.0) {
        return Err(Error::Config(format!(
            "flat-top threshold must be positive, got {c}"
        )));
    }
    let max_q = (t / 4).max(1);
    let gammas = sample_cross_covariances(x.values(), z.values(), max_q + RUN_LENGTH);
    let g0 = gammas[0];
    let sx = g0[0][0].sqrt();
    let sz = g0[1][1].sqrt();
    if !(sx > 0.0) || !(sz > 0.0) {
        return Err(Error::ConstantSeries);
    }
    let max_corr = |h: usize| -> f64 {
        let g = &gammas[h];
        let vals = [
            g[0][0] / (sx * sx),
            g[1][1] / (sz * sz),
            g[0][1] / (sx * sz),
            g[1][0] / (sx * sz),
        ];
        vals.iter().map(|v| v.abs()).fold(0.0, f64::max)
    };
    let last = gammas.len() - 1;
    let q_hat = (0..=max_q)
        .find(|&q| (1..=RUN_LENGTH).all(|k| q + k > last || max_corr(q + k) < c))
        .unwrap_or(max_q);
    let bandwidth = (2 * q_hat).max(1);

    let weights: Vec<f64> = (0..bandwidth)
        .map(|h| flat_top_weight(h as f64 / bandwidth as f64))
        .collect();
    let gammas = if bandwidth > last {
        sample_cross_covariances(x.values(), z.values(), bandwidth)
    } else {
        gammas
    };

    let mut clipped = 0;
    let points = grid
        .points()
        .map(|lambda| {
            let g = &gammas[0];
            let mut fx = g[0][0];
            let mut fz = g[1][1];
            let mut fxz = Complex64::new(g[0][1], 0.0);
            for (h, &k) in weights.iter().enumerate().skip(1) {
                if k == 0.0 || h >= gammas.len() {
                    continue;
                }
                let g = &gammas[h];
                let (s, co) = (h as f64 * lambda).sin_cos();
                fx += 2.0 * k * g[0][0] * co;
                fz += 2.0 * k * g[1][1] * co;
                // Gamma(h) e^{-ih l} + Gamma(h)' e^{ih l}, (0,1) entry
                fxz += k * (g[0][1] * Complex64::new(co, -s) + g[1][0] * Complex64::new(co, s));
            }
            let mut p = CrossSpectrum {
                fx: fx / (2.0 * PI),
                fz: fz / (2.0 * PI),
                fxz: fxz / (2.0 * PI),
            };
            if p.clip_psd() {
                clipped += 1;
            }
            p
        })
        .collect();
    let m = SpectralMatrix::new(grid, points)?;
    Ok((
        m,
        FlatTopDiagnostics {
            q_hat,
            bandwidth,
            threshold: c,
            clipped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taper_shape() {
        assert_eq!(flat_top_weight(0.0), 1.0);
        assert_eq!(flat_top_weight(0.5), 1.0);
        assert!((flat_top_weight(0.75) - 0.5).abs() < 1e-15);
        assert_eq!(flat_top_weight(1.0), 0.0);
        assert_eq!(flat_top_weight(-1.3), 0.0);
        assert_eq!(flat_top_weight(-0.2), 1.0);
    }

    #[test]
    fn threshold_default() {
        assert!((default_threshold(100) - 2.0 * (2.0f64 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn short_series_rejected() {
        let x = TimeSeries::new(vec![1.0, 2.0, 0.0, 1.0, 3.0], "x").unwrap();
        assert!(flat_top_spectral_matrix(&x, &x, FrequencyGrid::new(8).unwrap(), None).is_err());
    }
}
