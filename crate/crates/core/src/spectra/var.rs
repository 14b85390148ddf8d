//! Bivariate vector autoregressions: least-squares fitting and the model spectrum.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CrossSpectrum, FrequencyGrid, SpectralMatrix};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Row-major real 2x2 matrix.
pub type Mat2 = [[f64; 2]; 2];

/// Stationarity margin on the companion spectral radius.
const STATIONARITY_MARGIN: f64 = 1e-6;

/// `W_t = sum_k Phi_k W_{t-k} + e_t` with `Var(e_t) = Sigma`, `W_t = (X_t, Z_t)'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub coefficients: Vec<Mat2>,
    pub sigma: Mat2,
}

impl VarModel {
    pub fn new(coefficients: Vec<Mat2>, sigma: Mat2) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::Config("VAR order must be at least 1".into()));
        }
        let m = Self {
            coefficients,
            sigma,
        };
        let det = sigma[0][0] * sigma[1][1] - sigma[0][1] * sigma[1][0];
        if sigma[0][0] < 0.0
            || sigma[1][1] < 0.0
            || det < -1e-14
            || (sigma[0][1] - sigma[1][0]).abs() > 1e-12
        {
            return Err(Error::Config(
                "innovation covariance must be symmetric PSD".into(),
            ));
        }
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Largest eigenvalue modulus of the companion matrix.
    pub fn spectral_radius(&self) -> f64 {
        let p = self.order();
        let dim = 2 * p;
        let mut c = DMatrix::<f64>::zeros(dim, dim);
        for (k, phi) in self.coefficients.iter().enumerate() {
            for r in 0..2 {
                for s in 0..2 {
                    c[(r, 2 * k + s)] = phi[r][s];
                }
            }
        }
        for i in 2..dim {
            c[(i, i - 2)] = 1.0;
        }
        c.complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn check_stationary(&self) -> Result<()> {
        let radius = self.spectral_radius();
        if !(radius < 1.0 - STATIONARITY_MARGIN) {
            return Err(Error::Nonstationary { radius });
        }
        Ok(())
    }
}

type CMat2 = [[Complex64; 2]; 2];

fn cinv(a: &CMat2) -> Option<CMat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.norm() < 1e-300 {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

/// `f(lambda) = (2 pi)^{-1} A(z)^{-1} Sigma A(z)^{-H}`, `A(z) = I - sum_k Phi_k z^k`, `z = e^{-i lambda}`.
pub fn var_spectral_matrix(model: &VarModel, grid: FrequencyGrid) -> Result<SpectralMatrix> {
    model.check_stationary()?;
    let sigma = model.sigma;
    let points = grid
        .points()
        .map(|lambda| {
            let mut a: CMat2 = [
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
            ];
            for (k, phi) in model.coefficients.iter().enumerate() {
                let zk = Complex64::from_polar(1.0, -lambda * (k + 1) as f64);
                for r in 0..2 {
                    for s in 0..2 {
                        a[r][s] -= zk * phi[r][s];
                    }
                }
            }
            let b = cinv(&a).ok_or(Error::Nonstationary { radius: 1.0 })?;
            // B Sigma B^H
            let mut f = [[Complex64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for s in 0..2 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for u in 0..2 {
                        for v in 0..2 {
                            acc += b[r][u] * sigma[u][v] * b[s][v].conj();
                        }
                    }
                    f[r][s] = acc / (2.0 * PI);
                }
            }
            Ok(CrossSpectrum {
                fx: f[0][0].re,
                fz: f[1][1].re,
                fxz: f[0][1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralMatrix::new(grid, points)
}

/// Equation-by-equation least squares on the demeaned pair; `Sigma` is the
/// residual covariance with divisor `T - p`.
pub fn fit_var(x: &TimeSeries, z: &TimeSeries, p: usize) -> Result<VarModel> {
    if p == 0 {
        return Err(Error::Config("VAR order must be at least 1".into()));
    }
    if x.len() != z.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    let t = x.len();
    let needed = (10 * p).max(10);
    if t < needed {
        return Err(Error::InsufficientData { needed, actual: t });
    }
    let mx = x.mean();
    let mz = z.mean();
    let w: Vec<[f64; 2]> = x
        .values()
        .iter()
        .zip(z.values())
        .map(|(a, b)| [a - mx, b - mz])
        .collect();

    let rows = t - p;
    let cols = 2 * p;
    let design = DMatrix::from_fn(rows, cols, |i, j| {
        let lag = j / 2 + 1;
        w[i + p - lag][j % 2]
    });
    let gram = design.transpose() * &design;
    let chol = gram.cholesky().ok_or(Error::RankDeficient)?;

    let mut coefficients = vec![[[0.0; 2]; 2]; p];
    let mut resid = [vec![0.0; rows], vec![0.0; rows]];
    for eq in 0..2 {
        let y = DVector::from_fn(rows, |i, _| w[i + p][eq]);
        let beta = chol.solve(&(design.transpose() * &y));
        let fitted = &design * &beta;
        for i in 0..rows {
            resid[eq][i] = y[i] - fitted[i];
        }
        for k in 0..p {
            for s in 0..2 {
                coefficients[k][eq][s] = beta[2 * k + s];
            }
        }
    }
    let mut sigma = [[0.0; 2]; 2];
    for r in 0..2 {
        for s in 0..2 {
            sigma[r][s] = resid[r]
                .iter()
                .zip(&resid[s])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / rows as f64;
        }
    }
    let model = VarModel {
        coefficients,
        sigma,
    };
    model.check_stationary()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_spectrum_is_flat() {
        let m = VarModel::new(vec![[[0.0; 2]; 2]], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = var_spectral_matrix(&m, FrequencyGrid::new(64).unwrap()).unwrap();
        for p in s.points() {
            assert!((p.fx - 1.0 / (2.0 * PI)).abs() < 1e-15);
            assert!((p.fz - 1.0 / (2.0 * PI)).abs() < 1e-15);
            assert!(p.fxz.norm() < 1e-15);
        }
    }

    #[test]
    fn embedded_ar1_closed_form() {
        let phi = 0.5;
        let s2 = 0.5;
        let m = VarModel::new(vec![[[phi, 0.0], [0.0, 0.0]]], [[s2, 0.0], [0.0, 1.0]]).unwrap();
        let g = FrequencyGrid::new(256).unwrap();
        let s = var_spectral_matrix(&m, g).unwrap();
        assert!((s.points()[0].fx - std::f64::consts::FRAC_1_PI).abs() < 1e-12);
        for (l, p) in g.points().zip(s.points()) {
            let expect = s2 / (2.0 * PI * (1.0 - 2.0 * phi * l.cos() + phi * phi));
            assert!((p.fx - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn nonstationary_rejected() {
        let m = VarModel::new(vec![[[1.0, 0.0], [0.0, 0.2]]], [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(
            var_spectral_matrix(&m, FrequencyGrid::new(8).unwrap()),
            Err(Error::Nonstationary { .. })
        ));
    }

    #[test]
    fn companion_radius_var2() {
        // univariate AR(2) roots 0.5 and 0.4 embedded in the X equation
        let m = VarModel::new(
            vec![[[0.9, 0.0], [0.0, 0.3]], [[-0.2, 0.0], [0.0, 0.0]]],
            [[1.0, 0.0], [0.0, 1.0]],
        )
        .unwrap();
        assert!((m.spectral_radius() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fit_needs_data() {
        let x = TimeSeries::new(vec![0.1, 0.2, -0.3, 0.4, 0.0], "x").unwrap();
        let z = TimeSeries::new(vec![0.3, -0.2, 0.1, 0.0, 0.5], "z").unwrap();
        assert!(matches!(
            fit_var(&x, &z, 1),
            Err(Error::InsufficientData { .. })
        ));
    }
}
