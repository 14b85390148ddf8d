//! Finite realization of an all-pass filter from its phase.
//!
//! Cepstral convention: `Psi(z) = exp(sum_k phi_k z^k)` with `phi_{-k} = -phi_k`,
//! so on the circle `Psi(e^{-i lambda}) = exp(-2i sum_{k>=1} phi_k sin(k lambda))`.
//! A filter with response `exp(i g)` therefore takes its coefficients from `-g`.
//! The series splits as `Psi(z) = psi+(z) psi-(1/z)`, both one-sided exponentials
//! computed by power-series recursions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseFunction;
use crate::series::TimeSeries;
use crate::spectra::{FrequencyGrid, SpectralDensity};

/// Recursion magnitudes above this abort the filter build.
const OVERFLOW_LIMIT: f64 = 1e12;

/// Relative ridge added to `gamma(0)` when the Toeplitz system is not positive definite.
const RIDGE: f64 = 1e-8;

/// Odd cepstral sequence, stored for `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepstralCoeffs {
    /// `phi[k - 1] = phi_k`.
    phi: Vec<f64>,
    truncation_bound: f64,
}

impl CepstralCoeffs {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::Config(
                "need at least one cepstral coefficient".into(),
            ));
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            phi,
            truncation_bound: f64::NAN,
        })
    }

    pub fn k(&self) -> usize {
        self.phi.len()
    }

    /// `phi_1..=phi_K`.
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Sup-norm bound on the discarded tail, `<|g'|> / (2 pi K)`.
    pub fn truncation_bound(&self) -> f64 {
        self.truncation_bound
    }

    /// `2 sum_k phi_k sin(k lambda)`.
    pub fn phase_at(&self, lambda: f64) -> f64 {
        2.0 * self
            .phi
            .iter()
            .enumerate()
            .map(|(i, p)| p * ((i + 1) as f64 * lambda).sin())
            .sum::<f64>()
    }

    /// `Psi_K(e^{-i lambda})` in exact exponential form.
    pub fn response(&self, lambda: f64) -> Complex64 {
        Complex64::from_polar(1.0, -self.phase_at(lambda))
    }
}

/// Composite Simpson weights on `n` equal intervals of width `h`; an odd `n`
/// closes with the 3/8 rule on the last three intervals.
fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let (simpson_end, tail) = if n.is_multiple_of(2) {
        (n, false)
    } else {
        (n - 3, true)
    };
    for i in (0..simpson_end).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if tail {
        let s = simpson_end;
        let c = 3.0 * h / 8.0;
        w[s] += c;
        w[s + 1] += 3.0 * c;
        w[s + 2] += 3.0 * c;
        w[s + 3] += c;
    }
    w
}

/// `phi_k = (1/pi) int_0^pi g(lambda) sin(k lambda) d lambda` for `k = 1..=K`.
///
/// Uses Simpson's rule, which keeps the error at the `1e-7` level for
/// `K = 25` where the trapezoid rule loses a few digits on non-periodic phases.
pub fn cepstral_coeffs(g: &PhaseFunction, k: usize) -> Result<CepstralCoeffs> {
    let grid = g.grid();
    let limit = grid.n() / 4;
    if k == 0 || k > limit {
        return Err(Error::Aliasing { k, limit });
    }
    let w = simpson_weights(grid.n(), grid.step());
    let vals = g.values();
    let mut phi = vec![0.0; k];
    for (j, lambda) in grid.points().enumerate() {
        let wg = w[j] * vals[j];
        if wg == 0.0 {
            continue;
        }
        // sin((m+1)l) = 2 cos(l) sin(ml) - sin((m-1)l)
        let (s1, c1) = lambda.sin_cos();
        let mut prev = 0.0;
        let mut cur = s1;
        for p in phi.iter_mut() {
            *p += wg * cur;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
    }
    for p in phi.iter_mut() {
        *p /= PI;
    }
    let variation: f64 = vals.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let mut c = CepstralCoeffs::new(phi)?;
    // <|g'|> over the full circle is twice the half-range total variation
    c.truncation_bound = 2.0 * variation / (2.0 * PI * k as f64);
    Ok(c)
}

/// One-sided exponential series: `psi+` of `exp(sum phi_k z^k)` and `psi-` of
/// `exp(-sum phi_k z^k)`, both to degree `M`.
pub fn cepstral_recursions(cep: &CepstralCoeffs, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::Config(
            "filter half-length M must be at least 1".into(),
        ));
    }
    let phi = cep.phi();
    let run = |sign: f64| -> Result<Vec<f64>> {
        let mut psi = vec![0.0; m + 1];
        psi[0] = 1.0;
        for j in 0..m {
            let mut acc = 0.0;
            for k in 0..=j.min(phi.len() - 1) {
                acc += (k + 1) as f64 * sign * phi[k] * psi[j - k];
            }
            let v = acc / (j + 1) as f64;
            if !(v.abs() <= OVERFLOW_LIMIT) {
                return Err(Error::Overflow(j + 1));
            }
            psi[j + 1] = v;
        }
        Ok(psi)
    };
    Ok((run(1.0)?, run(-1.0)?))
}

/// How the phase is turned into cepstral coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRepresentation {
    /// Expand the phase itself. A phase with `g(pi) = pi` has a `1/k` cepstrum,
    /// so the truncated filter carries a Gibbs ripple near `pi`.
    Direct,
    /// Remove the linear winding `w lambda`, `w = round(g(pi)/pi)`, expand the
    /// smooth remainder and reapply the winding as an exact `w`-step lead.
    #[default]
    Unwound,
}

/// Two-sided filter `psi_{-M..=M}` with its construction record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllPassFilter {
    pub cepstral: CepstralCoeffs,
    pub psi_plus: Vec<f64>,
    pub psi_minus: Vec<f64>,
    /// `impulse[j + M] = psi_j`.
    pub impulse: Vec<f64>,
    pub m: usize,
    pub representation: PhaseRepresentation,
    /// Winding removed before the expansion (0 for [`PhaseRepresentation::Direct`]).
    pub winding: i64,
    /// `sup_lambda ||Psi_M(e^{-i lambda})| - 1|` on the design grid.
    pub unitarity_defect: f64,
}

impl AllPassFilter {
    pub fn psi(&self, j: i64) -> f64 {
        let m = self.m as i64;
        if j < -m || j > m {
            0.0
        } else {
            self.impulse[(j + m) as usize]
        }
    }

    /// `Psi_M(e^{-i lambda}) = sum_j psi_j e^{-i j lambda}`.
    pub fn response(&self, lambda: f64) -> Complex64 {
        impulse_response(&self.impulse, self.m, lambda)
    }

    /// `sum_j psi_j^2`, which is 1 for an exact all-pass filter.
    pub fn energy(&self) -> f64 {
        self.impulse.iter().map(|v| v * v).sum()
    }

    pub fn write_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

fn impulse_response(impulse: &[f64], m: usize, lambda: f64) -> Complex64 {
    impulse
        .iter()
        .enumerate()
        .map(|(i, &p)| p * Complex64::from_polar(1.0, -((i as i64 - m as i64) as f64) * lambda))
        .sum()
}

fn unitarity_defect(impulse: &[f64], m: usize, grid: FrequencyGrid) -> f64 {
    grid.points()
        .map(|l| (impulse_response(impulse, m, l).norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `psi_j = sum_k psi+_{j+k} psi-_k` for `-M <= j <= M`, using terms up to degree `M`.
pub fn assemble_filter(
    cepstral: CepstralCoeffs,
    psi_plus: Vec<f64>,
    psi_minus: Vec<f64>,
    m: usize,
    grid: FrequencyGrid,
) -> Result<AllPassFilter> {
    if psi_plus.len() < m + 1 || psi_minus.len() < m + 1 {
        return Err(Error::LengthMismatch {
            expected: m + 1,
            actual: psi_plus.len().min(psi_minus.len()),
        });
    }
    let impulse = convolve_factors(&psi_plus, &psi_minus, m);
    let unitarity_defect = unitarity_defect(&impulse, m, grid);
    Ok(AllPassFilter {
        cepstral,
        psi_plus: psi_plus[..=m].to_vec(),
        psi_minus: psi_minus[..=m].to_vec(),
        impulse,
        m,
        representation: PhaseRepresentation::Direct,
        winding: 0,
        unitarity_defect,
    })
}

fn convolve_factors(psi_plus: &[f64], psi_minus: &[f64], m: usize) -> Vec<f64> {
    let mi = m as i64;
    (-mi..=mi)
        .map(|j| {
            let lo = (-j).max(0) as usize;
            let hi = (mi - j.max(0)) as usize;
            (lo..=hi)
                .map(|k| psi_plus[(j + k as i64) as usize] * psi_minus[k])
                .sum()
        })
        .collect()
}

/// Builds the order-`(K, M)` filter whose response approximates `exp(i g(lambda))`.
pub fn design_filter(
    g: &PhaseFunction,
    k: usize,
    m: usize,
    representation: PhaseRepresentation,
) -> Result<AllPassFilter> {
    let grid = g.grid();
    let winding = match representation {
        PhaseRepresentation::Direct => 0,
        PhaseRepresentation::Unwound => (g.values()[grid.n()] / PI).round() as i64,
    };
    let w = winding as f64;
    let neg = PhaseFunction::new(
        grid,
        grid.points()
            .zip(g.values())
            .map(|(l, v)| -(v - w * l))
            .collect(),
    )?;
    let cep = cepstral_coeffs(&neg, k)?;
    let (pp, pm) = cepstral_recursions(&cep, m)?;
    let mut filter = assemble_filter(cep, pp, pm, m, grid)?;
    if winding != 0 {
        // exp(i w lambda) = z^{-w}: psi_j = psi~_{j+w}
        let inner = filter.impulse.clone();
        let mi = m as i64;
        filter.impulse = (-mi..=mi)
            .map(|j| {
                let src = j + winding + mi;
                if (0..inner.len() as i64).contains(&src) {
                    inner[src as usize]
                } else {
                    0.0
                }
            })
            .collect();
        filter.unitarity_defect = unitarity_defect(&filter.impulse, m, grid);
    }
    filter.representation = representation;
    filter.winding = winding;
    Ok(filter)
}

/// Series padded with `M` backcasts and `M` forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSeries {
    /// `X^E_{-M+1}, ..., X^E_0, X_1, ..., X_T, X^E_{T+1}, ..., X^E_{T+M}`.
    pub values: Vec<f64>,
    pub m: usize,
    /// Ridge added to `gamma(0)` if the Toeplitz system needed regularizing.
    pub ridge: Option<f64>,
}

impl ExtendedSeries {
    pub fn original_len(&self) -> usize {
        self.values.len() - 2 * self.m
    }
}

/// Durbin-Levinson predictor coefficients for orders `from..=to`;
/// `out[n - from][j - 1] = phi_{n, j}`. `None` if the recursion breaks down.
fn durbin_levinson(gamma: &[f64], from: usize, to: usize) -> Option<Vec<Vec<f64>>> {
    let g0 = gamma[0];
    if !(g0 > 0.0) {
        return None;
    }
    let mut out = Vec::with_capacity(to + 1 - from);
    let mut phi: Vec<f64> = Vec::with_capacity(to);
    let mut v = g0;
    for n in 1..=to {
        let acc: f64 = phi
            .iter()
            .enumerate()
            .map(|(j, p)| p * gamma[n - 1 - j])
            .sum();
        let pnn = (gamma[n] - acc) / v;
        if !pnn.is_finite() || pnn.abs() >= 1.0 {
            return None;
        }
        let prev = phi.clone();
        for j in 0..n - 1 {
            phi[j] = prev[j] - pnn * prev[n - 2 - j];
        }
        phi.push(pnn);
        v *= 1.0 - pnn * pnn;
        if !(v > 1e-14 * g0) {
            return None;
        }
        if n >= from {
            out.push(phi.clone());
        }
    }
    Some(out)
}

fn project_forward(x: &[f64], coeffs: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut ext = x.to_vec();
    for coef in coeffs.iter().take(m) {
        let n = ext.len();
        let pred: f64 = coef
            .iter()
            .enumerate()
            .map(|(j, p)| p * ext[n - 1 - j])
            .sum();
        ext.push(pred);
    }
    ext.split_off(x.len())
}

/// Extends a zero-mean stationary series by `M` minimum-MSE forecasts and
/// backcasts under the spectrum `f`.
///
/// The `h`-step forecast applies the order-`T+h-1` one-step predictor to the
/// data followed by the earlier forecasts, which is the exact projection on
/// `X_1..X_T`. Backcasts are forecasts of the reversed series.
pub fn forecast_backcast_extend(
    x: &TimeSeries,
    f: &SpectralDensity,
    m: usize,
) -> Result<ExtendedSeries> {
    let t = x.len();
    if t < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            actual: t,
        });
    }
    if m == 0 {
        return Ok(ExtendedSeries {
            values: x.values().to_vec(),
            m,
            ridge: None,
        });
    }
    let mut gamma = f.acvf_sequence(t + m - 1);
    if !(gamma[0] > 0.0) {
        return Err(Error::ZeroMass);
    }
    let mut ridge = None;
    let coeffs = match durbin_levinson(&gamma, t, t + m - 1) {
        Some(c) => c,
        None => {
            let r = RIDGE * gamma[0];
            gamma[0] += r;
            ridge = Some(r);
            durbin_levinson(&gamma, t, t + m - 1).ok_or(Error::RankDeficient)?
        }
    };
    let fwd = project_forward(x.values(), &coeffs, m);
    let rev: Vec<f64> = x.values().iter().rev().copied().collect();
    let mut back = project_forward(&rev, &coeffs, m);
    back.reverse();
    let mut values = back;
    values.extend_from_slice(x.values());
    values.extend(fwd);
    Ok(ExtendedSeries { values, m, ridge })
}

/// `out_t = sum_{j=-M}^{M} impulse[j+M] ext_{t-j}` for `t = 1..=T`, where
/// `ext` holds `T + 2M` values starting at time `1 - M`.
pub fn convolve(impulse: &[f64], ext: &[f64], t: usize) -> Result<Vec<f64>> {
    if impulse.len().is_multiple_of(2) {
        return Err(Error::Config("impulse length must be odd".into()));
    }
    let m = impulse.len() / 2;
    if ext.len() != t + 2 * m {
        return Err(Error::LengthMismatch {
            expected: t + 2 * m,
            actual: ext.len(),
        });
    }
    // out_t (index t-1) pairs impulse[i] (j = i - M) with ext index t-1 + 2M - i
    Ok((0..t)
        .map(|s| {
            impulse
                .iter()
                .enumerate()
                .map(|(i, p)| p * ext[s + 2 * m - i])
                .sum()
        })
        .collect())
}

pub fn apply_filter(filter: &AllPassFilter, ext: &ExtendedSeries) -> Result<TimeSeries> {
    if ext.m != filter.m {
        return Err(Error::Config(format!(
            "series extended by {} but filter half-length is {}",
            ext.m, filter.m
        )));
    }
    TimeSeries::new(
        convolve(&filter.impulse, &ext.values, ext.original_len())?,
        "privatized",
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase(n: usize, f: impl Fn(f64) -> f64) -> PhaseFunction {
        let g = FrequencyGrid::new(n).unwrap();
        PhaseFunction::new(g, g.points().map(f).collect()).unwrap()
    }

    #[test]
    fn sine_phase_coefficients() {
        let c = cepstral_coeffs(&phase(512, |l| l.sin()), 6).unwrap();
        assert!((c.phi()[0] - 0.5).abs() < 1e-12);
        assert!(c.phi()[1..].iter().all(|p| p.abs() < 1e-12));

        let c = cepstral_coeffs(&phase(512, |l| 0.6 * l.sin() + 0.2 * (3.0 * l).sin()), 5).unwrap();
        let expect = [0.3, 0.0, 0.1, 0.0, 0.0];
        for (a, b) in c.phi().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_phase_coefficients() {
        let c = cepstral_coeffs(&phase(4096, |l| l), 25).unwrap();
        for (i, p) in c.phi().iter().enumerate() {
            let k = (i + 1) as f64;
            let expect = if i % 2 == 0 { 1.0 / k } else { -1.0 / k };
            assert!((p - expect).abs() < 1e-6, "k = {k}: {p}");
        }
        assert!(c.truncation_bound() > 0.0);
    }

    #[test]
    fn odd_grid_simpson() {
        let w = simpson_weights(7, 1.0);
        assert!((w.iter().sum::<f64>() - 7.0).abs() < 1e-14);
        let c = cepstral_coeffs(&phase(1001, |l| l.sin()), 3).unwrap();
        assert!((c.phi()[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn aliasing_guard() {
        assert!(matches!(
            cepstral_coeffs(&phase(64, |l| l), 17),
            Err(Error::Aliasing { k: 17, limit: 16 })
        ));
        assert!(cepstral_coeffs(&phase(64, |l| l), 16).is_ok());
    }

    #[test]
    fn zero_cepstrum_is_identity() {
        let c = CepstralCoeffs::new(vec![0.0; 3]).unwrap();
        let (p, m) = cepstral_recursions(&c, 5).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m, p);
        let f = assemble_filter(c, p, m, 5, FrequencyGrid::new(64).unwrap()).unwrap();
        assert_eq!(f.psi(0), 1.0);
        assert_eq!(f.energy(), 1.0);
        assert!(f.unitarity_defect < 1e-15);
    }

    #[test]
    fn single_coefficient_power_series() {
        let c = CepstralCoeffs::new(vec![0.5]).unwrap();
        let (p, m) = cepstral_recursions(&c, 4).unwrap();
        assert!((p[3] - 0.5f64.powi(3) / 6.0).abs() < 1e-15);
        assert!((p[3] - 0.0208333).abs() < 1e-7);
        assert!((m[3] + 0.5f64.powi(3) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn bessel_filter() {
        let c = CepstralCoeffs::new(vec![0.5]).unwrap();
        let (p, m) = cepstral_recursions(&c, 45).unwrap();
        let f = assemble_filter(c, p, m, 45, FrequencyGrid::new(256).unwrap()).unwrap();
        assert!((f.psi(0) - 0.7651976865579666).abs() < 1e-12);
        assert!((f.psi(1) - 0.4400505857449335).abs() < 1e-12);
        assert!((f.psi(-1) + 0.4400505857449335).abs() < 1e-12);
        assert!(f.unitarity_defect < 1e-12);
    }

    #[test]
    fn overflow_guard() {
        let c = CepstralCoeffs::new(vec![40.0]).unwrap();
        assert!(matches!(
            cepstral_recursions(&c, 60),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn convolution_examples() {
        let ext: Vec<f64> = (0..10).map(|i| i as f64).collect();
        // M = 2, T = 6: central values are ext[2..8]
        let id = [0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(convolve(&id, &ext, 6).unwrap(), ext[2..8].to_vec());
        let delay = [0.0, 0.0, 0.0, 1.0, 0.0];
        assert_eq!(convolve(&delay, &ext, 6).unwrap(), ext[1..7].to_vec());
        assert!(convolve(&delay, &ext, 5).is_err());
    }

    #[test]
    fn white_noise_extension_is_zero() {
        let g = FrequencyGrid::new(256).unwrap();
        let f = SpectralDensity::from_fn(g, |_| 1.0 / (2.0 * PI)).unwrap();
        let x = TimeSeries::new(vec![0.3, -1.0, 2.0, 0.5, -0.7], "x").unwrap();
        let e = forecast_backcast_extend(&x, &f, 3).unwrap();
        assert_eq!(e.values.len(), 11);
        assert!(e.values[..3]
            .iter()
            .chain(&e.values[8..])
            .all(|v| v.abs() < 1e-12));
        assert_eq!(&e.values[3..8], x.values());
    }

    #[test]
    fn ar1_forecasts() {
        let g = FrequencyGrid::new(2048).unwrap();
        let phi = 0.5;
        let f = SpectralDensity::from_fn(g, |l| {
            1.0 / (2.0 * PI * (1.0 - 2.0 * phi * l.cos() + phi * phi))
        })
        .unwrap();
        let x = TimeSeries::new(vec![0.4, -0.2, 1.1, 0.0, 2.0], "x").unwrap();
        let e = forecast_backcast_extend(&x, &f, 2).unwrap();
        assert!((e.values[7] - 1.0).abs() < 1e-8);
        assert!((e.values[8] - 0.5).abs() < 1e-8);
        // backcast: phi * X_1
        assert!((e.values[1] - 0.2).abs() < 1e-8);
        assert!(e.ridge.is_none());
    }
}
