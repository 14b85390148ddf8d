//! Bivariate VAR(1) simulation and the Monte Carlo harness.

use std::path::Path;

use nalgebra::{Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allpass::PhaseRepresentation;
use crate::error::{Error, Result};
use crate::pipeline::{
    flip_privatize_with_rng, Estimator, FlipConfig, TrendHandling, DEFAULT_K, DEFAULT_M,
};
use crate::series::{detrend_ols, TimeSeries};
use crate::spectra::{Mat2, DEFAULT_GRID_N};

/// Quantile levels reported by [`run_monte_carlo`].
pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// `W_t = Phi W_{t-1} + e_t`, `e_t ~ N(0, sigma2 I)`, stationary covariance
/// `Gamma0 = v [[1, rho], [rho, 1]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Var1Spec {
    pub rho: f64,
    pub sigma2: f64,
    pub v: f64,
    pub gamma0: Mat2,
    pub phi: Mat2,
    pub sigma: Mat2,
}

fn to_na(m: &Mat2) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn from_na(m: &Matrix2<f64>) -> Mat2 {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Symmetric square root `S^{p}` of a symmetric positive definite matrix.
fn sym_power(m: &Matrix2<f64>, p: f64) -> Result<Matrix2<f64>> {
    let eig = SymmetricEigen::new(*m);
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Config("matrix is not positive definite".into()));
    }
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| l.powf(p)));
    let q = eig.eigenvectors;
    Ok(q * d * q.transpose())
}

impl Var1Spec {
    /// `max |Phi Gamma0 Phi' + Sigma - Gamma0|`.
    pub fn riccati_residual(&self) -> f64 {
        let phi = to_na(&self.phi);
        let g = to_na(&self.gamma0);
        let r = phi * g * phi.transpose() + to_na(&self.sigma) - g;
        r.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Solves the stationarity (Riccati) equation for `Phi`.
///
/// `v = sigma2 / (1 - |rho|) + 1` keeps `Gamma0 - Sigma` positive definite for
/// either sign of `rho`; `Phi = (Gamma0 - Sigma)^{1/2} Gamma0^{-1/2}` with
/// symmetric roots then satisfies `Phi Gamma0 Phi' = Gamma0 - Sigma`.
pub fn riccati_var1(rho: f64, sigma2: f64) -> Result<Var1Spec> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Config(format!("rho must lie in (-1, 1), got {rho}")));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Config(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    let v = sigma2 / (1.0 - rho.abs()) + 1.0;
    let gamma0 = Matrix2::new(v, v * rho, v * rho, v);
    let sigma = Matrix2::new(sigma2, 0.0, 0.0, sigma2);
    let root = sym_power(&(gamma0 - sigma), 0.5)?;
    let inv_root = sym_power(&gamma0, -0.5)?;
    let phi = root * inv_root;
    let radius = phi
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if !(radius < 1.0) {
        return Err(Error::Nonstationary { radius });
    }
    Ok(Var1Spec {
        rho,
        sigma2,
        v,
        gamma0: from_na(&gamma0),
        phi: from_na(&phi),
        sigma: from_na(&sigma),
    })
}

/// Draws `T` observations starting from the stationary distribution.
pub fn simulate_var1<R: Rng + ?Sized>(
    spec: &Var1Spec,
    t: usize,
    rng: &mut R,
) -> Result<(TimeSeries, TimeSeries)> {
    if t == 0 {
        return Err(Error::EmptySeries);
    }
    let chol = to_na(&spec.gamma0)
        .cholesky()
        .ok_or_else(|| Error::Config("stationary covariance is not positive definite".into()))?;
    let l = chol.l();
    let sd = spec.sigma2.sqrt();
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let (a, b) = (normal(), normal());
    let mut w = [l[(0, 0)] * a, l[(1, 0)] * a + l[(1, 1)] * b];
    let p = spec.phi;
    let mut xs = Vec::with_capacity(t);
    let mut zs = Vec::with_capacity(t);
    for _ in 0..t {
        xs.push(w[0]);
        zs.push(w[1]);
        let (e0, e1) = (sd * normal(), sd * normal());
        w = [
            p[0][0] * w[0] + p[0][1] * w[1] + e0,
            p[1][0] * w[0] + p[1][1] * w[1] + e1,
        ];
    }
    Ok((TimeSeries::new(xs, "x")?, TimeSeries::new(zs, "z")?))
}

/// Deterministic mean added to the simulated pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrendSpec {
    #[default]
    None,
    /// `x_t += x[0] + x[1] t`, `z_t += z[0] + z[1] t` for `t = 1..=T`.
    Linear { x: [f64; 2], z: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub reps: usize,
    pub t: usize,
    pub rho: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub k: usize,
    pub m: usize,
    pub acf_lags: usize,
    pub grid_n: usize,
    pub trend: TrendSpec,
    /// Trend order removed by the pipeline.
    pub trend_order: usize,
    pub estimator: Estimator,
    pub representation: PhaseRepresentation,
    pub trend_handling: TrendHandling,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            reps: 100,
            t: 200,
            rho: 0.1,
            sigma2: 0.5,
            delta: 0.0,
            k: DEFAULT_K,
            m: DEFAULT_M,
            acf_lags: 24,
            grid_n: DEFAULT_GRID_N,
            trend: TrendSpec::None,
            trend_order: 0,
            estimator: Estimator::default(),
            representation: PhaseRepresentation::default(),
            trend_handling: TrendHandling::default(),
            seed: 0,
        }
    }
}

impl McConfig {
    pub fn flip_config(&self) -> FlipConfig {
        FlipConfig {
            delta: self.delta,
            trend_order: self.trend_order,
            k: self.k,
            m: self.m,
            grid_n: self.grid_n,
            estimator: self.estimator,
            r_function: None,
            seed: self.seed,
            acf_lags: self.acf_lags,
            representation: self.representation,
            trend_handling: self.trend_handling,
            standardize: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        if self.t < 50 {
            return Err(Error::InsufficientData {
                needed: 50,
                actual: self.t,
            });
        }
        self.flip_config().validate(self.t)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub lip: f64,
    pub d_path: f64,
    pub d_acf: f64,
    pub shift: f64,
    /// Whether every OLS trend coefficient of the output lies within two
    /// standard errors of the original's; `None` without a simulated trend.
    pub trend_within_2se: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl Quantiles {
    pub fn at(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|l| (l - level).abs() < 1e-12)
            .map(|i| self.values[i])
    }
}

/// Linear interpolation between order statistics (type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quantiles(values: impl Iterator<Item = f64>) -> Quantiles {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    Quantiles {
        levels: QUANTILE_LEVELS.to_vec(),
        values: QUANTILE_LEVELS.iter().map(|&p| quantile(&v, p)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub config: McConfig,
    pub spec: Var1Spec,
    pub mean_privacy: f64,
    pub min_privacy: f64,
    pub d_path: Quantiles,
    pub d_acf: Quantiles,
    pub fraction_d_path_ge_1: f64,
    pub fraction_d_path_gt_0_64: f64,
    pub trend_recovery_count: Option<usize>,
    pub replicates: Vec<ReplicateResult>,
}

impl McSummary {
    /// Per-replicate `index,lip,d_path,d_acf,shift` rows.
    pub fn write_replicates_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["replicate", "lip", "d_path", "d_acf", "shift"])?;
        for r in &self.replicates {
            w.write_record([
                r.index.to_string(),
                r.lip.to_string(),
                r.d_path.to_string(),
                r.d_acf.to_string(),
                r.shift.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }
}

/// Stream `index` of the ChaCha8 generator keyed by `seed`.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn add_trend(s: &TimeSeries, c: [f64; 2]) -> Result<TimeSeries> {
    TimeSeries::new(
        s.values()
            .iter()
            .enumerate()
            .map(|(i, v)| v + c[0] + c[1] * (i + 1) as f64)
            .collect(),
        s.label(),
    )
}

fn run_replicate(config: &McConfig, spec: &Var1Spec, index: usize) -> Result<ReplicateResult> {
    let mut rng = replicate_rng(config.seed, index);
    let (mut x, mut z) = simulate_var1(spec, config.t, &mut rng)?;
    if let TrendSpec::Linear { x: cx, z: cz } = config.trend {
        x = add_trend(&x, cx)?;
        z = add_trend(&z, cz)?;
    }
    let flip = flip_privatize_with_rng(&x, &z, &config.flip_config(), &mut rng)?;
    let trend_within_2se = match config.trend {
        TrendSpec::None => None,
        TrendSpec::Linear { .. } => {
            let d = config.trend_order.max(1);
            let orig = detrend_ols(&x, d)?;
            let priv_fit = detrend_ols(&flip.privatized, d)?;
            let se = orig.std_errors();
            Some(
                orig.coefficients()
                    .iter()
                    .zip(priv_fit.coefficients())
                    .zip(&se)
                    .all(|((a, b), s)| (a - b).abs() <= 2.0 * s),
            )
        }
    };
    Ok(ReplicateResult {
        index,
        lip: flip.report.lip,
        d_path: flip.report.d_path,
        d_acf: flip.report.d_acf,
        shift: flip.provenance.phase.budget.shift,
        trend_within_2se,
    })
}

/// Runs `reps` independent simulate-privatize-measure replicates in parallel.
///
/// Replicate `i` draws from stream `i` of the seeded generator, so results do
/// not depend on scheduling. The first failing replicate (by index) aborts the run.
pub fn run_monte_carlo(config: &McConfig) -> Result<McSummary> {
    config.validate()?;
    let spec = riccati_var1(config.rho, config.sigma2)?;
    let results: Vec<Result<ReplicateResult>> = (0..config.reps)
        .into_par_iter()
        .map(|i| run_replicate(config, &spec, i))
        .collect();
    let mut replicates = Vec::with_capacity(config.reps);
    for (index, r) in results.into_iter().enumerate() {
        replicates.push(r.map_err(|e| Error::Replicate {
            index,
            source: Box::new(e),
        })?);
    }
    let n = replicates.len() as f64;
    let frac = |pred: &dyn Fn(&ReplicateResult) -> bool| {
        replicates.iter().filter(|r| pred(r)).count() as f64 / n
    };
    Ok(McSummary {
        config: config.clone(),
        spec,
        mean_privacy: replicates.iter().map(|r| r.lip).sum::<f64>() / n,
        min_privacy: replicates
            .iter()
            .map(|r| r.lip)
            .fold(f64::INFINITY, f64::min),
        d_path: quantiles(replicates.iter().map(|r| r.d_path)),
        d_acf: quantiles(replicates.iter().map(|r| r.d_acf)),
        fraction_d_path_ge_1: frac(&|r| r.d_path >= 1.0),
        fraction_d_path_gt_0_64: frac(&|r| r.d_path > 0.64),
        trend_recovery_count: match config.trend {
            TrendSpec::None => None,
            TrendSpec::Linear { .. } => Some(
                replicates
                    .iter()
                    .filter(|r| r.trend_within_2se == Some(true))
                    .count(),
            ),
        },
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riccati_uncorrelated() {
        let s = riccati_var1(0.0, 0.5).unwrap();
        assert!((s.v - 1.5).abs() < 1e-15);
        let expect = 1.0 / 1.5f64.sqrt();
        assert!((s.phi[0][0] - expect).abs() < 1e-12);
        assert!((s.phi[1][1] - expect).abs() < 1e-12);
        assert!(s.phi[0][1].abs() < 1e-12);
        assert!(s.riccati_residual() < 1e-12);
    }

    #[test]
    fn riccati_stationary_variance() {
        let s = riccati_var1(0.1, 0.5).unwrap();
        assert!((s.v - (0.5 / 0.9 + 1.0)).abs() < 1e-15);
        assert!((s.v - 1.5556).abs() < 1e-4);
    }

    #[test]
    fn riccati_rejects_bad_input() {
        assert!(riccati_var1(1.0, 0.5).is_err());
        assert!(riccati_var1(0.2, 0.0).is_err());
    }

    #[test]
    fn zero_noise_paths() {
        let mut s = riccati_var1(0.3, 0.5).unwrap();
        s.sigma2 = 0.0;
        s.gamma0 = [[1e-300, 0.0], [0.0, 1e-300]];
        let (x, z) = simulate_var1(&s, 20, &mut replicate_rng(1, 0)).unwrap();
        assert!(x
            .values()
            .iter()
            .chain(z.values())
            .all(|v| v.abs() < 1e-149));
    }

    #[test]
    fn quantile_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert!((quantile(&v, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn config_guards() {
        let c = McConfig {
            t: 40,
            ..McConfig::default()
        };
        assert!(run_monte_carlo(&c).is_err());
        let c = McConfig {
            reps: 0,
            ..McConfig::default()
        };
        assert!(run_monte_carlo(&c).is_err());
    }
}
