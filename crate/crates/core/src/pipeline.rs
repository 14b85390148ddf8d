//! End-to-end privatization of a sensitive series against an attacker's series.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::allpass::{
    apply_filter, design_filter, forecast_backcast_extend, AllPassFilter, PhaseRepresentation,
};
use crate::error::{Error, Result};
use crate::metrics::{
    d_acf, d_path, lip_allpass, noise_baseline_attenuation, sample_acf, PrivacyReport,
    DEFAULT_ACF_LAGS,
};
use crate::phase::{
    compute_b, phase_function, sample_h, PhaseDesignRecord, PhaseFunction, RFunctionSpec,
};
use crate::series::{
    detrend_ols, extrapolate_trend, standardize, Standardization, TimeSeries, MAX_TREND_ORDER,
};
use crate::spectra::{
    conditional_spectrum, fit_var, flat_top_spectral_matrix, spectral_cdf, var_spectral_matrix,
    FlatTopDiagnostics, FrequencyGrid, SpectralDensity, SpectralMatrix, VarModel, DEFAULT_GRID_N,
};

pub const DEFAULT_K: usize = 25;
pub const DEFAULT_M: usize = 45;

/// Spectral-matrix estimator for the detrended pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Estimator {
    Var { order: usize },
    FlatTop { threshold: Option<f64> },
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::Var { order: 1 }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    /// `var:<p>` or `flattop`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("flattop") {
            return Ok(Estimator::FlatTop { threshold: None });
        }
        if let Some(p) = s.strip_prefix("var:") {
            let order: usize = p
                .parse()
                .map_err(|_| Error::Config(format!("bad VAR order `{p}`")))?;
            if order == 0 {
                return Err(Error::Config("VAR order must be at least 1".into()));
            }
            return Ok(Estimator::Var { order });
        }
        Err(Error::Config(format!(
            "unknown estimator `{s}` (expected var:<p> or flattop)"
        )))
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Var { order } => write!(f, "var:{order}"),
            Estimator::FlatTop { .. } => write!(f, "flattop"),
        }
    }
}

/// Where the estimated trend re-enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendHandling {
    /// Filter the extended residual and add the fitted trend back.
    #[default]
    Readd,
    /// Filter residual plus trend (extrapolated at both ends) directly,
    /// relying on the filter's trend invariance.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipConfig {
    pub delta: f64,
    /// Polynomial trend order `d`; 0 removes the mean only.
    pub trend_order: usize,
    pub k: usize,
    pub m: usize,
    pub grid_n: usize,
    pub estimator: Estimator,
    /// `None` draws a two-component mixture with shapes in `[d+2, d+4]`.
    pub r_function: Option<RFunctionSpec>,
    pub seed: u64,
    pub acf_lags: usize,
    pub representation: PhaseRepresentation,
    pub trend_handling: TrendHandling,
    /// Work on standardized copies and map the output back.
    pub standardize: bool,
}

impl Default for FlipConfig {
    fn default() -> Self {
        Self {
            delta: 0.0,
            trend_order: 0,
            k: DEFAULT_K,
            m: DEFAULT_M,
            grid_n: DEFAULT_GRID_N,
            estimator: Estimator::default(),
            r_function: None,
            seed: 0,
            acf_lags: DEFAULT_ACF_LAGS,
            representation: PhaseRepresentation::default(),
            trend_handling: TrendHandling::default(),
            standardize: false,
        }
    }
}

impl FlipConfig {
    pub fn r_spec(&self) -> RFunctionSpec {
        self.r_function
            .clone()
            .unwrap_or_else(|| RFunctionSpec::random_for_trend(self.trend_order))
    }

    /// Checks the configuration against a series length; returns warnings.
    pub fn validate(&self, t: usize) -> Result<Vec<String>> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::Config(format!(
                "delta must satisfy 0 <= delta < 1, got {}",
                self.delta
            )));
        }
        if self.trend_order > MAX_TREND_ORDER {
            return Err(Error::Config(format!(
                "trend order {} exceeds the supported maximum {MAX_TREND_ORDER}",
                self.trend_order
            )));
        }
        let grid = FrequencyGrid::new(self.grid_n)?;
        if self.k == 0 || self.k > grid.n() / 4 {
            return Err(Error::Aliasing {
                k: self.k,
                limit: grid.n() / 4,
            });
        }
        if self.m == 0 {
            return Err(Error::Config(
                "filter half-length M must be at least 1".into(),
            ));
        }
        if self.acf_lags == 0 {
            return Err(Error::Config("ACF lag count must be at least 1".into()));
        }
        let min_shape = self.r_spec().min_shape();
        if min_shape < self.trend_order as f64 + 1.0 {
            return Err(Error::InvalidRFunction(format!(
                "trend order {} needs every Beta shape >= {}, smallest is {min_shape}",
                self.trend_order,
                self.trend_order + 1
            )));
        }
        let needed = 30.max(2 * (self.trend_order + 2));
        if t < needed {
            return Err(Error::InsufficientData { needed, actual: t });
        }
        let mut warnings = Vec::new();
        if self.m < self.k {
            warnings.push(format!("M = {} is smaller than K = {}", self.m, self.k));
        }
        if 3 * t < 4 * self.m {
            warnings.push(format!(
                "series length {t} is short relative to M = {}",
                self.m
            ));
        }
        Ok(warnings)
    }
}

/// Estimator output kept for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorRecord {
    Var { model: VarModel },
    FlatTop { diagnostics: FlatTopDiagnostics },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipProvenance {
    pub config: FlipConfig,
    pub len: usize,
    pub trend_x: Vec<f64>,
    pub trend_z: Vec<f64>,
    pub estimator: EstimatorRecord,
    pub phase: PhaseDesignRecord,
    pub extension_ridge: Option<f64>,
    pub standardization: Option<Standardization>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FlipResult {
    pub privatized: TimeSeries,
    pub report: PrivacyReport,
    pub filter: AllPassFilter,
    pub provenance: FlipProvenance,
    /// Detrended original, in the working scale.
    pub residual: TimeSeries,
    /// Privatized output minus the fitted trend, in the working scale.
    pub privatized_residual: TimeSeries,
    pub spectral_matrix: SpectralMatrix,
    pub conditional: SpectralDensity,
    pub shifted: SpectralDensity,
    pub phase: PhaseFunction,
}

fn estimate(
    x: &TimeSeries,
    z: &TimeSeries,
    grid: FrequencyGrid,
    estimator: Estimator,
) -> Result<(SpectralMatrix, EstimatorRecord)> {
    match estimator {
        Estimator::Var { order } => {
            let model = fit_var(x, z, order)?;
            Ok((
                var_spectral_matrix(&model, grid)?,
                EstimatorRecord::Var { model },
            ))
        }
        Estimator::FlatTop { threshold } => {
            let (m, diagnostics) = flat_top_spectral_matrix(x, z, grid, threshold)?;
            Ok((m, EstimatorRecord::FlatTop { diagnostics }))
        }
    }
}

/// Privatizes `x` with randomness from `config.seed`.
pub fn flip_privatize(x: &TimeSeries, z: &TimeSeries, config: &FlipConfig) -> Result<FlipResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    flip_privatize_with_rng(x, z, config, &mut rng)
}

/// Detrend, estimate the joint spectrum, design a randomized phase against the
/// residual spectrum of `x` given `z`, realize it as a finite filter and apply
/// it to the forecast/backcast-extended series.
pub fn flip_privatize_with_rng<R: Rng + ?Sized>(
    x: &TimeSeries,
    z: &TimeSeries,
    config: &FlipConfig,
    rng: &mut R,
) -> Result<FlipResult> {
    if x.len() != z.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    let t = x.len();
    let warnings = config.validate(t)?;
    let grid = FrequencyGrid::new(config.grid_n)?;
    let d = config.trend_order;

    let (xw, zw, scaling) = if config.standardize {
        let (xs, sx) = standardize(x)?;
        let (zs, _) = standardize(z)?;
        (xs, zs, Some(sx))
    } else {
        (x.clone(), z.clone(), None)
    };

    let trend_x = detrend_ols(&xw, d)?;
    let trend_z = detrend_ols(&zw, d)?;
    let ex = trend_x.residuals().clone();
    let ez = trend_z.residuals().clone();
    let scale = xw
        .values()
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(1.0);
    if ex.values().iter().all(|v| v.abs() <= 1e-12 * scale) {
        return Err(Error::ZeroMass);
    }

    let (matrix, estimator) = estimate(&ex, &ez, grid, config.estimator)?;
    let conditional = conditional_spectrum(&matrix)?;

    let r_spec = config.r_spec();
    let r = r_spec.build(rng)?;
    let budget = compute_b(&conditional, config.delta, r.lipschitz())?;
    let (shifted, budget) = sample_h(&conditional, &budget, rng)?;
    let phase = phase_function(&r, &spectral_cdf(&shifted)?);

    let filter = design_filter(&phase, config.k, config.m, config.representation)?;

    let fx = matrix.fx()?;
    let ext = forecast_backcast_extend(&ex, &fx, config.m)?;
    let fitted = trend_x.fitted().values();
    let out_working: Vec<f64> = match config.trend_handling {
        TrendHandling::Readd => apply_filter(&filter, &ext)?
            .values()
            .iter()
            .zip(fitted)
            .map(|(a, b)| a + b)
            .collect(),
        TrendHandling::Direct => {
            let (pre, post) = extrapolate_trend(&trend_x, config.m);
            let trend_full: Vec<f64> = pre.iter().chain(fitted).chain(&post).copied().collect();
            let mut full = ext.clone();
            for (v, tr) in full.values.iter_mut().zip(&trend_full) {
                *v += tr;
            }
            apply_filter(&filter, &full)?.into_values()
        }
    };
    let privatized_residual = TimeSeries::new(
        out_working.iter().zip(fitted).map(|(a, b)| a - b).collect(),
        "privatized_residual",
    )?;
    let out = match scaling {
        Some(s) => s.invert(&out_working),
        None => out_working,
    };
    let privatized = TimeSeries::new(out, format!("{}_privatized", x.label()))?;

    let phase_record = PhaseDesignRecord {
        r_spec,
        r_function: r,
        budget,
    };
    let report = PrivacyReport {
        lip: lip_allpass(&phase, &conditional)?,
        delta: config.delta,
        d_path: d_path(&ex, &privatized_residual)?,
        d_acf: d_acf(&ex, &privatized_residual, config.acf_lags)?,
        acf_lags: config.acf_lags,
        provenance: Some(phase_record.clone()),
    };
    let provenance = FlipProvenance {
        config: config.clone(),
        len: t,
        trend_x: trend_x.coefficients().to_vec(),
        trend_z: trend_z.coefficients().to_vec(),
        estimator,
        phase: phase_record,
        extension_ridge: ext.ridge,
        standardization: scaling,
        warnings,
    };
    Ok(FlipResult {
        privatized,
        report,
        filter,
        provenance,
        residual: ex,
        privatized_residual,
        spectral_matrix: matrix,
        conditional,
        shifted,
        phase,
    })
}

/// FLIP next to white-noise addition at a given signal-to-noise ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseComparison {
    pub snr: f64,
    pub noise_variance: f64,
    /// `SNR / (1 + SNR)`.
    pub attenuation: f64,
    pub acf1_original: f64,
    pub acf1_flip: f64,
    pub acf1_noise: f64,
    pub d_acf_flip: f64,
    pub d_acf_noise: f64,
    pub d_path_flip: f64,
    pub d_path_noise: f64,
    pub lip_flip: f64,
}

/// Runs [`flip_privatize`] and, from the same seed stream, adds i.i.d.
/// Gaussian noise with variance `var(residual) / snr` to the residual.
pub fn flip_compare_noise(
    x: &TimeSeries,
    z: &TimeSeries,
    config: &FlipConfig,
    snr: f64,
) -> Result<(FlipResult, TimeSeries, NoiseComparison)> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::Config(format!(
            "SNR must be positive and finite, got {snr}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let flip = flip_privatize_with_rng(x, z, config, &mut rng)?;
    let e = &flip.residual;
    let signal_var = e.sample_sd().powi(2);
    let noise_variance = signal_var / snr;
    let sd = noise_variance.sqrt();
    let noisy_resid: Vec<f64> = e
        .values()
        .iter()
        .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let noisy_resid = TimeSeries::new(noisy_resid, "noisy_residual")?;

    let lag = |s: &TimeSeries| -> Result<f64> { Ok(sample_acf(s.values(), 1)?[1]) };
    let cmp = NoiseComparison {
        snr,
        noise_variance,
        attenuation: noise_baseline_attenuation(signal_var, noise_variance)?,
        acf1_original: lag(e)?,
        acf1_flip: lag(&flip.privatized_residual)?,
        acf1_noise: lag(&noisy_resid)?,
        d_acf_flip: flip.report.d_acf,
        d_acf_noise: d_acf(e, &noisy_resid, config.acf_lags)?,
        d_path_flip: flip.report.d_path,
        d_path_noise: d_path(e, &noisy_resid)?,
        lip_flip: flip.report.lip,
    };
    let unit = flip.provenance.standardization.map_or(1.0, |s| s.sd);
    let noisy: Vec<f64> = x
        .values()
        .iter()
        .zip(noisy_resid.values().iter().zip(e.values()))
        .map(|(v, (n, r))| v + unit * (n - r))
        .collect();
    let noisy = TimeSeries::new(noisy, format!("{}_noisy", x.label()))?;
    Ok((flip, noisy, cmp))
}
