use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use tsflip::allpass::{AllPassFilter, PhaseRepresentation};
use tsflip::metrics::{d_acf, d_path, sample_acf, PrivacyReport};
use tsflip::phase::{PhaseDesignRecord, RFunctionSpec};
use tsflip::pipeline::{
    flip_compare_noise, flip_privatize, Estimator, FlipConfig, FlipProvenance, TrendHandling,
};
use tsflip::series::{load_csv, write_columns_csv, TimeSeries};
use tsflip::sim::{run_monte_carlo, McConfig, TrendSpec};
use tsflip::Error;

use crate::{
    CompareNoiseArgs, FilterArgs, MetricsArgs, PrivatizeArgs, RChoice, Representation,
    SimulateArgs, TrendMode,
};

pub enum CliError {
    Usage(String),
    Compute(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Compute(e.into())
    }
}

type CliResult = Result<(), CliError>;

/// Configuration problems that come straight from the flags.
fn flag_error(e: Error) -> CliError {
    match e {
        Error::Config(_) | Error::Aliasing { .. } | Error::InvalidRFunction(_) => {
            CliError::Usage(e.to_string())
        }
        other => other.into(),
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Six significant digits.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn flip_config(f: &FilterArgs) -> Result<FlipConfig, CliError> {
    let mut estimator: Estimator = f.estimator.parse().map_err(flag_error)?;
    if let Estimator::FlatTop { threshold } = &mut estimator {
        *threshold = f.threshold_c;
    }
    Ok(FlipConfig {
        delta: f.delta,
        trend_order: f.trend_order,
        k: f.k,
        m: f.m,
        grid_n: f.grid_n,
        estimator,
        r_function: None,
        seed: f.seed,
        acf_lags: f.h,
        representation: match f.representation {
            Representation::Unwound => PhaseRepresentation::Unwound,
            Representation::Direct => PhaseRepresentation::Direct,
        },
        trend_handling: match f.trend_handling {
            TrendMode::Readd => TrendHandling::Readd,
            TrendMode::Direct => TrendHandling::Direct,
        },
        standardize: false,
    })
}

fn load_pair(
    x: &Path,
    xc: Option<&str>,
    z: &Path,
    zc: Option<&str>,
) -> anyhow::Result<(TimeSeries, TimeSeries)> {
    let xs = load_csv(x, xc).with_context(|| format!("reading {}", x.display()))?;
    let zs = load_csv(z, zc).with_context(|| format!("reading {}", z.display()))?;
    Ok((xs, zs))
}

#[derive(Serialize)]
struct ReportFile<'a> {
    report: &'a PrivacyReport,
    provenance: &'a FlipProvenance,
}

#[derive(Serialize)]
struct FilterFile<'a> {
    k: usize,
    m: usize,
    unitarity_defect: f64,
    filter: &'a AllPassFilter,
    provenance: &'a PhaseDesignRecord,
}

pub fn privatize(a: PrivatizeArgs) -> CliResult {
    let mut config = flip_config(&a.filter)?;
    config.standardize = a.standardize;
    if let RChoice::Fixed = a.r_function {
        config.r_function = Some(RFunctionSpec::fixed_for_trend(config.trend_order));
    }
    let (x, z) = load_pair(&a.x, a.x_column.as_deref(), &a.z, a.z_column.as_deref())?;
    config.validate(x.len()).map_err(flag_error)?;
    let res = flip_privatize(&x, &z, &config)?;

    res.privatized.write_csv(with_suffix(&a.out, ".csv"))?;
    write_json(
        &with_suffix(&a.out, ".report.json"),
        &ReportFile {
            report: &res.report,
            provenance: &res.provenance,
        },
    )?;
    write_json(
        &with_suffix(&a.out, ".filter.json"),
        &FilterFile {
            k: res.filter.cepstral.k(),
            m: res.filter.m,
            unitarity_defect: res.filter.unitarity_defect,
            filter: &res.filter,
            provenance: &res.provenance.phase,
        },
    )?;
    write_columns_csv(
        with_suffix(&a.out, ".paths.csv"),
        &[
            ("original", x.values()),
            ("privatized", res.privatized.values()),
        ],
    )?;
    write_acf_csv(
        &with_suffix(&a.out, ".acf.csv"),
        res.residual.values(),
        res.privatized_residual.values(),
        config.acf_lags,
    )?;
    write_spectra_csv(&with_suffix(&a.out, ".spectra.csv"), &res)?;

    for w in &res.provenance.warnings {
        eprintln!("warning: {w}");
    }
    let b = &res.provenance.phase.budget;
    println!("{:<12} {}", "T", x.len());
    println!("{:<12} {}", "delta", sig6(config.delta));
    println!("{:<12} {}", "shift", sig6(b.shift));
    println!("{:<12} {}", "LIP", sig6(res.report.lip));
    println!("{:<12} {}", "D_path", sig6(res.report.d_path));
    println!("{:<12} {}", "D_ACF", sig6(res.report.d_acf));
    println!("{:<12} {}", "unitarity", sig6(res.filter.unitarity_defect));
    Ok(())
}

fn write_acf_csv(path: &Path, a: &[f64], b: &[f64], lags: usize) -> anyhow::Result<()> {
    let ra = sample_acf(a, lags)?;
    let rb = sample_acf(b, lags)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "lag,original,privatized")?;
    for (h, (p, q)) in ra.iter().zip(&rb).enumerate() {
        writeln!(w, "{h},{p},{q}")?;
    }
    Ok(())
}

fn write_spectra_csv(path: &Path, res: &tsflip::FlipResult) -> anyhow::Result<()> {
    let grid = res.conditional.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "lambda,f_x,f_conditional,h,phase")?;
    for (j, l) in grid.points().enumerate() {
        writeln!(
            w,
            "{l},{},{},{},{}",
            res.spectral_matrix.points()[j].fx,
            res.conditional.values()[j],
            res.shifted.values()[j],
            res.phase.values()[j]
        )?;
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let flip = flip_config(&a.filter)?;
    if a.sigma2.is_nan() || a.sigma2 <= 0.0 {
        return Err(CliError::Usage(format!(
            "sigma2 must be positive, got {}",
            a.sigma2
        )));
    }
    let trend = match (a.trend_x, a.trend_z) {
        (None, None) => TrendSpec::None,
        (x, z) => TrendSpec::Linear {
            x: x.unwrap_or([0.0, 0.0]),
            z: z.unwrap_or([0.0, 0.0]),
        },
    };
    let config = McConfig {
        reps: a.reps,
        t: a.t,
        rho: a.rho,
        sigma2: a.sigma2,
        delta: flip.delta,
        k: flip.k,
        m: flip.m,
        acf_lags: flip.acf_lags,
        grid_n: flip.grid_n,
        trend,
        trend_order: flip.trend_order,
        estimator: flip.estimator,
        representation: flip.representation,
        trend_handling: flip.trend_handling,
        seed: flip.seed,
    };
    if config.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if config.t < 50 {
        return Err(CliError::Usage(format!(
            "--T must be at least 50, got {}",
            config.t
        )));
    }
    config
        .flip_config()
        .validate(config.t)
        .map_err(flag_error)?;
    let s = run_monte_carlo(&config)?;
    s.write_replicates_csv(with_suffix(&a.out, ".replicates.csv"))?;
    write_json(&with_suffix(&a.out, ".summary.json"), &s)?;

    println!("{:<22} {}", "replicates", config.reps);
    println!("{:<22} {}", "mean privacy", sig6(s.mean_privacy));
    println!("{:<22} {}", "min privacy", sig6(s.min_privacy));
    for (name, q) in [("D_path", &s.d_path), ("D_ACF", &s.d_acf)] {
        let cells: Vec<String> = q
            .levels
            .iter()
            .zip(&q.values)
            .map(|(l, v)| format!("q{}={}", l, sig6(*v)))
            .collect();
        println!("{:<22} {}", name, cells.join(" "));
    }
    println!(
        "{:<22} {}",
        "frac D_path >= 1",
        sig6(s.fraction_d_path_ge_1)
    );
    println!(
        "{:<22} {}",
        "frac D_path > 0.64",
        sig6(s.fraction_d_path_gt_0_64)
    );
    if let Some(c) = s.trend_recovery_count {
        println!("{:<22} {}/{}", "trend within 2 se", c, config.reps);
    }
    Ok(())
}

pub fn metrics(a: MetricsArgs) -> CliResult {
    if a.h == 0 {
        return Err(CliError::Usage("--H must be at least 1".into()));
    }
    let x = load_csv(&a.original, a.original_column.as_deref())
        .with_context(|| format!("reading {}", a.original.display()))?;
    let y = load_csv(&a.privatized, a.privatized_column.as_deref())
        .with_context(|| format!("reading {}", a.privatized.display()))?;
    let dp = d_path(&x, &y)?;
    let da = d_acf(&x, &y, a.h)?;
    println!("{:<8} {}", "D_path", sig6(dp));
    println!("{:<8} {}", "D_ACF", sig6(da));
    Ok(())
}

pub fn compare_noise(a: CompareNoiseArgs) -> CliResult {
    let config = flip_config(&a.filter)?;
    if a.snr.is_nan() || a.snr <= 0.0 || a.snr.is_infinite() {
        return Err(CliError::Usage(format!(
            "--snr must be positive, got {}",
            a.snr
        )));
    }
    let (x, z) = load_pair(&a.x, a.x_column.as_deref(), &a.z, a.z_column.as_deref())?;
    config.validate(x.len()).map_err(flag_error)?;
    let (flip, noisy, cmp) = flip_compare_noise(&x, &z, &config, a.snr)?;
    write_json(&with_suffix(&a.out, ".comparison.json"), &cmp)?;
    write_columns_csv(
        with_suffix(&a.out, ".paths.csv"),
        &[
            ("original", x.values()),
            ("privatized", flip.privatized.values()),
            ("noisy", noisy.values()),
        ],
    )?;
    println!(
        "{:<14} {:>12} {:>12} {:>12}",
        "", "original", "flip", "noise"
    );
    println!(
        "{:<14} {:>12} {:>12} {:>12}",
        "lag-1 ACF",
        sig6(cmp.acf1_original),
        sig6(cmp.acf1_flip),
        sig6(cmp.acf1_noise)
    );
    println!(
        "{:<14} {:>12} {:>12} {:>12}",
        "D_ACF",
        "",
        sig6(cmp.d_acf_flip),
        sig6(cmp.d_acf_noise)
    );
    println!(
        "{:<14} {:>12} {:>12} {:>12}",
        "D_path",
        "",
        sig6(cmp.d_path_flip),
        sig6(cmp.d_path_noise)
    );
    println!("{:<14} {}", "attenuation A", sig6(cmp.attenuation));
    Ok(())
}
