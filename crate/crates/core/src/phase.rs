//! Randomized phase design.
//!
//! A phase `g(lambda) = pi R(H(lambda))` on `[0, pi]` (extended oddly) built
//! from a spectral CDF `H` and a transform `R` with `R(0) = 0` and
//! `R(x) + R(1 - x) = 1` gives `int cos(g) dH = int_0^1 cos(pi R(x)) dx = 0`.
//! Using the attacker-relevant residual spectrum for `H` therefore makes the
//! released series uncorrelated with the sensitive one after conditioning.
//! Replacing `H` by the CDF of a constant-shifted density `h` trades a bounded
//! amount of that orthogonality for a randomized filter.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{beta_cdf, beta_pdf};
use crate::spectra::{SpectralCdf, SpectralDensity};

/// Grid resolution for the Lipschitz search before local refinement.
const LIPSCHITZ_GRID: usize = 4000;

/// One symmetrized pair `alpha/2 [Beta(x|a,b) + Beta(x|b,a)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaComponent {
    pub weight: f64,
    pub a: f64,
    pub b: f64,
}

/// Symmetric Beta-CDF mixture `R: [0,1] -> [0,1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RFunction {
    components: Vec<BetaComponent>,
    lipschitz: f64,
    zero_derivative_order: usize,
}

impl RFunction {
    pub fn components(&self) -> &[BetaComponent] {
        &self.components
    }

    /// `sup_x r(x)`, the Lipschitz constant of `R`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Largest `d` such that `R^(k)(0) = 0` for all `k <= d`.
    pub fn zero_derivative_order(&self) -> usize {
        self.zero_derivative_order
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        self.components
            .iter()
            .map(|c| 0.5 * c.weight * (beta_cdf(x, c.a, c.b) + beta_cdf(x, c.b, c.a)))
            .sum()
    }

    /// Mixture density `r = R'`.
    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| 0.5 * c.weight * (beta_pdf(x, c.a, c.b) + beta_pdf(x, c.b, c.a)))
            .sum()
    }
}

/// Builds and certifies a symmetric Beta mixture.
///
/// Shapes must be at least 1 so the density (and with it the Lipschitz
/// constant) stays bounded.
pub fn beta_mixture_r(components: &[BetaComponent]) -> Result<RFunction> {
    if components.is_empty() {
        return Err(Error::InvalidRFunction("no components".into()));
    }
    for c in components {
        if !(c.weight > 0.0 && c.weight <= 1.0) {
            return Err(Error::InvalidRFunction(format!(
                "weight {} outside (0, 1]",
                c.weight
            )));
        }
        if !(c.a >= 1.0 && c.b >= 1.0) || !c.a.is_finite() || !c.b.is_finite() {
            return Err(Error::InvalidRFunction(format!(
                "shapes ({}, {}) must be finite and >= 1",
                c.a, c.b
            )));
        }
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidRFunction(format!(
            "weights sum to {total}, not 1"
        )));
    }
    let min_shape = components
        .iter()
        .flat_map(|c| [c.a, c.b])
        .fold(f64::INFINITY, f64::min);
    let mut r = RFunction {
        components: components.to_vec(),
        lipschitz: 0.0,
        zero_derivative_order: (min_shape - 1.0).floor() as usize,
    };
    r.lipschitz = sup_density(&r);
    Ok(r)
}

fn sup_density(r: &RFunction) -> f64 {
    let n = LIPSCHITZ_GRID;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=n {
        let v = r.density(i as f64 / n as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    // golden-section refinement on the bracketing cells
    let lo = best_i.saturating_sub(1) as f64 / n as f64;
    let hi = (best_i + 1).min(n) as f64 / n as f64;
    let (mut a, mut b) = (lo, hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..80 {
        if r.density(c) > r.density(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    best.max(r.density(0.5 * (a + b)))
}

/// How the transform `R` is chosen for a privatization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RFunctionSpec {
    Fixed {
        components: Vec<BetaComponent>,
    },
    /// Equal-weight mixture with every shape drawn uniformly from `[shape_min, shape_max]`.
    Random {
        components: usize,
        shape_min: f64,
        shape_max: f64,
    },
}

impl RFunctionSpec {
    /// Equal-weight pair with `a in {d+2, d+3}` and `b = a + 1`.
    pub fn fixed_for_trend(d: usize) -> Self {
        let d = d as f64;
        RFunctionSpec::Fixed {
            components: vec![
                BetaComponent {
                    weight: 0.5,
                    a: d + 2.0,
                    b: d + 3.0,
                },
                BetaComponent {
                    weight: 0.5,
                    a: d + 3.0,
                    b: d + 4.0,
                },
            ],
        }
    }

    /// Two components with shapes drawn from `[d+2, d+4]`.
    pub fn random_for_trend(d: usize) -> Self {
        RFunctionSpec::Random {
            components: 2,
            shape_min: d as f64 + 2.0,
            shape_max: d as f64 + 4.0,
        }
    }

    /// Smallest shape the spec can produce.
    pub fn min_shape(&self) -> f64 {
        match self {
            RFunctionSpec::Fixed { components } => components
                .iter()
                .flat_map(|c| [c.a, c.b])
                .fold(f64::INFINITY, f64::min),
            RFunctionSpec::Random { shape_min, .. } => *shape_min,
        }
    }

    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RFunction> {
        match self {
            RFunctionSpec::Fixed { components } => beta_mixture_r(components),
            RFunctionSpec::Random {
                components,
                shape_min,
                shape_max,
            } => {
                if *components == 0 || !(shape_min >= &1.0) || shape_max < shape_min {
                    return Err(Error::InvalidRFunction(format!(
                        "bad randomization range: {components} components, shapes [{shape_min}, {shape_max}]"
                    )));
                }
                let w = 1.0 / *components as f64;
                let span = shape_max - shape_min;
                let comps: Vec<BetaComponent> = (0..*components)
                    .map(|_| BetaComponent {
                        weight: w,
                        a: shape_min + span * rng.random::<f64>(),
                        b: shape_min + span * rng.random::<f64>(),
                    })
                    .collect();
                beta_mixture_r(&comps)
            }
        }
    }
}

/// Privacy budget and the constant-shift size that honors it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBudget {
    pub delta: f64,
    /// Upper end of the admissible shift interval `(0, B]`; `None` when degenerate.
    pub bound: Option<f64>,
    /// `sup |pi f~ - 1|` of the spectrum the budget was computed for.
    pub sup_deviation: f64,
    /// `sqrt(delta) / (L_R pi)`; the spectrum must deviate by more than this.
    pub threshold: f64,
    /// Drawn shift; 0 until [`sample_h`] runs.
    pub shift: f64,
}

impl DeltaBudget {
    pub fn is_degenerate(&self) -> bool {
        self.bound.is_none()
    }
}

/// `B = sqrt(delta) / (L_R pi^2 sup|pi f~ - 1| - pi sqrt(delta))`, with `f~ = f / int_0^pi f`.
pub fn compute_b(f: &SpectralDensity, delta: f64, lipschitz: f64) -> Result<DeltaBudget> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Config(format!(
            "delta must satisfy 0 <= delta < 1, got {delta}"
        )));
    }
    if !(lipschitz > 0.0) {
        return Err(Error::Config(format!(
            "Lipschitz constant must be positive, got {lipschitz}"
        )));
    }
    let sup_deviation = f.sup_normalized_deviation()?;
    let sd = delta.sqrt();
    let threshold = sd / (lipschitz * PI);
    let bound = if delta == 0.0 {
        Some(0.0)
    } else if sup_deviation > threshold {
        Some(sd / (lipschitz * PI * PI * sup_deviation - PI * sd))
    } else {
        None
    };
    Ok(DeltaBudget {
        delta,
        bound,
        sup_deviation,
        threshold,
        shift: 0.0,
    })
}

/// Draws `shift ~ Uniform(0, B]` and returns `h = A (f~ + shift)` with
/// `A = int f / (1 + pi shift)`, so `int h = int f`. `delta = 0` returns `f`.
pub fn sample_h<R: Rng + ?Sized>(
    f: &SpectralDensity,
    budget: &DeltaBudget,
    rng: &mut R,
) -> Result<(SpectralDensity, DeltaBudget)> {
    let bound = budget.bound.ok_or(Error::DegenerateBudget {
        sup_dev: budget.sup_deviation,
        threshold: budget.threshold,
    })?;
    let mut out = *budget;
    if budget.delta == 0.0 || bound == 0.0 {
        out.shift = 0.0;
        return Ok((f.clone(), out));
    }
    // 1 - U(0,1] lies in (0, 1]
    let shift = bound * (1.0 - rng.random::<f64>());
    out.shift = shift;
    Ok((shifted_density(f, shift)?, out))
}

/// `h = A (f~ + shift)`; mass-preserving constant shift of the normalized density.
pub fn shifted_density(f: &SpectralDensity, shift: f64) -> Result<SpectralDensity> {
    let total = f.total();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let scale = total / (1.0 + PI * shift);
    SpectralDensity::new(
        f.grid(),
        f.values()
            .iter()
            .map(|v| scale * (v / total + shift))
            .collect(),
    )
}

/// `g(lambda) = pi R(H(lambda))` on the CDF's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseFunction {
    grid: crate::spectra::FrequencyGrid,
    values: Vec<f64>,
}

impl PhaseFunction {
    pub fn new(grid: crate::spectra::FrequencyGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> crate::spectra::FrequencyGrid {
        self.grid
    }

    /// Phase values on `[0, pi]`; the odd extension covers `[-pi, 0)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn phase_function(r: &RFunction, cdf: &SpectralCdf) -> PhaseFunction {
    PhaseFunction {
        grid: cdf.grid(),
        values: cdf.values().iter().map(|&h| PI * r.eval(h)).collect(),
    }
}

/// `int_0^pi cos(g) f / int_0^pi f`; vanishes when `g` was built from `f`'s own CDF.
pub fn check_perfect_privacy(g: &PhaseFunction, f: &SpectralDensity) -> Result<f64> {
    if g.grid() != f.grid() {
        return Err(Error::Config(
            "phase and spectrum live on different grids".into(),
        ));
    }
    let total = f.total();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let v: Vec<f64> = g
        .values()
        .iter()
        .zip(f.values())
        .map(|(p, x)| p.cos() * x)
        .collect();
    Ok(f.grid().integrate(&v) / total)
}

/// Everything needed to reproduce a phase design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDesignRecord {
    pub r_spec: RFunctionSpec,
    pub r_function: RFunction,
    pub budget: DeltaBudget,
}
