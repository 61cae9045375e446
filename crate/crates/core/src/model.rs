//! Domain types for the price model: observation grid, sampled paths, the
//! jump-size law and spike parameters, plus the regime diagnostics used to
//! judge whether a parameter set suits jump detection.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pricing::{ForwardCurve, TwoFactorParams};

/// Regular observation grid `t_i = i * mesh`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    n: usize,
    horizon: f64,
    mesh: f64,
}

impl GridSpec {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid needs n >= 2, got {n}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
        }
        Ok(Self {
            n,
            horizon,
            mesh: horizon / n as f64,
        })
    }

    /// Grid on the normalized unit horizon.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, 1.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.mesh
    }

    /// Index `i` with `t_{i-1} < t <= t_i`, for `t` in `(0, horizon]`.
    pub fn interval_of(&self, t: f64) -> usize {
        let mut i = ((t / self.mesh).ceil() as usize).clamp(1, self.n);
        while i < self.n && self.time(i) < t {
            i += 1;
        }
        while i > 1 && self.time(i - 1) >= t {
            i -= 1;
        }
        i
    }

    /// Grid index of `t` if it lies on the grid (relative tolerance 1e-9 of the mesh).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.mesh).round();
        if k < 0.0 || k > self.n as f64 {
            return None;
        }
        ((t - k * self.mesh).abs() <= 1e-9 * self.mesh).then_some(k as usize)
    }
}

/// Observations `X_0, X_{Δ}, ..., X_T` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: GridSpec,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() + 1 {
            return Err(Error::invalid(format!(
                "path has {} values, grid expects {}",
                values.len(),
                grid.n() + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, level: f64) -> Result<Self> {
        Self::new(grid, vec![level; grid.n() + 1])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `Δ_i X = X_{t_i} - X_{t_{i-1}}` for `i` in `1..=n`.
    pub fn increment(&self, i: usize) -> f64 {
        self.values[i] - self.values[i - 1]
    }

    /// All increments; entry `k` holds `Δ_{k+1} X`.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// One component of a signed exponential mixture: with probability `weight`
/// the jump is `sign * E`, `E` exponential with the given `rate` (mean `1/rate`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpComponent {
    pub weight: f64,
    pub rate: f64,
    pub sign: f64,
}

/// Law of the jump sizes. Never charges zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum JumpLaw {
    SignedExponentialMixture(Vec<ExpComponent>),
    Empirical(Vec<f64>),
    PointMass(f64),
}

/// Which moment of the jump law to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Moment {
    /// `x^m ⋆ ν`
    Signed(u32),
    /// `|x|^m ⋆ ν`
    Absolute(u32),
    /// `sgn(x) ⋆ ν`
    SignMass,
}

impl std::fmt::Display for Moment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Moment::Signed(m) => write!(f, "x^{m}"),
            Moment::Absolute(m) => write!(f, "|x|^{m}"),
            Moment::SignMass => f.write_str("sgn(x)"),
        }
    }
}

/// `sgn(x) = 1` for `x >= 0`, `-1` otherwise.
pub fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl JumpLaw {
    pub fn mixture(weights: &[f64], rates: &[f64], signs: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.len() != rates.len() || rates.len() != signs.len() {
            return Err(Error::invalid(
                "mixture weights, rates and signs must be non-empty and of equal length",
            ));
        }
        let comps: Vec<ExpComponent> = weights
            .iter()
            .zip(rates)
            .zip(signs)
            .map(|((&weight, &rate), &sign)| ExpComponent { weight, rate, sign })
            .collect();
        let law = JumpLaw::SignedExponentialMixture(comps);
        law.validate()?;
        Ok(law)
    }

    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        let law = JumpLaw::Empirical(samples);
        law.validate()?;
        Ok(law)
    }

    pub fn point_mass(size: f64) -> Result<Self> {
        let law = JumpLaw::PointMass(size);
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JumpLaw::SignedExponentialMixture(comps) => {
                if comps.is_empty() {
                    return Err(Error::invalid("mixture has no components"));
                }
                for (k, c) in comps.iter().enumerate() {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return Err(Error::invalid(format!("component {k}: weight must be >= 0")));
                    }
                    if !(c.rate.is_finite() && c.rate > 0.0) {
                        return Err(Error::invalid(format!("component {k}: rate must be > 0")));
                    }
                    if c.sign != 1.0 && c.sign != -1.0 {
                        return Err(Error::invalid(format!("component {k}: sign must be +1 or -1")));
                    }
                }
                let total: f64 = comps.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
                }
            }
            JumpLaw::Empirical(samples) => {
                if samples.is_empty() {
                    return Err(Error::invalid("empirical law needs at least one sample"));
                }
                if let Some(i) = samples.iter().position(|x| !x.is_finite() || *x == 0.0) {
                    return Err(Error::invalid(format!(
                        "empirical sample {i} is zero or non-finite (no atom at zero allowed)"
                    )));
                }
            }
            JumpLaw::PointMass(a) => {
                if !a.is_finite() || *a == 0.0 {
                    return Err(Error::invalid("point mass must sit at a finite nonzero size"));
                }
            }
        }
        Ok(())
    }

    /// Draw one jump size. Never returns exactly zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpLaw::PointMass(a) => *a,
            JumpLaw::Empirical(samples) => samples[rng.random_range(0..samples.len())],
            JumpLaw::SignedExponentialMixture(comps) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = comps[comps.len() - 1];
                for c in comps {
                    acc += c.weight;
                    if u < acc {
                        chosen = *c;
                        break;
                    }
                }
                let exp = Exp::new(chosen.rate).expect("rate validated");
                loop {
                    let x: f64 = exp.sample(rng);
                    if x > 0.0 {
                        return chosen.sign * x;
                    }
                }
            }
        }
    }

    pub fn moment(&self, kind: Moment) -> Result<f64> {
        let value = match (self, kind) {
            (_, Moment::Signed(0) | Moment::Absolute(0)) => 1.0,
            (JumpLaw::PointMass(a), Moment::Signed(m)) => a.powi(m as i32),
            (JumpLaw::PointMass(a), Moment::Absolute(m)) => a.abs().powi(m as i32),
            (JumpLaw::PointMass(a), Moment::SignMass) => sgn(*a),
            (JumpLaw::Empirical(xs), kind) => {
                let f = |x: f64| match kind {
                    Moment::Signed(m) => x.powi(m as i32),
                    Moment::Absolute(m) => x.abs().powi(m as i32),
                    Moment::SignMass => sgn(x),
                };
                xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64
            }
            (JumpLaw::SignedExponentialMixture(comps), kind) => comps
                .iter()
                .map(|c| {
                    c.weight
                        * match kind {
                            // E[E^m] = m! / rate^m
                            Moment::Signed(m) => {
                                c.sign.powi(m as i32) * factorial(m) / c.rate.powi(m as i32)
                            }
                            Moment::Absolute(m) => factorial(m) / c.rate.powi(m as i32),
                            Moment::SignMass => c.sign,
                        }
                })
                .sum(),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::InfiniteMoment(kind.to_string()))
        }
    }

    /// `∫ e^{ux} ν(dx)`.
    pub fn exp_moment(&self, u: f64) -> Result<f64> {
        let value = match self {
            JumpLaw::PointMass(a) => (u * a).exp(),
            JumpLaw::Empirical(xs) => xs.iter().map(|&x| (u * x).exp()).sum::<f64>() / xs.len() as f64,
            JumpLaw::SignedExponentialMixture(comps) => {
                let mut acc = 0.0;
                for (k, c) in comps.iter().enumerate() {
                    let denom = c.rate - c.sign * u;
                    if denom <= 0.0 {
                        return Err(Error::ExpMomentDivergence {
                            u,
                            component: k,
                            detail: format!("sign {:+} rate {} needs sign*u < rate", c.sign, c.rate),
                        });
                    }
                    acc += c.weight * c.rate / denom;
                }
                acc
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::ExpMomentDivergence {
                u,
                component: 0,
                detail: "overflow".into(),
            })
        }
    }
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

/// Compound-Poisson spike parameters `(λ, β, ν)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeParams {
    pub intensity: f64,
    pub reversion: f64,
    pub law: JumpLaw,
}

impl SpikeParams {
    pub fn new(intensity: f64, reversion: f64, law: JumpLaw) -> Result<Self> {
        let params = Self {
            intensity,
            reversion,
            law,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity.is_finite() && self.intensity > 0.0) {
            return Err(Error::invalid(format!("intensity must be > 0, got {}", self.intensity)));
        }
        if !(self.reversion.is_finite() && self.reversion > 0.0) {
            return Err(Error::invalid(format!("reversion must be > 0, got {}", self.reversion)));
        }
        self.law.validate()
    }
}

/// Exponential of an Ornstein-Uhlenbeck process:
/// `d log X^c = -reversion * log X^c dt + vol dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpOu {
    pub reversion: f64,
    pub vol: f64,
    pub initial: f64,
}

impl ExpOu {
    pub fn validate(&self) -> Result<()> {
        if !self.reversion.is_finite() {
            return Err(Error::invalid("exp-OU reversion must be finite"));
        }
        if !(self.vol.is_finite() && self.vol > 0.0) {
            return Err(Error::invalid("exp-OU vol must be > 0"));
        }
        if !(self.initial.is_finite() && self.initial > 0.0) {
            return Err(Error::invalid("exp-OU initial value must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousSpec {
    ExpOu(ExpOu),
    TwoFactor {
        params: TwoFactorParams,
        curve: ForwardCurve,
    },
    Flat(f64),
}

impl ContinuousSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ContinuousSpec::ExpOu(spec) => spec.validate(),
            ContinuousSpec::TwoFactor { params, curve } => {
                params.validate()?;
                curve.validate()
            }
            ContinuousSpec::Flat(c) if c.is_finite() => Ok(()),
            ContinuousSpec::Flat(_) => Err(Error::invalid("flat level must be finite")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub continuous: ContinuousSpec,
    pub spikes: SpikeParams,
}

/// Magnitudes that decide whether a grid suits detection regime I, II, both or neither.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionThresholds {
    /// A magnitude below this counts as "small".
    pub small: f64,
    /// `β√Δ` above this counts as reversion dominating Brownian noise.
    pub large: f64,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        Self {
            small: 0.1,
            large: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    I,
    II,
    Both,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub lambda_delta: f64,
    pub beta_delta: f64,
    pub lambda_over_beta: f64,
    pub lambda_sq_delta: f64,
    pub lambda_sq_delta_window_sq: Option<f64>,
    /// `β Δ^{1-ϖ}`, the quantity in the regime-II exponential condition.
    pub beta_delta_pow: f64,
    /// `β √Δ`: reversion per step against the Brownian scale.
    pub beta_sqrt_delta: f64,
    pub stable: bool,
    pub identifiable: bool,
    pub sparse: bool,
    pub regime_i: bool,
    pub regime_ii: bool,
    pub regime: Regime,
}

/// Diagnostics only: never refuses a parameter set.
pub fn check_assumptions(
    params: &SpikeParams,
    grid: &GridSpec,
    varpi: f64,
    window: Option<usize>,
    thresholds: AssumptionThresholds,
) -> Result<AssumptionReport> {
    if !(varpi > 0.0 && varpi < 0.5) {
        return Err(Error::invalid(format!("varpi must lie in (0, 1/2), got {varpi}")));
    }
    let (lambda, beta, delta) = (params.intensity, params.reversion, grid.mesh());
    let lambda_sq_delta = lambda * lambda * delta;
    let lambda_sq_delta_window_sq = window.map(|k| lambda_sq_delta * (k * k) as f64);
    let beta_sqrt_delta = beta * delta.sqrt();
    let small = thresholds.small;

    let regime_i = lambda_sq_delta < small && beta * delta < small;
    let regime_ii =
        beta_sqrt_delta > thresholds.large && lambda_sq_delta_window_sq.is_none_or(|v| v < small);
    let regime = match (regime_i, regime_ii) {
        (true, true) => Regime::Both,
        (true, false) => Regime::I,
        (false, true) => Regime::II,
        (false, false) => Regime::Neither,
    };
    Ok(AssumptionReport {
        lambda_delta: lambda * delta,
        beta_delta: beta * delta,
        lambda_over_beta: lambda / beta,
        lambda_sq_delta,
        lambda_sq_delta_window_sq,
        beta_delta_pow: beta * delta.powf(1.0 - varpi),
        beta_sqrt_delta,
        stable: lambda / beta <= 1.0 / small,
        identifiable: beta * delta <= 1.0 / small,
        sparse: lambda * delta < small,
        regime_i,
        regime_ii,
        regime,
    })
}
