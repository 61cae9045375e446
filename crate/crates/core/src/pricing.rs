//! Forward prices with spike corrections and Monte Carlo valuation of strips
//! of calls under the Merton measure (jump intensity and law unchanged, zero
//! risk-free rate).

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{GridSpec, Moment, SpikeParams};
use crate::quadrature::{adaptive_simpson, DEFAULT_MAX_INTERVALS};
use crate::rng::{derive, Purpose};
use crate::simulate::{sample_jump_records, spike_values_from_truth, two_factor_step, two_factor_step_factor, JumpRecord};
use crate::stats;

/// Two-factor lognormal forward model
/// `df^c(t,T) = f^c(t,T) (σ_l dW^l_t + σ_s e^{-α(T-t)} dW^s_t)`, `d⟨W^l, W^s⟩ = ρ dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoFactorParams {
    pub alpha: f64,
    pub sigma_s: f64,
    pub sigma_l: f64,
    pub rho: f64,
}

impl TwoFactorParams {
    /// Calibration to French forwards quoted in the literature (per year).
    pub const FRENCH_2016: TwoFactorParams = TwoFactorParams {
        alpha: 12.56,
        sigma_s: 1.03,
        sigma_l: 0.25,
        rho: -0.11,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("alpha must be > 0"));
        }
        // Zero vols are accepted: they give the deterministic curve.
        if !(self.sigma_s.is_finite() && self.sigma_s >= 0.0) || !(self.sigma_l.is_finite() && self.sigma_l >= 0.0) {
            return Err(Error::invalid("factor volatilities must be finite and >= 0"));
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        Ok(())
    }

    /// Variance of `log X^c_t`:
    /// `σ_l² t + σ_s² (1 - e^{-2αt}) / (2α) + 2ρ σ_l σ_s (1 - e^{-αt}) / α`.
    pub fn log_variance(&self, t: f64) -> f64 {
        let a = self.alpha;
        self.sigma_l * self.sigma_l * t
            + self.sigma_s * self.sigma_s * -(-2.0 * a * t).exp_m1() / (2.0 * a)
            + 2.0 * self.rho * self.sigma_l * self.sigma_s * -(-a * t).exp_m1() / a
    }

    /// Quadratic variation of `log f^c(·, T)` accumulated over `[0, t]`.
    pub fn forward_log_variance(&self, t: f64, maturity: f64) -> f64 {
        let a = self.alpha;
        let tau = maturity - t;
        self.sigma_l * self.sigma_l * t
            + self.sigma_s * self.sigma_s * (-2.0 * a * tau).exp() * -(-2.0 * a * t).exp_m1() / (2.0 * a)
            + 2.0 * self.rho * self.sigma_l * self.sigma_s * (-a * tau).exp() * -(-a * t).exp_m1() / a
    }

    /// Spot `X^c_t = f^c(0,t) exp(-v(t)/2 + σ_l W^l_t + σ_s Y_t)`.
    pub fn spot(&self, curve: &ForwardCurve, t: f64, long: f64, short: f64) -> f64 {
        curve.value(t) * (-0.5 * self.log_variance(t) + self.sigma_l * long + self.sigma_s * short).exp()
    }

    /// Forward `f^c(t,T)` given the factor states at `t`.
    pub fn forward(&self, curve: &ForwardCurve, t: f64, maturity: f64, long: f64, short: f64) -> f64 {
        let damp = (-self.alpha * (maturity - t)).exp();
        curve.value(maturity)
            * (self.sigma_l * long + self.sigma_s * damp * short - 0.5 * self.forward_log_variance(t, maturity)).exp()
    }
}

/// Initial forward curve `T ↦ f^c(0,T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ForwardCurve {
    Flat(f64),
    /// Level `levels[k]` applies from `starts[k]` until the next start.
    PiecewiseConstant { starts: Vec<f64>, levels: Vec<f64> },
}

impl ForwardCurve {
    pub fn flat(level: f64) -> Result<Self> {
        let curve = ForwardCurve::Flat(level);
        curve.validate()?;
        Ok(curve)
    }

    pub fn piecewise(starts: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let curve = ForwardCurve::PiecewiseConstant { starts, levels };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ForwardCurve::Flat(level) => {
                if !(level.is_finite() && *level > 0.0) {
                    return Err(Error::invalid("forward curve level must be > 0"));
                }
            }
            ForwardCurve::PiecewiseConstant { starts, levels } => {
                if starts.is_empty() || starts.len() != levels.len() {
                    return Err(Error::invalid("piecewise curve needs matching non-empty starts and levels"));
                }
                if starts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("piecewise curve starts must increase"));
                }
                if levels.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                    return Err(Error::invalid("piecewise curve levels must be > 0"));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, maturity: f64) -> f64 {
        match self {
            ForwardCurve::Flat(level) => *level,
            ForwardCurve::PiecewiseConstant { starts, levels } => {
                let k = starts.partition_point(|&s| s <= maturity);
                levels[k.saturating_sub(1)]
            }
        }
    }
}

fn check_maturity(t: f64, maturity: f64) -> Result<()> {
    if !(maturity >= t) {
        return Err(Error::invalid(format!("maturity {maturity} precedes valuation time {t}")));
    }
    Ok(())
}

/// Spike part of the forward price, arithmetic spot model:
/// `e^{-β(T-t)} Z_t + (λ x⋆ν / β)(1 - e^{-β(T-t)})`.
pub fn forward_spike_arith(z_now: f64, params: &SpikeParams, t: f64, maturity: f64) -> Result<f64> {
    check_maturity(t, maturity)?;
    let beta = params.reversion;
    let level = params.intensity * params.law.moment(Moment::Signed(1))? / beta;
    let decay = (-beta * (maturity - t)).exp();
    Ok(decay * z_now + level * -(-beta * (maturity - t)).exp_m1())
}

/// Spike part of a contract delivering continuously over `[T, T + θ]`.
pub fn forward_spike_delivery(z_now: f64, params: &SpikeParams, t: f64, maturity: f64, theta: f64) -> Result<f64> {
    check_maturity(t, maturity)?;
    if !(theta > 0.0) {
        return Err(Error::invalid(format!("delivery period must be > 0, got {theta}")));
    }
    let beta = params.reversion;
    let level = params.intensity * params.law.moment(Moment::Signed(1))? / beta;
    let averaging = -(-beta * theta).exp_m1() / (beta * theta);
    let decay = (-beta * (maturity - t)).exp() * averaging;
    Ok(decay * z_now + level * (1.0 - decay))
}

const SERIES_CUTOFF: f64 = 1e-6;

/// Multiplicative spike factor of the forward price when the log-spot carries the spikes:
/// `E[e^{Z_T} | Z_t] = exp(e^{-β(T-t)} Z_t) exp((λ/β) ∫_{e^{-β(T-t)}}^1 (L(u) - 1)/u du)`
/// with `L(u) = ∫e^{ux}ν(dx)`. The integral is `λ∫_0^{T-t} (L(e^{-βs}) - 1) ds` after `u = e^{-βs}`.
pub fn forward_spike_log(z_now: f64, params: &SpikeParams, t: f64, maturity: f64, quad_tol: f64) -> Result<f64> {
    check_maturity(t, maturity)?;
    let law = &params.law;
    // L is monotone on each sign component, so finiteness at u = 1 covers [0, 1].
    law.exp_moment(1.0)?;
    let beta = params.reversion;
    let decay = (-beta * (maturity - t)).exp();
    // Near u = 0 the integrand cancels catastrophically; there it equals x⋆ν + u·x²⋆ν/2 + O(u²).
    let lower = decay.max(SERIES_CUTOFF);
    let head = if decay < SERIES_CUTOFF {
        let (m1, m2) = (law.moment(Moment::Signed(1))?, law.moment(Moment::Signed(2))?);
        m1 * (SERIES_CUTOFF - decay) + 0.25 * m2 * (SERIES_CUTOFF * SERIES_CUTOFF - decay * decay)
    } else {
        0.0
    };
    let integral = if lower == 1.0 {
        0.0
    } else {
        head + adaptive_simpson(
            |u| (law.exp_moment(u).unwrap_or(f64::NAN) - 1.0) / u,
            lower,
            1.0,
            quad_tol,
            DEFAULT_MAX_INTERVALS,
        )?
    };
    Ok((decay * z_now).exp() * (params.intensity / beta * integral).exp())
}

/// Spike forward evaluated path-wise from jump records under the Merton measure:
/// `f^β(0,T) + Σ_{T_q <= t} ΔX_{T_q} e^{-β(T-T_q)} - λ x⋆ν ∫_0^t e^{-β(T-s)} ds`.
pub fn spike_forward_from_jumps(truth: &[JumpRecord], params: &SpikeParams, t: f64, maturity: f64) -> Result<f64> {
    check_maturity(t, maturity)?;
    let beta = params.reversion;
    let mean = params.law.moment(Moment::Signed(1))?;
    let initial = forward_spike_arith(0.0, params, 0.0, maturity)?;
    let jumps: f64 = truth
        .iter()
        .take_while(|r| r.time <= t)
        .map(|r| r.size * (-beta * (maturity - r.time)).exp())
        .sum();
    let compensator = params.intensity * mean * (-beta * maturity).exp() * (beta * t).exp_m1() / beta;
    Ok(initial + jumps - compensator)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StripOptionSpec {
    pub exercise_times: Vec<f64>,
    pub strike: f64,
    pub num_sims: usize,
    pub seed: u64,
    /// Pair each Gaussian factor path with its reflection.
    pub antithetic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripModel {
    pub two_factor: TwoFactorParams,
    pub curve: ForwardCurve,
    pub spikes: Option<SpikeParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceWithCI {
    pub estimate: f64,
    pub ci95: (f64, f64),
    pub num_sims: usize,
    pub stderr: f64,
}

impl PriceWithCI {
    /// Mean and normal 95% interval of i.i.d. samples (`num_sims` counts raw paths).
    pub fn from_samples(samples: &[f64], num_sims: usize) -> Self {
        let estimate = stats::mean(samples);
        let stderr = if samples.len() > 1 {
            (stats::variance(samples) / samples.len() as f64).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * stderr;
        Self {
            estimate,
            ci95: (estimate - half, estimate + half),
            num_sims,
            stderr,
        }
    }
}

/// Every grid time after the origin: hourly exercise on an hourly grid.
pub fn every_grid_time(grid: &GridSpec) -> Vec<f64> {
    (1..=grid.n()).map(|i| grid.time(i)).collect()
}

fn exercise_indices(grid: &GridSpec, times: &[f64]) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(Error::invalid("strip needs at least one exercise time"));
    }
    let idx = times
        .iter()
        .map(|&t| grid.index_of(t).ok_or(Error::OffGrid(t)))
        .collect::<Result<Vec<_>>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("exercise times must increase"));
    }
    Ok(idx)
}

/// Price `E^{Q^M}[Σ_i (S_{t_i} - K)^+]` with `S_t = f^c(t,t) + Z_t`.
///
/// Under the Merton measure the spike forward satisfies `f^β(T,T) = Z_T`
/// when `Z_0 = 0`, so the spike part of the spot is the plain spike process
/// with unchanged `(λ, β, ν)`.
pub fn price_strip_mc(model: &StripModel, spec: &StripOptionSpec, grid: &GridSpec) -> Result<PriceWithCI> {
    model.two_factor.validate()?;
    model.curve.validate()?;
    if let Some(spikes) = &model.spikes {
        spikes.validate()?;
    }
    if spec.num_sims < 2 {
        return Err(Error::invalid("need at least two simulations"));
    }
    if spec.antithetic && !spec.num_sims.is_multiple_of(2) {
        return Err(Error::invalid("antithetic pricing needs an even number of simulations"));
    }
    let exercises = exercise_indices(grid, &spec.exercise_times)?;
    let last = *exercises.last().expect("non-empty");
    let params = model.two_factor;
    let chol = two_factor_step_factor(&params, grid.mesh());
    let decay = (-params.alpha * grid.mesh()).exp();
    let deterministic: Vec<f64> = (0..=last)
        .map(|i| {
            let t = grid.time(i);
            model.curve.value(t) * (-0.5 * params.log_variance(t)).exp()
        })
        .collect();

    let payoff = |sim: u64, reflect: bool, normals: u64| -> f64 {
        let mut rng = derive(spec.seed, normals, Purpose::Pricing);
        let spike = model.spikes.as_ref().map(|sp| {
            let mut jr = derive(spec.seed, sim, Purpose::Jumps);
            spike_values_from_truth(&sample_jump_records(sp, grid, &mut jr), sp.reversion, grid)
        });
        let sign = if reflect { -1.0 } else { 1.0 };
        let (mut w, mut y) = (0.0, 0.0);
        let mut total = 0.0;
        let mut next = 0;
        for i in 0..=last {
            if i > 0 {
                let z: (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                (w, y) = two_factor_step(w, y, decay, chol, (sign * z.0, sign * z.1));
            }
            if exercises[next] == i {
                let mut s = deterministic[i] * (params.sigma_l * w + params.sigma_s * y).exp();
                if let Some(z) = &spike {
                    s += z[i];
                }
                total += (s - spec.strike).max(0.0);
                next += 1;
                if next == exercises.len() {
                    break;
                }
            }
        }
        total
    };

    let samples: Vec<f64> = if spec.antithetic {
        (0..spec.num_sims as u64 / 2)
            .into_par_iter()
            .map(|p| 0.5 * (payoff(2 * p, false, p) + payoff(2 * p + 1, true, p)))
            .collect()
    } else {
        (0..spec.num_sims as u64)
            .into_par_iter()
            .map(|s| payoff(s, false, s))
            .collect()
    };
    Ok(PriceWithCI::from_samples(&samples, spec.num_sims))
}
