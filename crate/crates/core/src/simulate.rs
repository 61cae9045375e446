//! Exact simulation of the spike process, the exp-OU continuous part, their
//! sum, and the two-factor forward/spot model. Every transition is sampled
//! from its exact law; there is no Euler step anywhere.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::model::{ContinuousSpec, ExpOu, GridSpec, ModelSpec, SampledPath, SpikeParams};
use crate::pricing::{ForwardCurve, TwoFactorParams};
use crate::rng::{derive, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpRecord {
    pub time: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub observed: SampledPath,
    pub continuous: SampledPath,
    pub spike: SampledPath,
    pub truth: Vec<JumpRecord>,
}

/// Jump times and sizes of a compound Poisson measure on `(0, horizon]`.
///
/// The count is drawn first, then the times as sorted uniforms. A time that
/// lands exactly on a grid point is moved one ulp into the interval below it.
pub fn sample_jump_records<R: Rng + ?Sized>(
    params: &SpikeParams,
    grid: &GridSpec,
    rng: &mut R,
) -> Vec<JumpRecord> {
    let horizon = grid.horizon();
    let mean = params.intensity * horizon;
    let count = if mean > 0.0 {
        Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
    } else {
        0
    };
    let mut times: Vec<f64> = (0..count)
        .map(|_| horizon - rng.random::<f64>() * horizon)
        .map(|t| {
            let i = grid.interval_of(t);
            if t == grid.time(i) {
                t.next_down()
            } else {
                t
            }
        })
        .collect();
    times.sort_by(f64::total_cmp);
    for k in 1..times.len() {
        if times[k] <= times[k - 1] {
            times[k] = times[k - 1].next_up();
        }
    }
    times
        .into_iter()
        .map(|time| JumpRecord {
            time,
            size: params.law.sample(rng),
        })
        .collect()
}

/// Spike values on the grid from a list of jump records.
///
/// `Z_0 = 0` and `Z_{t_i} = Z_{t_{i-1}} e^{-βΔ} + Σ_{t_{i-1} < T_q <= t_i} ΔX_{T_q} e^{-β(t_i - T_q)}`,
/// which is the shot-noise integral evaluated exactly at the grid times. On a
/// jumpless step the update is a single multiplication by `e^{-βΔ}`.
pub fn spike_values_from_truth(truth: &[JumpRecord], reversion: f64, grid: &GridSpec) -> Vec<f64> {
    let decay = (-reversion * grid.mesh()).exp();
    let mut values = Vec::with_capacity(grid.n() + 1);
    values.push(0.0);
    let mut next = 0;
    let mut z = 0.0;
    for i in 1..=grid.n() {
        let t = grid.time(i);
        z *= decay;
        while next < truth.len() && (truth[next].time <= t || i == grid.n()) {
            let rec = truth[next];
            z += rec.size * (-reversion * (t - rec.time)).exp();
            next += 1;
        }
        values.push(z);
    }
    values
}

pub fn simulate_spikes<R: Rng + ?Sized>(
    params: &SpikeParams,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<(SampledPath, Vec<JumpRecord>)> {
    params.validate()?;
    let truth = sample_jump_records(params, grid, rng);
    let values = spike_values_from_truth(&truth, params.reversion, grid);
    Ok((SampledPath::new(*grid, values)?, truth))
}

/// Exact AR(1) transition of `log X^c`: mean factor `e^{-κΔ}` and innovation
/// variance `σ²(1 - e^{-2κΔ}) / (2κ)`.
pub fn simulate_exp_ou<R: Rng + ?Sized>(spec: &ExpOu, grid: &GridSpec, rng: &mut R) -> Result<SampledPath> {
    spec.validate()?;
    let dt = grid.mesh();
    let kappa = spec.reversion;
    let a = (-kappa * dt).exp();
    let var = if kappa == 0.0 {
        spec.vol * spec.vol * dt
    } else {
        spec.vol * spec.vol * -(-2.0 * kappa * dt).exp_m1() / (2.0 * kappa)
    };
    let sd = var.sqrt();
    let mut y = spec.initial.ln();
    let mut values = Vec::with_capacity(grid.n() + 1);
    values.push(spec.initial);
    for _ in 0..grid.n() {
        let z: f64 = StandardNormal.sample(rng);
        y = a * y + sd * z;
        values.push(y.exp());
    }
    SampledPath::new(*grid, values)
}

/// Gaussian factor states of the two-factor model on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorStates {
    /// `W^l_{t_i}`
    pub long: Vec<f64>,
    /// `Y_{t_i} = ∫_0^{t_i} e^{-α(t_i - u)} dW^s_u`
    pub short: Vec<f64>,
}

/// Per-step covariance of `(ΔW^l, ε)` with `ε` the OU innovation over `dt`,
/// returned as the lower Cholesky factor `(l11, l21, l22)`.
pub(crate) fn two_factor_step_factor(params: &TwoFactorParams, dt: f64) -> (f64, f64, f64) {
    let alpha = params.alpha;
    let var_long = dt;
    let var_short = -(-2.0 * alpha * dt).exp_m1() / (2.0 * alpha);
    let cov = params.rho * -(-alpha * dt).exp_m1() / alpha;
    let l11 = var_long.sqrt();
    let l21 = cov / l11;
    let l22 = (var_short - l21 * l21).max(0.0).sqrt();
    (l11, l21, l22)
}

/// Draw one step of the factor pair; `z` supplies the two standard normals.
pub(crate) fn two_factor_step(
    long: f64,
    short: f64,
    decay: f64,
    chol: (f64, f64, f64),
    z: (f64, f64),
) -> (f64, f64) {
    let (l11, l21, l22) = chol;
    (long + l11 * z.0, decay * short + l21 * z.0 + l22 * z.1)
}

pub fn simulate_two_factor<R: Rng + ?Sized>(
    params: &TwoFactorParams,
    initial_curve: &ForwardCurve,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<(SampledPath, FactorStates)> {
    params.validate()?;
    initial_curve.validate()?;
    let chol = two_factor_step_factor(params, grid.mesh());
    let decay = (-params.alpha * grid.mesh()).exp();
    let mut long = Vec::with_capacity(grid.n() + 1);
    let mut short = Vec::with_capacity(grid.n() + 1);
    let (mut w, mut y) = (0.0, 0.0);
    long.push(w);
    short.push(y);
    for _ in 0..grid.n() {
        let z = (StandardNormal.sample(rng), StandardNormal.sample(rng));
        (w, y) = two_factor_step(w, y, decay, chol, z);
        long.push(w);
        short.push(y);
    }
    let values = (0..=grid.n())
        .map(|i| params.spot(initial_curve, grid.time(i), long[i], short[i]))
        .collect();
    Ok((SampledPath::new(*grid, values)?, FactorStates { long, short }))
}

/// Simulate `X = X^c + Z` with separate generators for the continuous and jump parts.
pub fn simulate_spot<R1, R2>(
    model: &ModelSpec,
    grid: &GridSpec,
    continuous_rng: &mut R1,
    jump_rng: &mut R2,
) -> Result<SimulatedPath>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    model.continuous.validate()?;
    let continuous = match &model.continuous {
        ContinuousSpec::ExpOu(spec) => simulate_exp_ou(spec, grid, continuous_rng)?,
        ContinuousSpec::TwoFactor { params, curve } => simulate_two_factor(params, curve, grid, continuous_rng)?.0,
        ContinuousSpec::Flat(c) => SampledPath::constant(*grid, *c)?,
    };
    let (spike, truth) = simulate_spikes(&model.spikes, grid, jump_rng)?;
    let observed = continuous
        .values()
        .iter()
        .zip(spike.values())
        .map(|(c, z)| c + z)
        .collect();
    Ok(SimulatedPath {
        observed: SampledPath::new(*grid, observed)?,
        continuous,
        spike,
        truth,
    })
}

/// [`simulate_spot`] with both streams derived from `(master, replication)`.
pub fn simulate_spot_seeded(model: &ModelSpec, grid: &GridSpec, master: u64, replication: u64) -> Result<SimulatedPath> {
    let mut cont = derive(master, replication, Purpose::Continuous);
    let mut jumps = derive(master, replication, Purpose::Jumps);
    simulate_spot(model, grid, &mut cont, &mut jumps)
}
