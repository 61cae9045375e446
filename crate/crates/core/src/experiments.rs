//! Seeded replication studies: the estimation study over a grid of `(λ, β)`
//! pairs and both detection modes, and the strip-option pricing study with and
//! without spikes.
//!
//! Replications run in parallel on streams derived from the master seed and
//! are aggregated in replication order, so results do not depend on the
//! number of worker threads.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::detect::{detect_jumps, DetectionConfig, DetectionMode};
use crate::error::{Error, Result};
use crate::estimate::{estimate_beta, estimate_lambda, oracle_estimate_beta, BetaEstimate};
use crate::model::{ContinuousSpec, ExpOu, GridSpec, JumpLaw, ModelSpec, SpikeParams};
use crate::pricing::{every_grid_time, price_strip_mc, ForwardCurve, PriceWithCI, StripModel, StripOptionSpec, TwoFactorParams};
use crate::rng::{derive, stream_id, Purpose};
use crate::simulate::simulate_spot;
use crate::stats::{mean, quantile};

pub const DESK_REPLICATIONS: usize = 500;
pub const FULL_REPLICATIONS: usize = 10_000;

/// Jump law of the simulation study: `0.4(-E) + 0.6E` with exponential means 15 and 10.
pub fn study_jump_law() -> JumpLaw {
    JumpLaw::mixture(&[0.4, 0.6], &[1.0 / 15.0, 1.0 / 10.0], &[-1.0, 1.0]).expect("valid mixture")
}

/// Continuous part of the simulation study: `log X^c` is OU with reversion 100 and vol 2, started at `X^c = 1`.
pub fn study_continuous() -> ContinuousSpec {
    ContinuousSpec::ExpOu(ExpOu {
        reversion: 100.0,
        vol: 2.0,
        initial: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub pairs: Vec<(f64, f64)>,
    pub replications: usize,
    pub grid: GridSpec,
    pub detection: DetectionConfig,
    pub modes: Vec<DetectionMode>,
    pub law: JumpLaw,
    pub continuous: ContinuousSpec,
    pub master_seed: u64,
}

impl StudyConfig {
    /// The ten `(λ, β)` pairs of the reference study on a `Δ = 10^{-4}` grid.
    pub fn reference(replications: usize, master_seed: u64) -> Self {
        let mut pairs = Vec::new();
        for lambda in [10.0, 75.0] {
            for beta in [2.0, 20.0, 200.0, 2000.0, 20_000.0] {
                pairs.push((lambda, beta));
            }
        }
        Self {
            pairs,
            replications,
            grid: GridSpec::unit(10_000).expect("valid grid"),
            detection: DetectionConfig::default(),
            modes: vec![DetectionMode::PlainThreshold, DetectionMode::SignFiltered],
            law: study_jump_law(),
            continuous: study_continuous(),
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::invalid("a study needs at least two replications"));
        }
        if self.pairs.is_empty() || self.modes.is_empty() {
            return Err(Error::invalid("a study needs at least one parameter pair and one mode"));
        }
        for &(lambda, beta) in &self.pairs {
            SpikeParams::new(lambda, beta, self.law.clone())?;
        }
        self.detection.validate()?;
        self.continuous.validate()
    }

    fn model(&self, lambda: f64, beta: f64) -> Result<ModelSpec> {
        Ok(ModelSpec {
            continuous: self.continuous.clone(),
            spikes: SpikeParams::new(lambda, beta, self.law.clone())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeOutcome {
    pub mode: DetectionMode,
    pub count: usize,
    pub lambda_hat: f64,
    pub beta: BetaEstimate,
    /// Detected indices bracket the true jump times one-to-one.
    pub exact_detection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub index: usize,
    pub true_jumps: usize,
    /// One entry per configured mode; `None` when detection failed on this path.
    pub outcomes: Vec<Option<ModeOutcome>>,
    pub oracle: BetaEstimate,
}

/// Simulate and estimate every replication of one `(λ, β)` pair.
pub fn run_replications(config: &StudyConfig, pair_index: usize) -> Result<Vec<Replication>> {
    let (lambda, beta) = config.pairs[pair_index];
    let model = config.model(lambda, beta)?;
    let grid = config.grid;
    (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let stream = stream_id(pair_index as u64, r as u64);
            let mut cont = derive(config.master_seed, stream, Purpose::Continuous);
            let mut jumps = derive(config.master_seed, stream, Purpose::Jumps);
            let sim = simulate_spot(&model, &grid, &mut cont, &mut jumps)?;
            let true_intervals: Vec<usize> = sim.truth.iter().map(|j| grid.interval_of(j.time)).collect();
            let outcomes = config
                .modes
                .iter()
                .map(|&mode| {
                    let report = detect_jumps(&sim.observed, &config.detection.with_mode(mode)).ok()?;
                    Some(ModeOutcome {
                        mode,
                        count: report.count,
                        lambda_hat: estimate_lambda(&report, &grid).value,
                        beta: estimate_beta(&sim.observed, &report),
                        exact_detection: report.indices == true_intervals,
                    })
                })
                .collect();
            Ok(Replication {
                index: r,
                true_jumps: sim.truth.len(),
                outcomes,
                oracle: oracle_estimate_beta(&sim.observed, &sim.truth, &grid),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub lambda: f64,
    pub beta: f64,
    pub mode: DetectionMode,
    pub lambda_mean: f64,
    pub lambda_q05: f64,
    pub lambda_q95: f64,
    pub beta_mean: f64,
    pub beta_q05: f64,
    pub beta_q95: f64,
    pub replications: usize,
    pub failed: usize,
    pub undefined: usize,
    pub floored: usize,
    pub boundary_drops: usize,
    pub exact_detection: usize,
}

/// Aggregate the outcomes of one mode. Undefined `β̂` values enter as 0.
pub fn summarize(lambda: f64, beta: f64, mode_slot: usize, mode: DetectionMode, reps: &[Replication]) -> StudyRow {
    let outcomes: Vec<&ModeOutcome> = reps.iter().filter_map(|r| r.outcomes[mode_slot].as_ref()).collect();
    let lambdas: Vec<f64> = outcomes.iter().map(|o| o.lambda_hat).collect();
    let betas: Vec<f64> = outcomes.iter().map(|o| o.beta.beta_hat).collect();
    let stat = |xs: &[f64], f: fn(&[f64]) -> f64| if xs.is_empty() { f64::NAN } else { f(xs) };
    StudyRow {
        lambda,
        beta,
        mode,
        lambda_mean: stat(&lambdas, mean),
        lambda_q05: stat(&lambdas, |x| quantile(x, 0.05)),
        lambda_q95: stat(&lambdas, |x| quantile(x, 0.95)),
        beta_mean: stat(&betas, mean),
        beta_q05: stat(&betas, |x| quantile(x, 0.05)),
        beta_q95: stat(&betas, |x| quantile(x, 0.95)),
        replications: outcomes.len(),
        failed: reps.len() - outcomes.len(),
        undefined: outcomes.iter().filter(|o| o.beta.undefined).count(),
        floored: outcomes.iter().filter(|o| o.beta.floored).count(),
        boundary_drops: outcomes.iter().map(|o| o.beta.boundary_drops).sum(),
        exact_detection: outcomes.iter().filter(|o| o.exact_detection).count(),
    }
}

pub fn run_estimation_study(config: &StudyConfig) -> Result<Vec<StudyRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for (p, &(lambda, beta)) in config.pairs.iter().enumerate() {
        let reps = run_replications(config, p)?;
        for (slot, &mode) in config.modes.iter().enumerate() {
            rows.push(summarize(lambda, beta, slot, mode, &reps));
        }
    }
    Ok(rows)
}

/// Write `rows.csv` and `summary.json` into `dir`.
pub fn write_rows<T: Serialize>(rows: &[T], summary: &impl Serialize, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("rows.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(&csv_path, e))?;
    let json_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(summary)?;
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeSetting {
    pub label: String,
    pub spikes: Option<SpikeParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingStudyConfig {
    pub two_factor: TwoFactorParams,
    pub curve: ForwardCurve,
    pub grid: GridSpec,
    pub strikes: Vec<f64>,
    pub settings: Vec<SpikeSetting>,
    pub num_sims: usize,
    pub seed: u64,
    pub antithetic: bool,
}

/// Upward-tailed jump law at the scale of observed day-ahead spikes (€/MWh).
pub fn pricing_spike_law() -> JumpLaw {
    JumpLaw::mixture(&[0.3, 0.7], &[1.0 / 30.0, 1.0 / 300.0], &[-1.0, 1.0]).expect("valid mixture")
}

impl PricingStudyConfig {
    /// One year of hourly exercises, flat 40 €/MWh curve, French two-factor
    /// calibration, with and without spikes at 35 jumps/year and β = 21042/year.
    pub fn reference(num_sims: usize, seed: u64) -> Self {
        let spikes = SpikeParams::new(35.0, 21_042.0, pricing_spike_law()).expect("valid spikes");
        Self {
            two_factor: TwoFactorParams::FRENCH_2016,
            curve: ForwardCurve::Flat(40.0),
            grid: GridSpec::new(8760, 1.0).expect("valid grid"),
            strikes: vec![100.0, 200.0, 300.0],
            settings: vec![
                SpikeSetting {
                    label: "without spikes".into(),
                    spikes: None,
                },
                SpikeSetting {
                    label: "with spikes".into(),
                    spikes: Some(spikes),
                },
            ],
            num_sims,
            seed,
            antithetic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricingRow {
    pub setting: String,
    pub strike: f64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub stderr: f64,
    pub sims: usize,
    /// Price minus the spike-free price at the same strike, when such a setting exists.
    pub premium: Option<f64>,
}

impl PricingRow {
    pub fn price(&self) -> PriceWithCI {
        PriceWithCI {
            estimate: self.estimate,
            ci95: (self.ci_lo, self.ci_hi),
            num_sims: self.sims,
            stderr: self.stderr,
        }
    }
}

/// Price the strip for every `(setting, strike)`. All settings share the
/// seed, so the Gaussian factors are common random numbers across settings.
pub fn run_pricing_study(config: &PricingStudyConfig) -> Result<Vec<PricingRow>> {
    let exercise_times = every_grid_time(&config.grid);
    let mut rows = Vec::new();
    for setting in &config.settings {
        let model = StripModel {
            two_factor: config.two_factor,
            curve: config.curve.clone(),
            spikes: setting.spikes.clone(),
        };
        for &strike in &config.strikes {
            let spec = StripOptionSpec {
                exercise_times: exercise_times.clone(),
                strike,
                num_sims: config.num_sims,
                seed: config.seed,
                antithetic: config.antithetic,
            };
            let price = price_strip_mc(&model, &spec, &config.grid)?;
            rows.push(PricingRow {
                setting: setting.label.clone(),
                strike,
                estimate: price.estimate,
                ci_lo: price.ci95.0,
                ci_hi: price.ci95.1,
                stderr: price.stderr,
                sims: price.num_sims,
                premium: None,
            });
        }
    }
    let baseline: Vec<(f64, f64)> = config
        .settings
        .iter()
        .zip(rows.chunks(config.strikes.len()))
        .find(|(s, _)| s.spikes.is_none())
        .map(|(_, chunk)| chunk.iter().map(|r| (r.strike, r.estimate)).collect())
        .unwrap_or_default();
    if !baseline.is_empty() {
        for row in &mut rows {
            row.premium = baseline.iter().find(|(k, _)| *k == row.strike).map(|(_, p)| row.estimate - p);
        }
    }
    Ok(rows)
}
