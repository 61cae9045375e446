//! Flat `key = value` model files.
//!
//! ```text
//! # spikes
//! lambda = 10
//! beta = 200
//! jump.kind = mixture
//! jump.weights = 0.4, 0.6
//! jump.means = 15, 10
//! jump.signs = -1, 1
//!
//! cont.kind = exp-ou
//! cont.reversion = 100
//! cont.vol = 2
//!
//! grid.n = 10000
//! grid.horizon = 1
//! ```
//!
//! Mixture components take either `jump.rates` or `jump.means`. Unknown keys
//! and repeated keys are rejected with the offending line number.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ContinuousSpec, ExpOu, GridSpec, JumpLaw, ModelSpec, SpikeParams};
use crate::pricing::{ForwardCurve, TwoFactorParams};

const KNOWN_KEYS: &[&str] = &[
    "lambda",
    "beta",
    "seed",
    "jump.kind",
    "jump.weights",
    "jump.rates",
    "jump.means",
    "jump.signs",
    "jump.size",
    "jump.samples",
    "cont.kind",
    "cont.reversion",
    "cont.vol",
    "cont.initial",
    "cont.alpha",
    "cont.sigma_s",
    "cont.sigma_l",
    "cont.rho",
    "cont.level",
    "cont.curve.starts",
    "cont.curve.levels",
    "grid.n",
    "grid.horizon",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl FromStr for ConfigFile {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                });
            };
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if let Some((first, _)) = entries.get(&key) {
                return Err(Error::Config {
                    line,
                    message: format!("`{key}` already set on line {first}"),
                });
            }
            entries.insert(key, (line, value.trim().to_string()));
        }
        Ok(Self { entries })
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    fn parse_one<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        let Some((line, value)) = self.entries.get(key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|_| Error::Config {
            line: *line,
            message: format!("`{key}` must be {what}, found `{value}`"),
        })
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse_one(key, "a number")
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse_one(key, "a non-negative integer")
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse_one(key, "a non-negative integer")
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((line, value)) = self.entries.get(key) else {
            return Ok(None);
        };
        value
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Config {
                    line: *line,
                    message: format!("`{key}` must be a comma-separated list of numbers, found `{}`", s.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?.ok_or_else(|| missing(key))
    }

    fn require_list(&self, key: &str) -> Result<Vec<f64>> {
        self.get_list(key)?.ok_or_else(|| missing(key))
    }

    /// Attach the line of `key` to validation errors raised while building from it.
    fn at<T>(&self, key: &str, result: Result<T>) -> Result<T> {
        result.map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::Config {
                line: self.line_of(key),
                message: other.to_string(),
            },
        })
    }

    pub fn jump_law(&self) -> Result<JumpLaw> {
        let kind = self.get_str("jump.kind").ok_or_else(|| missing("jump.kind"))?;
        let law = match kind {
            "mixture" => {
                let weights = self.require_list("jump.weights")?;
                let signs = self.require_list("jump.signs")?;
                let rates = match (self.get_list("jump.rates")?, self.get_list("jump.means")?) {
                    (Some(r), None) => r,
                    (None, Some(m)) => m.iter().map(|x| 1.0 / x).collect(),
                    (Some(_), Some(_)) => {
                        return Err(Error::Config {
                            line: self.line_of("jump.means"),
                            message: "give either `jump.rates` or `jump.means`, not both".into(),
                        })
                    }
                    (None, None) => return Err(missing("jump.rates")),
                };
                JumpLaw::mixture(&weights, &rates, &signs)
            }
            "point" => JumpLaw::point_mass(self.require_f64("jump.size")?),
            "empirical" => JumpLaw::empirical(self.require_list("jump.samples")?),
            other => {
                return Err(Error::Config {
                    line: self.line_of("jump.kind"),
                    message: format!("unknown jump kind `{other}` (mixture, point, empirical)"),
                })
            }
        };
        self.at("jump.kind", law)
    }

    pub fn spike_params(&self) -> Result<SpikeParams> {
        let lambda = self.require_f64("lambda")?;
        let beta = self.require_f64("beta")?;
        let law = self.jump_law()?;
        self.at("lambda", SpikeParams::new(lambda, beta, law))
    }

    /// Defaults to the exp-OU part of the simulation study when `cont.kind` is absent.
    pub fn continuous(&self) -> Result<ContinuousSpec> {
        let f = |key: &str, default: f64| -> Result<f64> { Ok(self.get_f64(key)?.unwrap_or(default)) };
        let spec = match self.get_str("cont.kind").unwrap_or("exp-ou") {
            "exp-ou" => ContinuousSpec::ExpOu(ExpOu {
                reversion: f("cont.reversion", 100.0)?,
                vol: f("cont.vol", 2.0)?,
                initial: f("cont.initial", 1.0)?,
            }),
            "two-factor" => {
                let d = TwoFactorParams::FRENCH_2016;
                let params = TwoFactorParams {
                    alpha: f("cont.alpha", d.alpha)?,
                    sigma_s: f("cont.sigma_s", d.sigma_s)?,
                    sigma_l: f("cont.sigma_l", d.sigma_l)?,
                    rho: f("cont.rho", d.rho)?,
                };
                let curve = match (self.get_list("cont.curve.starts")?, self.get_list("cont.curve.levels")?) {
                    (Some(starts), Some(levels)) => self.at("cont.curve.levels", ForwardCurve::piecewise(starts, levels))?,
                    (None, None) => self.at("cont.level", ForwardCurve::flat(f("cont.level", 40.0)?))?,
                    (Some(_), None) => return Err(missing("cont.curve.levels")),
                    (None, Some(_)) => return Err(missing("cont.curve.starts")),
                };
                ContinuousSpec::TwoFactor { params, curve }
            }
            "flat" => ContinuousSpec::Flat(f("cont.level", 0.0)?),
            other => {
                return Err(Error::Config {
                    line: self.line_of("cont.kind"),
                    message: format!("unknown continuous kind `{other}` (exp-ou, two-factor, flat)"),
                })
            }
        };
        self.at("cont.kind", spec.validate())?;
        Ok(spec)
    }

    /// Defaults to `n = 10000` on the unit horizon.
    pub fn grid(&self) -> Result<GridSpec> {
        let n = self.get_usize("grid.n")?.unwrap_or(10_000);
        let horizon = self.get_f64("grid.horizon")?.unwrap_or(1.0);
        self.at("grid.n", GridSpec::new(n, horizon))
    }

    pub fn model(&self) -> Result<ModelSpec> {
        Ok(ModelSpec {
            continuous: self.continuous()?,
            spikes: self.spike_params()?,
        })
    }
}

fn missing(key: &str) -> Error {
    Error::Config {
        line: 0,
        message: format!("missing required key `{key}`"),
    }
}
