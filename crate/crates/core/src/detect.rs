//! Jump detection on a sampled path: multipower-variation volatility,
//! the threshold `C σ̂ Δ^{1/2-ϖ}` on raw increments, and the two flagging
//! rules (plain threshold, and threshold plus a sign reversal on the next step).

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{GridSpec, SampledPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectionMode {
    /// Flag every increment above the threshold.
    PlainThreshold,
    /// Also require the next increment to have the opposite sign.
    SignFiltered,
}

impl DetectionMode {
    pub fn label(self) -> &'static str {
        match self {
            DetectionMode::PlainThreshold => "plain",
            DetectionMode::SignFiltered => "signfiltered",
        }
    }
}

impl std::str::FromStr for DetectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "plainthreshold" | "i" => Ok(DetectionMode::PlainThreshold),
            "signfiltered" | "sign-filtered" | "filtered" | "ii" => Ok(DetectionMode::SignFiltered),
            other => Err(Error::invalid(format!("unknown detection mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionConfig {
    /// `C`
    pub constant: f64,
    /// `ϖ`
    pub exponent: f64,
    pub mpv_order: usize,
    pub mode: DetectionMode,
    /// Optional post-filter: drop a flag closer than this many steps to the previous kept one.
    pub min_gap: Option<usize>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            constant: 5.0,
            exponent: 0.01,
            mpv_order: 20,
            mode: DetectionMode::SignFiltered,
            min_gap: None,
        }
    }
}

impl DetectionConfig {
    pub fn with_mode(self, mode: DetectionMode) -> Self {
        Self { mode, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.constant.is_finite() && self.constant > 0.0) {
            return Err(Error::invalid(format!("threshold constant must be > 0, got {}", self.constant)));
        }
        if !(self.exponent > 0.0 && self.exponent < 0.5) {
            return Err(Error::invalid(format!("exponent must lie in (0, 1/2), got {}", self.exponent)));
        }
        if self.mpv_order < 2 {
            return Err(Error::invalid("multipower order must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    /// Flagged increment indices in `1..=n`, increasing.
    pub indices: Vec<usize>,
    /// `Δ_i X` at each flagged index.
    pub increments: Vec<f64>,
    pub count: usize,
    pub sigma_hat: f64,
    pub threshold_abs: f64,
    pub mode: DetectionMode,
}

/// `E|N(0,1)|^r = 2^{r/2} Γ((r+1)/2) / √π`.
pub fn gaussian_abs_moment(r: f64) -> f64 {
    ((r / 2.0) * std::f64::consts::LN_2 + ln_gamma((r + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln()).exp()
}

/// Order-`m` multipower estimate of the integrated volatility, returned as
/// `σ̂ = sqrt(μ_{2/m}^{-m} Σ_{i=m}^{n} Π_{j=0}^{m-1} |Δ_{i-j} X|^{2/m})`.
pub fn multipower_variation(path: &SampledPath, order: usize) -> Result<f64> {
    let n = path.grid().n();
    if order < 2 {
        return Err(Error::invalid("multipower order must be >= 2"));
    }
    if n <= order {
        return Err(Error::invalid(format!("path with n = {n} is too short for order {order}")));
    }
    let r = 2.0 / order as f64;
    let powers: Vec<f64> = path.increments().iter().map(|d| d.abs().powf(r)).collect();
    if powers.iter().all(|&p| p == 0.0) {
        return Err(Error::Degenerate("all increments are zero".into()));
    }
    let sum: f64 = powers.windows(order).map(|w| w.iter().product::<f64>()).sum();
    let norm = gaussian_abs_moment(r).powi(order as i32);
    let estimate = sum / norm;
    if !(estimate > 0.0 && estimate.is_finite()) {
        return Err(Error::Degenerate(format!(
            "multipower variation of order {order} vanishes on this path"
        )));
    }
    Ok(estimate.sqrt())
}

/// Absolute increment threshold `C σ̂ Δ^{1/2-ϖ}`, equivalent to comparing
/// `|Δ_i X| / √Δ` against `v_n = C σ̂ Δ^{-ϖ}`.
pub fn compute_threshold(config: &DetectionConfig, sigma_hat: f64, grid: &GridSpec) -> f64 {
    let delta = grid.mesh();
    config.constant * sigma_hat * delta.sqrt() * delta.powf(-config.exponent)
}

/// Flag increments against a fixed absolute threshold.
pub fn flag_increments(path: &SampledPath, mode: DetectionMode, threshold_abs: f64) -> Vec<usize> {
    let inc = path.increments();
    let n = inc.len();
    (1..=n)
        .filter(|&i| {
            let d = inc[i - 1];
            d.abs() > threshold_abs
                && match mode {
                    DetectionMode::PlainThreshold => true,
                    DetectionMode::SignFiltered => i < n && d * inc[i] < 0.0,
                }
        })
        .collect()
}

fn apply_min_gap(indices: Vec<usize>, gap: Option<usize>) -> Vec<usize> {
    let Some(gap) = gap else { return indices };
    let mut kept: Vec<usize> = Vec::with_capacity(indices.len());
    for i in indices {
        if kept.last().is_none_or(|&last| i - last > gap) {
            kept.push(i);
        }
    }
    kept
}

/// Detection with a caller-supplied volatility estimate.
pub fn detect_jumps_with_sigma(path: &SampledPath, config: &DetectionConfig, sigma_hat: f64) -> Result<DetectionReport> {
    if path.grid().n() < 3 {
        return Err(Error::invalid("detection needs n >= 3"));
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(Error::invalid(format!("sigma_hat must be > 0, got {sigma_hat}")));
    }
    let threshold_abs = compute_threshold(config, sigma_hat, path.grid());
    let indices = apply_min_gap(flag_increments(path, config.mode, threshold_abs), config.min_gap);
    let increments = indices.iter().map(|&i| path.increment(i)).collect();
    Ok(DetectionReport {
        count: indices.len(),
        indices,
        increments,
        sigma_hat,
        threshold_abs,
        mode: config.mode,
    })
}

/// Detection with `σ̂` from multipower variation on the full path.
pub fn detect_jumps(path: &SampledPath, config: &DetectionConfig) -> Result<DetectionReport> {
    config.validate()?;
    if path.grid().n() < 3 {
        return Err(Error::invalid("detection needs n >= 3"));
    }
    let sigma_hat = multipower_variation(path, config.mpv_order)?;
    detect_jumps_with_sigma(path, config, sigma_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Purpose};
    use crate::simulate::{spike_values_from_truth, JumpRecord};
    use rand_distr::{Distribution, StandardNormal};

    fn brownian(sigma: f64, n: usize, seed: u64) -> SampledPath {
        let grid = GridSpec::unit(n).unwrap();
        let mut rng = derive(seed, 0, Purpose::Continuous);
        let sd = sigma * grid.mesh().sqrt();
        let mut x = 0.0;
        let mut values = vec![x];
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            x += sd * z;
            values.push(x);
        }
        SampledPath::new(grid, values).unwrap()
    }

    #[test]
    fn gaussian_moments() {
        assert!((gaussian_abs_moment(2.0) - 1.0).abs() < 1e-14);
        assert!((gaussian_abs_moment(1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-14);
        assert!((gaussian_abs_moment(0.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mpv_is_consistent_on_brownian_paths() {
        let mut inside = 0;
        for seed in 0..100 {
            let path = brownian(2.0, 10_000, seed);
            let mpv = multipower_variation(&path, 20).unwrap();
            let rv = (path.increments().iter().map(|d| d * d).sum::<f64>()).sqrt();
            assert!((mpv - rv).abs() < 0.15, "mpv {mpv} rv {rv}");
            if (1.9..=2.1).contains(&mpv) {
                inside += 1;
            }
        }
        assert!(inside >= 99, "{inside}/100 inside [1.9, 2.1]");
    }

    #[test]
    fn mpv_order_20_resists_a_spike() {
        let base = brownian(2.0, 10_000, 42);
        let clean = multipower_variation(&base, 20).unwrap();
        let grid = *base.grid();
        let z = spike_values_from_truth(&[JumpRecord { time: 0.4321, size: 25.0 }], 20_000.0, &grid);
        let spiked = SampledPath::new(grid, base.values().iter().zip(&z).map(|(a, b)| a + b).collect()).unwrap();
        let dirty = multipower_variation(&spiked, 20).unwrap();
        assert!(((dirty - clean) / clean).abs() < 0.05, "{clean} -> {dirty}");
    }

    #[test]
    fn mpv_rejects_degenerate_paths() {
        let grid = GridSpec::unit(100).unwrap();
        let flat = SampledPath::constant(grid, 3.0).unwrap();
        assert!(matches!(multipower_variation(&flat, 20), Err(Error::Degenerate(_))));
        let short = SampledPath::new(GridSpec::unit(10).unwrap(), (0..11).map(f64::from).collect()).unwrap();
        assert!(multipower_variation(&short, 20).is_err());
    }

    #[test]
    fn threshold_values() {
        let grid = GridSpec::unit(10_000).unwrap();
        let config = DetectionConfig::default();
        let th = compute_threshold(&config, 2.0, &grid);
        let by_hand = 10.0 * 10f64.powf(-4.0 * 0.49);
        assert!((th - by_hand).abs() < 1e-14);
        assert!((th - 0.109_65).abs() < 1e-5);
        let boundary = DetectionConfig { exponent: 0.0, ..config };
        assert_eq!(compute_threshold(&boundary, 2.0, &grid), 5.0 * 2.0 * grid.mesh().sqrt());
        let doubled = DetectionConfig { constant: 10.0, ..config };
        assert!((compute_threshold(&doubled, 2.0, &grid) - 2.0 * th).abs() < 1e-15);
    }

    #[test]
    fn brownian_path_has_no_detections() {
        let config = DetectionConfig::default().with_mode(DetectionMode::PlainThreshold);
        let clean = (0..200)
            .filter(|&s| detect_jumps(&brownian(2.0, 10_000, 1000 + s), &config).unwrap().count == 0)
            .count();
        assert!(clean >= 198, "{clean}/200 clean");
    }

    fn spike_path(beta: f64) -> SampledPath {
        // Jump of +1 exactly at grid time t_500, then exponential decay.
        let grid = GridSpec::unit(10_000).unwrap();
        let values = (0..=grid.n())
            .map(|i| if i < 500 { 0.0 } else { (-beta * (i - 500) as f64 * grid.mesh()).exp() })
            .collect();
        SampledPath::new(grid, values).unwrap()
    }

    #[test]
    fn slow_decay_flags_only_the_jump() {
        let path = spike_path(200.0);
        assert!((path.increment(501) + (1.0 - (-0.02f64).exp())).abs() < 1e-15);
        let config = DetectionConfig::default();
        for mode in [DetectionMode::PlainThreshold, DetectionMode::SignFiltered] {
            let r = detect_jumps_with_sigma(&path, &config.with_mode(mode), 2.0).unwrap();
            assert_eq!(r.indices, vec![500]);
            assert_eq!(r.increments, vec![1.0]);
        }
    }

    #[test]
    fn fast_decay_false_positive_is_filtered() {
        let path = spike_path(20_000.0);
        assert!((path.increment(501) + (1.0 - (-2.0f64).exp())).abs() < 1e-15);
        let config = DetectionConfig::default();
        let plain = detect_jumps_with_sigma(&path, &config.with_mode(DetectionMode::PlainThreshold), 2.0).unwrap();
        // e^{-2} - e^{-4} ≈ 0.117 still clears the 0.1096 threshold two steps later.
        assert_eq!(plain.indices, vec![500, 501, 502]);
        let filtered = detect_jumps_with_sigma(&path, &config.with_mode(DetectionMode::SignFiltered), 2.0).unwrap();
        assert_eq!(filtered.indices, vec![500]);
        let gapped = DetectionConfig {
            min_gap: Some(3),
            ..config.with_mode(DetectionMode::PlainThreshold)
        };
        assert_eq!(detect_jumps_with_sigma(&path, &gapped, 2.0).unwrap().indices, vec![500]);
    }

    #[test]
    fn last_increment_is_never_sign_filtered() {
        let grid = GridSpec::unit(10).unwrap();
        let mut values = vec![0.0; 11];
        values[10] = 5.0;
        let path = SampledPath::new(grid, values).unwrap();
        assert_eq!(flag_increments(&path, DetectionMode::PlainThreshold, 1.0), vec![10]);
        assert!(flag_increments(&path, DetectionMode::SignFiltered, 1.0).is_empty());
    }

    #[test]
    fn config_validation_and_modes() {
        assert!(DetectionConfig::default().validate().is_ok());
        assert!(DetectionConfig { exponent: 0.5, ..Default::default() }.validate().is_err());
        assert!(DetectionConfig { constant: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!("plain".parse::<DetectionMode>().unwrap(), DetectionMode::PlainThreshold);
        assert_eq!("SignFiltered".parse::<DetectionMode>().unwrap(), DetectionMode::SignFiltered);
        assert!("wavelet".parse::<DetectionMode>().is_err());
    }
}
