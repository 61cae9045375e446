//! Estimators of the spike intensity `λ` and reversion speed `β`, jump-size
//! moments, and plug-in evaluation of the leading error terms of `β̂`.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::detect::DetectionReport;
use crate::error::{Error, Result};
use crate::model::{sgn, GridSpec, Moment, SampledPath};
use crate::simulate::JumpRecord;

/// `-ln(0.025)`: exact 95% upper Poisson bound when nothing is observed.
const ZERO_COUNT_UPPER: f64 = 3.688_879_454_113_936;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub value: f64,
    pub ci95: (f64, f64),
}

/// `λ̂ = count / horizon` with a normal 95% interval.
pub fn estimate_lambda(report: &DetectionReport, grid: &GridSpec) -> LambdaEstimate {
    let horizon = grid.horizon();
    let value = report.count as f64 / horizon;
    let ci95 = if report.count == 0 {
        (0.0, ZERO_COUNT_UPPER / horizon)
    } else {
        let half = 1.96 * (value / horizon).sqrt();
        ((value - half).max(0.0), value + half)
    };
    LambdaEstimate { value, ci95 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaEstimate {
    pub beta_hat: f64,
    /// `ŝ`, with `β̂ = -ln(max{1 - ŝ, Δ}) / Δ`.
    pub slope_hat: f64,
    /// No usable jump: `β̂` is set to 0.
    pub undefined: bool,
    /// The `Δ` floor inside the logarithm was active.
    pub floored: bool,
    /// Detections at `i = n` whose successor increment does not exist.
    pub boundary_drops: usize,
}

impl BetaEstimate {
    fn undefined() -> Self {
        Self {
            beta_hat: 0.0,
            slope_hat: 0.0,
            undefined: true,
            floored: false,
            boundary_drops: 0,
        }
    }

    fn from_ratio(ratio: f64, delta: f64, boundary_drops: usize) -> Self {
        let slope_hat = -ratio;
        let floored = 1.0 - slope_hat < delta;
        let beta_hat = -(1.0 - slope_hat).max(delta).ln() / delta;
        Self {
            beta_hat,
            slope_hat,
            undefined: false,
            floored,
            boundary_drops,
        }
    }
}

/// Feasible estimator built from the detected increments:
///
/// `exp(-Δβ̂) = max{1 + Σ_q sgn(Δ_{I(q)}X)(Δ_{I(q)+1}X + 2Δ Σ_{j<q} Δ_{I(j)}X) / Σ_q |Δ_{I(q)}X|, Δ}`.
///
/// A detection at the last increment has no successor; its successor term counts as 0.
pub fn estimate_beta(path: &SampledPath, report: &DetectionReport) -> BetaEstimate {
    if report.count == 0 {
        return BetaEstimate::undefined();
    }
    let n = path.grid().n();
    let delta = path.grid().mesh();
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    let mut cumulative = 0.0;
    let mut boundary_drops = 0;
    for (&i, &jump) in report.indices.iter().zip(&report.increments) {
        let next = if i < n {
            path.increment(i + 1)
        } else {
            boundary_drops += 1;
            0.0
        };
        numerator += sgn(jump) * (next + 2.0 * delta * cumulative);
        denominator += jump.abs();
        cumulative += jump;
    }
    BetaEstimate::from_ratio(numerator / denominator, delta, boundary_drops)
}

/// Oracle estimator fed the true jump times and sizes. A jump contributes when
/// the next jump falls after its successor interval, i.e. `i(n,q) < i(n,q+1)`
/// and interval `i(n,q)+1` is jumpless.
pub fn oracle_estimate_beta(path: &SampledPath, truth: &[JumpRecord], grid: &GridSpec) -> BetaEstimate {
    if truth.is_empty() {
        return BetaEstimate::undefined();
    }
    let n = grid.n();
    let delta = grid.mesh();
    let intervals: Vec<usize> = truth.iter().map(|r| grid.interval_of(r.time)).collect();
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    let mut cumulative = 0.0;
    let mut boundary_drops = 0;
    let mut used = 0;
    for (q, rec) in truth.iter().enumerate() {
        let i = intervals[q];
        let successor_clear = intervals.get(q + 1).is_none_or(|&next| next > i + 1);
        if i >= n {
            boundary_drops += 1;
        } else if successor_clear {
            let s = sgn(rec.size);
            numerator += s * (path.increment(i + 1) + 2.0 * delta * cumulative);
            denominator += s * path.increment(i);
            used += 1;
        }
        cumulative += rec.size;
    }
    if used == 0 {
        return BetaEstimate {
            boundary_drops,
            ..BetaEstimate::undefined()
        };
    }
    BetaEstimate::from_ratio(numerator / denominator, delta, boundary_drops)
}

/// `mβΔ / (1 - e^{-mβΔ})`: averages out the decay within the detection interval.
fn decay_correction(m: u32, beta_hat: f64, delta: f64) -> f64 {
    let x = m as f64 * beta_hat * delta;
    x / -(-x).exp_m1()
}

/// Bias-corrected moment estimate from the detected increments, with `β̂` in
/// place of `β`. `None` when nothing was detected or `β̂ <= 0`.
///
/// The sum is normalized by the detection count, which equals `λ̂` on the unit horizon.
pub fn estimate_moment(report: &DetectionReport, grid: &GridSpec, beta_hat: f64, kind: Moment) -> Option<f64> {
    if report.count == 0 || !(beta_hat > 0.0) {
        return None;
    }
    let count = report.count as f64;
    let inc = &report.increments;
    let delta = grid.mesh();
    let value = match kind {
        Moment::Signed(m) => decay_correction(m, beta_hat, delta) * inc.iter().map(|x| x.powi(m as i32)).sum::<f64>() / count,
        Moment::Absolute(m) => {
            decay_correction(m, beta_hat, delta) * inc.iter().map(|x| x.abs().powi(m as i32)).sum::<f64>() / count
        }
        Moment::SignMass => inc.iter().map(|&x| sgn(x)).sum::<f64>() / count,
    };
    value.is_finite().then_some(value)
}

/// Signed `m`-th moment of the jump law: `mβ̂Δ / ((1 - e^{-mβ̂Δ}) λ̂) Σ_q (Δ_{I(q)}X)^m`.
pub fn estimate_jump_moments(path: &SampledPath, report: &DetectionReport, beta_hat: f64, m: u32) -> Option<f64> {
    estimate_moment(report, path.grid(), beta_hat, Moment::Signed(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticDiagnostics {
    /// Deterministic bias `M_n` of `(β̂ - β)/β`.
    pub bias_term: f64,
    /// Scale factors `V_n^{(1..4)}` of the random error components.
    pub error_components: [f64; 4],
    /// `λΔ + 1/(β√(λΔ)) + min{1/√β, λ/β}`
    pub relative_error_bound: f64,
}

fn required(moments: &HashMap<Moment, f64>, kind: Moment) -> Result<f64> {
    moments
        .get(&kind)
        .copied()
        .ok_or_else(|| Error::MissingMoment(kind.to_string()))
}

/// Evaluate the bias and error scales of `β̂` with plug-in values.
///
/// `moments` must hold `x⋆ν`, `|x|⋆ν`, `|x|²⋆ν` and `sgn(x)⋆ν`.
pub fn asymptotic_diagnostics(
    lambda_hat: f64,
    beta_hat: f64,
    grid: &GridSpec,
    moments: &HashMap<Moment, f64>,
    sigma_sq_integral: f64,
) -> Result<AsymptoticDiagnostics> {
    let m1 = required(moments, Moment::Signed(1))?;
    let a1 = required(moments, Moment::Absolute(1))?;
    let a2 = required(moments, Moment::Absolute(2))?;
    let s = required(moments, Moment::SignMass)?;
    for (name, v) in [("lambda", lambda_hat), ("beta", beta_hat), ("|x| moment", a1), ("integrated variance", sigma_sq_integral)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} plug-in must be > 0, got {v}")));
        }
    }
    let (lambda, beta, delta) = (lambda_hat, beta_hat, grid.mesh());
    let bd = beta * delta;
    let growth = bd.exp();
    let sigma = sigma_sq_integral.sqrt();

    let bias_term = growth * lambda / beta * (m1 * s / a1) * (bd.exp_m1() / bd - 1.0);
    let inner = (s * s * a2 + m1 * m1 - 2.0 * s * a2).max(0.0);
    let v1 = growth * lambda.sqrt() / (3f64.sqrt() * beta * a1) * inner.sqrt();
    let v2 = growth
        * (a2 / (a1 * a1) / (2.0 * beta) * (-(-2.0 * bd).exp_m1() / (2.0 * bd)))
            .sqrt()
            .min(lambda / beta);
    let v3 = growth * (bd / -(-bd).exp_m1()) * sigma / (a1 * lambda.sqrt() * beta * delta.sqrt());
    let v4 = growth * sigma * delta.sqrt() / (a1 * lambda.sqrt());
    let relative_error_bound =
        lambda * delta + 1.0 / (beta * (lambda * delta).sqrt()) + (1.0 / beta.sqrt()).min(lambda / beta);
    Ok(AsymptoticDiagnostics {
        bias_term,
        error_components: [v1, v2, v3, v4],
        relative_error_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeEstimates {
    pub lambda_hat: f64,
    pub lambda_ci: (f64, f64),
    pub beta_hat: f64,
    pub slope_hat: f64,
    pub undefined: bool,
    pub floored: bool,
    pub boundary_drops: usize,
    /// Signed moment estimates keyed by order.
    pub moment_estimates: BTreeMap<u32, f64>,
    pub diagnostics: Option<AsymptoticDiagnostics>,
}

/// Run every estimator on one detection report. Diagnostics use `σ̂²` from the
/// report as the integrated variance and are omitted when a plug-in is unusable.
pub fn estimate_spikes(path: &SampledPath, report: &DetectionReport) -> SpikeEstimates {
    let grid = path.grid();
    let lambda = estimate_lambda(report, grid);
    let beta = estimate_beta(path, report);
    let moment_estimates = [1u32, 2]
        .into_iter()
        .filter_map(|m| estimate_jump_moments(path, report, beta.beta_hat, m).map(|v| (m, v)))
        .collect();
    let plug_ins: HashMap<Moment, f64> = [Moment::Signed(1), Moment::Absolute(1), Moment::Absolute(2), Moment::SignMass]
        .into_iter()
        .filter_map(|k| estimate_moment(report, grid, beta.beta_hat, k).map(|v| (k, v)))
        .collect();
    let diagnostics =
        asymptotic_diagnostics(lambda.value, beta.beta_hat, grid, &plug_ins, report.sigma_hat * report.sigma_hat).ok();
    SpikeEstimates {
        lambda_hat: lambda.value,
        lambda_ci: lambda.ci95,
        beta_hat: beta.beta_hat,
        slope_hat: beta.slope_hat,
        undefined: beta.undefined,
        floored: beta.floored,
        boundary_drops: beta.boundary_drops,
        moment_estimates,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect_jumps_with_sigma, DetectionConfig, DetectionMode};

    fn report(indices: Vec<usize>, path: &SampledPath) -> DetectionReport {
        DetectionReport {
            count: indices.len(),
            increments: indices.iter().map(|&i| path.increment(i)).collect(),
            indices,
            sigma_hat: 2.0,
            threshold_abs: 0.1,
            mode: DetectionMode::SignFiltered,
        }
    }

    fn single_spike(beta: f64) -> SampledPath {
        let grid = GridSpec::unit(10_000).unwrap();
        let values = (0..=grid.n())
            .map(|i| if i < 700 { 0.0 } else { (-beta * (i - 700) as f64 * grid.mesh()).exp() })
            .collect();
        SampledPath::new(grid, values).unwrap()
    }

    #[test]
    fn lambda_intervals() {
        let grid = GridSpec::unit(100).unwrap();
        let path = SampledPath::constant(grid, 0.0).unwrap();
        let empty = estimate_lambda(&report(vec![], &path), &grid);
        assert_eq!(empty.value, 0.0);
        assert_eq!(empty.ci95.0, 0.0);
        assert!((empty.ci95.1 - 3.69).abs() < 0.005);
        let nine = estimate_lambda(&report((1..=9).collect(), &path), &grid);
        assert_eq!(nine.value, 9.0);
        assert!((nine.ci95.0 - 3.12).abs() < 1e-12 && (nine.ci95.1 - 14.88).abs() < 1e-12);
        let one = estimate_lambda(&report(vec![4], &path), &grid);
        assert_eq!(one.ci95.0, 0.0);
    }

    #[test]
    fn noiseless_spike_recovers_beta() {
        let path = single_spike(200.0);
        let r = detect_jumps_with_sigma(&path, &DetectionConfig::default(), 2.0).unwrap();
        assert_eq!(r.indices, vec![700]);
        let est = estimate_beta(&path, &r);
        assert!(!est.undefined && !est.floored);
        assert!((est.beta_hat - 200.0).abs() < 1e-9, "{}", est.beta_hat);
        assert!(((-est.beta_hat * 1e-4).exp() + est.slope_hat - 1.0).abs() < 1e-15);

        let g = *path.grid();
        let truth = [JumpRecord { time: g.time(700).next_down(), size: 1.0 }];
        let oracle = oracle_estimate_beta(&path, &truth, &g);
        assert!((oracle.beta_hat - 200.0).abs() < 1e-9);
    }

    #[test]
    fn empty_inputs_are_flagged() {
        let path = single_spike(200.0);
        let est = estimate_beta(&path, &report(vec![], &path));
        assert!(est.undefined);
        assert_eq!(est.beta_hat, 0.0);
        assert!(oracle_estimate_beta(&path, &[], path.grid()).undefined);
        assert_eq!(estimate_jump_moments(&path, &report(vec![], &path), 200.0, 1), None);
        assert_eq!(estimate_jump_moments(&path, &report(vec![700], &path), 0.0, 1), None);
    }

    #[test]
    fn boundary_detection_drops_successor() {
        let grid = GridSpec::unit(10).unwrap();
        let mut values = vec![0.0; 11];
        values[10] = 1.0;
        let path = SampledPath::new(grid, values).unwrap();
        let est = estimate_beta(&path, &report(vec![10], &path));
        assert_eq!(est.boundary_drops, 1);
        assert_eq!(est.beta_hat, 0.0);
        assert_eq!(est.slope_hat, -0.0);
    }

    #[test]
    fn floor_binds_on_overshooting_reversal() {
        let grid = GridSpec::unit(100).unwrap();
        let mut values = vec![0.0; 101];
        values[50] = 1.0;
        values[51] = -0.5;
        values[52] = -0.5;
        let path = SampledPath::new(grid, values).unwrap();
        let est = estimate_beta(&path, &report(vec![50], &path));
        assert!(est.floored);
        assert!((est.beta_hat - (-(0.01f64).ln() / 0.01)).abs() < 1e-9);
    }

    #[test]
    fn positive_ratio_gives_negative_beta() {
        let grid = GridSpec::unit(100).unwrap();
        let mut values = vec![0.0; 101];
        values[50] = 1.0;
        values[51] = 1.5;
        let path = SampledPath::new(grid, values).unwrap();
        let est = estimate_beta(&path, &report(vec![50], &path));
        assert!(est.beta_hat < 0.0 && !est.floored);
    }

    #[test]
    fn moment_correction_single_spike() {
        let path = single_spike(200.0);
        let r = report(vec![700], &path);
        let m1 = estimate_jump_moments(&path, &r, 200.0, 1).unwrap();
        assert!((m1 - 0.02 / (1.0 - (-0.02f64).exp())).abs() < 1e-14);
        assert!((m1 - 1.0100).abs() < 1e-4);
    }

    #[test]
    fn beta_is_scale_free() {
        let grid = GridSpec::unit(1000).unwrap();
        let mut values = vec![0.0; 1001];
        for (i, v) in values.iter_mut().enumerate().skip(100) {
            *v = 2.0 * (-30.0 * (i - 100) as f64 * grid.mesh()).exp();
        }
        for (i, v) in values.iter_mut().enumerate().skip(600) {
            *v -= 1.5 * (-30.0 * (i - 600) as f64 * grid.mesh()).exp();
        }
        let path = SampledPath::new(grid, values).unwrap();
        let base = estimate_beta(&path, &report(vec![100, 600], &path)).beta_hat;
        for c in [0.001, 3.0, 1e4] {
            let scaled = path.map(|v| c * v).unwrap();
            let b = estimate_beta(&scaled, &report(vec![100, 600], &scaled)).beta_hat;
            assert!((b - base).abs() < 1e-9 * base.abs(), "{c}: {b} vs {base}");
        }
    }

    fn table_moments(scale: f64) -> HashMap<Moment, f64> {
        // 0.4(-E) + 0.6E with exponential means 15/scale and 10/scale.
        let (a, b) = (15.0 / scale, 10.0 / scale);
        HashMap::from([
            (Moment::Signed(1), -0.4 * a + 0.6 * b),
            (Moment::Absolute(1), 0.4 * a + 0.6 * b),
            (Moment::Absolute(2), 0.4 * 2.0 * a * a + 0.6 * 2.0 * b * b),
            (Moment::SignMass, 0.2),
        ])
    }

    #[test]
    fn diagnostics_by_hand() {
        let grid = GridSpec::unit(10_000).unwrap();
        let d = asymptotic_diagnostics(10.0, 200.0, &grid, &table_moments(1.0), 4.0).unwrap();
        let (g, bd) = (0.02f64.exp(), 0.02f64);
        let v3 = g * (bd / (1.0 - (-bd).exp())) * 2.0 / (12.0 * 10f64.sqrt() * 200.0 * 0.01);
        assert!((d.error_components[2] - v3).abs() < 1e-14);
        assert!((v3 - 0.0272).abs() < 1e-4);
        let v4 = g * 2.0 * 0.01 / (12.0 * 10f64.sqrt());
        assert!((d.error_components[3] - v4).abs() < 1e-15);
        let m = g * 10.0 / 200.0 * (0.0 * 0.2 / 12.0) * ((bd.exp() - 1.0) / bd - 1.0);
        assert_eq!(d.bias_term, m);
        let bound = 1e-3 + 1.0 / (200.0 * 1e-3f64.sqrt()) + (1.0 / 200f64.sqrt()).min(0.05);
        assert!((d.relative_error_bound - bound).abs() < 1e-14);
    }

    #[test]
    fn symmetric_law_has_no_bias() {
        let grid = GridSpec::unit(10_000).unwrap();
        let moments = HashMap::from([
            (Moment::Signed(1), 0.0),
            (Moment::Absolute(1), 1.0),
            (Moment::Absolute(2), 2.0),
            (Moment::SignMass, 0.0),
        ]);
        let d = asymptotic_diagnostics(10.0, 200.0, &grid, &moments, 4.0).unwrap();
        assert_eq!(d.bias_term, 0.0);
        assert_eq!(d.error_components[0], 0.0);
        assert!(d.error_components.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn bias_vanishes_with_mesh() {
        let moments = table_moments(1.0);
        let mut last = f64::INFINITY;
        for n in [100usize, 10_000, 1_000_000, 100_000_000] {
            let grid = GridSpec::unit(n).unwrap();
            let mut m = moments.clone();
            m.insert(Moment::Signed(1), 4.0);
            let d = asymptotic_diagnostics(10.0, 200.0, &grid, &m, 4.0).unwrap();
            assert!(d.bias_term.abs() < last);
            last = d.bias_term.abs();
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn missing_moment_is_an_error() {
        let grid = GridSpec::unit(100).unwrap();
        let mut m = table_moments(1.0);
        m.remove(&Moment::SignMass);
        assert!(matches!(
            asymptotic_diagnostics(10.0, 200.0, &grid, &m, 4.0),
            Err(Error::MissingMoment(_))
        ));
    }
}
