//! `spikelab` command-line interface.
//!
//! Exit status: 0 on success or `--help`, 2 on usage errors, 1 when a
//! computation or file operation fails (one line on stderr).

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spikelab::config::ConfigFile;
use spikelab::detect::{detect_jumps, DetectionConfig, DetectionMode};
use spikelab::error::{Error, Result};
use spikelab::estimate::estimate_spikes;
use spikelab::experiments::{
    run_estimation_study, run_pricing_study, write_rows, PricingStudyConfig, SpikeSetting, StudyConfig, DESK_REPLICATIONS,
};
use spikelab::ingest::{load_spot_csv, DedupPolicy, GapPolicy, IngestRules};
use spikelab::model::{ContinuousSpec, GridSpec, SampledPath};
use spikelab::pricing::{
    every_grid_time, forward_spike_arith, forward_spike_delivery, forward_spike_log, price_strip_mc, StripModel,
    StripOptionSpec,
};
use spikelab::quadrature::DEFAULT_TOLERANCE;
use spikelab::simulate::simulate_spot_seeded;

#[derive(Parser)]
#[command(name = "spikelab", version, about = "Simulate, detect and price electricity price spikes")]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path and write t, X, Xc, Z plus a `.truth.csv` sidecar.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replication: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold jump detection on a price series.
    Detect {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        detection: DetectionArgs,
        /// Write flagged increments to this CSV.
        #[arg(long)]
        flags_out: Option<PathBuf>,
    },
    /// Estimate spike intensity, reversion speed and jump moments.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        detection: DetectionArgs,
        /// Length of the series in years, for per-year rates. Defaults to the
        /// calendar span of timestamped input.
        #[arg(long)]
        horizon_years: Option<f64>,
    },
    /// Spike correction of a forward price.
    PriceForward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "t")]
        t: f64,
        #[arg(long = "T")]
        maturity: f64,
        /// Current spike level Z_t.
        #[arg(long, default_value_t = 0.0)]
        z_now: f64,
        /// Delivery period length.
        #[arg(long)]
        theta: Option<f64>,
        /// Spot is exp(X^c + Z) instead of X^c + Z.
        #[arg(long)]
        log_model: bool,
    },
    /// Monte Carlo price of a strip of calls.
    PriceStrip {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strike: f64,
        /// `hourly` (every grid time) or `csv:<file>` with one exercise time per row.
        #[arg(long, default_value = "hourly")]
        exercises: String,
        #[arg(long, default_value_t = 10_000)]
        sims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        antithetic: bool,
    },
    /// Replication study of the λ and β estimators.
    StudyEstimation {
        /// Optional model file supplying the jump law, continuous part and grid.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DESK_REPLICATIONS)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated `lambda:beta` pairs.
        #[arg(long)]
        pairs: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Strip prices with and without spikes over a set of strikes.
    StudyPricing {
        /// Optional model file: two-factor part, curve and spikes.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![100.0, 200.0, 300.0])]
        strikes: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        sims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        antithetic: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "t")]
    time_column: String,
    #[arg(long, default_value = "X")]
    price_column: String,
    /// Sampling step in timestamp units; inferred when absent.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, value_enum, default_value = "reject")]
    gaps: Gaps,
    #[arg(long, value_enum, default_value = "reject")]
    duplicates: Duplicates,
}

#[derive(Clone, Copy, ValueEnum)]
enum Gaps {
    Reject,
    FillOne,
}

#[derive(Clone, Copy, ValueEnum)]
enum Duplicates {
    Reject,
    KeepFirst,
}

#[derive(Args)]
struct DetectionArgs {
    #[arg(long, default_value = "signfiltered", value_parser = parse_mode)]
    mode: DetectionMode,
    #[arg(long = "C", default_value_t = 5.0)]
    constant: f64,
    #[arg(long, default_value_t = 0.01)]
    varpi: f64,
    #[arg(long, default_value_t = 20)]
    mpv_order: usize,
    /// Drop detections closer than this many steps to the previous one.
    #[arg(long)]
    min_gap: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<DetectionMode, String> {
    s.parse::<DetectionMode>().map_err(|e| e.to_string())
}

impl DetectionArgs {
    fn config(&self) -> DetectionConfig {
        DetectionConfig {
            constant: self.constant,
            exponent: self.varpi,
            mpv_order: self.mpv_order,
            mode: self.mode,
            min_gap: self.min_gap,
        }
    }
}

impl InputArgs {
    fn load(&self) -> Result<(SampledPath, spikelab::ingest::IngestReport)> {
        let rules = IngestRules {
            timestamp_column: self.time_column.clone(),
            price_column: self.price_column.clone(),
            expected_step: self.step,
            gap_policy: match self.gaps {
                Gaps::Reject => GapPolicy::Reject,
                Gaps::FillOne => GapPolicy::ForwardFillMax1,
            },
            dedup_policy: match self.duplicates {
                Duplicates::Reject => DedupPolicy::Reject,
                Duplicates::KeepFirst => DedupPolicy::KeepFirst,
            },
        };
        load_spot_csv(&self.input, &rules)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(message) = configure_threads() {
        eprintln!("error: {message}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("SPIKELAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("SPIKELAB_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Simulate {
            config,
            seed,
            replication,
            out,
        } => simulate(&config, seed, replication, &out, json),
        Command::Detect {
            input,
            detection,
            flags_out,
        } => detect(&input, &detection, flags_out.as_deref(), json),
        Command::Estimate {
            input,
            detection,
            horizon_years,
        } => estimate(&input, &detection, horizon_years, json),
        Command::PriceForward {
            config,
            t,
            maturity,
            z_now,
            theta,
            log_model,
        } => price_forward(&config, t, maturity, z_now, theta, log_model, json),
        Command::PriceStrip {
            config,
            strike,
            exercises,
            sims,
            seed,
            antithetic,
        } => price_strip(&config, strike, &exercises, sims, seed, antithetic, json),
        Command::StudyEstimation {
            config,
            reps,
            seed,
            pairs,
            out,
        } => study_estimation(config.as_deref(), reps, seed, pairs.as_deref(), &out, json),
        Command::StudyPricing {
            config,
            strikes,
            sims,
            seed,
            antithetic,
            out,
        } => study_pricing(config.as_deref(), strikes, sims, seed, antithetic, &out, json),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn line<T: Display>(label: &str, value: T) {
    println!("{label:<22}{value}");
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.csv"))
}

fn simulate(config: &Path, seed: u64, replication: u64, out: &Path, json: bool) -> Result<()> {
    let cfg = ConfigFile::load(config)?;
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let sim = simulate_spot_seeded(&model, &grid, seed, replication)?;

    let mut text = String::from("t,X,Xc,Z\n");
    for i in 0..=grid.n() {
        text.push_str(&format!(
            "{:?},{},{},{}\n",
            grid.time(i),
            sim.observed.values()[i],
            sim.continuous.values()[i],
            sim.spike.values()[i]
        ));
    }
    write_file(out, &text)?;
    let sidecar = truth_path(out);
    let mut truth = String::from("t_jump,size\n");
    for j in &sim.truth {
        truth.push_str(&format!("{},{}\n", j.time, j.size));
    }
    write_file(&sidecar, &truth)?;

    if json {
        println!(
            "{}",
            json!({"out": out, "truth": sidecar, "n": grid.n(), "jumps": sim.truth.len(), "seed": seed})
        );
    } else {
        line("path", out.display());
        line("truth", sidecar.display());
        line("steps", grid.n());
        line("jumps", sim.truth.len());
    }
    Ok(())
}

fn detect(input: &InputArgs, args: &DetectionArgs, flags_out: Option<&Path>, json: bool) -> Result<()> {
    let (path, _) = input.load()?;
    let report = detect_jumps(&path, &args.config())?;
    if let Some(out) = flags_out {
        let mut text = String::from("index,t,increment\n");
        for (&i, inc) in report.indices.iter().zip(&report.increments) {
            text.push_str(&format!("{},{},{}\n", i, path.grid().time(i), inc));
        }
        write_file(out, &text)?;
    }
    if json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        line("mode", report.mode.label());
        line("count", report.count);
        line("sigma_hat", report.sigma_hat);
        line("threshold", report.threshold_abs);
        let shown: Vec<String> = report.indices.iter().map(|i| i.to_string()).collect();
        line("indices", shown.join(" "));
    }
    Ok(())
}

fn estimate(input: &InputArgs, args: &DetectionArgs, horizon_years: Option<f64>, json: bool) -> Result<()> {
    let (path, ingest) = input.load()?;
    let years = horizon_years.or(ingest.span_years);
    if let Some(y) = years {
        if !(y.is_finite() && y > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon in years must be > 0, got {y}")));
        }
    }
    let report = detect_jumps(&path, &args.config())?;
    let est = estimate_spikes(&path, &report);
    let per_year = years.map(|y| (est.lambda_hat / y, est.beta_hat / y));
    if json {
        let mut value = serde_json::to_value(&est)?;
        value["count"] = json!(report.count);
        value["mode"] = json!(report.mode);
        value["sigma_hat"] = json!(report.sigma_hat);
        if let Some((l, b)) = per_year {
            value["horizon_years"] = json!(years);
            value["lambda_per_year"] = json!(l);
            value["beta_per_year"] = json!(b);
        }
        println!("{value}");
        return Ok(());
    }
    line("mode", report.mode.label());
    line("count", report.count);
    line("lambda_hat", est.lambda_hat);
    line("lambda_ci95", format!("[{}, {}]", est.lambda_ci.0, est.lambda_ci.1));
    line("beta_hat", est.beta_hat);
    line("slope_hat", est.slope_hat);
    if let Some((l, b)) = per_year {
        line("lambda_per_year", l);
        line("beta_per_year", b);
    }
    for (m, v) in &est.moment_estimates {
        line(&format!("moment_{m}"), v);
    }
    if let Some(d) = &est.diagnostics {
        line("bias_term", d.bias_term);
        let v: Vec<String> = d.error_components.iter().map(|x| format!("{x:.6}")).collect();
        line("error_components", v.join(" "));
        line("relative_error_bound", d.relative_error_bound);
    }
    let mut flags = Vec::new();
    if est.undefined {
        flags.push("undefined".to_string());
    }
    if est.floored {
        flags.push("floored".to_string());
    }
    if est.boundary_drops > 0 {
        flags.push(format!("boundary_drops={}", est.boundary_drops));
    }
    line("flags", if flags.is_empty() { "none".to_string() } else { flags.join(" ") });
    Ok(())
}

fn price_forward(
    config: &Path,
    t: f64,
    maturity: f64,
    z_now: f64,
    theta: Option<f64>,
    log_model: bool,
    json: bool,
) -> Result<()> {
    let params = ConfigFile::load(config)?.spike_params()?;
    let (model, value) = match (theta, log_model) {
        (Some(_), true) => {
            return Err(Error::InvalidParameter(
                "--theta and --log-model cannot be combined".into(),
            ))
        }
        (Some(theta), false) => ("delivery", forward_spike_delivery(z_now, &params, t, maturity, theta)?),
        (None, true) => ("log", forward_spike_log(z_now, &params, t, maturity, DEFAULT_TOLERANCE)?),
        (None, false) => ("arithmetic", forward_spike_arith(z_now, &params, t, maturity)?),
    };
    if json {
        println!("{}", json!({"model": model, "t": t, "T": maturity, "z_now": z_now, "theta": theta, "forward": value}));
    } else {
        line("model", model);
        line("forward", value);
    }
    Ok(())
}

fn strip_model(cfg: &ConfigFile) -> Result<StripModel> {
    let ContinuousSpec::TwoFactor { params, curve } = cfg.continuous()? else {
        return Err(Error::InvalidParameter("strip pricing needs `cont.kind = two-factor`".into()));
    };
    let spikes = if cfg.contains("lambda") { Some(cfg.spike_params()?) } else { None };
    Ok(StripModel {
        two_factor: params,
        curve,
        spikes,
    })
}

fn read_exercises(spec: &str, grid: &GridSpec) -> Result<Vec<f64>> {
    if spec == "hourly" {
        return Ok(every_grid_time(grid));
    }
    let Some(file) = spec.strip_prefix("csv:") else {
        return Err(Error::InvalidParameter(format!(
            "--exercises must be `hourly` or `csv:<file>`, got `{spec}`"
        )));
    };
    let mut reader = csv::Reader::from_path(file)?;
    let mut times = Vec::new();
    for record in reader.records() {
        let record = record?;
        let raw = record.get(0).unwrap_or("").trim();
        let t: f64 = raw
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{file}: exercise time `{raw}` is not a number")))?;
        times.push(t);
    }
    Ok(times)
}

#[allow(clippy::too_many_arguments)]
fn price_strip(
    config: &Path,
    strike: f64,
    exercises: &str,
    sims: usize,
    seed: u64,
    antithetic: bool,
    json: bool,
) -> Result<()> {
    let cfg = ConfigFile::load(config)?;
    let model = strip_model(&cfg)?;
    let grid = cfg.grid()?;
    let spec = StripOptionSpec {
        exercise_times: read_exercises(exercises, &grid)?,
        strike,
        num_sims: sims,
        seed,
        antithetic,
    };
    let price = price_strip_mc(&model, &spec, &grid)?;
    if json {
        println!(
            "{}",
            json!({"estimate": price.estimate, "ci95": [price.ci95.0, price.ci95.1], "stderr": price.stderr, "sims": price.num_sims})
        );
    } else {
        line("estimate", price.estimate);
        line("ci95", format!("[{}, {}]", price.ci95.0, price.ci95.1));
        line("stderr", price.stderr);
        line("sims", price.num_sims);
    }
    Ok(())
}

fn parse_pairs(raw: &str) -> Result<Vec<(f64, f64)>> {
    raw.split(',')
        .map(|item| {
            let bad = || Error::InvalidParameter(format!("pair `{}` is not `lambda:beta`", item.trim()));
            let (l, b) = item.trim().split_once(':').ok_or_else(bad)?;
            Ok((l.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

fn study_estimation(
    config: Option<&Path>,
    reps: usize,
    seed: u64,
    pairs: Option<&str>,
    out: &Path,
    json: bool,
) -> Result<()> {
    let mut study = StudyConfig::reference(reps, seed);
    if let Some(path) = config {
        let cfg = ConfigFile::load(path)?;
        if cfg.contains("jump.kind") {
            study.law = cfg.jump_law()?;
        }
        study.continuous = cfg.continuous()?;
        study.grid = cfg.grid()?;
        if cfg.contains("lambda") || cfg.contains("beta") {
            let p = cfg.spike_params()?;
            study.pairs = vec![(p.intensity, p.reversion)];
        }
    }
    if let Some(raw) = pairs {
        study.pairs = parse_pairs(raw)?;
    }
    let rows = run_estimation_study(&study)?;
    let summary = json!({"replications": reps, "seed": seed, "n": study.grid.n(), "rows": rows});
    write_rows(&rows, &summary, out)?;
    if json {
        println!("{summary}");
    } else {
        println!("{:>8} {:>8} {:>13} {:>10} {:>12} {:>6}", "lambda", "beta", "mode", "mean_l", "mean_b", "reps");
        for r in &rows {
            println!(
                "{:>8} {:>8} {:>13} {:>10.3} {:>12.2} {:>6}",
                r.lambda,
                r.beta,
                r.mode.label(),
                r.lambda_mean,
                r.beta_mean,
                r.replications
            );
        }
    }
    Ok(())
}

fn study_pricing(
    config: Option<&Path>,
    strikes: Vec<f64>,
    sims: usize,
    seed: u64,
    antithetic: bool,
    out: &Path,
    json: bool,
) -> Result<()> {
    let mut study = PricingStudyConfig::reference(sims, seed);
    study.strikes = strikes;
    study.antithetic = antithetic;
    if let Some(path) = config {
        let cfg = ConfigFile::load(path)?;
        let model = strip_model(&cfg)?;
        study.two_factor = model.two_factor;
        study.curve = model.curve;
        study.grid = cfg.grid()?;
        if let Some(spikes) = model.spikes {
            study.settings[1] = SpikeSetting {
                label: "with spikes".into(),
                spikes: Some(spikes),
            };
        }
    }
    let rows = run_pricing_study(&study)?;
    let summary = json!({"sims": sims, "seed": seed, "n": study.grid.n(), "rows": rows});
    write_rows(&rows, &summary, out)?;
    if json {
        println!("{summary}");
    } else {
        println!("{:>16} {:>8} {:>12} {:>26} {:>12}", "setting", "strike", "price", "ci95", "premium");
        for r in &rows {
            let premium = r.premium.map_or("-".to_string(), |p| format!("{p:.4}"));
            println!(
                "{:>16} {:>8} {:>12.4} {:>26} {:>12}",
                r.setting,
                r.strike,
                r.estimate,
                format!("[{:.4}, {:.4}]", r.ci_lo, r.ci_hi),
                premium
            );
        }
    }
    Ok(())
}
