//! `lrdcp` — change-point tests on the marginal distribution of
//! long-range dependent time series.
//!
//! Exit codes: 0 success, 1 numeric/domain/data error (message names the
//! violated precondition), 2 usage error. `verify` exits 1 when any
//! invariant fails. All file outputs are written atomically (temp file +
//! rename); JSON results go to stdout unless `--out` says otherwise.

mod util;
mod verify;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use lrdcp::{
    are_mean_shift_check, are_mean_variance, child_seed, ensure_entries, fstar,
    gaussian_cubic_ratio, hermite_coeff, limit_quantile, local_whittle, local_whittle_with,
    run_power_study, run_test, simulate, split_whittle, Calibration, CriticalValueTable, Error,
    HurstMode, HurstSelector, LatentFamily, Result, Scenario, SeedSpec, StatisticKind,
    StudyConfig, TestOptions, DEFAULT_LIMIT_GRID,
};

use util::{
    atomic_write, build_model, emit_json, parse_f64_list, parse_stat, parse_stat_list,
    parse_transform, parse_usize_list, read_csv_series, resolve_seed, series_to_csv,
    table_location,
};

#[derive(Parser)]
#[command(
    name = "lrdcp",
    version,
    about = "Change-point tests on the marginal distribution of long-range dependent time series"
)]
struct Cli {
    /// Cap the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a long-memory Gaussian series to CSV (one value per line).
    Simulate(SimulateArgs),
    /// Evaluate a Hermite expansion coefficient J_q(x) of a transform.
    Hermite(HermiteArgs),
    /// Run a change-point test on a CSV series.
    Test(TestArgs),
    /// Estimate the Hurst index and plug-in scale from a CSV series.
    Estimate(EstimateArgs),
    /// Precompute Monte Carlo critical-value tables.
    Calibrate(CalibrateArgs),
    /// Run a power study from a key=value config file.
    Power(PowerArgs),
    /// Asymptotic relative efficiency of the change-point tests.
    Are(AreArgs),
    /// Re-run structural invariants and report pass/fail with measured values.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Latent Gaussian model: fgn, farima00, farima10, or ar1.
    #[arg(long)]
    model: String,
    /// Hurst index (fgn).
    #[arg(long)]
    hurst: Option<f64>,
    /// Fractional difference parameter (farima00, farima10).
    #[arg(long)]
    d: Option<f64>,
    /// Autoregressive coefficient (farima10, ar1).
    #[arg(long)]
    ar: Option<f64>,
    /// Series length.
    #[arg(long)]
    n: usize,
    /// Master seed; 0 or absent draws one from entropy (echoed in the output).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicate index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Optional marginal transform applied pointwise (e.g. square,
    /// mean_shift:1.0, affine:2.0,1.0; see `hermite --help`).
    #[arg(long)]
    transform: Option<String>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HermiteArgs {
    /// Transform spec: identity, square, mean_shift:MU, scale:SIGMA,
    /// affine:SIGMA,MU, affine_square:A,B,C, split_square:APOS,ANEG,
    /// folded_to_gaussian, split_square_to_gaussian:A,MU,
    /// normal_quantile:MEAN,SD, gaussian_mixture:DELTA,MU,SD.
    #[arg(long)]
    transform: String,
    /// Coefficient order q >= 0.
    #[arg(long)]
    q: u32,
    /// Evaluation point.
    #[arg(long)]
    x: f64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Input CSV series (one value per line).
    #[arg(long)]
    input: PathBuf,
    /// Statistic: ks, cvm, cusum, or wilcoxon.
    #[arg(long, default_value = "cvm")]
    stat: String,
    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Known Hurst index: calibrate at this H instead of estimating.
    #[arg(long, conflicts_with = "estimate_hurst")]
    hurst: Option<f64>,
    /// Estimate H from the data: whittle (whole series) or split
    /// (recombined around the estimated change point). Default: whittle.
    #[arg(long, value_name = "METHOD")]
    estimate_hurst: Option<String>,
    /// Calibration route: mc (Monte Carlo table) or asymptotic.
    #[arg(long, default_value = "mc")]
    calib: String,
    /// Persistent critical-value table (JSON). Defaults to
    /// $LRDCP_TABLE_DIR/tables.json when that variable is set.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Monte Carlo size for table entries built on demand.
    #[arg(long, default_value_t = 1000)]
    table_reps: usize,
    /// Lags averaged by the scale estimator (default: n^(1/3)).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Grid resolution for asymptotic calibration.
    #[arg(long, default_value_t = DEFAULT_LIMIT_GRID)]
    limit_grid: usize,
    /// Replicates for asymptotic calibration.
    #[arg(long, default_value_t = 2000)]
    limit_reps: usize,
    /// Master seed for any table building; 0 or absent draws from entropy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV series (one value per line).
    #[arg(long)]
    input: PathBuf,
    /// Estimator: whittle (whole series) or split.
    #[arg(long, default_value = "whittle")]
    method: String,
    /// Statistic whose change-point estimate splits the series (split only).
    #[arg(long, default_value = "cvm")]
    stat: String,
    /// Lags averaged by the scale estimator (default: n^(1/3)).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Periodogram bandwidth (whittle only; default n^(2/3)).
    #[arg(long)]
    bandwidth: Option<usize>,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Statistics to keep: all, or a comma list of ks, cvm, cusum, wilcoxon.
    #[arg(long, default_value = "all")]
    stat: String,
    /// Comma list of sample sizes.
    #[arg(long)]
    n: String,
    /// Comma list of Hurst indices.
    #[arg(long)]
    hurst: String,
    /// Comma list of levels.
    #[arg(long, default_value = "0.05")]
    alpha: String,
    /// Monte Carlo replicates per table cell.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Master seed; 0 or absent draws one from entropy (echoed).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output table path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PowerArgs {
    /// Study config: key = value lines (# comments). Keys: scenario, stat,
    /// hurst_mode, family, ar, n, H, tau, mu, sigma, delta, a, alpha,
    /// reps, J.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; 0 or absent draws one from entropy (echoed).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap reps and J at 300 for a quick pass.
    #[arg(long)]
    fast: bool,
}

#[derive(Args)]
struct AreArgs {
    /// mean_variance (drift functional and efficiency ratio) or mean_shift
    /// (limit power vs finite-n agreement across the four tests).
    #[arg(long, default_value = "mean_variance")]
    mode: String,
    /// Mean component of the benchmark local change.
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    /// Variance component of the benchmark local change.
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    /// Limit critical value; computed from --alpha when absent.
    #[arg(long)]
    q: Option<f64>,
    /// Change-point location.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Lower edge of the argmax search window.
    #[arg(long, default_value_t = 0.1)]
    kappa1: f64,
    /// Upper edge of the argmax search window.
    #[arg(long, default_value_t = 0.9)]
    kappa2: f64,
    /// Hurst index of the latent series.
    #[arg(long, default_value_t = 0.7)]
    hurst: f64,
    /// Drift size for mean_shift mode.
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Monte Carlo replicates.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Grid resolution for the limit quantile.
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Master seed; 0 or absent draws one from entropy (echoed).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// all, reduction, hermite, dn, monotone, bridge, or fstar.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Sample sizes for the reduction suite (comma list).
    #[arg(long)]
    n: Option<String>,
    /// Monte Carlo replicates per check.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Master seed; 0 or absent draws one from entropy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Hermite(a) => cmd_hermite(a),
        Command::Test(a) => cmd_test(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Power(a) => cmd_power(a),
        Command::Are(a) => cmd_are(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<u8> {
    let model = build_model(&a.model, a.hurst, a.d, a.ar)?;
    let seed = resolve_seed(a.seed);
    let series = simulate(&model, a.n, SeedSpec::new(seed, a.replicate))?;
    let values: Vec<f64> = match &a.transform {
        None => series.values,
        Some(spec) => {
            let g = parse_transform(spec)?;
            series.values.iter().map(|&x| g.eval(x)).collect()
        }
    };
    atomic_write(&a.out, series_to_csv(&values).as_bytes())?;
    emit_json(
        None,
        &json!({
            "command": "simulate",
            "model": model,
            "n": a.n,
            "seed": seed,
            "replicate": a.replicate,
            "transform": a.transform,
            "out": a.out,
            "rows": values.len(),
        }),
    )?;
    Ok(0)
}

fn cmd_hermite(a: HermiteArgs) -> Result<u8> {
    let g = parse_transform(&a.transform)?;
    let coeff = hermite_coeff(&g, a.q, a.x)?;
    emit_json(
        a.out.as_deref(),
        &json!({
            "command": "hermite",
            "transform": a.transform,
            "q": a.q,
            "x": a.x,
            "value": coeff.value,
            "method": coeff.method,
        }),
    )?;
    Ok(0)
}

fn cmd_test(a: TestArgs) -> Result<u8> {
    let y = read_csv_series(&a.input)?;
    let kind = parse_stat(&a.stat)?;
    let hurst = match (a.hurst, a.estimate_hurst.as_deref()) {
        (Some(h), _) => HurstSelector::Known(h),
        (None, Some("whittle")) | (None, None) => HurstSelector::EstimateWhole,
        (None, Some("split")) => HurstSelector::EstimateSplit,
        (None, Some(other)) => {
            return Err(Error::domain(format!(
                "unknown Hurst estimator '{other}' (expected whittle or split)"
            )))
        }
    };
    let calibration = match a.calib.as_str() {
        "mc" => Calibration::MonteCarlo,
        "asymptotic" => Calibration::Asymptotic {
            grid: a.limit_grid,
            reps: a.limit_reps,
        },
        other => {
            return Err(Error::domain(format!(
                "unknown calibration '{other}' (expected mc or asymptotic)"
            )))
        }
    };
    let opts = TestOptions {
        alpha: a.alpha,
        hurst,
        calibration,
        table_reps: a.table_reps,
        scale_lags: a.k,
    };
    let seed = resolve_seed(a.seed);
    let location = table_location(a.table.as_deref());
    let mut table = match &location {
        Some(p) if p.exists() => CriticalValueTable::load(p)?,
        _ => CriticalValueTable::new(seed),
    };
    let report = run_test(&y, kind, &opts, &mut table)?;
    if let Some(p) = &location {
        table.save(p)?;
    }
    let mut value = serde_json::to_value(&report).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = value.as_object_mut().expect("report serializes to an object");
    obj.insert("command".into(), json!("test"));
    obj.insert("input".into(), json!(a.input));
    obj.insert("seed".into(), json!(seed));
    emit_json(a.out.as_deref(), &value)?;
    Ok(0)
}

fn cmd_estimate(a: EstimateArgs) -> Result<u8> {
    let y = read_csv_series(&a.input)?;
    let est = match a.method.as_str() {
        "whittle" => match a.bandwidth {
            Some(b) => local_whittle_with(&y, b)?,
            None => local_whittle(&y)?,
        },
        "split" => {
            if a.bandwidth.is_some() {
                return Err(Error::domain(
                    "--bandwidth applies to --method whittle only".to_string(),
                ));
            }
            split_whittle(&y, parse_stat(&a.stat)?)?
        }
        other => {
            return Err(Error::domain(format!(
                "unknown method '{other}' (expected whittle or split)"
            )))
        }
    };
    let scale = lrdcp::estimate_scale(&y, est.value, a.k)?;
    emit_json(
        a.out.as_deref(),
        &json!({
            "command": "estimate",
            "input": a.input,
            "method": a.method,
            "n": y.len(),
            "hurst": est,
            "scale": scale,
        }),
    )?;
    Ok(0)
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<u8> {
    let kinds = parse_stat_list(&a.stat)?;
    let ns = parse_usize_list(&a.n, "n")?;
    let hursts = parse_f64_list(&a.hurst, "hurst")?;
    let alphas = parse_f64_list(&a.alpha, "alpha")?;
    let seed = resolve_seed(a.seed);
    let mut table = CriticalValueTable::new(seed);
    for &n in &ns {
        for &h in &hursts {
            ensure_entries(&mut table, n, h, &alphas, a.reps)?;
        }
    }
    if kinds.len() < StatisticKind::ALL.len() {
        table.retain_stats(&kinds);
    }
    table.save(&a.out)?;
    emit_json(
        None,
        &json!({
            "command": "calibrate",
            "stats": kinds,
            "n": ns,
            "hurst": hursts,
            "alpha": alphas,
            "reps": a.reps,
            "seed": seed,
            "out": a.out,
            "entries": table.len(),
        }),
    )?;
    Ok(0)
}

/// Parse the flat `key = value` study config (see `power --help` for keys).
fn parse_study_config(path: &Path, master_seed: u64, fast: bool) -> Result<StudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut kv: HashMap<String, String> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!(
                "{}: line {}: expected key = value, got '{line}'",
                path.display(),
                idx + 1
            ))
        })?;
        kv.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
    }
    const KNOWN: &[&str] = &[
        "scenario",
        "stat",
        "hurst_mode",
        "family",
        "ar",
        "n",
        "h",
        "hurst",
        "tau",
        "mu",
        "sigma",
        "delta",
        "a",
        "alpha",
        "reps",
        "j",
    ];
    for key in kv.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return Err(Error::domain(format!(
                "unknown config key '{key}' (known keys: {})",
                KNOWN.join(", ")
            )));
        }
    }
    let float = |key: &str, default: f64| -> Result<f64> {
        match kv.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Parse(format!("config key '{key}': not a number: '{s}'"))),
        }
    };
    let integer = |key: &str, default: usize| -> Result<usize> {
        match kv.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|_| Error::Parse(format!("config key '{key}': not an integer: '{s}'"))),
        }
    };
    let text_of = |key: &str, default: &str| -> String {
        kv.get(key).cloned().unwrap_or_else(|| default.to_string())
    };

    let mu = float("mu", 1.0)?;
    let sigma = float("sigma", 5.0f64.sqrt() / 2.0)?;
    let delta = float("delta", 0.1)?;
    let a = float("a", 1.2)?;
    let ar = float("ar", 0.6)?;
    let mut scenarios = Vec::new();
    for name in text_of("scenario", "mean_shift").split(',') {
        scenarios.push(match name.trim() {
            "null" => Scenario::Null,
            "mean_shift" => Scenario::MeanShift { mu },
            "variance_change" => Scenario::VarianceChange { sigma },
            "mean_variance" => Scenario::MeanVariance { mu, sigma },
            "chi_square" => Scenario::ChiSquare,
            "mixture" => Scenario::Mixture { delta },
            "rank_change" => Scenario::RankChange { a, mu },
            other => {
                return Err(Error::domain(format!(
                    "unknown scenario '{other}' (expected null, mean_shift, variance_change, \
                     mean_variance, chi_square, mixture, or rank_change)"
                )))
            }
        });
    }
    let mut hurst_modes = Vec::new();
    for name in text_of("hurst_mode", "known").split(',') {
        hurst_modes.push(match name.trim() {
            "known" => HurstMode::Known,
            "whittle" => HurstMode::Whittle,
            "split" => HurstMode::Split,
            other => {
                return Err(Error::domain(format!(
                    "unknown hurst_mode '{other}' (expected known, whittle, or split)"
                )))
            }
        });
    }
    let family = match text_of("family", "fgn").as_str() {
        "fgn" => LatentFamily::Fgn,
        "farima00" => LatentFamily::Farima00,
        "farima10" => LatentFamily::Farima10 { ar },
        "ar1" => LatentFamily::Ar1 { ar },
        other => {
            return Err(Error::domain(format!(
                "unknown family '{other}' (expected fgn, farima00, farima10, or ar1)"
            )))
        }
    };
    let hurst_key = if kv.contains_key("h") { "h" } else { "hurst" };
    let mut reps = integer("reps", 1000)?;
    let mut table_reps = integer("j", 1000)?;
    if fast {
        reps = reps.min(300);
        table_reps = table_reps.min(300);
    }
    let config = StudyConfig {
        scenarios,
        statistics: parse_stat_list(&text_of("stat", "all"))?,
        hurst_modes,
        family,
        ns: parse_usize_list(&text_of("n", "100"), "n")?,
        hursts: parse_f64_list(&text_of(hurst_key, "0.6"), "H")?,
        tau: float("tau", 0.5)?,
        alpha: float("alpha", 0.05)?,
        reps,
        table_reps,
        master_seed,
    };
    config.validate()?;
    Ok(config)
}

fn cmd_power(a: PowerArgs) -> Result<u8> {
    let seed = resolve_seed(a.seed);
    let config = parse_study_config(&a.config, seed, a.fast)?;
    let table = run_power_study(&config)?;
    atomic_write(&a.out, table.to_csv().as_bytes())?;
    emit_json(
        None,
        &json!({
            "command": "power",
            "seed": seed,
            "out": a.out,
            "rows": table.rows.len(),
            "config": config,
        }),
    )?;
    Ok(0)
}

fn cmd_are(a: AreArgs) -> Result<u8> {
    let seed = resolve_seed(a.seed);
    match a.mode.as_str() {
        "mean_variance" => {
            let q = match a.q {
                Some(q) => q,
                None => limit_quantile(
                    1,
                    a.hurst,
                    a.alpha,
                    a.grid,
                    a.reps.max(1000),
                    child_seed(seed, 0x5155_414E),
                )?,
            };
            let drift_min = fstar(a.c1, a.c2, q, a.tau, a.kappa1, a.kappa2)?;
            let efficiency = are_mean_variance(a.c1, a.c2, q, a.tau, a.kappa1, a.kappa2, a.hurst)?;
            emit_json(
                a.out.as_deref(),
                &json!({
                    "command": "are",
                    "mode": "mean_variance",
                    "c1": a.c1,
                    "c2": a.c2,
                    "q": q,
                    "tau": a.tau,
                    "kappa1": a.kappa1,
                    "kappa2": a.kappa2,
                    "hurst": a.hurst,
                    "fstar": drift_min,
                    "are": efficiency,
                    "cubic_ratio": gaussian_cubic_ratio(),
                    "seed": seed,
                }),
            )?;
        }
        "mean_shift" => {
            let report = are_mean_shift_check(a.hurst, a.tau, a.c, a.alpha, a.reps, seed)?;
            let mut value =
                serde_json::to_value(&report).map_err(|e| Error::Parse(e.to_string()))?;
            let obj = value.as_object_mut().expect("report serializes to an object");
            obj.insert("command".into(), json!("are"));
            obj.insert("mode".into(), json!("mean_shift"));
            obj.insert("stats".into(), json!(StatisticKind::ALL));
            obj.insert("seed".into(), json!(seed));
            emit_json(a.out.as_deref(), &value)?;
        }
        other => {
            return Err(Error::domain(format!(
                "unknown mode '{other}' (expected mean_variance or mean_shift)"
            )))
        }
    }
    Ok(0)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8> {
    let ns = match &a.n {
        Some(spec) => parse_usize_list(spec, "n")?,
        None => vec![256, 1024],
    };
    let seed = resolve_seed(a.seed);
    let checks = verify::run_suites(&a.suite, &ns, a.reps, seed)?;
    let mut all_pass = true;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.details
        );
        all_pass &= c.pass;
    }
    Ok(u8::from(!all_pass))
}
