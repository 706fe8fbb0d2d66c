//! Command-line front end: simulation, estimation, Monte Carlo studies and
//! bandwidth utilities.

pub mod bandwidth;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};
use jdvol::estimators::{default_grid, double_smoothed_moments, Engine, EstimatorConfig, MomentEstimate};
use jdvol::inference::{
    bias_constant, confidence_interval, empirical_bias_inputs, rule_of_thumb_bandwidth, Regime,
};
use jdvol::mc_harness::{compare_with_bn, run_experiment, ExperimentPlan, ExperimentReport, PlanRegime};
use jdvol::{theta_phi, Kernel, SamplePath};
use serde::Serialize;

use crate::bandwidth::{plugin_bandwidths, BandwidthSource};
use crate::config::{BandwidthConfig, BandwidthSpec, EstimateConfig, ModelConfig, ThetaConfig};
use crate::error::{CliError, Result};
use crate::output::{config_text, fmt_f64, header, resolve, writer};

pub use crate::ingest::{ingest_csv, ColumnSpec, TickSeries};

#[derive(Debug, Parser)]
#[command(name = "jdvol", version, about = "Double-smoothed volatility estimation for jump-diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a catalog model and write the path as CSV.
    Simulate(SimulateArgs),
    /// Estimate M² on a grid with confidence intervals.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo plan file.
    McStudy(McStudyArgs),
    /// Print the variance constant θ_φ of a kernel.
    Theta(ThetaArgs),
    /// Plug-in bandwidth from a pilot estimate.
    Bandwidth(BandwidthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Estimate(_) => "estimate",
            Command::McStudy(_) => "mc-study",
            Command::Theta(_) => "theta",
            Command::Bandwidth(_) => "bandwidth",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ModelArgs {
    /// Catalog model: ou-jump, ou-pure, statejump, bm-jump.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jump_sd: Option<f64>,
    /// Number of increments.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Sampling interval.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_col: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_col: Option<String>,
    /// Resample onto this spacing by previous tick.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_delta: Option<f64>,
    /// Use raw prices instead of log prices.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub levels: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Configuration file or a previous output to re-run.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    /// Outer bandwidth or 'auto'.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<BandwidthSpec>,
    /// Neighborhood radius or 'auto'.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<BandwidthSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    /// Comma-separated evaluation levels.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// small_h, ratio_h or stationary.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Output CSV; stdout when absent.
    #[arg(long, short)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Structured text report.
    #[arg(long)]
    #[serde(skip)]
    pub report: Option<PathBuf>,
    /// Plot data: x, m2 and interval bands.
    #[arg(long)]
    #[serde(skip)]
    pub plot: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct McStudyArgs {
    /// Plan file (TOML) or a previous report.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Output prefix: writes PREFIX.toml and PREFIX.csv. Report to stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThetaArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BandwidthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Kernel>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    /// Pilot level; the median of the path when absent.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Parses `argv`, runs the subcommand and returns the exit status:
/// 0 success, 1 usage, 2 data, 3 numerical failure.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let name = cli.command.name();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("jdvol {name}: {e}");
            if let CliError::Usage(_) = e {
                let mut cmd = Cli::command();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    let _ = sub.print_help();
                }
            }
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Estimate(a) => estimate(&a),
        Command::McStudy(a) => mc_study(&a),
        Command::Theta(a) => theta(&a),
        Command::Bandwidth(a) => bandwidth(&a),
    }
}

fn write_path_csv(out: &mut dyn Write, path: &SamplePath<f64>) -> Result<()> {
    writeln!(out, "t,x")?;
    let delta = path.delta();
    for (k, &v) in path.values().iter().enumerate() {
        writeln!(out, "{},{}", fmt_f64(k as f64 * delta), fmt_f64(v))?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg: ModelConfig = resolve(args, args.config.as_ref())?;
    let path = cfg.simulate()?;
    let mut out = writer(args.out.as_deref())?;
    out.write_all(header("simulate", Some(cfg.seed), &cfg)?.as_bytes())?;
    write_path_csv(&mut *out, &path)?;
    out.flush()?;
    log::info!("simulated {} increments of '{}'", path.n(), cfg.model);
    Ok(())
}

/// One output row of `estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRow {
    pub x: f64,
    pub m2: f64,
    pub m2_corrected: f64,
    pub m4: f64,
    pub local_time: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reliable: bool,
}

fn resolve_bandwidths(cfg: &mut EstimateConfig, path: &SamplePath<f64>) -> Result<Option<BandwidthSource>> {
    let s = &mut cfg.smoothing;
    let phi = s.phi;
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(CliError::Usage(format!("phi must be positive, got {phi}")));
    }
    let (h, eps, source) = match (s.h, s.eps) {
        (BandwidthSpec::Value(h), BandwidthSpec::Value(e)) => (h, e, None),
        (BandwidthSpec::Value(h), BandwidthSpec::Auto) => (h, h / phi, None),
        (BandwidthSpec::Auto, BandwidthSpec::Value(e)) => (phi * e, e, None),
        (BandwidthSpec::Auto, BandwidthSpec::Auto) => {
            let b = plugin_bandwidths(path, s.kernel, s.engine, phi, None)?;
            (b.h, b.eps, Some(b.source))
        }
    };
    s.h = BandwidthSpec::Value(h);
    s.eps = BandwidthSpec::Value(eps);
    s.phi = h / eps;
    Ok(source)
}

fn value(spec: BandwidthSpec) -> f64 {
    match spec {
        BandwidthSpec::Value(v) => v,
        BandwidthSpec::Auto => unreachable!("bandwidths are resolved before use"),
    }
}

/// Runs the estimator and inference layer for a resolved configuration.
pub fn estimate_rows(cfg: &EstimateConfig, path: &SamplePath<f64>) -> Result<Vec<EstimateRow>> {
    let s = &cfg.smoothing;
    let (h, eps) = (value(s.h), value(s.eps));
    let grid = cfg.grid.clone().unwrap_or_else(|| default_grid(path, cfg.grid_points));
    let est_cfg = EstimatorConfig::new(h, eps, s.kernel, grid).with_engine(s.engine);
    let estimates = double_smoothed_moments(path, &est_cfg)?;
    let phi = h / eps;
    let (theta, bias_phi) = match cfg.regime {
        Regime::SmallH => (1.0, None),
        Regime::RatioH | Regime::Stationary => (theta_phi(s.kernel, phi)?, Some(phi)),
    };
    let h_density = rule_of_thumb_bandwidth(path);
    let mut uncorrected = 0;
    let rows = estimates
        .iter()
        .map(|e| {
            let gamma = empirical_bias_inputs(&estimates, path, s.kernel, h_density, e.x)
                .and_then(|b| bias_constant(&b, cfg.regime, s.kernel, bias_phi))
                .unwrap_or_else(|_| {
                    uncorrected += 1;
                    0.0
                });
            row(e, gamma, eps, cfg.alpha, cfg.regime, theta)
        })
        .collect::<Result<Vec<_>>>()?;
    if uncorrected > 0 {
        log::warn!("{uncorrected} grid points lack a bias estimate and are left uncorrected");
    }
    Ok(rows)
}

fn row(e: &MomentEstimate<f64>, gamma: f64, eps: f64, alpha: f64, regime: Regime, theta: f64) -> Result<EstimateRow> {
    let corrected = e.m2 - eps * eps * gamma;
    let (se, lo, hi) = if e.m2.is_finite() && e.local_time > 0.0 {
        let ci = confidence_interval(e.x, e.m2, e.m4, gamma, eps, e.local_time, alpha, regime, theta)?;
        (ci.std_error, ci.ci_low, ci.ci_high)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(EstimateRow {
        x: e.x,
        m2: e.m2,
        m2_corrected: corrected,
        m4: e.m4,
        local_time: e.local_time,
        std_error: se,
        ci_low: lo,
        ci_high: hi,
        reliable: e.reliable,
    })
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let mut cfg: EstimateConfig = resolve(args, args.config.as_ref())?;
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    let path = cfg.source.load()?;
    let source = resolve_bandwidths(&mut cfg, &path)?;
    let (h, eps) = (value(cfg.smoothing.h), value(cfg.smoothing.eps));
    let how = match source {
        Some(BandwidthSource::PlugIn) => "plug-in",
        Some(BandwidthSource::RuleOfThumb) => "normal-reference fallback",
        None => "given",
    };
    eprintln!("resolved h = {} eps = {} ({how})", fmt_f64(h), fmt_f64(eps));

    let rows = estimate_rows(&cfg, &path)?;
    let head = header("estimate", cfg.source.seed(), &cfg)?;
    let mut out = writer(args.out.as_deref())?;
    out.write_all(head.as_bytes())?;
    writeln!(out, "x,m2,m2_corrected,m4,local_time,std_error,ci_low,ci_high,reliable")?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.x),
            fmt_f64(r.m2),
            fmt_f64(r.m2_corrected),
            fmt_f64(r.m4),
            fmt_f64(r.local_time),
            fmt_f64(r.std_error),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
            r.reliable
        )?;
    }
    out.flush()?;

    if let Some(p) = &args.report {
        #[derive(Serialize)]
        struct Report<'a> {
            h: f64,
            eps: f64,
            bandwidth_source: &'a str,
            n: usize,
            delta: f64,
            point: &'a [EstimateRow],
        }
        let body = toml::to_string(&Report {
            h,
            eps,
            bandwidth_source: how,
            n: path.n(),
            delta: path.delta(),
            point: &rows,
        })
        .map_err(|e| CliError::Numerical(format!("report: {e}")))?;
        let mut w = writer(Some(p))?;
        w.write_all(head.as_bytes())?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
    }
    if let Some(p) = &args.plot {
        let mut w = writer(Some(p))?;
        w.write_all(head.as_bytes())?;
        writeln!(w, "x,m2,ci_low,ci_high")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", fmt_f64(r.x), fmt_f64(r.m2), fmt_f64(r.ci_low), fmt_f64(r.ci_high))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn rung_table(out: &mut dyn Write, report: &ExperimentReport) -> Result<()> {
    writeln!(
        out,
        "n,delta,h,eps,replications,failed,bias,sd,rmse,median_abs_rel_error,mean_local_time,z_mean,z_sd,ks_statistic,ks_p_value,coverage,eps5_local_time,bn_rmse"
    )?;
    for r in &report.rungs {
        let fields = [
            r.bias,
            r.sd,
            r.rmse,
            r.median_abs_rel_error,
            r.mean_local_time,
            r.z_mean,
            r.z_sd,
            r.ks_statistic,
            r.ks_p_value,
            r.coverage,
            r.eps5_local_time,
            r.bn_rmse.unwrap_or(f64::NAN),
        ];
        let line: Vec<String> = fields.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            fmt_f64(r.delta),
            fmt_f64(r.h),
            fmt_f64(r.eps),
            r.replications,
            r.failed,
            line.join(",")
        )?;
    }
    Ok(())
}

fn mc_study(args: &McStudyArgs) -> Result<()> {
    let mut plan = ExperimentPlan::from_toml_str(&config_text(&args.plan)?)?;
    if let Some(r) = args.replications {
        plan = plan.with_replications(r);
        plan.validate()?;
    }
    let report = if plan.regime == PlanRegime::BnComparison {
        compare_with_bn(&plan)?
    } else {
        run_experiment(&plan)?
    };
    let head = header("mc-study", Some(plan.seed_base), &plan)?;
    let body = report.to_toml_string();
    match &args.out {
        Some(prefix) => {
            let mut w = writer(Some(&with_suffix(prefix, "toml")))?;
            w.write_all(head.as_bytes())?;
            w.write_all(body.as_bytes())?;
            w.flush()?;
            let mut w = writer(Some(&with_suffix(prefix, "csv")))?;
            w.write_all(head.as_bytes())?;
            rung_table(&mut *w, &report)?;
            w.flush()?;
        }
        None => {
            let mut w = writer(None)?;
            w.write_all(head.as_bytes())?;
            w.write_all(body.as_bytes())?;
            w.flush()?;
        }
    }
    Ok(())
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn theta(args: &ThetaArgs) -> Result<()> {
    let cfg: ThetaConfig = resolve(args, None)?;
    let v = theta_phi(cfg.kernel, cfg.phi)?;
    println!("{}", fmt_f64(v));
    Ok(())
}

fn bandwidth(args: &BandwidthArgs) -> Result<()> {
    let cfg: BandwidthConfig = resolve(args, args.config.as_ref())?;
    let path = cfg.source.load()?;
    let b = plugin_bandwidths(&path, cfg.kernel, cfg.engine, cfg.phi, cfg.x)?;
    #[derive(Serialize)]
    struct Out {
        h: f64,
        eps: f64,
        phi: f64,
        source: BandwidthSource,
    }
    let body = toml::to_string(&Out {
        h: b.h,
        eps: b.eps,
        phi: cfg.phi,
        source: b.source,
    })
    .map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut w = writer(None)?;
    w.write_all(header("bandwidth", cfg.source.seed(), &cfg)?.as_bytes())?;
    w.write_all(body.as_bytes())?;
    w.flush()?;
    Ok(())
}
