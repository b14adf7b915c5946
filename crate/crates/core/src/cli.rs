//! Command-line front end: configuration merging, validation and dispatch.
//!
//! Every subcommand reads a model file; run parameters may also be given in
//! the file's optional `run` section, and command-line flags override them.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bounds::{self, default_delta, BoundCalculator, DEFAULT_ETA};
use crate::channels::{ModelConfig, SystemModel};
use crate::divergence::{max_min_divergence, per_component_divergence};
use crate::exec::Backend;
use crate::report::{cell, emit, fmt_sig, Format, Tabular};
use crate::sim::{self, brute_force_small, EpsilonSchedule, MonteCarlo, SweepConfig};
use crate::strategies::{InferenceRule, StrategyKind};
use crate::{Error, Result};

pub const DEFAULT_TRIALS: u64 = 10_000;

#[derive(Debug, Parser)]
#[command(
    name = "anomaly-verify",
    version,
    about = "Active anomaly verification: strategies, simulation and bounds"
)]
struct Cli {
    /// Print the merged, validated configuration as JSON and exit.
    #[arg(long, global = true)]
    echo_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Max-min divergence and optimal selection weights.
    Solve(Common),
    /// Converse and achievability bounds over a range of horizons.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        horizon: Horizon,
    },
    /// Monte Carlo estimates of psi and phi for a strategy and inference rule.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        horizon: Horizon,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long)]
        strategy: Option<String>,
        /// threshold:<value>, calibrated, analytic or always_safe.
        #[arg(long)]
        inference: Option<String>,
    },
    /// Calibrate a confidence threshold to the psi constraint.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        horizon: Horizon,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Calibrate and evaluate several strategies over several horizons.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        horizon: Horizon,
        #[command(flatten)]
        mc: McArgs,
        /// Comma-separated strategy names.
        #[arg(long)]
        strategies: Option<String>,
    },
    /// Exhaustive optimum over deterministic strategies for tiny instances.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        horizon: Horizon,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Model file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Horizon {
    /// Horizon: N, a..b, a..b:step or a comma-separated list.
    #[arg(long)]
    n: Option<String>,
    /// Constant level in (0, 1) or an inverse schedule <c>/n.
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this value.
    #[arg(long)]
    threads: Option<usize>,
}

/// Run parameters accepted in the model file's `run` section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<EpsilonSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<String>,
}

/// How the simulate subcommand turns a confidence into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    Threshold(f64),
    /// Threshold calibrated on separate safe-hypothesis trials.
    Calibrated,
    /// Threshold from the analytic achievability construction.
    Analytic,
    AlwaysSafe,
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(v) = s.strip_prefix("threshold:") {
            let theta: f64 = v
                .parse()
                .map_err(|_| Error::config("inference", format!("cannot parse threshold {v:?}")))?;
            InferenceRule::threshold(theta)
                .map_err(|e| Error::config("inference", e.to_string()))?;
            return Ok(InferenceMode::Threshold(theta));
        }
        match s {
            "calibrated" => Ok(InferenceMode::Calibrated),
            "analytic" => Ok(InferenceMode::Analytic),
            "always_safe" => Ok(InferenceMode::AlwaysSafe),
            other => Err(Error::config(
                "inference",
                format!("unknown rule {other:?}, expected threshold:<value>, calibrated, analytic or always_safe"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubcommandKind {
    Solve,
    Bounds,
    Simulate,
    Calibrate,
    Sweep,
    Oracle,
}

/// Merged and validated parameters for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: SubcommandKind,
    pub model_path: PathBuf,
    pub model: ModelConfig,
    pub n_values: Vec<usize>,
    pub epsilon: Option<EpsilonSchedule>,
    pub eta: f64,
    pub delta: Option<f64>,
    pub trials: u64,
    pub seed: u64,
    /// True when no seed was supplied and one was drawn at random.
    pub seed_generated: bool,
    pub strategies: Vec<StrategyKind>,
    pub inference: Option<InferenceMode>,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// Parses `a`, `a..b` (inclusive), `a..b:step` or `a,b,c`.
pub fn parse_horizons(spec: &str) -> Result<Vec<usize>> {
    let bad = |msg: String| Error::config("n", msg);
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| bad(format!("cannot parse {s:?} as a horizon")))
    };
    let values: Vec<usize> = if let Some((lo, rest)) = spec.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, 1),
        };
        let lo = num(lo)?;
        if step == 0 || hi < lo {
            return Err(bad(format!("empty or invalid range {spec:?}")));
        }
        (lo..=hi).step_by(step).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad("horizons must be at least 1".into()));
    }
    Ok(values)
}

fn parse_strategies(list: &[String]) -> Result<Vec<StrategyKind>> {
    list.iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse())
        .collect()
}

/// Merges command-line arguments (including the program name) over the
/// `run` section of the model file and validates the result.
pub fn parse_config<I, T>(args: I, file: &[u8]) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::config("arguments", e.to_string()))?;
    build_config(cli, file)
}

fn build_config(cli: Cli, file: &[u8]) -> Result<RunConfig> {
    let model_config: ModelConfig =
        serde_json::from_slice(file).map_err(|e| Error::config("model file", e.to_string()))?;
    let model = SystemModel::from_config(&model_config)?;
    let defaults = model_config.run.clone().unwrap_or_default();

    let (command, common, horizon, mc, strategy, strategies, inference) = match cli.command {
        Command::Solve(common) => (SubcommandKind::Solve, common, None, None, None, None, None),
        Command::Bounds { common, horizon } => (
            SubcommandKind::Bounds,
            common,
            Some(horizon),
            None,
            None,
            None,
            None,
        ),
        Command::Simulate {
            common,
            horizon,
            mc,
            strategy,
            inference,
        } => (
            SubcommandKind::Simulate,
            common,
            Some(horizon),
            Some(mc),
            strategy,
            None,
            inference,
        ),
        Command::Calibrate {
            common,
            horizon,
            mc,
            strategy,
        } => (
            SubcommandKind::Calibrate,
            common,
            Some(horizon),
            Some(mc),
            strategy,
            None,
            None,
        ),
        Command::Sweep {
            common,
            horizon,
            mc,
            strategies,
        } => (
            SubcommandKind::Sweep,
            common,
            Some(horizon),
            Some(mc),
            None,
            strategies,
            None,
        ),
        Command::Oracle { common, horizon } => (
            SubcommandKind::Oracle,
            common,
            Some(horizon),
            None,
            None,
            None,
            None,
        ),
    };

    let format = match common.format.as_deref() {
        Some(f) => f.parse()?,
        None => Format::default(),
    };

    let (n_arg, eps_arg, eta, delta) = match &horizon {
        Some(h) => (h.n.clone(), h.epsilon.clone(), h.eta, h.delta),
        None => (None, None, None, None),
    };
    let n_values = match n_arg.or(defaults.n.clone()) {
        Some(spec) => parse_horizons(&spec)?,
        None if command == SubcommandKind::Solve => Vec::new(),
        None => return Err(Error::config("n", "a horizon is required (--n or run.n)")),
    };
    let epsilon = match eps_arg {
        Some(s) => Some(s.parse::<EpsilonSchedule>()?),
        None => defaults.epsilon,
    };
    let eta = eta.or(defaults.eta).unwrap_or(DEFAULT_ETA);
    if !(eta > 1.0 && eta.is_finite()) {
        return Err(Error::config(
            "eta",
            format!("must be finite and exceed 1, got {eta}"),
        ));
    }
    let delta = delta.or(defaults.delta);
    if let Some(d) = delta {
        let m = model.num_components();
        if m >= 2 && !(d > 0.0 && d < 1.0 / (m as f64 - 1.0)) {
            return Err(Error::config(
                "delta",
                format!(
                    "must lie in (0, {}) for M = {m}, got {d}",
                    1.0 / (m as f64 - 1.0)
                ),
            ));
        }
    }

    let (trials, seed_arg, threads) = match &mc {
        Some(mc) => (mc.trials, mc.seed, mc.threads),
        None => (None, None, None),
    };
    let trials = trials.or(defaults.trials).unwrap_or(DEFAULT_TRIALS);
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    if threads == Some(0) {
        return Err(Error::config("threads", "must be at least 1"));
    }
    let (seed, seed_generated) = match seed_arg.or(defaults.seed) {
        Some(s) => (s, false),
        None => (rand::random::<u64>(), true),
    };

    let strategies = match command {
        SubcommandKind::Sweep => {
            let list = match strategies {
                Some(s) => vec![s],
                None => defaults
                    .strategies
                    .clone()
                    .unwrap_or_else(|| vec!["ors".into(), "das".into()]),
            };
            parse_strategies(&list)?
        }
        SubcommandKind::Simulate | SubcommandKind::Calibrate => {
            let name = strategy
                .or(defaults.strategy.clone())
                .unwrap_or_else(|| "das".into());
            vec![name.parse()?]
        }
        _ => Vec::new(),
    };

    let inference = match command {
        SubcommandKind::Simulate => Some(
            inference
                .or(defaults.inference.clone())
                .unwrap_or_else(|| "calibrated".into())
                .parse::<InferenceMode>()?,
        ),
        _ => None,
    };

    let needs_epsilon = match command {
        SubcommandKind::Bounds
        | SubcommandKind::Calibrate
        | SubcommandKind::Sweep
        | SubcommandKind::Oracle => true,
        SubcommandKind::Simulate => matches!(
            inference,
            Some(InferenceMode::Calibrated | InferenceMode::Analytic)
        ),
        SubcommandKind::Solve => false,
    };
    if needs_epsilon && epsilon.is_none() {
        return Err(Error::config(
            "epsilon",
            "required for this subcommand (--epsilon or run.epsilon)",
        ));
    }

    Ok(RunConfig {
        command,
        model_path: common.config,
        model: model.to_config(),
        n_values,
        epsilon,
        eta,
        delta,
        trials,
        seed,
        seed_generated,
        strategies,
        inference,
        format,
        output: common.output,
        threads,
    })
}

/// Entry point of the binary. Exit code 0 on success, 2 on invalid input,
/// 1 on runtime failure.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let path = match &cli.command {
        Command::Solve(c)
        | Command::Bounds { common: c, .. }
        | Command::Simulate { common: c, .. }
        | Command::Calibrate { common: c, .. }
        | Command::Sweep { common: c, .. }
        | Command::Oracle { common: c, .. } => c.config.clone(),
    };
    let file = match std::fs::read(&path) {
        Ok(bytes) => bytes,
        Err(e) => {
            eprintln!("error: cannot read model file {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let echo = cli.echo_config;
    let config = match build_config(cli, &file) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if echo {
        let text = serde_json::to_string_pretty(&config).expect("config serializes");
        let _ = writeln!(io::stdout().lock(), "{text}");
        return ExitCode::SUCCESS;
    }
    if config.seed_generated && config.command != SubcommandKind::Solve {
        eprintln!("seed: {}", config.seed);
    }
    match execute(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(
            e @ (Error::Config { .. }
            | Error::Domain(_)
            | Error::Unsupported(_)
            | Error::HomogeneityRequired),
        ) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn sink(config: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &config.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Runs a validated configuration, writing records to its sink.
pub fn execute(config: &RunConfig) -> Result<()> {
    let out = sink(config)?;
    execute_to(config, out)
}

pub fn execute_to<W: Write>(config: &RunConfig, mut out: W) -> Result<()> {
    let model = SystemModel::from_config(&config.model)?;
    let solution = max_min_divergence(&model)?;
    let backend = Backend::default();
    let delta = config
        .delta
        .unwrap_or_else(|| default_delta(model.num_components()));
    match config.command {
        SubcommandKind::Solve => {
            let doc = SolveOutput {
                d_star: solution.d_star,
                alpha_star: solution.alpha_star.clone(),
                beta_star: solution.beta_star.clone(),
                divergences: per_component_divergence(&model)?,
                homogeneous: model.is_homogeneous(),
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            out.write_all(b"\n")?;
            out.flush()?;
            Ok(())
        }
        SubcommandKind::Bounds => {
            let eps = config.epsilon.expect("validated");
            let calc = BoundCalculator::new(&model, &solution)?;
            for &n in &config.n_values {
                check_level(eps.at(n), n)?;
            }
            let reports = calc.reports(&config.n_values, |n| eps.at(n), config.eta, delta)?;
            emit(&reports, config.format, out)
        }
        SubcommandKind::Simulate => {
            let kind = config.strategies[0];
            let strategy = kind.build(&solution)?;
            let spec = config.inference.expect("validated");
            let calc = BoundCalculator::new(&model, &solution)?;
            let records =
                backend.with_threads(config.threads, || -> Result<Vec<SimulateRecord>> {
                    let mut records = Vec::new();
                    for &n in &config.n_values {
                        let epsilon = config.epsilon.map(|e| e.at(n));
                        let seed = sim::point_seed(config.seed, kind, n);
                        let mc = MonteCarlo {
                            trials: config.trials,
                            seed,
                            backend,
                        };
                        let rule = match spec {
                            InferenceMode::Threshold(t) => InferenceRule::Threshold(t),
                            InferenceMode::AlwaysSafe => InferenceRule::AlwaysSafe,
                            InferenceMode::Calibrated => {
                                let eps = epsilon.expect("validated");
                                check_level(eps, n)?;
                                InferenceRule::Threshold(
                                    mc.calibrate_threshold(&model, &solution, &strategy, n, eps)?,
                                )
                            }
                            InferenceMode::Analytic => {
                                let eps = epsilon.expect("validated");
                                check_level(eps, n)?;
                                let law = calc.law(n)?;
                                InferenceRule::Threshold(
                                    calc.achievability_threshold(&law, eps, config.eta, delta)?
                                        .theta,
                                )
                            }
                        };
                        let r = mc.estimate(&model, &solution, &strategy, &rule, n)?;
                        records.push(SimulateRecord {
                            strategy: kind.name().into(),
                            n,
                            epsilon,
                            theta: match rule {
                                InferenceRule::Threshold(t) => Some(t),
                                InferenceRule::AlwaysSafe => None,
                            },
                            psi_hat: r.psi_hat,
                            psi_ci: r.psi_ci,
                            phi_hat: r.phi_hat,
                            phi_ci: r.phi_ci,
                            phi_is: r.phi_is,
                            neg_log_phi_is: r.neg_log_phi_is,
                            neg_log_phi_is_ci: r.neg_log_phi_is_ci,
                            trials: r.trials,
                            seed: config.seed,
                        });
                    }
                    Ok(records)
                })?;
            emit(&records, config.format, out)
        }
        SubcommandKind::Calibrate => {
            let kind = config.strategies[0];
            let strategy = kind.build(&solution)?;
            let eps_schedule = config.epsilon.expect("validated");
            let calc = BoundCalculator::new(&model, &solution)?;
            let records =
                backend.with_threads(config.threads, || -> Result<Vec<CalibrateRecord>> {
                    let mut records = Vec::new();
                    for &n in &config.n_values {
                        let epsilon = eps_schedule.at(n);
                        check_level(epsilon, n)?;
                        let mc = MonteCarlo {
                            trials: config.trials,
                            seed: sim::point_seed(config.seed, kind, n),
                            backend,
                        };
                        let theta =
                            mc.calibrate_threshold(&model, &solution, &strategy, n, epsilon)?;
                        let analytic = calc
                            .law(n)
                            .and_then(|law| {
                                calc.achievability_threshold(&law, epsilon, config.eta, delta)
                            })
                            .ok()
                            .map(|a| a.theta);
                        records.push(CalibrateRecord {
                            strategy: kind.name().into(),
                            n,
                            epsilon,
                            theta,
                            achievability_theta: analytic,
                            trials: config.trials,
                            seed: config.seed,
                        });
                    }
                    Ok(records)
                })?;
            emit(&records, config.format, out)
        }
        SubcommandKind::Sweep => {
            let sweep_config = SweepConfig {
                strategies: config.strategies.clone(),
                n_values: config.n_values.clone(),
                epsilon: config.epsilon.expect("validated"),
                eta: config.eta,
                delta: config.delta,
                trials: config.trials,
                seed: config.seed,
                backend,
            };
            let records = backend.with_threads(config.threads, || {
                sim::sweep(&model, &solution, &sweep_config)
            })?;
            emit(&records, config.format, out)
        }
        SubcommandKind::Oracle => {
            let eps = config.epsilon.expect("validated");
            let mut records = Vec::new();
            for &n in &config.n_values {
                let epsilon = eps.at(n);
                check_level(epsilon, n)?;
                let r = brute_force_small(&model, n, epsilon)?;
                let strong =
                    bounds::strong_converse(&model, &solution, n, epsilon, config.eta).ok();
                records.push(OracleRecord {
                    n,
                    epsilon,
                    phi_opt: r.phi_opt,
                    neg_log_phi_opt: -r.phi_opt.ln(),
                    strong_converse: strong,
                    best_tree: r.best_tree,
                    trees_searched: r.trees_searched,
                });
            }
            emit(&records, config.format, out)
        }
    }
}

fn check_level(epsilon: f64, n: usize) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::config(
            "epsilon",
            format!("schedule gives {epsilon} at n = {n}, outside (0, 1)"),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub d_star: f64,
    pub alpha_star: Vec<f64>,
    pub beta_star: Vec<f64>,
    pub divergences: Vec<f64>,
    pub homogeneous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRecord {
    pub strategy: String,
    pub n: usize,
    pub epsilon: Option<f64>,
    pub theta: Option<f64>,
    pub psi_hat: f64,
    pub psi_ci: f64,
    pub phi_hat: f64,
    pub phi_ci: f64,
    pub phi_is: f64,
    pub neg_log_phi_is: f64,
    pub neg_log_phi_is_ci: f64,
    pub trials: u64,
    pub seed: u64,
}

impl Tabular for SimulateRecord {
    const COLUMNS: &'static [&'static str] = &[
        "strategy",
        "n",
        "epsilon",
        "theta",
        "psi_hat",
        "psi_ci",
        "phi_hat",
        "phi_ci",
        "phi_is",
        "neg_log_phi_is",
        "neg_log_phi_is_ci",
        "trials",
        "seed",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.strategy.clone(),
            self.n.to_string(),
            cell(self.epsilon),
            cell(self.theta),
            fmt_sig(self.psi_hat),
            fmt_sig(self.psi_ci),
            fmt_sig(self.phi_hat),
            fmt_sig(self.phi_ci),
            fmt_sig(self.phi_is),
            fmt_sig(self.neg_log_phi_is),
            fmt_sig(self.neg_log_phi_is_ci),
            self.trials.to_string(),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateRecord {
    pub strategy: String,
    pub n: usize,
    pub epsilon: f64,
    pub theta: f64,
    pub achievability_theta: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

impl Tabular for CalibrateRecord {
    const COLUMNS: &'static [&'static str] = &[
        "strategy",
        "n",
        "epsilon",
        "theta",
        "achievability_theta",
        "trials",
        "seed",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.strategy.clone(),
            self.n.to_string(),
            fmt_sig(self.epsilon),
            fmt_sig(self.theta),
            cell(self.achievability_theta),
            self.trials.to_string(),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub n: usize,
    pub epsilon: f64,
    pub phi_opt: f64,
    pub neg_log_phi_opt: f64,
    pub strong_converse: Option<f64>,
    pub best_tree: String,
    pub trees_searched: u64,
}

impl Tabular for OracleRecord {
    const COLUMNS: &'static [&'static str] = &[
        "n",
        "epsilon",
        "phi_opt",
        "neg_log_phi_opt",
        "strong_converse",
        "best_tree",
        "trees_searched",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_sig(self.epsilon),
            fmt_sig(self.phi_opt),
            fmt_sig(self.neg_log_phi_opt),
            cell(self.strong_converse),
            self.best_tree.clone(),
            self.trees_searched.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &[u8] = br#"{"components":[{"p0":[0.8,0.2],"p1":[0.2,0.8]},{"p0":[0.8,0.2],"p1":[0.2,0.8]}],"prior":[0.5,0.25,0.25]}"#;

    fn args(rest: &[&str]) -> Vec<String> {
        std::iter::once("anomaly-verify")
            .chain(rest.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn rejects_zero_epsilon() {
        let err = parse_config(
            args(&[
                "bounds",
                "--config",
                "m.json",
                "--n",
                "10",
                "--epsilon",
                "0",
            ]),
            MODEL,
        )
        .unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        assert!(err.to_string().contains("(0, 1)"), "{err}");
    }

    #[test]
    fn rejects_eta_one() {
        let err = parse_config(
            args(&[
                "bounds",
                "--config",
                "m.json",
                "--n",
                "10",
                "--epsilon",
                "0.1",
                "--eta",
                "1",
            ]),
            MODEL,
        )
        .unwrap_err();
        assert!(err.to_string().contains("eta"), "{err}");
    }

    #[test]
    fn rejects_unknown_strategy() {
        let err = parse_config(
            args(&[
                "sweep",
                "--config",
                "m.json",
                "--n",
                "10",
                "--epsilon",
                "0.1",
                "--strategies",
                "ors,greedy",
            ]),
            MODEL,
        )
        .unwrap_err();
        assert!(err.to_string().contains("strategy"), "{err}");
    }

    #[test]
    fn minimal_config_echoes_normalized_form() {
        let c = parse_config(args(&["solve", "--config", "m.json"]), MODEL).unwrap();
        assert_eq!(c.command, SubcommandKind::Solve);
        assert_eq!(c.eta, DEFAULT_ETA);
        let json = serde_json::to_value(&c).unwrap();
        assert_eq!(json["model"]["prior"], serde_json::json!([0.5, 0.25, 0.25]));
        assert_eq!(json["command"], "solve");
    }

    #[test]
    fn cli_overrides_file_defaults() {
        let with_run = br#"{"components":[{"p0":[0.8,0.2],"p1":[0.2,0.8]}],"prior":[0.5,0.5],
            "run":{"n":"5..7","epsilon":"1/n","trials":50,"seed":3,"strategies":["das"]}}"#;
        let c = parse_config(
            args(&["sweep", "--config", "m.json", "--trials", "80"]),
            with_run,
        )
        .unwrap();
        assert_eq!(c.n_values, vec![5, 6, 7]);
        assert_eq!(c.epsilon, Some(EpsilonSchedule::Inverse { scale: 1.0 }));
        assert_eq!(c.trials, 80);
        assert_eq!(c.seed, 3);
        assert!(!c.seed_generated);
        assert_eq!(c.strategies, vec![StrategyKind::Das]);
    }

    #[test]
    fn missing_seed_is_generated() {
        let c = parse_config(
            args(&[
                "calibrate",
                "--config",
                "m.json",
                "--n",
                "4",
                "--epsilon",
                "0.2",
            ]),
            MODEL,
        )
        .unwrap();
        assert!(c.seed_generated);
    }

    #[test]
    fn malformed_file() {
        let err = parse_config(args(&["solve", "--config", "m.json"]), b"{not json").unwrap_err();
        assert!(err.to_string().contains("model file"), "{err}");
        let err = parse_config(
            args(&["solve", "--config", "m.json"]),
            br#"{"components":[],"prior":[1]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }

    #[test]
    fn horizon_args() {
        assert_eq!(parse_horizons("7").unwrap(), vec![7]);
        assert_eq!(parse_horizons("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_horizons("20..60:20").unwrap(), vec![20, 40, 60]);
        assert_eq!(parse_horizons("3,1,2").unwrap(), vec![3, 1, 2]);
        assert!(parse_horizons("0").is_err());
        assert!(parse_horizons("5..2").is_err());
        assert!(parse_horizons("x").is_err());
    }

    #[test]
    fn inference_specs() {
        assert_eq!(
            "threshold:2.5".parse::<InferenceMode>().unwrap(),
            InferenceMode::Threshold(2.5)
        );
        assert_eq!(
            "calibrated".parse::<InferenceMode>().unwrap(),
            InferenceMode::Calibrated
        );
        assert!("threshold:abc".parse::<InferenceMode>().is_err());
        assert!("bayes".parse::<InferenceMode>().is_err());
    }

    #[test]
    fn bounds_output() {
        let c = parse_config(
            args(&[
                "bounds",
                "--config",
                "m.json",
                "--n",
                "1..3",
                "--epsilon",
                "0.15",
                "--eta",
                "2",
            ]),
            MODEL,
        )
        .unwrap();
        let mut buf = Vec::new();
        execute_to(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "n,epsilon,eta,weak_rate,strong_converse,achievability_theta,be_upper_main,be_lower_main,log_term,v,t");
        assert!(lines[1].starts_with("1,0.150000000,2.00000000,"));
        let sc: f64 = lines[1].split(',').nth(4).unwrap().parse().unwrap();
        assert!((sc - (80.0f64 / 3.0).ln()).abs() < 1e-7, "{}", lines[1]);
    }
}
