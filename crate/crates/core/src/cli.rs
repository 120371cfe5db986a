//! `cache-sim` command-line front-end.
//!
//! Three subcommands, all emitting plot-ready tables with the columns of
//! [`OutputRow`]:
//!
//! ```text
//! cache-sim analytic --scheme cfcm,cfcc --K 50 --N 1000 --M 100
//! cache-sim simulate --scheme cfcc --K 50 --N 1000 --M 100 --trials 10000 --seed 1
//! cache-sim sweep --axis M --values 100,200,300 --K 50 --N 1000 --out rates.csv
//! ```
//!
//! Any flag may also come from `--config FILE`, a `key=value` file whose
//! keys are the long flag names without dashes (`K=50`, `ode-step=0.001`,
//! `# comments`). Flags given on the command line win over the file.
//!
//! Exit codes: 0 success, 2 usage error, 1 runtime error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    coding_gains, rate_cfcc_with, rate_cfcm_analytic, rate_csc_opt_analytic,
    rate_uncoded_analytic, OdeOptions,
};
use crate::model::CacheNetworkConfig;
use crate::montecarlo::{
    run_experiment_detailed, run_sweep, write_trial_csv, Estimate, ExperimentSpec, GraphSource,
    Scheme, SweepAxis,
};

/// Environment variable capping trial parallelism.
pub const THREADS_ENV: &str = "CACHE_SIM_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(msg: impl Display) -> CliError {
    CliError::Usage(msg.to_string())
}

fn runtime(msg: impl Display) -> CliError {
    CliError::Runtime(msg.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "cache-sim", version, about = "Coded file caching simulator and rate analytics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the analytic expected-rate expressions.
    Analytic(AnalyticArgs),
    /// Estimate one scheme's expected rate by Monte-Carlo.
    Simulate(SimulateArgs),
    /// Sweep M, K or Δ and write analytic and Monte-Carlo rows.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct InstanceArgs {
    /// key=value configuration file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of caches
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Library size in files
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Cache capacity in files (a comma-separated list for sweep)
    #[arg(long = "M")]
    pub m: Option<String>,
    /// Subfiles per file
    #[arg(long)]
    pub delta: Option<usize>,
    /// RK4 step for the clique-cover ODE (default 1/(50K))
    #[arg(long = "ode-step")]
    pub ode_step: Option<f64>,
    /// Output format: csv or json
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct AnalyticArgs {
    /// cfcm, cfcc, csc-opt, uncoded, cscc-approx (comma-separated)
    #[arg(long)]
    pub scheme: Option<String>,
    #[command(flatten)]
    pub instance: InstanceArgs,
}

#[derive(Debug, Args, Clone)]
pub struct SimulateArgs {
    /// cfcm, cfcc, cscc or uncoded
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// exact or asymptotic
    #[arg(long)]
    pub source: Option<String>,
    /// Write one CSV row per trial to this path
    #[arg(long = "dump-trials")]
    pub dump_trials: Option<PathBuf>,
    #[command(flatten)]
    pub instance: InstanceArgs,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    /// M, K or delta
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated axis values
    #[arg(long)]
    pub values: Option<String>,
    /// Schemes to tabulate (default cfcm,cfcc,uncoded,csc-opt; for the
    /// delta axis cscc,uncoded,csc-opt)
    #[arg(long)]
    pub schemes: Option<String>,
    /// Monte-Carlo trials per point (0 = analytic rows only)
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub source: Option<String>,
    /// For the K axis: scale N and M with K so K/N and M/N stay fixed
    #[arg(long = "hold-ratio")]
    pub hold_ratio: bool,
    /// Output path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub instance: InstanceArgs,
}

/// One table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRow {
    pub scheme: String,
    pub source: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub delta: usize,
    pub q: f64,
    pub rate: Option<f64>,
    pub stderr: Option<f64>,
    pub trials: Option<u64>,
    pub g_a: Option<f64>,
    pub g_m: Option<f64>,
    pub large_clique_coverage: Option<f64>,
    pub error: Option<String>,
}

/// Rounds to 12 significant digits, the precision rows are printed with.
pub fn round_sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

impl OutputRow {
    fn new(scheme: &str, source: &str, cfg: &CacheNetworkConfig) -> Self {
        Self {
            scheme: scheme.to_string(),
            source: source.to_string(),
            k: cfg.k(),
            n: cfg.n(),
            m: cfg.m(),
            delta: cfg.delta(),
            q: round_sig12(cfg.q_f64()),
            rate: None,
            stderr: None,
            trials: None,
            g_a: None,
            g_m: None,
            large_clique_coverage: None,
            error: None,
        }
    }

    fn with_rate(mut self, rate: f64, cfg: &CacheNetworkConfig) -> Self {
        self.rate = Some(round_sig12(rate));
        let uncoded = rate_uncoded_analytic(cfg.k() as u64, cfg.n() as u64, cfg.m() as u64);
        if let Ok(gains) = uncoded.and_then(|u| coding_gains(rate, u)) {
            self.g_a = Some(round_sig12(gains.additive));
            self.g_m = Some(round_sig12(gains.multiplicative));
        }
        self
    }

    fn with_estimate(self, est: &Estimate, cfg: &CacheNetworkConfig, coded: bool) -> Self {
        let mut row = self.with_rate(est.mean, cfg);
        row.stderr = Some(round_sig12(est.stderr));
        row.trials = Some(est.trials);
        if coded {
            row.large_clique_coverage = Some(round_sig12(est.large_clique_coverage_mean));
        }
        row
    }

    fn with_error(mut self, err: impl Display) -> Self {
        self.error = Some(err.to_string());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}' (expected csv or json)")),
        }
    }
}

/// Analytic curve names accepted by `--scheme`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveName {
    Cfcm,
    Cfcc,
    Cscc,
    Uncoded,
    CscOpt,
}

impl FromStr for CurveName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cfcm" => Ok(CurveName::Cfcm),
            "cfcc" => Ok(CurveName::Cfcc),
            "cscc" | "cscc-approx" => Ok(CurveName::Cscc),
            "uncoded" => Ok(CurveName::Uncoded),
            "csc-opt" | "csc_opt" => Ok(CurveName::CscOpt),
            _ => Err(format!(
                "unknown scheme '{s}' (expected cfcm, cfcc, cscc, uncoded, csc-opt)"
            )),
        }
    }
}

impl CurveName {
    fn label(self) -> &'static str {
        match self {
            CurveName::Cfcm => "cfcm",
            CurveName::Cfcc => "cfcc",
            CurveName::Cscc => "cscc",
            CurveName::Uncoded => "uncoded",
            CurveName::CscOpt => "csc-opt",
        }
    }

    fn simulated(self) -> Option<Scheme> {
        match self {
            CurveName::Cfcm => Some(Scheme::Cfcm),
            CurveName::Cfcc => Some(Scheme::Cfcc),
            CurveName::Cscc => Some(Scheme::Cscc),
            CurveName::Uncoded => Some(Scheme::Uncoded),
            CurveName::CscOpt => None,
        }
    }
}

fn parse_source(s: &str) -> Result<GraphSource, String> {
    match s.to_ascii_lowercase().as_str() {
        "exact" => Ok(GraphSource::Exact),
        "asymptotic" => Ok(GraphSource::Asymptotic),
        _ => Err(format!("unknown source '{s}' (expected exact or asymptotic)")),
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| usage(format!("invalid {what} '{v}': {e}"))))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(usage(format!("empty {what} list")));
    }
    Ok(items)
}

/// Merges flag values with an optional `key=value` file.
struct Settings {
    file: HashMap<String, String>,
}

impl Settings {
    fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let mut file = HashMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    usage(format!("{}:{}: expected key=value", path.display(), lineno + 1))
                })?;
                file.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self { file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| usage(format!("invalid {key} '{v}': {e}"))))
            .transpose()
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.get(flag, key)?
            .ok_or_else(|| usage(format!("missing required --{key}")))
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.get::<bool>(None, key)?.unwrap_or(false))
    }
}

struct Instance {
    k: usize,
    n: usize,
    m: Option<String>,
    delta: usize,
    ode: OdeOptions,
    format: Format,
}

impl Instance {
    fn resolve(args: &InstanceArgs, settings: &Settings) -> Result<Self, CliError> {
        let ode_step = settings.get(args.ode_step, "ode-step")?;
        if let Some(step) = ode_step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(usage(format!("--ode-step must be positive, got {step}")));
            }
        }
        Ok(Self {
            k: settings.require(args.k, "K")?,
            n: settings.require(args.n, "N")?,
            m: settings.get(args.m.clone(), "M")?,
            delta: settings.get(args.delta, "delta")?.unwrap_or(1),
            ode: OdeOptions {
                step: ode_step,
                ..OdeOptions::default()
            },
            format: settings
                .get::<String>(args.format.clone(), "format")?
                .map(|f| f.parse::<Format>().map_err(usage))
                .transpose()?
                .unwrap_or(Format::Csv),
        })
    }

    fn single_m(&self) -> Result<usize, CliError> {
        let raw = self.m.as_deref().ok_or_else(|| usage("missing required --M"))?;
        raw.trim()
            .parse()
            .map_err(|e| usage(format!("invalid M '{raw}': {e}")))
    }

    fn config(&self, m: usize, delta: usize) -> Result<CacheNetworkConfig, CliError> {
        CacheNetworkConfig::new(self.k, self.n, m, delta).map_err(usage)
    }
}

fn analytic_rate(curve: CurveName, cfg: &CacheNetworkConfig, ode: &OdeOptions) -> Result<f64, String> {
    let (k, n, m, delta) = (cfg.k(), cfg.n(), cfg.m(), cfg.delta());
    let q = cfg.q_f64();
    let result = match curve {
        CurveName::Cfcm => rate_cfcm_analytic(k, q),
        CurveName::Cfcc => rate_cfcc_with(k, q, ode),
        CurveName::Cscc => {
            let opts = OdeOptions {
                step: ode.step,
                ..*ode
            };
            rate_cfcc_with(k * delta, q, &opts).map(|r| r / delta as f64)
        }
        CurveName::Uncoded => rate_uncoded_analytic(k as u64, n as u64, m as u64),
        CurveName::CscOpt => rate_csc_opt_analytic(k as u64, n as u64, m as u64),
    };
    result.map_err(|e| e.to_string())
}

fn analytic_row(curve: CurveName, cfg: &CacheNetworkConfig, ode: &OdeOptions) -> OutputRow {
    let row = OutputRow::new(curve.label(), "analytic", cfg);
    match analytic_rate(curve, cfg, ode) {
        Ok(rate) => {
            let mut row = row.with_rate(rate, cfg);
            row.stderr = Some(0.0);
            row.trials = Some(0);
            row
        }
        Err(e) => row.with_error(e),
    }
}

/// Serializes rows as CSV (header, LF line endings) or a JSON array.
pub fn write_rows<W: Write>(out: W, rows: &[OutputRow], format: Format) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(out);
            for row in rows {
                w.serialize(row).map_err(runtime)?;
            }
            w.flush().map_err(runtime)?;
        }
        Format::Json => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, rows).map_err(runtime)?;
            out.write_all(b"\n").map_err(runtime)?;
        }
    }
    Ok(())
}

/// Parses a CSV table produced by [`write_rows`].
pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<OutputRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn cmd_analytic(args: &AnalyticArgs) -> Result<(Vec<OutputRow>, Format), CliError> {
    let settings = Settings::load(args.instance.config.as_ref())?;
    let inst = Instance::resolve(&args.instance, &settings)?;
    let schemes: String = settings.require(args.scheme.clone(), "scheme")?;
    let curves: Vec<CurveName> = parse_list(&schemes, "scheme")?;
    let cfg = inst.config(inst.single_m()?, inst.delta)?;
    if inst.delta != 1 && curves.iter().any(|c| matches!(c, CurveName::Cfcm | CurveName::Cfcc)) {
        return Err(usage("cfcm and cfcc are file-caching schemes; use --delta 1 or cscc-approx"));
    }
    let rows = curves.iter().map(|&c| analytic_row(c, &cfg, &inst.ode)).collect();
    Ok((rows, inst.format))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(Vec<OutputRow>, Format), CliError> {
    let settings = Settings::load(args.instance.config.as_ref())?;
    let inst = Instance::resolve(&args.instance, &settings)?;
    let scheme: CurveName = settings.require(args.scheme.clone(), "scheme")?.parse().map_err(usage)?;
    let Some(sim) = scheme.simulated() else {
        return Err(usage("csc-opt is analytic only"));
    };
    let trials = settings.require(args.trials, "trials")?;
    let seed = settings.require(args.seed, "seed")?;
    let source = settings
        .get::<String>(args.source.clone(), "source")?
        .map(|s| parse_source(&s).map_err(usage))
        .transpose()?
        .unwrap_or_default();
    let dump: Option<PathBuf> = settings.get(args.dump_trials.clone(), "dump-trials")?;
    let cfg = inst.config(inst.single_m()?, inst.delta)?;
    let spec = ExperimentSpec {
        cfg,
        scheme: sim,
        trials,
        master_seed: seed,
        source,
    };
    spec.validate().map_err(usage)?;
    let (est, outcomes) = run_experiment_detailed(&spec).map_err(runtime)?;
    if let Some(path) = dump {
        let file = std::fs::File::create(&path)
            .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        write_trial_csv(std::io::BufWriter::new(file), &spec, &outcomes).map_err(runtime)?;
    }
    let row = OutputRow::new(scheme.label(), source_label(source), &cfg).with_estimate(
        &est,
        &cfg,
        sim != Scheme::Uncoded,
    );
    Ok((vec![row], inst.format))
}

fn source_label(source: GraphSource) -> &'static str {
    match source {
        GraphSource::Exact => "monte-carlo",
        GraphSource::Asymptotic => "monte-carlo-asymptotic",
    }
}

fn default_m_grid(n: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..10).map(|i| (n * i + 5) / 10).collect();
    grid.dedup();
    grid
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(Vec<OutputRow>, Format, Option<PathBuf>), CliError> {
    let settings = Settings::load(args.instance.config.as_ref())?;
    let inst = Instance::resolve(&args.instance, &settings)?;
    let axis_name: String = settings.require(args.axis.clone(), "axis")?;
    let hold_ratio = settings.flag(args.hold_ratio, "hold-ratio")?;
    let axis = match axis_name.to_ascii_lowercase().as_str() {
        "m" => SweepAxis::M,
        "k" => SweepAxis::K { hold_ratio },
        "delta" => SweepAxis::Delta,
        other => return Err(usage(format!("unknown axis '{other}' (expected M, K or delta)"))),
    };
    let values: Vec<usize> = parse_list(&settings.require::<String>(args.values.clone(), "values")?, "value")?;
    let default_schemes = if axis == SweepAxis::Delta {
        "cscc,uncoded,csc-opt"
    } else {
        "cfcm,cfcc,uncoded,csc-opt"
    };
    let schemes: String = settings.get(args.schemes.clone(), "schemes")?.unwrap_or_else(|| default_schemes.into());
    let curves: Vec<CurveName> = parse_list(&schemes, "scheme")?;
    let trials = settings.get(args.trials, "trials")?.unwrap_or(1000);
    let seed = settings.get(args.seed, "seed")?.unwrap_or(0);
    let source = settings
        .get::<String>(args.source.clone(), "source")?
        .map(|s| parse_source(&s).map_err(usage))
        .transpose()?
        .unwrap_or_default();
    let out: Option<PathBuf> = settings.get(args.out.clone(), "out")?;

    // Secondary M grid for K and delta sweeps.
    let m_values: Vec<usize> = match (axis, inst.m.as_deref()) {
        (SweepAxis::M, _) => vec![0],
        (_, Some(list)) => parse_list(list, "M")?,
        (_, None) => default_m_grid(inst.n),
    };
    let base_delta = if axis == SweepAxis::Delta { 1 } else { inst.delta };

    let mut rows = Vec::new();
    for &m in &m_values {
        let base_cfg = inst.config(m, base_delta)?;
        // (scheme, per-value Monte-Carlo results)
        let mut simulated = Vec::new();
        for &curve in &curves {
            match curve.simulated().filter(|_| trials > 0) {
                Some(scheme) => {
                    let base = ExperimentSpec {
                        cfg: base_cfg,
                        scheme,
                        trials,
                        master_seed: seed,
                        source,
                    };
                    simulated.push((curve, Some(run_sweep(&base, axis, &values))));
                }
                None => simulated.push((curve, None)),
            }
        }
        for (i, &value) in values.iter().enumerate() {
            let cfg = crate::montecarlo::sweep_config(&base_cfg, axis, value);
            for (curve, points) in &simulated {
                let cfg = match &cfg {
                    Ok(cfg) => *cfg,
                    Err(e) => {
                        let mut row = OutputRow::new(curve.label(), "analytic", &base_cfg).with_error(e);
                        apply_axis_value(&mut row, axis, value);
                        rows.push(row);
                        continue;
                    }
                };
                let file_only = matches!(curve, CurveName::Cfcm | CurveName::Cfcc) && cfg.delta() != 1;
                if file_only {
                    rows.push(
                        OutputRow::new(curve.label(), "analytic", &cfg)
                            .with_error("file-caching scheme requires delta = 1"),
                    );
                } else {
                    rows.push(analytic_row(*curve, &cfg, &inst.ode));
                }
                if let Some(points) = points {
                    let point = &points[i];
                    let row = OutputRow::new(curve.label(), source_label(source), &cfg);
                    rows.push(match &point.estimate {
                        Ok(est) => row.with_estimate(est, &cfg, *curve != CurveName::Uncoded),
                        Err(e) => row.with_error(e),
                    });
                }
            }
        }
    }
    Ok((rows, inst.format, out))
}

fn apply_axis_value(row: &mut OutputRow, axis: SweepAxis, value: usize) {
    match axis {
        SweepAxis::M => row.m = value,
        SweepAxis::K { .. } => row.k = value,
        SweepAxis::Delta => row.delta = value,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing tables to `out` unless a sweep names an output file.
pub fn run<I, T, W>(args: I, out: &mut W) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            CliError::Usage(e.to_string())
        }
        _ => usage(e.render()),
    })?;
    execute(&cli.command, out)
}

pub fn execute<W: Write>(command: &Command, out: &mut W) -> Result<(), CliError> {
    match command {
        Command::Analytic(args) => {
            let (rows, format) = cmd_analytic(args)?;
            write_rows(out, &rows, format)
        }
        Command::Simulate(args) => {
            let (rows, format) = cmd_simulate(args)?;
            write_rows(out, &rows, format)
        }
        Command::Sweep(args) => {
            let (rows, format, path) = cmd_sweep(args)?;
            match path {
                Some(path) => {
                    let file = std::fs::File::create(&path)
                        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
                    write_rows(std::io::BufWriter::new(file), &rows, format)
                }
                None => write_rows(out, &rows, format),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> Result<String, CliError> {
        let mut buf = Vec::new();
        let mut argv = vec!["cache-sim"];
        argv.extend_from_slice(args);
        run(argv, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    fn rows(text: &str) -> Vec<OutputRow> {
        read_rows_csv(text.as_bytes()).unwrap()
    }

    #[test]
    fn analytic_uncoded_single_user() {
        let out = run_str(&["analytic", "--scheme", "uncoded", "--K", "1", "--N", "10", "--M", "5"]).unwrap();
        let r = rows(&out);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].rate, Some(0.5));
        assert_eq!(r[0].g_a, Some(0.0));
    }

    #[test]
    fn analytic_csc_opt_full_cache() {
        let out = run_str(&["analytic", "--scheme", "csc-opt", "--K", "50", "--N", "1000", "--M", "1000"]).unwrap();
        let r = rows(&out);
        assert_eq!(r[0].rate, Some(0.0));
        assert_eq!(r[0].g_a, None);
    }

    #[test]
    fn analytic_cfcm_delegates() {
        let out = run_str(&["analytic", "--scheme", "cfcm", "--K", "50", "--N", "1000", "--M", "100"]).unwrap();
        let expected = round_sig12(rate_cfcm_analytic(50, 0.1).unwrap());
        assert_eq!(rows(&out)[0].rate, Some(expected));
    }

    #[test]
    fn header_matches_schema() {
        let out = run_str(&["analytic", "--scheme", "cfcc", "--K", "5", "--N", "10", "--M", "3"]).unwrap();
        assert_eq!(
            out.lines().next().unwrap(),
            "scheme,source,K,N,M,delta,q,rate,stderr,trials,g_a,g_m,large_clique_coverage,error"
        );
        assert!(!out.contains('\r'));
    }

    #[test]
    fn usage_errors_exit_2() {
        for args in [
            vec!["analytic", "--scheme", "bogus", "--K", "5", "--N", "10", "--M", "3"],
            vec!["analytic", "--scheme", "cfcm", "--N", "10", "--M", "3"],
            vec!["analytic", "--scheme", "cfcm", "--K", "5", "--N", "10", "--M", "30"],
            vec!["simulate", "--scheme", "csc-opt", "--K", "5", "--N", "10", "--M", "3", "--trials", "5", "--seed", "1"],
            vec!["simulate", "--scheme", "cfcc", "--K", "5", "--N", "10", "--M", "3", "--trials", "5", "--seed", "1", "--delta", "2"],
            vec!["sweep", "--axis", "Q", "--values", "1", "--K", "5", "--N", "10"],
            vec!["frobnicate"],
        ] {
            let err = run_str(&args).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{args:?}: {err}");
        }
    }

    #[test]
    fn simulate_full_cache_is_zero() {
        let args = ["simulate", "--scheme", "cfcc", "--K", "50", "--N", "1000", "--M", "1000", "--trials", "100", "--seed", "7"];
        let out = run_str(&args).unwrap();
        let r = rows(&out);
        assert_eq!((r[0].rate, r[0].stderr, r[0].trials), (Some(0.0), Some(0.0), Some(100)));
        assert_eq!(out, run_str(&args).unwrap());
    }

    #[test]
    fn config_file_with_flag_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# instance\nscheme = uncoded\nK=1\nN=10\nM=2\n").unwrap();
        let p = path.to_str().unwrap();
        let out = run_str(&["analytic", "--config", p, "--M", "5"]).unwrap();
        assert_eq!(rows(&out)[0].rate, Some(0.5));
        let out = run_str(&["analytic", "--config", p]).unwrap();
        assert_eq!(rows(&out)[0].rate, Some(0.8));
    }

    #[test]
    fn sweep_rows_and_errors() {
        let out = run_str(&[
            "sweep", "--axis", "M", "--values", "0,10,11", "--K", "5", "--N", "10", "--trials", "20",
            "--schemes", "cfcc,csc-opt",
        ])
        .unwrap();
        let r = rows(&out);
        // valid values: cfcc analytic + MC, csc-opt analytic; M=11 one error row per scheme
        assert_eq!(r.len(), 8);
        assert_eq!(r[1].source, "monte-carlo");
        assert_eq!(r[1].rate, Some(5.0));
        assert!(r[2].error.is_some(), "csc-opt at M=0 is undefined");
        assert_eq!(r[4].rate, Some(0.0));
        assert!(r[6..].iter().all(|row| row.error.is_some()));
    }

    #[test]
    fn sweep_json_format() {
        let out = run_str(&[
            "sweep", "--axis", "delta", "--values", "1,2", "--K", "4", "--N", "20", "--M", "5",
            "--trials", "10", "--format", "json",
        ])
        .unwrap();
        let parsed: Vec<OutputRow> = serde_json::from_str(&out).unwrap();
        // cscc (analytic + MC), uncoded (analytic + MC), csc-opt analytic
        assert_eq!(parsed.len(), 10);
        assert_eq!(parsed[5].delta, 2);
    }

    #[test]
    fn rounding_is_idempotent() {
        for x in [0.1, 1.0 / 3.0, 123_456.789_012_345_67, 2.5e-17] {
            let r = round_sig12(x);
            assert_eq!(round_sig12(r), r);
            assert!((r - x).abs() <= 1e-11 * x.abs());
        }
    }
}
