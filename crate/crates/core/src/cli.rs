//! Command-line front end.
//!
//! Every output starts with a metadata header (version, config hash, seed):
//! `#` comment lines for CSV, a `meta` object for JSON. Files are written
//! to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance_evolution::{
    initial_moments, integrate_to_clocks, scaling_params, IntegrationOptions, RegularModel,
};
use crate::cycle_exact::{
    block_scaling_approx, error_floor_bit, exact_block_curve, limit_block_curve, CycleScalingParams,
};
use crate::density_evolution::{critical_data, stability_bound, threshold};
use crate::ensembles::{EnsembleConfig, EnsembleSpec};
use crate::error::{Error, Result};
use crate::peeling_sim::{mc_curve, trajectory_stats, ChannelKind, McOptions};
use crate::repro::{run_criterion, ReproOptions, CRITERIA};
use crate::scaling_predict::{fit_alpha_beta, predict_curve, FitOptions, FormKind, ScalingForm};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "LDPC_SCALING_THREADS";
pub const SEED_ENV: &str = "LDPC_SCALING_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ldpc-scaling", version, about = "Finite-length scaling of LDPC ensembles on the erasure channel")]
pub struct Cli {
    /// Worker threads for Monte Carlo runs.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Threshold, critical point and (with --scaling) scaling parameters.
    Analyze(AnalyzeArgs),
    /// Monte Carlo block and bit erasure curve.
    Simulate(SimulateArgs),
    /// Scaling-law prediction on an erasure-probability grid.
    Predict(PredictArgs),
    /// Least-squares fit of (alpha, beta) to a simulated curve.
    Fit(FitArgs),
    /// Cycle-code curves: exact, window approximation, limit or error floor.
    Cycle(CycleArgs),
    /// Empirical decoder-state moments against covariance evolution.
    Trajectory(TrajectoryArgs),
    /// Runs the reproduction checks and prints a pass/fail table.
    Repro(ReproArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelArg {
    Rand,
    Exact,
}

impl From<ChannelArg> for ChannelKind {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Rand => ChannelKind::Rand,
            ChannelArg::Exact => ChannelKind::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Basic,
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleMode {
    Exact,
    Scaling,
    Limit,
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum FitColumn {
    #[value(name = "pBgamma")]
    #[serde(rename = "pBgamma")]
    PBgamma,
    #[value(name = "pB")]
    #[serde(rename = "pB")]
    PB,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Grid {
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long)]
    pub eps_max: Option<f64>,
    #[arg(long, default_value_t = 9)]
    pub eps_steps: usize,
}

impl Grid {
    fn points(&self) -> Result<Vec<f64>> {
        let (lo, hi) = match (self.eps_min, self.eps_max) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidArgument("--eps-min and --eps-max are required".into())),
        };
        if !(lo <= hi) || self.eps_steps == 0 {
            return Err(Error::InvalidArgument(format!("empty grid [{lo}, {hi}] with {} steps", self.eps_steps)));
        }
        if self.eps_steps == 1 {
            return Ok(vec![lo]);
        }
        let last = self.eps_steps - 1;
        Ok((0..self.eps_steps)
            .map(|i| if i == last { hi } else { lo + (hi - lo) * i as f64 / last as f64 })
            .collect())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    #[serde(skip)]
    pub ensemble: PathBuf,
    /// Also compute alpha and beta (regular ensembles).
    #[arg(long)]
    pub scaling: bool,
    #[arg(long, default_value_t = crate::covariance_evolution::OMEGA)]
    pub omega: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub ensemble: PathBuf,
    /// Overrides the blocklength in the ensemble file.
    #[arg(long)]
    pub n: Option<usize>,
    #[command(flatten)]
    pub grid: Grid,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = crate::peeling_sim::DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ChannelArg::Rand)]
    pub channel: ChannelArg,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    /// JSON written by `analyze --scaling`.
    #[arg(long)]
    #[serde(skip)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub eps_star: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub nu_star: Option<f64>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Refined)]
    pub kind: KindArg,
    /// Which alpha to take from --params.
    #[arg(long, value_enum, default_value_t = ChannelArg::Rand)]
    pub channel: ChannelArg,
    #[command(flatten)]
    pub grid: Grid,
    /// Take the grid from the eps column of a curve CSV.
    #[arg(long)]
    #[serde(skip)]
    pub grid_from: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// CSV written by `simulate`.
    #[arg(long)]
    #[serde(skip)]
    pub curve: PathBuf,
    /// Blocklength; read from the curve header when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub eps_star: Option<f64>,
    /// Takes eps_star from `analyze` output.
    #[arg(long)]
    #[serde(skip)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FitColumn::PBgamma)]
    pub column: FitColumn,
    #[arg(long)]
    pub freeze_beta: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CycleArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub s: usize,
    #[arg(long, value_enum)]
    pub mode: CycleMode,
    #[command(flatten)]
    pub grid: Grid,
    /// Adds the memoryless-channel correction in scaling mode.
    #[arg(long)]
    pub channel_correction: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrajectoryArgs {
    #[arg(long)]
    #[serde(skip)]
    pub ensemble: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    /// Erasure fraction; defaults to the threshold.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 20_000)]
    pub trials: u64,
    /// Residual fractions at which to record the state, in decreasing order.
    /// The starting point is always included.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.40, 0.35, 0.30, 0.28])]
    pub nu: Vec<f64>,
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproArgs {
    /// Fewer Monte Carlo trials; results are indicative only.
    #[arg(long)]
    pub quick: bool,
    /// Subset of criteria, e.g. 1,3,10.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Vec<u32>,
    #[arg(long, env = SEED_ENV, default_value_t = ReproOptions::default().seed)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Meta {
    fn new<T: Serialize>(command: &str, args: &T, extra: &serde_json::Value, seed: Option<u64>) -> Result<Self> {
        Ok(Meta {
            tool: "ldpc-scaling".into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash: config_hash(command, args, extra)?,
            seed,
        })
    }

    fn csv_header(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "# {} {} {} config={} seed={}\n",
            self.tool, self.version, self.command, self.config_hash, seed
        )
    }
}

/// SHA-256 over the canonical JSON of the command, its numeric arguments
/// and the resolved inputs; first 16 hex digits.
pub fn config_hash<T: Serialize>(command: &str, args: &T, extra: &serde_json::Value) -> Result<String> {
    let value = serde_json::json!({ "command": command, "args": args, "inputs": extra });
    let digest = Sha256::digest(serde_json::to_vec(&value)?);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn csv_bytes(meta: &Meta, extra_header: &[String], columns: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut buf = meta.csv_header().into_bytes();
    for h in extra_header {
        buf.extend_from_slice(format!("# {h}\n").as_bytes());
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf);
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Parsed curve CSV: header comment lines and named columns.
pub struct CsvTable {
    pub comments: Vec<String>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_input(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let comments = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim().to_string())
            .collect();
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(CsvTable { comments, headers, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("curve has no column \"{name}\"")))?;
        self.rows
            .iter()
            .map(|r| {
                r[idx]
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad number in column {name}: {e}")))
            })
            .collect()
    }

    /// Value of `key=value` in the comment header.
    pub fn header_value(&self, key: &str) -> Option<String> {
        self.comments
            .iter()
            .flat_map(|c| c.split_whitespace())
            .find_map(|tok| tok.strip_prefix(key).and_then(|r| r.strip_prefix('=')).map(str::to_string))
    }
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))
}

fn load_ensemble(path: &Path, n: Option<usize>) -> Result<(EnsembleSpec, EnsembleConfig)> {
    let text = read_input(path)?;
    let mut cfg: EnsembleConfig = serde_json::from_str(&text)?;
    if let Some(n) = n {
        cfg.n = Some(n);
    }
    let spec = cfg.clone().into_spec()?;
    let cfg = spec_config(&spec, cfg);
    Ok((spec, cfg))
}

fn spec_config(spec: &EnsembleSpec, raw: EnsembleConfig) -> EnsembleConfig {
    // normalized coefficients, so equivalent inputs hash alike
    EnsembleConfig { n: raw.n, ..spec.to_config() }
}

/// Output of `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub meta: Meta,
    pub ensemble: EnsembleConfig,
    pub design_rate: f64,
    pub eps_star: f64,
    /// Absent when every erasure fraction is locally stable.
    #[serde(default)]
    pub stability_bound: Option<f64>,
    pub marginally_stable: bool,
    #[serde(default)]
    pub x_star: Option<f64>,
    #[serde(default)]
    pub nu_star: Option<f64>,
    #[serde(default)]
    pub dsigma_deps: Option<f64>,
    #[serde(default)]
    pub alpha_exact: Option<f64>,
    #[serde(default)]
    pub alpha_rand: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default)]
    pub delta_ss: Option<f64>,
    #[serde(default)]
    pub cycle: Option<CycleScalingParams>,
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let text = read_input(&args.ensemble)?;
    let mut cfg: EnsembleConfig = serde_json::from_str(&text)?;
    // the blocklength does not enter the asymptotic analysis
    let n_given = cfg.n;
    cfg.n = Some(cfg.n.unwrap_or(1));
    let spec = cfg.clone().into_spec()?;
    let config = EnsembleConfig { n: n_given, ..spec.to_config() };
    let meta = Meta::new("analyze", args, &serde_json::to_value(&config)?, None)?;
    let eps_star = threshold(&spec)?;
    let stab = stability_bound(&spec);
    let mut report = AnalyzeReport {
        meta,
        ensemble: config,
        design_rate: spec.design_rate().0,
        eps_star,
        stability_bound: stab.is_finite().then_some(stab),
        marginally_stable: false,
        x_star: None,
        nu_star: None,
        dsigma_deps: None,
        alpha_exact: None,
        alpha_rand: None,
        beta: None,
        omega: None,
        delta_ss: None,
        cycle: None,
    };
    match critical_data(&spec) {
        Ok(cd) => {
            report.x_star = Some(cd.x_star);
            report.nu_star = Some(cd.nu_star);
            report.dsigma_deps = Some(cd.dsigma_deps);
            if args.scaling {
                let p = scaling_params(&spec, args.omega).map_err(|e| match e {
                    Error::NotRegular => Error::InvalidArgument(
                        "scaling parameters are computed for regular ensembles only; use `fit` for others".into(),
                    ),
                    other => other,
                })?;
                report.alpha_exact = Some(p.alpha_exact);
                report.alpha_rand = Some(p.alpha_rand);
                report.beta = Some(p.beta);
                report.omega = Some(p.omega);
                report.delta_ss = Some(p.delta_ss);
            }
        }
        Err(Error::MarginallyStable) => {
            report.marginally_stable = true;
            if args.scaling && spec.is_cycle_code() && spec.is_poisson() {
                report.cycle = Some(CycleScalingParams::new(spec.design_rate().0, spec.s)?);
            }
        }
        Err(e) => return Err(e),
    }
    emit(args.out.as_deref(), &json_bytes(&report)?)
}

pub const CURVE_COLUMNS: [&str; 8] = ["eps", "trials", "pB", "pB_se", "pBgamma", "pBgamma_se", "pb", "pb_se"];

fn simulate(args: &SimulateArgs) -> Result<()> {
    let (spec, cfg) = load_ensemble(&args.ensemble, args.n)?;
    let grid = args.grid.points()?;
    let meta = Meta::new("simulate", args, &serde_json::to_value(&cfg)?, Some(args.seed))?;
    let opts = McOptions { gamma: args.gamma, channel: args.channel.into(), seed: args.seed };
    let curve = mc_curve(&spec, &grid, args.trials, &opts)?;
    for w in &curve.warnings {
        eprintln!("warning: {w}");
    }
    let threshold = curve.large_threshold.map_or("none".to_string(), |t| t.to_string());
    let extra = vec![format!(
        "n={} gamma={} channel={} large_threshold={threshold}",
        spec.n,
        args.gamma,
        match args.channel {
            ChannelArg::Rand => "rand",
            ChannelArg::Exact => "exact",
        }
    )];
    let rows: Vec<Vec<String>> = curve
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.eps),
                r.trials.to_string(),
                fmt_f64(r.p_block()),
                fmt_f64(r.p_block_se()),
                fmt_f64(r.p_block_gamma()),
                fmt_f64(r.p_block_gamma_se()),
                fmt_f64(r.p_bit()),
                fmt_f64(r.p_bit_se()),
            ]
        })
        .collect();
    emit(args.out.as_deref(), &csv_bytes(&meta, &extra, &CURVE_COLUMNS, &rows)?)
}

fn read_report(path: &Path) -> Result<AnalyzeReport> {
    Ok(serde_json::from_str(&read_input(path)?)?)
}

fn predict(args: &PredictArgs) -> Result<()> {
    let report = args.params.as_deref().map(read_report).transpose()?;
    let from_report = |f: fn(&AnalyzeReport) -> Option<f64>| report.as_ref().and_then(f);
    let eps_star = args
        .eps_star
        .or(report.as_ref().map(|r| r.eps_star))
        .ok_or_else(|| Error::InvalidArgument("need --eps-star or --params".into()))?;
    let alpha = args
        .alpha
        .or_else(|| match args.channel {
            ChannelArg::Rand => from_report(|r| r.alpha_rand),
            ChannelArg::Exact => from_report(|r| r.alpha_exact),
        })
        .ok_or_else(|| Error::InvalidArgument("need --alpha or --params from `analyze --scaling`".into()))?;
    let kind = match args.kind {
        KindArg::Basic => FormKind::Basic,
        KindArg::Refined => FormKind::Refined,
    };
    let beta = match kind {
        FormKind::Basic => args.beta.unwrap_or(0.0),
        FormKind::Refined => args
            .beta
            .or_else(|| from_report(|r| r.beta))
            .ok_or_else(|| Error::InvalidArgument("refined form needs --beta or --params".into()))?,
    };
    let nu_star = args.nu_star.or_else(|| from_report(|r| r.nu_star));
    let mut form = ScalingForm::new(eps_star, alpha, beta, args.n, kind)?;
    if let Some(nu) = nu_star {
        form = form.with_nu_star(nu);
    }
    let grid = match &args.grid_from {
        Some(p) => CsvTable::read(p)?.column("eps")?,
        None => args.grid.points()?,
    };
    let inputs = serde_json::json!({ "eps_star": eps_star, "alpha": alpha, "beta": beta, "nu_star": nu_star, "grid": grid });
    let meta = Meta::new("predict", args, &inputs, None)?;
    let rows: Vec<Vec<String>> = predict_curve(&form, &grid)?
        .iter()
        .map(|r| {
            let mut v = vec![fmt_f64(r.eps), fmt_f64(r.p_block)];
            if let Some(pb) = r.p_bit {
                v.push(fmt_f64(pb));
            }
            v
        })
        .collect();
    let columns: &[&str] = if nu_star.is_some() { &["eps", "pB", "pb"] } else { &["eps", "pB"] };
    let extra = vec![format!("n={} eps_star={} alpha={} beta={}", args.n, fmt_f64(eps_star), fmt_f64(alpha), fmt_f64(beta))];
    emit(args.out.as_deref(), &csv_bytes(&meta, &extra, columns, &rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub meta: Meta,
    pub n: usize,
    pub eps_star: f64,
    pub column: String,
    pub points: usize,
    pub alpha: f64,
    pub beta: f64,
    pub residual: f64,
    pub converged: bool,
}

fn fit(args: &FitArgs) -> Result<()> {
    let table = CsvTable::read(&args.curve)?;
    let n = match args.n {
        Some(n) => n,
        None => table
            .header_value("n")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidArgument("blocklength not in the curve header; pass --n".into()))?,
    };
    let eps_star = match (args.eps_star, &args.params) {
        (Some(e), _) => e,
        (None, Some(p)) => read_report(p)?.eps_star,
        (None, None) => return Err(Error::InvalidArgument("need --eps-star or --params".into())),
    };
    let (pcol, secol) = match args.column {
        FitColumn::PBgamma => ("pBgamma", "pBgamma_se"),
        FitColumn::PB => ("pB", "pB_se"),
    };
    let eps = table.column("eps")?;
    let p = table.column(pcol)?;
    let se = table.column(secol)?;
    let opts = FitOptions { freeze_beta: args.freeze_beta, ..Default::default() };
    let r = fit_alpha_beta(&eps, &p, &se, eps_star, n, &opts)?;
    let inputs = serde_json::json!({ "n": n, "eps_star": eps_star, "eps": eps, "p": p, "se": se });
    let report = FitReport {
        meta: Meta::new("fit", args, &inputs, None)?,
        n,
        eps_star,
        column: pcol.into(),
        points: eps.len(),
        alpha: r.alpha,
        beta: r.beta,
        residual: r.residual,
        converged: r.converged,
    };
    emit(args.out.as_deref(), &json_bytes(&report)?)
}

fn cycle(args: &CycleArgs) -> Result<()> {
    let grid = args.grid.points()?;
    let meta = Meta::new("cycle", args, &serde_json::json!({ "grid": grid }), None)?;
    let (columns, rows): (Vec<&str>, Vec<Vec<String>>) = match args.mode {
        CycleMode::Exact => {
            if args.s != 0 {
                return Err(Error::Unsupported("the exact curve is available for s = 0 only".into()));
            }
            let erasures: Vec<usize> = grid.iter().map(|e| (e * args.n as f64).round() as usize).collect();
            let p = exact_block_curve(args.n, args.rate, &erasures)?;
            let rows = grid
                .iter()
                .zip(&erasures)
                .zip(&p)
                .map(|((&e, &k), &v)| vec![fmt_f64(e), k.to_string(), fmt_f64(v)])
                .collect();
            (vec!["eps", "erasures", "pB"], rows)
        }
        CycleMode::Scaling => {
            let params = CycleScalingParams::new(args.rate, args.s)?;
            let mut rows = Vec::new();
            for &e in &grid {
                let a = block_scaling_approx(args.n, args.rate, args.s, e, args.channel_correction)?;
                if let Some(w) = &a.warning {
                    eprintln!("warning: {w}");
                }
                rows.push(vec![fmt_f64(e), fmt_f64(params.window_variable(args.n, e)), fmt_f64(a.value)]);
            }
            (vec!["eps", "x", "pB"], rows)
        }
        CycleMode::Limit => {
            let rows = grid
                .iter()
                .map(|&e| Ok(vec![fmt_f64(e), fmt_f64(limit_block_curve(e, args.rate, args.s)?)]))
                .collect::<Result<_>>()?;
            (vec!["eps", "pB"], rows)
        }
        CycleMode::Floor => {
            let rows = grid
                .iter()
                .map(|&e| Ok(vec![fmt_f64(e), fmt_f64(error_floor_bit(args.n, e, args.rate, args.s)?)]))
                .collect::<Result<_>>()?;
            (vec!["eps", "pb"], rows)
        }
    };
    let extra = vec![format!("n={} rate={} s={}", args.n, args.rate, args.s)];
    emit(args.out.as_deref(), &csv_bytes(&meta, &extra, &columns, &rows)?)
}

pub const TRAJECTORY_COLUMNS: [&str; 19] = [
    "nu", "v", "survivors", "reliable", "s_mean", "s_mean_se", "t_mean", "t_mean_se", "d_ss", "d_ss_se", "d_st",
    "d_st_se", "d_tt", "d_tt_se", "sigma_ce", "tau_ce", "d_ss_ce", "d_st_ce", "d_tt_ce",
];

fn trajectory(args: &TrajectoryArgs) -> Result<()> {
    let (spec, cfg) = load_ensemble(&args.ensemble, args.n)?;
    let eps = match args.eps {
        Some(e) => e,
        None => threshold(&spec)?,
    };
    let n = spec.n as f64;
    let erasures = (n * eps).round() as usize;
    let eps_eff = erasures as f64 / n;
    let mut checkpoints = vec![erasures];
    checkpoints.extend(args.nu.iter().map(|nu| (nu * n).round() as usize));
    let meta = Meta::new("trajectory", args, &serde_json::to_value(&cfg)?, Some(args.seed))?;
    let stats = trajectory_stats(&spec, eps_eff, args.trials, &checkpoints, args.seed)?;
    // covariance-evolution prediction where available
    let predicted: Option<Vec<[f64; 5]>> = match RegularModel::from_spec(&spec) {
        Ok(model) => {
            let clocks: Vec<f64> = checkpoints[1..].iter().map(|&v| eps_eff - v as f64 / n).collect();
            let init = initial_moments(&model, eps_eff);
            let traj = integrate_to_clocks(&model, eps_eff, &clocks, &IntegrationOptions::default())?;
            Some(
                std::iter::once(&init)
                    .chain(traj.states[1..].iter())
                    .map(|s| [s.sigma, s.tau, s.d_ss(), s.d_st(), s.d_tt()])
                    .collect(),
            )
        }
        Err(Error::NotRegular) => None,
        Err(e) => return Err(e),
    };
    let mut rows = Vec::new();
    for (i, cp) in stats.checkpoints.iter().enumerate() {
        if !cp.reliable {
            eprintln!("warning: only {} surviving trials at v = {}; estimate unreliable", cp.survivors, cp.v);
        }
        let mut row = vec![
            fmt_f64(cp.nu),
            cp.v.to_string(),
            cp.survivors.to_string(),
            cp.reliable.to_string(),
            fmt_f64(cp.mean[0]),
            fmt_f64(cp.mean_se[0]),
            fmt_f64(cp.mean[1]),
            fmt_f64(cp.mean_se[1]),
            fmt_f64(cp.cov[0]),
            fmt_f64(cp.cov_se[0]),
            fmt_f64(cp.cov[1]),
            fmt_f64(cp.cov_se[1]),
            fmt_f64(cp.cov[2]),
            fmt_f64(cp.cov_se[2]),
        ];
        let pred = predicted.as_ref().map_or([f64::NAN; 5], |p| p[i]);
        row.extend(pred.iter().map(|&x| fmt_f64(x)));
        rows.push(row);
    }
    let extra = vec![format!("n={} eps={} erasures={erasures} trials={}", spec.n, fmt_f64(eps_eff), args.trials)];
    emit(args.out.as_deref(), &csv_bytes(&meta, &extra, &TRAJECTORY_COLUMNS, &rows)?)
}

#[derive(Debug, Serialize)]
struct ReproReport {
    meta: Meta,
    quick: bool,
    results: Vec<crate::repro::CriterionResult>,
}

fn repro(args: &ReproArgs) -> Result<()> {
    let ids: Vec<u32> = if args.criteria.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { args.criteria.clone() };
    let opts = ReproOptions { quick: args.quick, seed: args.seed };
    let mut results = Vec::new();
    for id in ids {
        let r = run_criterion(id, &opts)?;
        println!("{}", r.line());
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed{}", results.len(), if args.quick { " (quick mode)" } else { "" });
    if let Some(out) = &args.out {
        let report = ReproReport { meta: Meta::new("repro", args, &serde_json::Value::Null, Some(args.seed))?, quick: args.quick, results };
        write_atomic(out, &json_bytes(&report)?)?;
    }
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidDistribution(_) | Error::NegativeCoefficient { .. } => "invalid_distribution",
        Error::InvalidEnsemble(_) => "invalid_ensemble",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::MarginallyStable => "marginally_stable",
        Error::NotRegular => "not_regular",
        Error::InfeasibleState(_) => "infeasible_state",
        Error::Numerical(_) => "numerical",
        Error::Unsupported(_) => "unsupported",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

/// Structured error report printed on stderr.
pub fn error_report(e: &Error) -> String {
    serde_json::json!({
        "error": { "kind": error_kind(e), "message": e.to_string(), "exit_code": exit_code(e) }
    })
    .to_string()
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Predict(a) => predict(a),
        Command::Fit(a) => fit(a),
        Command::Cycle(a) => cycle(a),
        Command::Trajectory(a) => trajectory(a),
        Command::Repro(a) => repro(a),
    }
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_report(&e));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, -7.0, 0.42944] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17);
        }
    }

    #[test]
    fn grid_points() {
        let g = Grid { eps_min: Some(0.1), eps_max: Some(0.3), eps_steps: 3 };
        assert_eq!(g.points().unwrap(), vec![0.1, 0.2, 0.3]);
        assert!(Grid { eps_min: None, eps_max: Some(0.3), eps_steps: 3 }.points().is_err());
        assert!(Grid { eps_min: Some(0.4), eps_max: Some(0.3), eps_steps: 3 }.points().is_err());
    }

    #[test]
    fn csv_header_and_values() {
        let meta = Meta {
            tool: "ldpc-scaling".into(),
            version: VERSION.into(),
            command: "simulate".into(),
            config_hash: "00ff".into(),
            seed: Some(4),
        };
        let bytes = csv_bytes(&meta, &["n=64 gamma=0.1".into()], &["eps", "pB"], &[vec!["1".into(), "2".into()]]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(!text.contains('\r'));
        let t = CsvTable::parse(&text).unwrap();
        assert_eq!(t.header_value("n").as_deref(), Some("64"));
        assert_eq!(t.header_value("seed").as_deref(), Some("4"));
        assert_eq!(t.column("pB").unwrap(), vec![2.0]);
        assert!(t.column("pb").is_err());
    }

    #[test]
    fn hash_depends_on_inputs_only() {
        let a = Grid { eps_min: Some(0.1), eps_max: Some(0.3), eps_steps: 3 };
        let h1 = config_hash("x", &a, &serde_json::json!(1)).unwrap();
        assert_eq!(h1, config_hash("x", &a, &serde_json::json!(1)).unwrap());
        assert_ne!(h1, config_hash("x", &a, &serde_json::json!(2)).unwrap());
        assert_eq!(h1.len(), 16);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), EXIT_USAGE);
        let r: serde_json::Value = serde_json::from_str(&error_report(&Error::MarginallyStable)).unwrap();
        assert_eq!(r["error"]["exit_code"], 3);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one\n").unwrap();
        write_atomic(&p, b"two\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
