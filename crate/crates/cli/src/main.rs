//! `btg`: command-line driver for BTG experiments.
//!
//! Every command talks to the HTTP service: an in-process one bound to
//! 127.0.0.1:0 by default, or a running server given by `--server`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use btg_client::{Client, ClientError};
use btg_core::config::ExperimentConfig;
use btg_core::data::read_points_csv_path;
use btg_core::datasets::{Split, Synthetic};
use btg_core::experiments::{
    linear_fit, write_loocv_timing_csv, write_metrics_csv, write_quantile_bench_csv, write_sweep_csv, QuantileBenchConfig, RuleSweepConfig,
};
use btg_core::metrics::metrics;
use btg_core::models::{write_predictions_csv, ModelSpec};
use btg_core::quadrature::RuleKind;
use btg_core::wire::{DatasetDto, ModelInfo, SplitDto};
use btg_core::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "btg", version, about = "Bayesian transformed Gaussian process experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training CSV (`x1..xd,y`); defaults to the configured data source.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Test or prediction-point CSV.
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    /// Output file (a directory for `generate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model name such as GP, WGP-BC, CWGP-L-SA or BTG-L-SA.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true, value_parser = ["sparse", "qmc", "mc"])]
    quadrature: Option<String>,
    /// Sparse-grid level.
    #[arg(long, global = true)]
    level: Option<usize>,
    /// QMC / MC node count.
    #[arg(long, global = true)]
    nodes: Option<usize>,
    /// Sparsification threshold.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Write the quadrature rule (node coordinates and weight per row).
    #[arg(long, global = true)]
    export_rule: Option<PathBuf>,
    /// Use a running service instead of an in-process one.
    #[arg(long, global = true)]
    server: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic train/test pair to `--out DIR`.
    Generate {
        #[arg(long, default_value = "int-sine")]
        kind: String,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        test_size: Option<usize>,
    },
    /// Fit a model and write its summary table.
    Fit,
    /// Fit, then write median and interval predictions at the `--test` points.
    Predict {
        /// Comma-separated quantile levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Leave-one-out cross-validation of a BTG model.
    Cv {
        #[arg(long, default_value_t = 0.95)]
        interval: f64,
    },
    /// Timing tables.
    Benchmark {
        #[arg(long, value_enum, default_value_t = BenchKind::Quantile)]
        kind: BenchKind,
        /// Mixtures for the quantile benchmark.
        #[arg(long, default_value_t = 200)]
        mixtures: usize,
        /// Problem sizes for the LOOCV benchmark.
        #[arg(long, value_delimiter = ',', default_value = "200,400")]
        sizes: Vec<usize>,
        /// Also time the refit-per-point LOOCV path.
        #[arg(long)]
        naive: bool,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Kept-node prefixes per rule for the rules sweep.
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
    /// Fit a list of models on one dataset and tabulate RMSE and MAE.
    Compare {
        /// Comma-separated model names; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Fit and print the node table (or MLE parameters).
    Inspect {
        /// Rows to print, heaviest weights first.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BenchKind {
    Quantile,
    Rules,
    Loocv,
}

#[derive(Debug)]
struct Failure {
    kind: ErrorKind,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { kind: e.kind(), message: e.to_string() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Failure { kind: e.kind(), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { kind: ErrorKind::Io, message: e.to_string() }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { kind: ErrorKind::Config, message: msg.into() }
}

type CliResult<T> = Result<T, Failure>;

/// Files written by the current command, removed again if it fails.
#[derive(Default)]
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> btg_core::Result<()>) -> CliResult<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
        self.written.push(path.to_path_buf());
        fs::write(path, buf).map_err(|e| io_failure(path, e))
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { kind: ErrorKind::Io, message: format!("{}: {e}", path.display()) }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(4);
        }
    };
    let mut outputs = Outputs::default();
    match rt.block_on(run(&cli, &mut outputs)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            outputs.discard();
            eprintln!("error: {}", f.message);
            ExitCode::from(exit_code(f.kind))
        }
    }
}

async fn connect(g: &Global) -> CliResult<Client> {
    if let Some(url) = &g.server {
        return Ok(Client::new(url.clone()));
    }
    let (addr, _) = btg_service::spawn("127.0.0.1:0").await?;
    Ok(Client::new(format!("http://{addr}")))
}

/// Configuration file plus command-line overrides.
fn load_config(g: &Global) -> CliResult<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = &g.model {
        cfg.model = m.clone();
    }
    if let Some(q) = &g.quadrature {
        cfg.quadrature.kind = RuleKind::parse(q)?;
    }
    if let Some(l) = g.level {
        cfg.quadrature.level = l;
    }
    if let Some(n) = g.nodes {
        cfg.quadrature.nodes = n;
    }
    if let Some(e) = g.eps {
        cfg.eps = e;
    }
    if let Some(p) = &g.data {
        cfg.data.synthetic = None;
        cfg.data.train = Some(p.clone());
    }
    if let Some(p) = &g.test {
        cfg.data.test = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(g: &Global) -> CliResult<&Path> {
    g.out.as_deref().ok_or_else(|| config_error("--out is required for this command"))
}

async fn run(cli: &Cli, outputs: &mut Outputs) -> CliResult<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    let client = connect(g).await?;
    match &cli.command {
        Command::Generate { kind, train_size, test_size } => generate(&client, g, &cfg, kind, *train_size, *test_size, outputs).await,
        Command::Fit => {
            let (info, _) = fit(&client, g, &cfg, outputs).await?;
            let text = client.summary_csv(&info.id).await?;
            if let Some(out) = &g.out {
                outputs.write(out, |b| {
                    b.extend_from_slice(text.as_bytes());
                    Ok(())
                })?;
            }
            print_info(&info);
            Ok(())
        }
        Command::Predict { levels } => predict(&client, g, &cfg, levels.clone(), outputs).await,
        Command::Cv { interval } => {
            let (info, _) = fit(&client, g, &cfg, outputs).await?;
            if !info.bayesian {
                return Err(config_error(format!("cv needs a BTG model, got {}", info.model)));
            }
            let report = client.loocv(&info.id, *interval).await?;
            if let Some(out) = &g.out {
                outputs.write(out, |b| report.write_csv(b))?;
            }
            println!("{}: LOOCV rmse {:.6} mae {:.6} mean log density {:.6}", info.model, report.rmse, report.mae, report.mean_log_density);
            Ok(())
        }
        Command::Benchmark { kind, mixtures, sizes, naive, reps, steps } => {
            benchmark(&client, g, &cfg, *kind, *mixtures, sizes, *naive, *reps, *steps, outputs).await
        }
        Command::Compare { models } => {
            let models = models.clone().unwrap_or_else(|| cfg.models.clone());
            for m in &models {
                ModelSpec::parse(m)?;
            }
            let split = cfg.load_split()?;
            if split.test.is_empty() {
                return Err(config_error("compare needs labelled test data (--test or a synthetic source)"));
            }
            let reports = client.compare(&models, SplitDto::from(&split), &cfg).await?;
            if let Some(out) = &g.out {
                outputs.write(out, |b| write_metrics_csv(b, &reports))?;
            }
            println!("{:<14} {:>10} {:>10} {:>10}", "model", "rmse", "mae", "fit_s");
            for r in &reports {
                println!("{:<14} {:>10.5} {:>10.5} {:>10.3}", r.model, r.rmse, r.mae, r.fit_seconds);
            }
            Ok(())
        }
        Command::Inspect { top } => {
            let (info, _) = fit(&client, g, &cfg, outputs).await?;
            print_info(&info);
            let text = client.summary_csv(&info.id).await?;
            if let Some(out) = &g.out {
                outputs.write(out, |b| {
                    b.extend_from_slice(text.as_bytes());
                    Ok(())
                })?;
            }
            if info.bayesian {
                let mut nodes = client.nodes(&info.id).await?.nodes;
                nodes.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()));
                println!("{:>12} {:>14} {:>5}  coords", "weight", "log_evidence", "kept");
                for n in nodes.iter().take(*top) {
                    let ev = n.log_evidence.map_or("invalid".to_string(), |v| format!("{v:.4}"));
                    let coords: Vec<String> = n.coords.iter().map(|c| format!("{c:.4}")).collect();
                    println!("{:>12.4e} {:>14} {:>5}  {}", n.weight, ev, n.kept, coords.join(" "));
                }
            } else {
                print!("{text}");
            }
            Ok(())
        }
    }
}

fn print_info(info: &ModelInfo) {
    if info.bayesian {
        println!(
            "{}: n={} d={} nodes={} kept={} dropped mass={:.3e} fit {:.3}s",
            info.model, info.n_train, info.dim, info.nodes, info.kept, info.dropped_mass, info.fit_seconds
        );
    } else {
        println!("{}: n={} d={} fit {:.3}s", info.model, info.n_train, info.dim, info.fit_seconds);
    }
}

async fn generate(
    client: &Client,
    g: &Global,
    cfg: &ExperimentConfig,
    kind: &str,
    train_size: Option<usize>,
    test_size: Option<usize>,
    outputs: &mut Outputs,
) -> CliResult<()> {
    let kind = Synthetic::parse(kind)?;
    let dir = require_out(g)?;
    let split = client.generate(kind, cfg.seed, train_size, test_size).await?.to_split()?;
    outputs.write(&dir.join("train.csv"), |b| split.train.write_csv(b))?;
    outputs.write(&dir.join("test.csv"), |b| split.test.write_csv(b))?;
    println!("{}: {} train / {} test rows in {}", kind.name(), split.train.len(), split.test.len(), dir.display());
    Ok(())
}

async fn fit(client: &Client, g: &Global, cfg: &ExperimentConfig, outputs: &mut Outputs) -> CliResult<(ModelInfo, Split)> {
    let split = cfg.load_split()?;
    let info = client.fit(&cfg.model, DatasetDto::from(&split.train), cfg).await?;
    if let Some(path) = &g.export_rule {
        if !info.bayesian {
            return Err(config_error(format!("--export-rule needs a BTG model, got {}", info.model)));
        }
        let rule = client.rule(&info.id).await?.to_rule()?;
        outputs.write(path, |b| rule.write_csv(b))?;
    }
    Ok((info, split))
}

async fn predict(client: &Client, g: &Global, cfg: &ExperimentConfig, levels: Option<Vec<f64>>, outputs: &mut Outputs) -> CliResult<()> {
    let out = require_out(g)?.to_path_buf();
    let (points, truths) = match &g.test {
        Some(p) => read_points_csv_path(p)?,
        None => {
            let split = cfg.load_split()?;
            if split.test.is_empty() {
                return Err(config_error("predict needs points: pass --test or configure a test source"));
            }
            (split.test.points(), Some(split.test.y.clone()))
        }
    };
    let (info, _) = fit(client, g, cfg, outputs).await?;
    let levels = levels.unwrap_or_else(|| cfg.levels.clone());
    let preds = client.predict(&info.id, points.clone(), Some(levels.clone())).await?;
    outputs.write(&out, |b| write_predictions_csv(b, &points, &preds, &levels))?;
    match truths {
        Some(y) => {
            let medians: Vec<f64> = preds.iter().map(|p| p.median).collect();
            let m = metrics(&medians, &y)?;
            println!("{}: {} points, rmse {:.6} mae {:.6}", info.model, preds.len(), m.rmse, m.mae);
        }
        None => println!("{}: {} points", info.model, preds.len()),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
async fn benchmark(
    client: &Client,
    g: &Global,
    cfg: &ExperimentConfig,
    kind: BenchKind,
    mixtures: usize,
    sizes: &[usize],
    naive: bool,
    reps: usize,
    steps: usize,
    outputs: &mut Outputs,
) -> CliResult<()> {
    match kind {
        BenchKind::Quantile => {
            let bc = QuantileBenchConfig { mixtures, reps, seed: cfg.seed, ..Default::default() };
            let rows = client.bench_quantile(&bc).await?;
            if let Some(out) = &g.out {
                outputs.write(out, |b| write_quantile_bench_csv(b, &rows))?;
            }
            println!("{:<16} {:>12} {:>12}", "bound", "seconds", "cdf evals");
            for r in &rows {
                println!("{:<16} {:>12.4} {:>12}", r.bound.name(), r.median_seconds, r.evaluations);
            }
        }
        BenchKind::Loocv => {
            let rows = client.bench_loocv(sizes, naive, reps, cfg.seed).await?;
            if let Some(out) = &g.out {
                outputs.write(out, |b| write_loocv_timing_csv(b, &rows))?;
            }
            for r in &rows {
                let naive = r.naive_seconds.map_or(String::new(), |t| format!("  naive {t:.4}s"));
                println!("n={:<5} fast {:.4}s{naive}", r.n, r.fast_seconds);
            }
        }
        BenchKind::Rules => {
            // defaults to the desk-scale six-hump camel problem
            let split = if g.data.is_some() || cfg.data.synthetic.is_some() || cfg.data.train.is_some() {
                cfg.load_split()?
            } else {
                Synthetic::SixHumpCamel.generate_sized(30, 100, cfg.seed)
            };
            if split.test.is_empty() {
                return Err(config_error("the rules benchmark needs labelled test data"));
            }
            let family = match &g.model {
                Some(m) => {
                    let spec = ModelSpec::parse(m)?;
                    if !spec.is_bayesian() {
                        return Err(config_error("the rules benchmark sweeps BTG models"));
                    }
                    spec.family
                }
                None => RuleSweepConfig::default().family,
            };
            let sweep_cfg = RuleSweepConfig { family, level: cfg.quadrature.level, steps, reps, ..Default::default() };
            let sweep = client.bench_rules(SplitDto::from(&split), cfg, &sweep_cfg).await?;
            if let Some(out) = &g.out {
                outputs.write(out, |b| write_sweep_csv(b, &sweep))?;
            }
            println!("{} nodes per rule", sweep.sparse_nodes);
            for rule in [RuleKind::SparseGrid, RuleKind::Qmc] {
                let c = sweep.curve(rule);
                let Some(last) = c.last() else { continue };
                let ks: Vec<f64> = c.iter().map(|p| p.kept as f64).collect();
                let ts: Vec<f64> = c.iter().map(|p| p.seconds).collect();
                let (a, b) = linear_fit(&ks, &ts);
                println!("{:<8} points {:>3}  final mse {:.5}  time ≈ {:.3e} + {:.3e}·kept", rule.name(), c.len(), last.mse, a, b);
            }
        }
    }
    Ok(())
}
