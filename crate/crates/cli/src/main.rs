//! `adapt`: run, simulate, compare and serve adaptive p-value thresholding.

mod config;
mod error;
mod io;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adapt_core::baselines::{barber_candes, bh, storey_bh};
use adapt_core::engine::{info_loss_correlation, StrategyKind};
use adapt_core::sim::{run_replicates, Method, Scenario};
use adapt_core::{run_adapt, AdaptConfig, FeaturePair, Family};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{RunConfig, SCHEMA_VERSION};
use error::{io_err, write_err, CliError, CliResult};
use io::{indicator, read_table, write_table, Column};

#[derive(Parser)]
#[command(name = "adapt", version, about = "Adaptive p-value thresholding with side information")]
struct Cli {
    /// Worker threads for parallel work; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive procedure on a CSV of p-values and covariates.
    Run(RunArgs),
    /// Monte Carlo FDR and power on a built-in scenario.
    Simulate(SimulateArgs),
    /// Benjamini-Hochberg, Storey-BH and Barber-Candès on a CSV.
    Baselines(BaselineArgs),
    /// Start the session server.
    Serve(ServeArgs),
    /// Replay a session action log and print the final state.
    Replay(ReplayArgs),
    /// Print the default run configuration as TOML.
    Config {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Levels to report, e.g. `--alpha 0.05,0.1`.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// `beta` or `gaussian`.
    #[arg(long)]
    family: Option<Family>,
    /// Candidate featurizations, e.g. `spline:6,intercept/spline:4`.
    #[arg(long, value_delimiter = ',')]
    featurization: Option<Vec<FeaturePair>>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(a) = &self.alpha {
            cfg.alpha = a.clone();
        }
        if let Some(f) = self.family {
            cfg.adapt.family = f;
        }
        if let Some(c) = &self.featurization {
            cfg.adapt.candidates = c.clone();
        }
        if let Some(s) = self.s0 {
            cfg.adapt.s0 = s;
        }
        if let Some(s) = self.seed {
            cfg.adapt.em.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Input CSV with a header and a p-value column.
    input: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Per-hypothesis output CSV.
    #[arg(short, long, default_value = "adapt_results.csv")]
    output: PathBuf,
    /// Diagnostics JSON.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Add the information-loss curve to the diagnostics.
    #[arg(long)]
    info_loss: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodName {
    Adapt,
    Bh,
    Storey,
    Bc,
}

#[derive(Args)]
struct SimulateArgs {
    /// `example1-circle`, `example1-ellipse`, `example1-ring`, `example1-null` or `example2`.
    #[arg(long, default_value = "example1-circle")]
    scenario: Scenario,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [MethodName::Adapt, MethodName::Bh, MethodName::Storey].map(|m| m.to_possible_value().unwrap().get_name().to_string()))]
    methods: Vec<String>,
    /// Storey's lambda.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Base seed for the replicates.
    #[arg(long, default_value_t = 2024)]
    data_seed: u64,
    #[command(flatten)]
    overrides: Overrides,
    /// Summary CSV.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Full report with every replicate, as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value = "p")]
    p_column: String,
    #[arg(short, long, default_value = "baselines.csv")]
    output: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Persist action logs here and restore them on startup.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    #[arg(long, default_value_t = adapt_service::MAX_HYPOTHESES)]
    max_hypotheses: usize,
}

#[derive(Args)]
struct ReplayArgs {
    /// Action log JSON, as served by `GET /sessions/{id}/log`.
    log: PathBuf,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn fmt_q(v: f64) -> String {
    format!("{v}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(path, text).map_err(write_err(path))
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    schema: u32,
    config: &'a AdaptConfig,
    pair: &'a FeaturePair,
    selection: &'a [adapt_core::glm::CandidateScore],
    trace: &'a adapt_core::ProtocolTrace,
    thresholds: &'a [f64],
    rejections: Vec<Level>,
    info_loss: Option<Vec<adapt_core::engine::InfoLossPoint>>,
}

#[derive(Serialize)]
struct Level {
    alpha: f64,
    count: usize,
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let cfg = args.overrides.load()?;
    let table = read_table(&args.input, &cfg.columns)?;
    let adapt = AdaptConfig {
        alpha: None,
        ..cfg.adapt.clone()
    };
    let res = run_adapt(&table.set, &adapt)?;
    let n = table.set.len();
    let q = res.qvalues.clone().ok_or_else(|| CliError::Internal("protocol stopped before full unmasking".into()))?;
    let mut cols = vec![Column {
        name: "q_value".into(),
        values: q.iter().copied().map(fmt_q).collect(),
    }];
    let mut levels = Vec::new();
    for &a in &cfg.alpha {
        let rej = res.rejections_at(a).expect("q-values present");
        eprintln!("alpha {a}: {} rejections", rej.len());
        levels.push(Level { alpha: a, count: rej.len() });
        cols.push(Column {
            name: format!("rejected@{a}"),
            values: indicator(n, &rej),
        });
    }
    cols.push(Column {
        name: "lfdr_final".into(),
        values: res.lfdr.iter().map(f64::to_string).collect(),
    });
    write_table(&args.output, &table, &cols)?;
    if let Some(path) = &args.diagnostics {
        let info_loss = if args.info_loss {
            Some(info_loss_correlation(&table.set, &res, &adapt, &cfg.alpha)?)
        } else {
            None
        };
        write_json(
            path,
            &Diagnostics {
                schema: SCHEMA_VERSION,
                config: &adapt,
                pair: &res.pair,
                selection: &res.selection,
                trace: &res.trace,
                thresholds: res.surface.values(),
                rejections: levels,
                info_loss,
            },
        )?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let cfg = args.overrides.load()?;
    let methods = args
        .methods
        .iter()
        .map(|m| match MethodName::from_str(m, true) {
            Ok(MethodName::Adapt) => Ok(Method::Adapt {
                label: "adapt".into(),
                config: Box::new(cfg.adapt.clone()),
            }),
            Ok(MethodName::Bh) => Ok(Method::Bh),
            Ok(MethodName::Storey) => Ok(Method::Storey { lambda: args.lambda }),
            Ok(MethodName::Bc) => Ok(Method::BarberCandes),
            Err(_) => Err(CliError::Usage(format!("unknown method `{m}`; expected adapt, bh, storey or bc"))),
        })
        .collect::<CliResult<Vec<_>>>()?;
    if cfg.adapt.strategy != StrategyKind::RevealOne {
        eprintln!("note: adapt runs with the {:?} strategy", cfg.adapt.strategy);
    }
    let report = run_replicates(&args.scenario, &methods, &cfg.alpha, args.reps, args.data_seed)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["method", "alpha", "reps", "mean_fdp", "se_fdp", "mean_power", "se_power"])
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        for s in &report.summary {
            w.write_record([
                s.method.clone(),
                s.alpha.to_string(),
                s.reps.to_string(),
                format!("{:.6}", s.mean_fdp),
                format!("{:.6}", s.se_fdp),
                opt(s.mean_power),
                opt(s.se_power),
            ])
            .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let text = String::from_utf8(buf).expect("csv is utf-8");
    print!("{text}");
    if let Some(path) = &args.output {
        std::fs::write(path, format!("#schema={SCHEMA_VERSION}\n{text}")).map_err(write_err(path))?;
    }
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    Ok(())
}

fn cmd_baselines(args: &BaselineArgs) -> CliResult<()> {
    let columns = config::Columns {
        p: args.p_column.clone(),
        covariates: None,
    };
    let table = read_table(&args.input, &columns)?;
    let p = table.set.pvalues();
    let n = p.len();
    let mut cols = Vec::new();
    for &a in &args.alpha {
        for res in [bh(p, a)?, storey_bh(p, a, args.lambda)?, barber_candes(p, a)?] {
            eprintln!("{} alpha {a}: {} rejections", res.method, res.rejections.len());
            cols.push(Column {
                name: format!("{}@{a}", res.method),
                values: indicator(n, &res.rejections),
            });
        }
    }
    write_table(&args.output, &table, &cols)
}

fn cmd_serve(args: &ServeArgs) -> CliResult<()> {
    let options = adapt_service::ServiceOptions {
        max_hypotheses: args.max_hypotheses,
        state_dir: args.state_dir.clone(),
        ..adapt_service::ServiceOptions::default()
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(adapt_service::serve(args.addr, options))
        .map_err(|e| CliError::Internal(format!("server: {e}")))
}

#[derive(Serialize)]
struct Failure {
    position: usize,
    error: adapt_service::ApiError,
}

#[derive(Serialize)]
struct ReplayOutput {
    schema: u32,
    seq: u64,
    finalized: bool,
    failed: Vec<Failure>,
    result: Option<adapt_service::FinalResult>,
    snapshot: adapt_core::Snapshot,
}

fn cmd_replay(args: &ReplayArgs) -> CliResult<()> {
    let bytes = std::fs::read(&args.log).map_err(io_err(&args.log))?;
    let log: adapt_service::ActionLog =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", args.log.display())))?;
    let replayed = adapt_service::replay(&log).map_err(|e| CliError::Data(format!("{}: {e}", e.path.as_deref().unwrap_or("log"))))?;
    let out = ReplayOutput {
        schema: SCHEMA_VERSION,
        seq: replayed.seq,
        finalized: replayed.result.is_some(),
        result: replayed.final_result(),
        failed: replayed
            .failed
            .iter()
            .map(|(i, e)| Failure {
                position: *i,
                error: e.clone(),
            })
            .collect(),
        snapshot: replayed.snapshot,
    };
    match &args.output {
        Some(path) => write_json(path, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::Internal(e.to_string()))?);
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Baselines(a) => cmd_baselines(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Config { output } => {
            let text = RunConfig::default().to_toml()?;
            match output {
                Some(path) => std::fs::write(path, text).map_err(write_err(path)),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adapt: {e}");
            e.exit_code()
        }
    }
}
