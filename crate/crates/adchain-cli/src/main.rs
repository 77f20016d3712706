//! `adchain` — experiment drivers, probability curves, node economics, and
//! record/replay verification for the decentralized impression-verification
//! protocol.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 internal
//! invariant violation (including replay divergence).

mod manifest;

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use adchain_core::analytics::{
    node_annual_profit, required_nodes, sybil_success_monte_carlo, sybil_success_probability,
    write_sybil_curve_csv, EconParams, SybilCurveRow, SybilParams,
};
use adchain_core::sim::{
    honesty_csv_row, honesty_grid_cells, node_scaling_cells, node_scaling_csv_row,
    run_simulation, sybil_cells, sybil_csv_row, SimConfig, SimError, HONESTY_CSV_HEADER,
    NODE_SCALING_CSV_HEADER, SYBIL_CSV_HEADER,
};
use adchain_core::wire::{replay_script, HostSession, ReplayError};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "adchain", version, about = "Decentralized ad-impression verification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one of the experiment grids and write its CSV plus a manifest.
    Experiment(ExperimentArgs),
    /// Analytic and Monte Carlo Sybil-attack success probabilities.
    SybilProb(SybilProbArgs),
    /// Node economics: required verifier slots, active pool, revenue, profit.
    Econ(EconArgs),
    /// Replay a recorded event script against a host snapshot and verify
    /// every recorded state hash.
    Replay(ReplayArgs),
    /// Serve the host over newline-delimited JSON on stdin/stdout.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ExperimentName {
    /// Honesty rate crossed with verifiers per ad.
    HonestyGrid,
    /// Total node count at 15 and 19 verifiers per ad.
    NodeScaling,
    /// Corrupted-node fraction at 200 and 1000 nodes.
    Sybil,
}

impl ExperimentName {
    fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::HonestyGrid => "honesty-grid",
            ExperimentName::NodeScaling => "node-scaling",
            ExperimentName::Sybil => "sybil",
        }
    }

    fn file_stem(&self) -> &'static str {
        match self {
            ExperimentName::HonestyGrid => "honesty_grid",
            ExperimentName::NodeScaling => "node_scaling",
            ExperimentName::Sybil => "sybil",
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    /// JSON config; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for the CSV and manifest.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Override the config seed (ADCHAIN_SEED overrides the config too).
    #[arg(long, env = "ADCHAIN_SEED")]
    seed: Option<u64>,
    /// Run the full 420-cell honesty grid instead of the desk-scale subsample.
    #[arg(long)]
    full_grid: bool,
    /// Worker threads for independent grid cells (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SybilProbArgs {
    /// Population size N.
    #[arg(long = "total-nodes", short = 'N')]
    total_nodes: u64,
    /// Verifiers sampled per committee.
    #[arg(long = "sample-size", short = 'n')]
    sample_size: u64,
    /// Single dishonest count; mutually exclusive with the sweep flags.
    #[arg(long, short = 'j', conflicts_with_all = ["j_from", "j_to", "j_step"])]
    dishonest: Option<u64>,
    #[arg(long)]
    j_from: Option<u64>,
    #[arg(long)]
    j_to: Option<u64>,
    #[arg(long, default_value_t = 50)]
    j_step: u64,
    /// Monte Carlo trials per row.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, env = "ADCHAIN_SEED", default_value_t = 0)]
    seed: u64,
    /// Write CSV + manifest here instead of stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EconArgs {
    #[arg(long)]
    verifiers: Option<u32>,
    #[arg(long)]
    global_tps: Option<f64>,
    #[arg(long)]
    per_node_capacity: Option<f64>,
    #[arg(long)]
    header_bidding_revenue: Option<f64>,
    #[arg(long)]
    pool_fraction: Option<f64>,
    #[arg(long)]
    host_share: Option<f64>,
    #[arg(long)]
    internet_cost: Option<f64>,
    #[arg(long)]
    compute_cost: Option<f64>,
    #[arg(long)]
    storage_cost: Option<f64>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Host-session snapshot (canonical JSON).
    #[arg(long, value_name = "PATH")]
    snapshot: PathBuf,
    /// NDJSON event script with recorded state hashes.
    #[arg(long, value_name = "PATH")]
    script: PathBuf,
    /// Additionally require this final state hash.
    #[arg(long, value_name = "HEX")]
    expect_hash: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    /// JSON config; the host parameters are taken from it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

enum CliError {
    /// Bad flags, unreadable/invalid config: exit 2.
    Usage(String),
    /// Broken internal invariant or replay divergence: exit 3.
    Internal(String),
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Infeasible(m) => CliError::Usage(format!("infeasible config: {m}")),
            SimError::Accounting(m) => CliError::Internal(format!("accounting violation: {m}")),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(err: io::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Experiment(args) => cmd_experiment(args),
        Command::SybilProb(args) => cmd_sybil_prob(args),
        Command::Econ(args) => cmd_econ(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Serve(args) => cmd_serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(3)
        }
    }
}

fn load_sim_config(path: Option<&Path>) -> Result<SimConfig, CliError> {
    match path {
        None => Ok(SimConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
        }
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    file.write_all(contents.as_bytes())?;
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let mut config = load_sim_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(CliError::from)?;
    fs::create_dir_all(&args.out)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;

    let mut manifest = RunManifest::start(
        args.name.as_str(),
        serde_json::to_value(&config).expect("config serializes"),
        config.seed,
    );

    // Cells are independent; run them in parallel and merge in cell order.
    let rows: Result<Vec<String>, SimError> = pool.install(|| match args.name {
        ExperimentName::HonestyGrid => honesty_grid_cells(&config, args.full_grid)
            .par_iter()
            .map(|cell| Ok(honesty_csv_row(cell, &run_simulation(&cell.config)?)))
            .collect(),
        ExperimentName::NodeScaling => node_scaling_cells(&config)
            .par_iter()
            .map(|cell| Ok(node_scaling_csv_row(cell, &run_simulation(&cell.config)?)))
            .collect(),
        ExperimentName::Sybil => sybil_cells(&config)
            .par_iter()
            .map(|cell| Ok(sybil_csv_row(cell, &run_simulation(&cell.config)?)))
            .collect(),
    });
    let rows = rows.map_err(CliError::from)?;

    let header = match args.name {
        ExperimentName::HonestyGrid => HONESTY_CSV_HEADER,
        ExperimentName::NodeScaling => NODE_SCALING_CSV_HEADER,
        ExperimentName::Sybil => SYBIL_CSV_HEADER,
    };
    let mut csv = String::with_capacity(rows.len() * 48 + header.len() + 1);
    csv.push_str(header);
    csv.push('\n');
    for row in &rows {
        csv.push_str(row);
        csv.push('\n');
    }

    let csv_path = args.out.join(format!("{}.csv", args.name.file_stem()));
    write_atomic(&csv_path, &csv)?;

    manifest.outputs.push(csv_path.display().to_string());
    let manifest_path = args.out.join(format!("{}.manifest.json", args.name.file_stem()));
    write_atomic(&manifest_path, &manifest.finish()?)?;

    println!("wrote {} ({} rows) and {}", csv_path.display(), rows.len(), manifest_path.display());
    Ok(())
}

fn cmd_sybil_prob(args: SybilProbArgs) -> Result<(), CliError> {
    let sweep: Vec<u64> = match (args.dishonest, args.j_from, args.j_to) {
        (Some(j), _, _) => vec![j],
        (None, Some(from), Some(to)) => {
            if args.j_step == 0 {
                return Err(CliError::Usage("--j-step must be positive".into()));
            }
            if from > to {
                return Err(CliError::Usage("--j-from must not exceed --j-to".into()));
            }
            (from..=to).step_by(args.j_step as usize).collect()
        }
        _ => {
            return Err(CliError::Usage(
                "give either --dishonest or both --j-from and --j-to".into(),
            ))
        }
    };

    let mut rows = Vec::with_capacity(sweep.len());
    for dishonest in sweep {
        let params = SybilParams::new(args.total_nodes, args.sample_size, dishonest)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let analytic =
            sybil_success_probability(&params).map_err(|e| CliError::Usage(e.to_string()))?;
        let (monte_carlo, std_error) =
            sybil_success_monte_carlo(&params, args.trials, args.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        rows.push(SybilCurveRow {
            total_nodes: args.total_nodes,
            sample_size: args.sample_size,
            dishonest,
            analytic,
            monte_carlo,
            std_error,
        });
    }

    match &args.out {
        None => {
            let mut stdout = io::stdout().lock();
            write_sybil_curve_csv(&mut stdout, &rows)?;
        }
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut manifest = RunManifest::start(
                "sybil-prob",
                serde_json::json!({
                    "total_nodes": args.total_nodes,
                    "sample_size": args.sample_size,
                    "dishonest": rows.iter().map(|r| r.dishonest).collect::<Vec<_>>(),
                    "trials": args.trials,
                }),
                args.seed,
            );
            let mut buffer = Vec::new();
            write_sybil_curve_csv(&mut buffer, &rows)?;
            let csv_path = dir.join("sybil_prob.csv");
            write_atomic(&csv_path, &String::from_utf8(buffer).expect("utf8 csv"))?;
            manifest.outputs.push(csv_path.display().to_string());
            write_atomic(&dir.join("sybil_prob.manifest.json"), &manifest.finish()?)?;
            println!("wrote {}", csv_path.display());
        }
    }
    Ok(())
}

fn cmd_econ(args: EconArgs) -> Result<(), CliError> {
    let mut params = EconParams::default();
    if let Some(v) = args.verifiers {
        params.verifiers_per_ad = v;
    }
    if let Some(v) = args.global_tps {
        params.global_tps = v;
    }
    if let Some(v) = args.per_node_capacity {
        params.per_node_capacity = v;
    }
    if let Some(v) = args.header_bidding_revenue {
        params.header_bidding_revenue = v;
    }
    if let Some(v) = args.pool_fraction {
        params.pool_fraction = v;
    }
    if let Some(v) = args.host_share {
        params.host_annual_share = v;
    }
    if let Some(v) = args.internet_cost {
        params.internet_cost = v;
    }
    if let Some(v) = args.compute_cost {
        params.compute_cost = v;
    }
    if let Some(v) = args.storage_cost {
        params.storage_cost = v;
    }

    let (slots, pool) = required_nodes(&params).map_err(|e| CliError::Usage(e.to_string()))?;
    println!("verifier slots:        {slots}");
    println!("active nodes:          {pool}");
    match node_annual_profit(&params) {
        Err(_) => println!("per-node economics:    undefined (no active nodes)"),
        Ok(breakdown) => {
            println!("annual revenue/node:   {:.2}", breakdown.revenue);
            println!("annual internet cost:  {:.2}", breakdown.internet);
            println!("annual compute cost:   {:.2}", breakdown.compute);
            println!("annual storage cost:   {:.2}", breakdown.storage);
            println!("annual profit/node:    {:.2}", breakdown.profit);
        }
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), CliError> {
    let snapshot = fs::read_to_string(&args.snapshot)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.snapshot.display())))?;
    let mut session = HostSession::from_snapshot_json(&snapshot)
        .map_err(|e| CliError::Usage(format!("invalid snapshot: {e}")))?;
    let script = fs::File::open(&args.script)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.script.display())))?;

    let report = replay_script(&mut session, BufReader::new(script)).map_err(|e| match e {
        ReplayError::Divergence { .. } => CliError::Internal(e.to_string()),
        ReplayError::Parse { .. } => CliError::Usage(e.to_string()),
        ReplayError::Io(io) => CliError::Usage(io.to_string()),
    })?;

    if let Some(expected) = &args.expect_hash {
        if expected != &report.final_state_hash {
            return Err(CliError::Internal(format!(
                "final state hash {} does not match expected {expected}",
                report.final_state_hash
            )));
        }
    }
    println!(
        "replayed {} events; final state hash {}",
        report.events_applied, report.final_state_hash
    );
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let config = load_sim_config(args.config.as_deref())?;
    let mut session = HostSession::new(config.host_config());
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    session.serve(stdin, stdout)?;
    Ok(())
}
