//! `synchronic` — operate the notarized-commitment network from one
//! binary: run a notary, commit content as a ledger, verify commitments
//! and history windows, inspect the chain, and run consensus simulations.
//!
//! Exit codes are a stable contract: 0 success, 1 verification reported
//! false, 2 usage or runtime error, 3 verdict inconclusive.

mod client;
mod commands;
mod config;
mod serve;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::CliConfig;

#[derive(Parser)]
#[command(name = "synchronic", version, about = "Verifiable-map commitment network tools")]
struct Cli {
    /// Config file (JSON); falls back to $SYNCHRONIC_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Emit machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Notary service operations.
    Notary {
        #[command(subcommand)]
        command: NotaryCommand,
    },
    /// Writing-client operations.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
    /// Reading-client operations.
    Verify {
        #[command(subcommand)]
        command: VerifyCommand,
    },
    /// Inspect a block chain.
    Chain {
        #[command(subcommand)]
        command: ChainCommand,
    },
    /// Consensus simulation.
    Sim {
        #[command(subcommand)]
        command: SimCommand,
    },
}

#[derive(Subcommand)]
enum NotaryCommand {
    /// Run the notary HTTP service, sealing one block per interval.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Listen address; port 0 picks an ephemeral port.
    #[arg(long, default_value = "127.0.0.1:9155")]
    listen: SocketAddr,
    /// Notary identity label.
    #[arg(long, default_value = "notary-0")]
    notary_id: String,
    /// Signing key file (PKCS#1 DER); created if absent.
    #[arg(long)]
    key_file: Option<PathBuf>,
    /// Deterministic key seed used when creating a missing key file.
    #[arg(long)]
    key_seed: Option<String>,
    /// Append-only block log; chain is replayed from it on restart.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Blocks whose full maps stay available for proofs.
    #[arg(long, default_value_t = 1024)]
    retention: u64,
    /// Milliseconds between sealed blocks.
    #[arg(long, default_value_t = 1000)]
    block_interval_ms: u64,
    /// Accepted submissions per source per block interval.
    #[arg(long, default_value_t = 100)]
    rate_limit: u32,
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Commit every file under a directory as one cycle.
    Commit(CommitArgs),
    /// Check retained promises against the sealed chain.
    Audit(AuditArgs),
}

#[derive(Args)]
struct CommitArgs {
    /// Directory of content; each file's relative path is its local path.
    dir: PathBuf,
    #[arg(long)]
    endpoint: Option<String>,
    /// Signing key file (PKCS#1 DER); created if absent.
    #[arg(long)]
    key_file: Option<PathBuf>,
    /// Deterministic key seed used when creating a missing key file.
    #[arg(long)]
    key_seed: Option<String>,
    /// Well-known namespace this ledger publishes under.
    #[arg(long)]
    global_path: Option<String>,
    /// Commit period exponent: indices must divide 2^periodicity.
    #[arg(long)]
    periodicity: Option<u32>,
    /// Ledger state directory (commitments and promises).
    #[arg(long)]
    store_dir: Option<PathBuf>,
    /// Target block index; defaults to the next aligned index.
    #[arg(long)]
    index: Option<u64>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    key_file: Option<PathBuf>,
    #[arg(long)]
    global_path: Option<String>,
    #[arg(long)]
    periodicity: Option<u32>,
    #[arg(long)]
    store_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Verify commitment records (JSON or JSON-lines files).
    Commitment(VerifyCommitmentArgs),
    /// Evaluate a history window for coverage and forks.
    History(VerifyHistoryArgs),
}

#[derive(Args)]
struct VerifyCommitmentArgs {
    /// Commitment files; each may hold one JSON record or JSON lines.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Verify offline against an exported block log.
    #[arg(long)]
    chain_file: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyHistoryArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long)]
    window_start: u64,
    #[arg(long)]
    window_end: u64,
    #[arg(long)]
    periodicity: Option<u32>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    chain_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ChainCommand {
    /// Print blocks and check their hash links.
    Show(ChainShowArgs),
}

#[derive(Args)]
struct ChainShowArgs {
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    chain_file: Option<PathBuf>,
    #[arg(long)]
    from: Option<u64>,
    #[arg(long)]
    to: Option<u64>,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run a scenario file and emit its trace.
    Run(SimRunArgs),
}

#[derive(Args)]
struct SimRunArgs {
    /// Scenario JSON: {n, f, b, rounds, seed, ledgers, faults: [...]}.
    scenario: PathBuf,
    /// Write the JSON-lines trace here instead of stdout.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match CliConfig::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Notary { command: NotaryCommand::Serve(args) } => commands::serve(args),
        Command::Ledger { command: LedgerCommand::Commit(args) } => {
            commands::commit(args, &config, cli.json)
        }
        Command::Ledger { command: LedgerCommand::Audit(args) } => {
            commands::audit(args, &config, cli.json)
        }
        Command::Verify { command: VerifyCommand::Commitment(args) } => {
            commands::verify_commitment(args, &config, cli.json)
        }
        Command::Verify { command: VerifyCommand::History(args) } => {
            commands::verify_history(args, &config, cli.json)
        }
        Command::Chain { command: ChainCommand::Show(args) } => {
            commands::chain_show(args, &config, cli.json)
        }
        Command::Sim { command: SimCommand::Run(args) } => commands::sim_run(args, cli.json),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
