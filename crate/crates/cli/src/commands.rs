//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use rand_core::{OsRng, RngCore};
use synchronic_core::commitment::{Commitment, Periodicity, WindowSpec};
use synchronic_core::ledger::{FsResolver, LedgerError, LedgerState, Resolver};
use synchronic_core::notary::{verify_chain, Block, Notary, NotaryConfig, ServiceError};
use synchronic_core::sim::{simulate, Scenario};
use synchronic_core::verifier::{
    verify_history as history_verdict, verify_single, ChainLogSource, ChainSource, Outcome,
    VerdictReport,
};
use synchronic_core::AuthKeypair;

use crate::client::HttpNotary;
use crate::config::CliConfig;
use crate::{
    AuditArgs, ChainShowArgs, CommitArgs, ServeArgs, SimRunArgs, VerifyCommitmentArgs,
    VerifyHistoryArgs,
};

const EXIT_OK: u8 = 0;
const EXIT_VERIFY_FALSE: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 3;

/// Loads a PKCS#1 DER keypair, creating the file first when it is missing
/// (from `--key-seed` if given, otherwise from OS entropy).
fn load_or_create_key(path: &Path, seed: Option<&str>) -> anyhow::Result<AuthKeypair> {
    if path.exists() {
        let der = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        return AuthKeypair::from_secret_der(&der)
            .with_context(|| format!("parsing key {}", path.display()));
    }
    let keypair = match seed {
        Some(seed) => AuthKeypair::from_seed(seed.as_bytes())?,
        None => {
            let mut entropy = [0u8; 32];
            OsRng.fill_bytes(&mut entropy);
            AuthKeypair::from_seed(&entropy)?
        }
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    std::fs::write(path, keypair.secret_der())
        .with_context(|| format!("writing key {}", path.display()))?;
    Ok(keypair)
}

fn require<T: Clone>(flag: Option<T>, fallback: Option<T>, name: &str) -> anyhow::Result<T> {
    flag.or(fallback)
        .with_context(|| format!("missing --{name} (or config entry)"))
}

pub fn serve(args: ServeArgs) -> anyhow::Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let key_file = args.key_file.unwrap_or_else(|| PathBuf::from("notary-key.der"));
    let keypair = load_or_create_key(&key_file, args.key_seed.as_deref())?;
    let mut config = NotaryConfig::new(args.notary_id, keypair);
    config.retention_blocks = args.retention;
    config.block_interval = Duration::from_millis(args.block_interval_ms);
    config.rate_limit = args.rate_limit;

    let notary = match &args.store {
        Some(path) => Notary::with_store(config, path)?,
        None => Notary::new(config)?,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve_forever(notary, args.listen))?;
    Ok(ExitCode::from(EXIT_OK))
}

async fn serve_forever(notary: Notary, listen: std::net::SocketAddr) -> anyhow::Result<()> {
    crate::serve::run(notary, listen).await
}

pub fn commit(args: CommitArgs, config: &CliConfig, json: bool) -> anyhow::Result<ExitCode> {
    let endpoint = require(args.endpoint, config.endpoint.clone(), "endpoint")?;
    let global_path = require(args.global_path, config.global_path.clone(), "global-path")?;
    let periodicity = Periodicity(args.periodicity.or(config.periodicity).unwrap_or(0));
    let key_file = require(args.key_file, config.key_file.clone(), "key-file")?;
    let store_dir = require(args.store_dir, config.store_dir.clone(), "store-dir")?;
    let keypair = load_or_create_key(&key_file, args.key_seed.as_deref())?;

    let resolver = FsResolver::new(&args.dir);
    let paths = resolver.discover()?;
    if paths.is_empty() {
        bail!("no content files under {}", args.dir.display());
    }
    let mut contents: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for path in paths {
        let bytes = resolver.resolve(&path)?;
        contents.insert(path, bytes);
    }

    let mut ledger = LedgerState::load(&store_dir, keypair, &global_path, periodicity)?;
    let mut notary = HttpNotary::new(&endpoint);

    // pick the next aligned index past the notary's current one; retry a
    // couple of times in case a seal races the submission
    let mut attempts = 0;
    let commitments = loop {
        use synchronic_core::notary::NotaryService;
        let index = match args.index {
            Some(index) => index,
            None => {
                let current = notary.fetch_current_index()?.max(1);
                let period = periodicity.period() as u64;
                current.div_ceil(period) * period
            }
        };
        match ledger.commit_cycle(&mut notary, &contents, index) {
            Ok(commitments) => break commitments,
            Err(LedgerError::Service(ServiceError::Remote { ref code, .. }))
                if code == "too_late" && args.index.is_none() && attempts < 3 =>
            {
                attempts += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        }
    };

    if json {
        println!("{}", serde_json::to_string_pretty(&commitments)?);
    } else {
        for (path, commitment) in &commitments {
            println!(
                "committed {path} at index {} (sequence {})",
                commitment.index, commitment.envelope.sequence
            );
        }
        if let Some(first) = commitments.values().next() {
            println!(
                "{} items committed; records appended to {}",
                commitments.len(),
                store_dir.join("commitments.jsonl").display()
            );
            println!("global key: {}", first.global_key());
        }
    }
    Ok(ExitCode::from(EXIT_OK))
}

pub fn audit(args: AuditArgs, config: &CliConfig, json: bool) -> anyhow::Result<ExitCode> {
    let endpoint = require(args.endpoint, config.endpoint.clone(), "endpoint")?;
    let global_path = require(args.global_path, config.global_path.clone(), "global-path")?;
    let periodicity = Periodicity(args.periodicity.or(config.periodicity).unwrap_or(0));
    let key_file = require(args.key_file, config.key_file.clone(), "key-file")?;
    let store_dir = require(args.store_dir, config.store_dir.clone(), "store-dir")?;
    let der = std::fs::read(&key_file)?;
    let keypair = AuthKeypair::from_secret_der(&der)?;

    let ledger = LedgerState::load(&store_dir, keypair, &global_path, periodicity)?;
    let mut notary = HttpNotary::new(&endpoint);
    let violations = ledger.audit_promises(&mut notary);

    if json {
        println!("{}", serde_json::to_string_pretty(&violations)?);
    } else if violations.is_empty() {
        println!("all {} promises honored", ledger.promises().len());
    } else {
        for violation in &violations {
            println!(
                "VIOLATION: notary {} promised key {} in block {} but the sealed map omits it",
                violation.promise.notary_id, violation.promise.global_key, violation.promise.index
            );
        }
    }
    Ok(ExitCode::from(if violations.is_empty() { EXIT_OK } else { EXIT_VERIFY_FALSE }))
}

/// Reads commitment records from a file holding either one JSON document
/// or JSON lines.
fn read_commitments(path: &Path) -> anyhow::Result<Vec<Commitment>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(single) = serde_json::from_str::<Commitment>(&text) {
        return Ok(vec![single]);
    }
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Commitment = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        records.push(record);
    }
    if records.is_empty() {
        bail!("{} holds no commitment records", path.display());
    }
    Ok(records)
}

enum AnyChainSource {
    Http(HttpNotary),
    Log(ChainLogSource),
}

impl ChainSource for AnyChainSource {
    fn block_root(
        &mut self,
        index: u64,
    ) -> Result<synchronic_core::Digest, synchronic_core::verifier::ChainSourceError> {
        match self {
            AnyChainSource::Http(http) => http.block_root(index),
            AnyChainSource::Log(log) => log.block_root(index),
        }
    }
}

fn chain_source(
    endpoint: Option<String>,
    chain_file: Option<PathBuf>,
    config: &CliConfig,
) -> anyhow::Result<AnyChainSource> {
    if let Some(path) = chain_file.or(config.chain_file.clone()) {
        return Ok(AnyChainSource::Log(ChainLogSource::open(path)?));
    }
    if let Some(endpoint) = endpoint.or(config.endpoint.clone()) {
        return Ok(AnyChainSource::Http(HttpNotary::new(&endpoint)));
    }
    bail!("need --endpoint or --chain-file to reach a chain");
}

fn print_report(label: &str, report: &VerdictReport, json: bool) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "subject": label,
                "outcome": report.outcome,
                "checks": report.checks,
            }))
            .expect("report serializes")
        );
    } else {
        println!("{label}");
        for check in &report.checks {
            let mark = if check.passed { "ok " } else { "FAIL" };
            println!("  [{mark}] {:<16} {}", check.name, check.detail);
        }
        println!("  verdict: {:?}", report.outcome);
    }
}

fn outcome_exit(outcomes: impl IntoIterator<Item = Outcome>) -> ExitCode {
    let mut worst = EXIT_OK;
    for outcome in outcomes {
        let code = match outcome {
            Outcome::Valid => EXIT_OK,
            Outcome::Inconclusive => EXIT_INCONCLUSIVE,
            Outcome::Invalid => EXIT_VERIFY_FALSE,
        };
        // invalid dominates inconclusive dominates ok
        worst = match (worst, code) {
            (EXIT_VERIFY_FALSE, _) | (_, EXIT_VERIFY_FALSE) => EXIT_VERIFY_FALSE,
            (EXIT_INCONCLUSIVE, _) | (_, EXIT_INCONCLUSIVE) => EXIT_INCONCLUSIVE,
            _ => EXIT_OK,
        };
    }
    ExitCode::from(worst)
}

pub fn verify_commitment(
    args: VerifyCommitmentArgs,
    config: &CliConfig,
    json: bool,
) -> anyhow::Result<ExitCode> {
    let mut source = chain_source(args.endpoint, args.chain_file, config)?;
    let mut outcomes = Vec::new();
    for file in &args.files {
        for (i, commitment) in read_commitments(file)?.iter().enumerate() {
            let report = verify_single(commitment, &mut source);
            let label = format!(
                "{}#{} ({} @ index {})",
                file.display(),
                i,
                commitment.local_path,
                commitment.index
            );
            print_report(&label, &report, json);
            outcomes.push(report.outcome);
        }
    }
    Ok(outcome_exit(outcomes))
}

pub fn verify_history(
    args: VerifyHistoryArgs,
    config: &CliConfig,
    json: bool,
) -> anyhow::Result<ExitCode> {
    let mut source = chain_source(args.endpoint, args.chain_file, config)?;
    let mut commitments = Vec::new();
    for file in &args.files {
        commitments.extend(read_commitments(file)?);
    }
    let window = WindowSpec::new(
        args.window_start,
        args.window_end,
        Periodicity(args.periodicity.or(config.periodicity).unwrap_or(0)),
    )?;
    let report = history_verdict(&commitments, &window, &mut source);
    print_report(
        &format!(
            "history of {} commitments over window {}..={}",
            commitments.len(),
            window.start_index,
            window.end_index
        ),
        &report,
        json,
    );
    Ok(outcome_exit([report.outcome]))
}

pub fn chain_show(args: ChainShowArgs, config: &CliConfig, json: bool) -> anyhow::Result<ExitCode> {
    let blocks: Vec<Block> = if let Some(path) = args.chain_file.or(config.chain_file.clone()) {
        let source = ChainLogSource::open(path)?;
        let all = source.blocks().to_vec();
        match (args.from, args.to) {
            (from, to) => all
                .into_iter()
                .filter(|b| {
                    from.is_none_or(|f| b.index >= f) && to.is_none_or(|t| b.index <= t)
                })
                .collect(),
        }
    } else if let Some(endpoint) = args.endpoint.or(config.endpoint.clone()) {
        use synchronic_core::notary::NotaryService;
        let mut notary = HttpNotary::new(&endpoint);
        let current = notary.fetch_current_index()?;
        if current == 0 {
            Vec::new()
        } else {
            let from = args.from.unwrap_or(0);
            let to = args.to.unwrap_or(current - 1).min(current - 1);
            notary.fetch_chain(from, to)?
        }
    } else {
        bail!("need --endpoint or --chain-file to reach a chain");
    };

    let links_ok = verify_chain(&blocks);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "blocks": blocks,
                "linksVerified": links_ok,
            }))?
        );
    } else {
        println!("{:<8} {:<64} {:<64} sigs", "index", "block hash", "payload");
        for block in &blocks {
            println!(
                "{:<8} {:<64} {:<64} {}",
                block.index,
                block.block_hash().to_hex(),
                if block.payload.is_empty() { "(empty)".to_string() } else { block.payload.to_hex() },
                block.quorum_signatures.len()
            );
        }
        println!("hash links verified: {links_ok}");
    }
    Ok(ExitCode::from(if links_ok { EXIT_OK } else { EXIT_VERIFY_FALSE }))
}

pub fn sim_run(args: SimRunArgs, json: bool) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.scenario.display()))?;
    let report = simulate(&scenario.config, &scenario.faults)?;

    let trace = report.trace.to_jsonl();
    match &args.trace_out {
        Some(path) => std::fs::write(path, &trace)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{trace}"),
    }

    let failures = report.trace.rounds.iter().filter(|r| r.consensus_failure).count();
    let removals: Vec<_> = report
        .trace
        .rounds
        .iter()
        .flat_map(|r| r.removals.iter().map(move |(id, offense)| (r.round, *id, *offense)))
        .collect();
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "rounds": report.trace.rounds.len(),
                "consensusFailures": failures,
                "removals": removals
                    .iter()
                    .map(|(round, id, offense)| serde_json::json!({
                        "round": round, "notary": id, "offendingBlock": offense,
                    }))
                    .collect::<Vec<_>>(),
                "finalMembership": report.trace.final_membership,
            }))?
        );
    } else {
        eprintln!(
            "simulated {} rounds: {} consensus failures, {} removals, final membership {:?}",
            report.trace.rounds.len(),
            failures,
            removals.len(),
            report.trace.final_membership
        );
        for (round, id, offense) in &removals {
            eprintln!("  round {round}: removed notary {id} (broken promise in block {offense})");
        }
    }
    Ok(ExitCode::from(EXIT_OK))
}
