//! The writing client: resolves content, builds the local verifiable map,
//! derives the global key/value pair, submits it, retains the notary's
//! promise, and assembles full commitments once the block is sealed.
//!
//! A [`LedgerState`] owns one identity (keypair + global path + periodicity)
//! and tracks a strictly increasing sequence number per local path. The
//! [`commit_cycle`](LedgerState::commit_cycle) is atomic with respect to
//! that replayable state: on any failure, sequence counters and the
//! commitment store are untouched. Promises are the exception — they are
//! recorded the moment the notary issues them, because a retained promise
//! is precisely the evidence that holds a faulty notary accountable after
//! a failed cycle.
//!
//! Downtime is not back-filled: a ledger that misses its aligned indices
//! simply leaves gaps, and the fork-window rule decides how many gaps a
//! verifier tolerates.
//!
//! Persistence is two append-only JSON-lines files (`commitments.jsonl`,
//! `promises.jsonl`) plus an in-memory index rebuilt on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commitment::{
    assemble_commitment, build_local_map, derive_global_key, derive_global_value,
    verify_commitment, Commitment, CommitmentError, ContentEnvelope, Periodicity,
};
use crate::crypto::{hash, AuthKeypair, Digest};
use crate::notary::{NotaryService, Promise, PromiseViolation, ServiceError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("index {index} is not divisible by period {period}")]
    PeriodMisaligned { index: u64, period: u128 },
    #[error("index {index} is already sealed (current is {current})")]
    StaleIndex { index: u64, current: u64 },
    #[error("no content at path {0:?}")]
    ContentNotFound(String),
    #[error("resolver failure at {path:?}: {detail}")]
    Resolver { path: String, detail: String },
    #[error("ledger store: {0}")]
    Store(String),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Commitment(#[from] CommitmentError),
}

/// Turns a local path into hashable content bytes. Implementations must be
/// deterministic for a fixed underlying snapshot.
pub trait Resolver {
    fn resolve(&self, local_path: &str) -> Result<Vec<u8>, LedgerError>;
}

/// Resolves local paths as files relative to a root directory.
pub struct FsResolver {
    root: PathBuf,
}

impl FsResolver {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FsResolver { root: root.into() }
    }

    /// All regular files under the root, as sorted relative paths.
    pub fn discover(&self) -> Result<Vec<String>, LedgerError> {
        fn walk(dir: &Path, root: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
            for entry in fs::read_dir(dir)? {
                let entry = entry?;
                let path = entry.path();
                if path.is_dir() {
                    walk(&path, root, out)?;
                } else if path.is_file() {
                    let rel = path.strip_prefix(root).expect("walk stays under root");
                    out.push(rel.to_string_lossy().replace('\\', "/"));
                }
            }
            Ok(())
        }
        let mut paths = Vec::new();
        walk(&self.root, &self.root, &mut paths).map_err(|e| LedgerError::Resolver {
            path: self.root.display().to_string(),
            detail: e.to_string(),
        })?;
        paths.sort();
        Ok(paths)
    }
}

impl Resolver for FsResolver {
    fn resolve(&self, local_path: &str) -> Result<Vec<u8>, LedgerError> {
        let full = self.root.join(local_path);
        match fs::read(&full) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(LedgerError::ContentNotFound(local_path.to_string()))
            }
            Err(e) => Err(LedgerError::Resolver {
                path: local_path.to_string(),
                detail: e.to_string(),
            }),
        }
    }
}

/// Append-only JSON-lines persistence for a ledger's commitments and
/// promises.
pub struct LedgerStore {
    dir: PathBuf,
}

impl LedgerStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LedgerError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| LedgerError::Store(e.to_string()))?;
        Ok(LedgerStore { dir })
    }

    fn commitments_path(&self) -> PathBuf {
        self.dir.join("commitments.jsonl")
    }

    fn promises_path(&self) -> PathBuf {
        self.dir.join("promises.jsonl")
    }

    fn append_line<T: Serialize>(path: &Path, record: &T) -> Result<(), LedgerError> {
        let mut line =
            serde_json::to_string(record).map_err(|e| LedgerError::Store(e.to_string()))?;
        line.push('\n');
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| LedgerError::Store(e.to_string()))
    }

    fn load_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LedgerError> {
        match fs::read_to_string(path) {
            Ok(text) => text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(|e| LedgerError::Store(e.to_string())))
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(LedgerError::Store(e.to_string())),
        }
    }

    pub fn append_commitment(&self, c: &Commitment) -> Result<(), LedgerError> {
        Self::append_line(&self.commitments_path(), c)
    }

    pub fn append_promise(&self, p: &Promise) -> Result<(), LedgerError> {
        Self::append_line(&self.promises_path(), p)
    }

    pub fn load_commitments(&self) -> Result<Vec<Commitment>, LedgerError> {
        Self::load_lines(&self.commitments_path())
    }

    pub fn load_promises(&self) -> Result<Vec<Promise>, LedgerError> {
        Self::load_lines(&self.promises_path())
    }
}

/// Per-record outcome of a store merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportOutcome {
    pub accepted: usize,
    pub rejected: Vec<(Commitment, String)>,
}

/// One writing identity and its committed history.
pub struct LedgerState {
    keypair: AuthKeypair,
    global_path: String,
    periodicity: Periodicity,
    next_sequence: BTreeMap<String, u64>,
    promise_log: Vec<Promise>,
    commitments: BTreeMap<(u64, String), Commitment>,
    store: Option<LedgerStore>,
}

impl LedgerState {
    pub fn new(keypair: AuthKeypair, global_path: impl Into<String>, periodicity: Periodicity) -> Self {
        LedgerState {
            keypair,
            global_path: global_path.into(),
            periodicity,
            next_sequence: BTreeMap::new(),
            promise_log: Vec::new(),
            commitments: BTreeMap::new(),
            store: None,
        }
    }

    /// Reopens a persisted ledger: replays the JSON-lines files and rebuilds
    /// the per-path sequence counters from the stored commitments.
    pub fn load(
        dir: impl Into<PathBuf>,
        keypair: AuthKeypair,
        global_path: impl Into<String>,
        periodicity: Periodicity,
    ) -> Result<Self, LedgerError> {
        let store = LedgerStore::open(dir)?;
        let mut state = LedgerState::new(keypair, global_path, periodicity);
        for promise in store.load_promises()? {
            state.promise_log.push(promise);
        }
        for c in store.load_commitments()? {
            state
                .next_sequence
                .entry(c.local_path.clone())
                .and_modify(|s| *s = (*s).max(c.envelope.sequence + 1))
                .or_insert(c.envelope.sequence + 1);
            state.commitments.insert((c.index, c.local_path.clone()), c);
        }
        state.store = Some(store);
        Ok(state)
    }

    /// Attaches an append-only store; subsequent cycles persist as they go.
    pub fn attach_store(&mut self, dir: impl Into<PathBuf>) -> Result<(), LedgerError> {
        self.store = Some(LedgerStore::open(dir)?);
        Ok(())
    }

    pub fn global_path(&self) -> &str {
        &self.global_path
    }

    pub fn periodicity(&self) -> Periodicity {
        self.periodicity
    }

    pub fn public_key(&self) -> &crate::crypto::PublicKey {
        self.keypair.public_key()
    }

    pub fn next_sequence(&self, local_path: &str) -> u64 {
        self.next_sequence.get(local_path).copied().unwrap_or(0)
    }

    pub fn promises(&self) -> &[Promise] {
        &self.promise_log
    }

    /// Records a promise received out-of-band.
    pub fn record_promise(&mut self, promise: Promise) {
        if let Some(store) = &self.store {
            // best effort: the in-memory log is authoritative this session
            let _ = store.append_promise(&promise);
        }
        self.promise_log.push(promise);
    }

    pub fn commitments(&self) -> impl Iterator<Item = &Commitment> {
        self.commitments.values()
    }

    pub fn commitment(&self, index: u64, local_path: &str) -> Option<&Commitment> {
        self.commitments.get(&(index, local_path.to_string()))
    }

    /// One full commit: envelope the contents, build the local map, derive
    /// and submit the global pair, wait for the seal, fetch the global
    /// proof, and assemble one verified [`Commitment`] per path.
    ///
    /// Sequence counters and the commitment store advance only if every
    /// step succeeds. The promise is retained as soon as it is issued.
    pub fn commit_cycle<N: NotaryService>(
        &mut self,
        notary: &mut N,
        contents: &BTreeMap<String, Vec<u8>>,
        index: u64,
    ) -> Result<BTreeMap<String, Commitment>, LedgerError> {
        if !self.periodicity.accepts(index) {
            return Err(LedgerError::PeriodMisaligned {
                index,
                period: self.periodicity.period(),
            });
        }
        let current = notary.fetch_current_index()?;
        if index < current {
            return Err(LedgerError::StaleIndex { index, current });
        }

        let envelopes: BTreeMap<String, ContentEnvelope> = contents
            .iter()
            .map(|(path, bytes)| {
                let envelope = ContentEnvelope {
                    sequence: self.next_sequence(path),
                    index,
                    payload_digest: hash(bytes),
                };
                (path.clone(), envelope)
            })
            .collect();
        let (local_tree, mut local_proofs) = build_local_map(envelopes.clone())?;
        let local_root = *local_tree.root_digest();
        let (global_key, tag) = derive_global_key(index, &self.keypair, &self.global_path)?;
        let global_value = derive_global_value(&local_root);

        let promise = notary.submit(index, global_key, global_value)?;
        self.record_promise(promise);

        notary.wait_sealed(index)?;
        let global_proof = notary.fetch_proof(index, &global_key)?;
        let block = notary.fetch_block(index)?;

        let mut assembled = BTreeMap::new();
        for (path, envelope) in &envelopes {
            let commitment = assemble_commitment(
                index,
                self.keypair.public_key().clone(),
                self.global_path.clone(),
                tag.clone(),
                path.clone(),
                *envelope,
                local_proofs.remove(path).expect("proof exists per path"),
                local_root,
                global_proof.clone(),
                &block.payload,
            )?;
            assembled.insert(path.clone(), commitment);
        }

        // every path verified; commit the new state
        for (path, commitment) in &assembled {
            if let Some(store) = &self.store {
                store.append_commitment(commitment)?;
            }
            self.next_sequence
                .insert(path.clone(), commitment.envelope.sequence + 1);
            self.commitments
                .insert((index, path.clone()), commitment.clone());
        }
        Ok(assembled)
    }

    /// Checks every retained promise against the sealed chain and returns
    /// evidence for each one the notary failed to honor. Unreachable or
    /// already-pruned indices are skipped: absence of proof is not proof
    /// of absence.
    pub fn audit_promises<N: NotaryService>(&self, notary: &mut N) -> Vec<PromiseViolation> {
        let mut violations = Vec::new();
        let current = match notary.fetch_current_index() {
            Ok(c) => c,
            Err(_) => return violations,
        };
        for promise in &self.promise_log {
            if promise.index >= current {
                continue; // not sealed yet
            }
            let Ok(block) = notary.fetch_block(promise.index) else {
                continue;
            };
            match notary.fetch_proof(promise.index, &promise.global_key) {
                Ok(proof) => {
                    let root = crate::map::implied_root(
                        &promise.global_key,
                        &promise.global_value,
                        &proof,
                    );
                    if root != block.payload {
                        // included, but with a different value
                        violations.push(PromiseViolation {
                            promise: promise.clone(),
                            block,
                        });
                    }
                }
                Err(e) if e.code() == "not_found" => {
                    violations.push(PromiseViolation { promise: promise.clone(), block });
                }
                Err(_) => {} // pruned or unreachable: inconclusive
            }
        }
        violations
    }

    /// Commitments whose index falls in `from..=to`, in index order.
    pub fn export_commitments(&self, from: u64, to: u64) -> Vec<Commitment> {
        self.commitments
            .values()
            .filter(|c| c.index >= from && c.index <= to)
            .cloned()
            .collect()
    }

    /// Merges exported records into this store. Each record must verify
    /// against the supplied block roots; failures are rejected one by one
    /// and do not block the rest.
    pub fn import_commitments<I>(
        &mut self,
        records: I,
        block_roots: &BTreeMap<u64, Digest>,
    ) -> ImportOutcome
    where
        I: IntoIterator<Item = Commitment>,
    {
        let mut outcome = ImportOutcome { accepted: 0, rejected: Vec::new() };
        for record in records {
            let Some(root) = block_roots.get(&record.index) else {
                outcome
                    .rejected
                    .push((record, "no block root for index".to_string()));
                continue;
            };
            if !verify_commitment(&record, root) {
                outcome
                    .rejected
                    .push((record, "commitment does not verify".to_string()));
                continue;
            }
            let slot = (record.index, record.local_path.clone());
            if let Some(existing) = self.commitments.get(&slot) {
                if *existing != record {
                    outcome
                        .rejected
                        .push((record, "slot already holds a different commitment".to_string()));
                }
                // identical record: idempotent
                continue;
            }
            self.next_sequence
                .entry(record.local_path.clone())
                .and_modify(|s| *s = (*s).max(record.envelope.sequence + 1))
                .or_insert(record.envelope.sequence + 1);
            if let Some(store) = &self.store {
                let _ = store.append_commitment(&record);
            }
            self.commitments.insert(slot, record);
            outcome.accepted += 1;
        }
        outcome
    }

    /// True iff every stored commitment verifies against the given roots.
    pub fn self_audit(&self, block_roots: &BTreeMap<u64, Digest>) -> bool {
        self.commitments.values().all(|c| {
            block_roots
                .get(&c.index)
                .is_some_and(|root| verify_commitment(c, root))
        })
    }
}
