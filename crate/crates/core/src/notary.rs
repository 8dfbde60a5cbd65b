//! The notary: batches global key→value commits per block index, seals each
//! batch into a verifiable map whose root becomes the block payload, serves
//! inclusion proofs while the map is retained, and answers for its promises.
//!
//! Blocks form a hash-linked chain. Block 0 is the genesis block: empty
//! payload, empty predecessor hash, sealed before any commit is accepted.
//! Every later block carries exactly one payload digest — the root of that
//! index's global map — so chain storage grows by one small record per
//! index forever, while full maps are kept only for the most recent
//! `retention_blocks` indices and then released.
//!
//! A [`Promise`] is the notary's signed pledge that a submitted (key,
//! value) pair will appear in the named block. Ledgers retain promises;
//! a sealed block that omits a promised key is evidence that removes the
//! notary from consensus (see [`crate::sim`]).
//!
//! The in-memory [`Notary`] is the single-node state machine; consensus
//! over many notaries lives in [`crate::sim`], and the HTTP surface in the
//! CLI crate. Restarting from a [`BlockStore`] recovers the chain but not
//! the retained maps, so proofs for pre-restart indices report gone.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{decode, encode, AuthKeypair, DecodedField, Digest, Field, PublicKey, Tag};
use crate::map::{InclusionProof, MapError, VerifiableMap};

/// How far past the current index a submission may target, to let
/// high-periodicity ledgers commit early.
pub const MAX_FUTURE_INDEXES: u64 = 1 << 10;

/// Batches larger than this are built with the parallel tree constructor.
const PARALLEL_SEAL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NotaryError {
    #[error("index 0 is the genesis block and accepts no commits")]
    GenesisReserved,
    #[error("block {0} is already sealed; too late to commit")]
    TooLate(u64),
    #[error("index {index} is more than {max} blocks ahead of current")]
    TooFarAhead { index: u64, max: u64 },
    #[error("key already committed at index {index} with a different value")]
    Conflict { index: u64 },
    #[error("rate limit exceeded for source {0:?}")]
    Throttled(String),
    #[error("cannot seal {got}; next unsealed index is {expected}")]
    OutOfOrderSeal { expected: u64, got: u64 },
    #[error("block {0} is not sealed yet")]
    Pending(u64),
    #[error("map for block {0} has been pruned")]
    Gone(u64),
    #[error("block {0} does not exist")]
    BlockNotFound(u64),
    #[error("key not found in block {0}")]
    KeyNotFound(u64),
    #[error("invalid chain range {from}..={to}")]
    BadRange { from: u64, to: u64 },
    #[error("prune to {up_to} violates retention; highest allowed is {allowed}")]
    RetentionViolation { up_to: u64, allowed: u64 },
    #[error("keys and values must be full 32-byte digests")]
    InvalidDigest,
    #[error("retention_blocks must be at least 1")]
    InvalidRetention,
    #[error("block store corrupt: {0}")]
    Corrupt(String),
    #[error("block store i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("signing failed: {0}")]
    Signing(String),
}

impl NotaryError {
    /// Stable machine-readable code, used by the HTTP error envelope.
    pub fn code(&self) -> &'static str {
        match self {
            NotaryError::GenesisReserved => "genesis_reserved",
            NotaryError::TooLate(_) => "too_late",
            NotaryError::TooFarAhead { .. } => "too_far_ahead",
            NotaryError::Conflict { .. } => "conflict",
            NotaryError::Throttled(_) => "throttled",
            NotaryError::OutOfOrderSeal { .. } => "out_of_order",
            NotaryError::Pending(_) => "pending",
            NotaryError::Gone(_) => "gone",
            NotaryError::BlockNotFound(_) | NotaryError::KeyNotFound(_) => "not_found",
            NotaryError::BadRange { .. } => "bad_range",
            NotaryError::RetentionViolation { .. } => "retention",
            NotaryError::InvalidDigest => "invalid_digest",
            NotaryError::InvalidRetention => "invalid_config",
            NotaryError::Corrupt(_) => "corrupt",
            NotaryError::Io(_) => "io",
            NotaryError::Map(_) => "map",
            NotaryError::Signing(_) => "signing",
        }
    }
}

/// One signer's endorsement of a sealed block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuorumSignature {
    pub notary_id: String,
    pub signature: Tag,
}

/// A hash-linked chain element carrying one global map root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub index: u64,
    pub prev_hash: Digest,
    pub payload: Digest,
    pub quorum_signatures: Vec<QuorumSignature>,
}

impl Block {
    /// The genesis block: no predecessor, empty payload, no signatures.
    pub fn genesis() -> Block {
        Block {
            index: 0,
            prev_hash: Digest::EMPTY,
            payload: Digest::EMPTY,
            quorum_signatures: Vec::new(),
        }
    }

    /// The chain-link hash: signatures endorse it but are not part of it.
    pub fn block_hash(&self) -> Digest {
        crate::crypto::hash(&encode(&[
            Field::Uint(self.index),
            Field::Bytes(self.prev_hash.as_bytes()),
            Field::Bytes(self.payload.as_bytes()),
        ]))
    }

    /// Canonical record for the append-only block log.
    pub fn to_record_bytes(&self) -> Vec<u8> {
        let mut fields = vec![
            Field::Uint(self.index),
            Field::Bytes(self.prev_hash.as_bytes()),
            Field::Bytes(self.payload.as_bytes()),
            Field::Uint(self.quorum_signatures.len() as u64),
        ];
        for sig in &self.quorum_signatures {
            fields.push(Field::Str(&sig.notary_id));
            fields.push(Field::Bytes(sig.signature.as_bytes()));
        }
        encode(&fields)
    }

    pub fn from_record_bytes(bytes: &[u8]) -> Result<Block, NotaryError> {
        let fields = decode(bytes).map_err(|e| NotaryError::Corrupt(e.to_string()))?;
        let mut it = fields.into_iter();
        let index = match it.next() {
            Some(DecodedField::Uint(v)) => v,
            _ => return Err(NotaryError::Corrupt("missing index".into())),
        };
        let prev_hash = match it.next() {
            Some(DecodedField::Bytes(b)) => Digest::from_slice(&b)
                .map_err(|e| NotaryError::Corrupt(e.to_string()))?,
            _ => return Err(NotaryError::Corrupt("missing prev hash".into())),
        };
        let payload = match it.next() {
            Some(DecodedField::Bytes(b)) => Digest::from_slice(&b)
                .map_err(|e| NotaryError::Corrupt(e.to_string()))?,
            _ => return Err(NotaryError::Corrupt("missing payload".into())),
        };
        let count = match it.next() {
            Some(DecodedField::Uint(v)) => v,
            _ => return Err(NotaryError::Corrupt("missing signature count".into())),
        };
        let mut quorum_signatures = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let notary_id = match it.next() {
                Some(DecodedField::Str(s)) => s,
                _ => return Err(NotaryError::Corrupt("missing signer id".into())),
            };
            let signature = match it.next() {
                Some(DecodedField::Bytes(b)) => Tag::from_bytes(b),
                _ => return Err(NotaryError::Corrupt("missing signature".into())),
            };
            quorum_signatures.push(QuorumSignature { notary_id, signature });
        }
        if it.next().is_some() {
            return Err(NotaryError::Corrupt("trailing fields".into()));
        }
        Ok(Block { index, prev_hash, payload, quorum_signatures })
    }
}

/// True iff the blocks have consecutive indices and intact hash links, and
/// a leading genesis block (if present) has no predecessor hash.
pub fn verify_chain(blocks: &[Block]) -> bool {
    if let Some(first) = blocks.first() {
        if first.index == 0 && !first.prev_hash.is_empty() {
            return false;
        }
    }
    blocks.windows(2).all(|pair| {
        pair[1].index == pair[0].index + 1 && pair[1].prev_hash == pair[0].block_hash()
    })
}

/// A notary's signed pledge to include a key→value pair in a named block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Promise {
    pub notary_id: String,
    pub index: u64,
    pub global_key: Digest,
    pub global_value: Digest,
    pub signature: Tag,
}

impl Promise {
    fn message(notary_id: &str, index: u64, key: &Digest, value: &Digest) -> Vec<u8> {
        encode(&[
            Field::Str(notary_id),
            Field::Uint(index),
            Field::Bytes(key.as_bytes()),
            Field::Bytes(value.as_bytes()),
        ])
    }

    pub fn sign(
        keypair: &AuthKeypair,
        notary_id: &str,
        index: u64,
        global_key: Digest,
        global_value: Digest,
    ) -> Result<Promise, NotaryError> {
        let signature = keypair
            .sign(&Self::message(notary_id, index, &global_key, &global_value))
            .map_err(|e| NotaryError::Signing(e.to_string()))?;
        Ok(Promise { notary_id: notary_id.to_string(), index, global_key, global_value, signature })
    }

    /// Checks the pledge under the promising notary's public key.
    pub fn verify(&self, public_key: &PublicKey) -> bool {
        public_key.verify(
            &Self::message(&self.notary_id, self.index, &self.global_key, &self.global_value),
            &self.signature,
        )
    }
}

/// Evidence that a notary broke a promise: the signed pledge plus the
/// sealed block whose map omits (or misstates) the promised pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromiseViolation {
    pub promise: Promise,
    pub block: Block,
}

/// Static notary configuration.
#[derive(Debug, Clone)]
pub struct NotaryConfig {
    pub notary_id: String,
    pub keypair: AuthKeypair,
    /// Full maps are kept for this many most recent sealed indices.
    pub retention_blocks: u64,
    /// Wall-clock seal cadence in service mode; embedded and simulated
    /// notaries seal on logical ticks instead.
    pub block_interval: Duration,
    /// Accepted submissions per source per block interval.
    pub rate_limit: u32,
}

impl NotaryConfig {
    pub fn new(notary_id: impl Into<String>, keypair: AuthKeypair) -> Self {
        NotaryConfig {
            notary_id: notary_id.into(),
            keypair,
            retention_blocks: 1024,
            block_interval: Duration::from_secs(1),
            rate_limit: 100,
        }
    }
}

/// The single-node notary state machine.
pub struct Notary {
    config: NotaryConfig,
    chain: Vec<Block>,
    pending: BTreeMap<u64, BTreeMap<Digest, Digest>>,
    maps: BTreeMap<u64, VerifiableMap>,
    batches: BTreeMap<u64, BTreeMap<Digest, Digest>>,
    window_submissions: BTreeMap<String, u32>,
    store: Option<BlockStore>,
}

impl Notary {
    pub fn new(config: NotaryConfig) -> Result<Self, NotaryError> {
        if config.retention_blocks == 0 {
            return Err(NotaryError::InvalidRetention);
        }
        Ok(Notary {
            config,
            chain: Vec::new(),
            pending: BTreeMap::new(),
            maps: BTreeMap::new(),
            batches: BTreeMap::new(),
            window_submissions: BTreeMap::new(),
            store: None,
        })
    }

    /// Opens (or creates) a persistent block log and replays any existing
    /// chain. Retained maps are not persisted, so proofs for replayed
    /// indices report gone.
    pub fn with_store(config: NotaryConfig, path: impl AsRef<Path>) -> Result<Self, NotaryError> {
        let mut notary = Self::new(config)?;
        let store = BlockStore::open(path)?;
        let chain = store.load()?;
        if !verify_chain(&chain) {
            return Err(NotaryError::Corrupt("hash links do not verify".into()));
        }
        if let Some(first) = chain.first() {
            if first.index != 0 {
                return Err(NotaryError::Corrupt("log does not start at genesis".into()));
            }
        }
        notary.chain = chain;
        notary.store = Some(store);
        Ok(notary)
    }

    pub fn config(&self) -> &NotaryConfig {
        &self.config
    }

    pub fn public_key(&self) -> &PublicKey {
        self.config.keypair.public_key()
    }

    /// The next unsealed index.
    pub fn current_index(&self) -> u64 {
        self.chain.len() as u64
    }

    /// Records a commit for `index` and returns the signed promise to
    /// include it. Idempotent for identical resubmissions; the first value
    /// for a key wins and later different values are conflicts.
    pub fn submit_commit(
        &mut self,
        source: &str,
        index: u64,
        global_key: Digest,
        global_value: Digest,
    ) -> Result<Promise, NotaryError> {
        let counter = self.window_submissions.entry(source.to_string()).or_insert(0);
        if *counter >= self.config.rate_limit {
            return Err(NotaryError::Throttled(source.to_string()));
        }
        *counter += 1;

        if global_key.is_empty() || global_value.is_empty() {
            return Err(NotaryError::InvalidDigest);
        }
        if index == 0 {
            return Err(NotaryError::GenesisReserved);
        }
        let current = self.current_index();
        if index < current {
            return Err(NotaryError::TooLate(index));
        }
        if index > current.max(1) + MAX_FUTURE_INDEXES {
            return Err(NotaryError::TooFarAhead { index, max: MAX_FUTURE_INDEXES });
        }
        let batch = self.pending.entry(index).or_default();
        match batch.get(&global_key) {
            Some(existing) if *existing != global_value => {
                return Err(NotaryError::Conflict { index });
            }
            Some(_) => {} // identical resubmission
            None => {
                batch.insert(global_key, global_value);
            }
        }
        Promise::sign(
            &self.config.keypair,
            &self.config.notary_id,
            index,
            global_key,
            global_value,
        )
    }

    /// Seals the next block: builds the global map over the index's batch,
    /// publishes its root as the block payload, links the block to its
    /// predecessor, and starts a new rate-limit window.
    pub fn seal_block(&mut self, index: u64) -> Result<Block, NotaryError> {
        let current = self.current_index();
        if index != current {
            return Err(NotaryError::OutOfOrderSeal { expected: current, got: index });
        }
        let batch = self.pending.remove(&index).unwrap_or_default();
        let map = build_batch_map(&batch)?;
        let prev_hash = self.chain.last().map(Block::block_hash).unwrap_or(Digest::EMPTY);
        let mut block = Block {
            index,
            prev_hash,
            payload: *map.root_digest(),
            quorum_signatures: Vec::new(),
        };
        if index > 0 {
            let signature = self
                .config
                .keypair
                .sign(block.block_hash().as_bytes())
                .map_err(|e| NotaryError::Signing(e.to_string()))?;
            block.quorum_signatures.push(QuorumSignature {
                notary_id: self.config.notary_id.clone(),
                signature,
            });
        }
        if let Some(store) = &mut self.store {
            store.append(&block)?;
        }
        self.chain.push(block.clone());
        self.maps.insert(index, map);
        self.batches.insert(index, batch);
        while self.maps.len() as u64 > self.config.retention_blocks {
            self.maps.pop_first();
        }
        while self.batches.len() as u64 > self.config.retention_blocks {
            self.batches.pop_first();
        }
        self.window_submissions.clear();
        Ok(block)
    }

    /// Serves the inclusion proof for `global_key` in block `index`.
    pub fn get_proof(&self, index: u64, global_key: &Digest) -> Result<InclusionProof, NotaryError> {
        if index >= self.current_index() {
            return Err(NotaryError::Pending(index));
        }
        let map = self.maps.get(&index).ok_or(NotaryError::Gone(index))?;
        map.prove(global_key).map_err(|e| match e {
            MapError::KeyNotFound(_) => NotaryError::KeyNotFound(index),
            other => NotaryError::Map(other),
        })
    }

    pub fn get_block(&self, index: u64) -> Result<Block, NotaryError> {
        self.chain
            .get(index as usize)
            .cloned()
            .ok_or(NotaryError::BlockNotFound(index))
    }

    /// Blocks `from..=to`, exactly as sealed.
    pub fn get_chain(&self, from: u64, to: u64) -> Result<Vec<Block>, NotaryError> {
        if from > to {
            return Err(NotaryError::BadRange { from, to });
        }
        if to >= self.current_index() {
            return Err(NotaryError::BlockNotFound(to));
        }
        Ok(self.chain[from as usize..=to as usize].to_vec())
    }

    /// The sealed value for a key, while the batch is retained. Used for
    /// promise-violation evidence checks.
    pub fn sealed_value(&self, index: u64, global_key: &Digest) -> Option<&Digest> {
        self.batches.get(&index).and_then(|b| b.get(global_key))
    }

    /// The retained batch for a sealed index, if any.
    pub fn sealed_batch(&self, index: u64) -> Option<&BTreeMap<Digest, Digest>> {
        self.batches.get(&index)
    }

    /// Releases full maps (and batches) for all indices `<= up_to`.
    /// Blocks are never released. Idempotent.
    pub fn prune(&mut self, up_to: u64) -> Result<(), NotaryError> {
        let allowed = self
            .current_index()
            .checked_sub(self.config.retention_blocks)
            .ok_or(NotaryError::RetentionViolation { up_to, allowed: 0 })?;
        if up_to > allowed {
            return Err(NotaryError::RetentionViolation { up_to, allowed });
        }
        self.maps = self.maps.split_off(&(up_to + 1));
        self.batches = self.batches.split_off(&(up_to + 1));
        Ok(())
    }

    /// Number of full maps currently retained.
    pub fn retained_maps(&self) -> usize {
        self.maps.len()
    }
}

fn build_batch_map(batch: &BTreeMap<Digest, Digest>) -> Result<VerifiableMap, NotaryError> {
    let entries = batch.iter().map(|(k, v)| (*k, *v));
    let map = if batch.len() > PARALLEL_SEAL_THRESHOLD {
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        VerifiableMap::build_parallel(entries, workers)?
    } else {
        VerifiableMap::build(entries)?
    };
    Ok(map)
}

/// The client-facing notary interface, implemented by the in-process
/// [`Notary`] and by remote transports.
pub trait NotaryService {
    fn fetch_current_index(&mut self) -> Result<u64, ServiceError>;
    fn submit(
        &mut self,
        index: u64,
        global_key: Digest,
        global_value: Digest,
    ) -> Result<Promise, ServiceError>;
    fn fetch_proof(&mut self, index: u64, global_key: &Digest)
        -> Result<InclusionProof, ServiceError>;
    fn fetch_block(&mut self, index: u64) -> Result<Block, ServiceError>;
    /// Returns once the block at `index` is sealed.
    fn wait_sealed(&mut self, index: u64) -> Result<(), ServiceError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Notary(#[from] NotaryError),
    #[error("notary unreachable: {0}")]
    Unavailable(String),
    #[error("remote error {code}: {message}")]
    Remote { code: String, message: String },
}

impl ServiceError {
    /// Machine-readable code, preserved across the HTTP boundary.
    pub fn code(&self) -> &str {
        match self {
            ServiceError::Notary(e) => e.code(),
            ServiceError::Unavailable(_) => "unavailable",
            ServiceError::Remote { code, .. } => code,
        }
    }
}

impl NotaryService for Notary {
    fn fetch_current_index(&mut self) -> Result<u64, ServiceError> {
        Ok(Notary::current_index(&*self))
    }

    fn submit(
        &mut self,
        index: u64,
        global_key: Digest,
        global_value: Digest,
    ) -> Result<Promise, ServiceError> {
        Ok(self.submit_commit("local", index, global_key, global_value)?)
    }

    fn fetch_proof(
        &mut self,
        index: u64,
        global_key: &Digest,
    ) -> Result<InclusionProof, ServiceError> {
        Ok(self.get_proof(index, global_key)?)
    }

    fn fetch_block(&mut self, index: u64) -> Result<Block, ServiceError> {
        Ok(self.get_block(index)?)
    }

    /// Embedded mode: a wait is permission to advance the logical clock,
    /// sealing every index up to and including `index`.
    fn wait_sealed(&mut self, index: u64) -> Result<(), ServiceError> {
        while Notary::current_index(&*self) <= index {
            let next = Notary::current_index(&*self);
            self.seal_block(next)?;
        }
        Ok(())
    }
}

/// Append-only persistent block log: each record is an 8-byte big-endian
/// length followed by the block's canonical record bytes.
pub struct BlockStore {
    file: File,
}

impl BlockStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, NotaryError> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| NotaryError::Io(e.to_string()))?;
        Ok(BlockStore { file })
    }

    pub fn append(&mut self, block: &Block) -> Result<(), NotaryError> {
        let record = block.to_record_bytes();
        let mut framed = Vec::with_capacity(8 + record.len());
        framed.extend_from_slice(&(record.len() as u64).to_be_bytes());
        framed.extend_from_slice(&record);
        self.file
            .write_all(&framed)
            .and_then(|_| self.file.flush())
            .map_err(|e| NotaryError::Io(e.to_string()))
    }

    pub fn load(&self) -> Result<Vec<Block>, NotaryError> {
        let mut bytes = Vec::new();
        let mut file = &self.file;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::Start(0))
            .map_err(|e| NotaryError::Io(e.to_string()))?;
        file.read_to_end(&mut bytes)
            .map_err(|e| NotaryError::Io(e.to_string()))?;
        load_block_records(&bytes)
    }

    /// Reads a block log without holding the file open.
    pub fn load_path(path: impl AsRef<Path>) -> Result<Vec<Block>, NotaryError> {
        let bytes = std::fs::read(path).map_err(|e| NotaryError::Io(e.to_string()))?;
        load_block_records(&bytes)
    }
}

fn load_block_records(bytes: &[u8]) -> Result<Vec<Block>, NotaryError> {
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let len_bytes: [u8; 8] = bytes
            .get(pos..pos + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| NotaryError::Corrupt("truncated record length".into()))?;
        pos += 8;
        let len = u64::from_be_bytes(len_bytes) as usize;
        let record = bytes
            .get(pos..pos + len)
            .ok_or_else(|| NotaryError::Corrupt("truncated record".into()))?;
        pos += len;
        blocks.push(Block::from_record_bytes(record)?);
    }
    Ok(blocks)
}
