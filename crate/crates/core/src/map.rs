//! The verifiable map: a collapsed binary trie over 32-byte keys whose root
//! digest commits to the entire key→value mapping.
//!
//! Keys are placed by their bit path, most-significant bit first across the
//! 32 bytes; depth `d` consumes bit `d`. Recursion collapses as soon as a
//! subtree holds zero items (the empty node, digest [`Digest::EMPTY`]) or
//! one item (a leaf, digest `hash(key ++ value)`). Internal nodes hash the
//! concatenation of their children's digests; because the empty digest is
//! zero-length, a node with one empty child degenerates to hashing the
//! live child alone.
//!
//! An [`InclusionProof`] lists the sibling digest at each depth from the
//! root down to the proven leaf, so [`implied_root`] can fold the leaf back
//! up: at depth `d`, the accumulated digest pairs with `siblings[d]` on the
//! side selected by key bit `d`. Proof length equals leaf depth and is
//! bounded by the 256-bit key width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, Digest, DIGEST_LEN};

/// Upper bound on leaf depth: distinct 32-byte keys diverge within 256 bits.
pub const MAX_DEPTH: usize = 8 * DIGEST_LEN;

/// Entries below this size are built sequentially even in parallel mode.
const PARALLEL_CUTOFF: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map keys must be full 32-byte digests")]
    InvalidKey,
    #[error("duplicate key {0}")]
    DuplicateKey(Digest),
    #[error("key {0} not present in the map")]
    KeyNotFound(Digest),
    #[error("inclusion proof length {0} exceeds {MAX_DEPTH}")]
    ProofTooLong(usize),
    #[error("malformed proof bytes: {0}")]
    MalformedProof(String),
    #[error("worker pool: {0}")]
    WorkerPool(String),
}

/// One node of the collapsed trie.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapNode {
    digest: Digest,
    kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum NodeKind {
    Empty,
    Leaf { key: Digest },
    Internal { left: Box<MapNode>, right: Box<MapNode> },
}

impl MapNode {
    pub fn digest(&self) -> &Digest {
        &self.digest
    }

    fn empty() -> Self {
        MapNode { digest: Digest::EMPTY, kind: NodeKind::Empty }
    }

    fn leaf(key: Digest, value: Digest) -> Self {
        let mut preimage = Vec::with_capacity(2 * DIGEST_LEN);
        preimage.extend_from_slice(key.as_bytes());
        preimage.extend_from_slice(value.as_bytes());
        MapNode { digest: hash(&preimage), kind: NodeKind::Leaf { key } }
    }

    fn internal(left: MapNode, right: MapNode) -> Self {
        let mut preimage = Vec::with_capacity(2 * DIGEST_LEN);
        preimage.extend_from_slice(left.digest.as_bytes());
        preimage.extend_from_slice(right.digest.as_bytes());
        MapNode {
            digest: hash(&preimage),
            kind: NodeKind::Internal { left: Box::new(left), right: Box::new(right) },
        }
    }
}

/// Bit `depth` of `key`, MSB-first. Out-of-range bits read as zero so that
/// root reconstruction stays total on adversarial proof lengths.
fn key_bit(key: &Digest, depth: usize) -> bool {
    let byte = key.as_bytes().get(depth / 8).copied().unwrap_or(0);
    (byte >> (7 - depth % 8)) & 1 == 1
}

/// An ordered list of sibling digests, index `d` = sibling at depth `d`
/// (depth 0 adjacent to the root). Entries may be the empty digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Digest>", into = "Vec<Digest>")]
pub struct InclusionProof {
    siblings: Vec<Digest>,
}

impl TryFrom<Vec<Digest>> for InclusionProof {
    type Error = MapError;

    fn try_from(siblings: Vec<Digest>) -> Result<Self, MapError> {
        InclusionProof::from_siblings(siblings)
    }
}

impl From<InclusionProof> for Vec<Digest> {
    fn from(proof: InclusionProof) -> Vec<Digest> {
        proof.siblings
    }
}

impl InclusionProof {
    pub fn from_siblings(siblings: Vec<Digest>) -> Result<Self, MapError> {
        if siblings.len() > MAX_DEPTH {
            return Err(MapError::ProofTooLong(siblings.len()));
        }
        Ok(InclusionProof { siblings })
    }

    pub fn siblings(&self) -> &[Digest] {
        &self.siblings
    }

    pub fn len(&self) -> usize {
        self.siblings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.siblings.is_empty()
    }

    /// Wire form: count as 8-byte big-endian, then per sibling one length
    /// byte (0 or 32) followed by the sibling bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.siblings.len() * (1 + DIGEST_LEN));
        out.extend_from_slice(&(self.siblings.len() as u64).to_be_bytes());
        for sibling in &self.siblings {
            out.push(sibling.as_bytes().len() as u8);
            out.extend_from_slice(sibling.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MapError> {
        let count_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| MapError::MalformedProof("missing count".into()))?;
        let count = u64::from_be_bytes(count_bytes) as usize;
        if count > MAX_DEPTH {
            return Err(MapError::ProofTooLong(count));
        }
        let mut siblings = Vec::with_capacity(count);
        let mut pos = 8usize;
        for _ in 0..count {
            let len = *bytes
                .get(pos)
                .ok_or_else(|| MapError::MalformedProof("truncated sibling length".into()))?
                as usize;
            pos += 1;
            if len != 0 && len != DIGEST_LEN {
                return Err(MapError::MalformedProof(format!("sibling length {len}")));
            }
            let chunk = bytes
                .get(pos..pos + len)
                .ok_or_else(|| MapError::MalformedProof("truncated sibling bytes".into()))?;
            pos += len;
            siblings.push(Digest::from_slice(chunk).expect("length checked"));
        }
        if pos != bytes.len() {
            return Err(MapError::MalformedProof("trailing bytes".into()));
        }
        Ok(InclusionProof { siblings })
    }
}

/// An immutable verifiable map. Build once, prove many times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiableMap {
    root: MapNode,
    entry_count: usize,
}

impl VerifiableMap {
    /// Builds the trie from (key, value) entries. Keys must be full
    /// 32-byte digests and pairwise distinct; insertion order is
    /// irrelevant to the result.
    pub fn build<I>(entries: I) -> Result<Self, MapError>
    where
        I: IntoIterator<Item = (Digest, Digest)>,
    {
        let mut items = Self::validate(entries)?;
        let entry_count = items.len();
        let root = build_node(&mut items, 0);
        Ok(VerifiableMap { root, entry_count })
    }

    /// Same result as [`build`](Self::build), bit-for-bit, with subtree
    /// construction distributed over up to `workers` threads.
    pub fn build_parallel<I>(entries: I, workers: usize) -> Result<Self, MapError>
    where
        I: IntoIterator<Item = (Digest, Digest)>,
    {
        let mut items = Self::validate(entries)?;
        let entry_count = items.len();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| MapError::WorkerPool(e.to_string()))?;
        let root = pool.install(|| build_node_parallel(&mut items, 0));
        Ok(VerifiableMap { root, entry_count })
    }

    /// Sorts by key so each recursion step can split on a bit boundary
    /// with a binary search, and rejects invalid or duplicate keys.
    fn validate<I>(entries: I) -> Result<Vec<(Digest, Digest)>, MapError>
    where
        I: IntoIterator<Item = (Digest, Digest)>,
    {
        let mut items: Vec<(Digest, Digest)> = entries.into_iter().collect();
        if items.iter().any(|(k, _)| k.is_empty()) {
            return Err(MapError::InvalidKey);
        }
        items.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(MapError::DuplicateKey(w[0].0));
        }
        Ok(items)
    }

    pub fn root_digest(&self) -> &Digest {
        &self.root.digest
    }

    pub fn root_node(&self) -> &MapNode {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.entry_count
    }

    pub fn is_empty(&self) -> bool {
        self.entry_count == 0
    }

    /// Walks from the root toward `key`, collecting the sibling digest at
    /// each depth. Fails with [`MapError::KeyNotFound`] if the walk does
    /// not end at a leaf holding `key`.
    pub fn prove(&self, key: &Digest) -> Result<InclusionProof, MapError> {
        let mut node = &self.root;
        let mut siblings = Vec::new();
        for depth in 0..=MAX_DEPTH {
            match &node.kind {
                NodeKind::Internal { left, right } => {
                    if key_bit(key, depth) {
                        siblings.push(left.digest);
                        node = right;
                    } else {
                        siblings.push(right.digest);
                        node = left;
                    }
                }
                NodeKind::Leaf { key: leaf_key } if leaf_key == key => {
                    return InclusionProof::from_siblings(siblings);
                }
                NodeKind::Leaf { .. } | NodeKind::Empty => {
                    return Err(MapError::KeyNotFound(*key));
                }
            }
        }
        unreachable!("trie deeper than the key bit width");
    }
}

fn build_node(items: &mut [(Digest, Digest)], depth: usize) -> MapNode {
    match items {
        [] => MapNode::empty(),
        [(key, value)] => MapNode::leaf(*key, *value),
        _ => {
            assert!(depth < MAX_DEPTH, "distinct keys cannot share {MAX_DEPTH} bits");
            // items are sorted by key, so the depth-d bit splits them at
            // a single boundary
            let split = items.partition_point(|(k, _)| !key_bit(k, depth));
            let (zeros, ones) = items.split_at_mut(split);
            let left = build_node(zeros, depth + 1);
            let right = build_node(ones, depth + 1);
            MapNode::internal(left, right)
        }
    }
}

fn build_node_parallel(items: &mut [(Digest, Digest)], depth: usize) -> MapNode {
    if items.len() <= PARALLEL_CUTOFF {
        return build_node(items, depth);
    }
    assert!(depth < MAX_DEPTH, "distinct keys cannot share {MAX_DEPTH} bits");
    let split = items.partition_point(|(k, _)| !key_bit(k, depth));
    let (zeros, ones) = items.split_at_mut(split);
    let (left, right) = rayon::join(
        || build_node_parallel(zeros, depth + 1),
        || build_node_parallel(ones, depth + 1),
    );
    MapNode::internal(left, right)
}

/// Folds a leaf back up through its siblings to the root it implies.
///
/// Starts from `hash(key ++ value)` and, for each depth `d` from the
/// deepest sibling up to 0, pairs the accumulated digest with
/// `proof.siblings()[d]` on the side chosen by key bit `d`. Total: any
/// wrong input simply yields a digest that matches no published root.
pub fn implied_root(key: &Digest, value: &Digest, proof: &InclusionProof) -> Digest {
    let mut preimage = Vec::with_capacity(2 * DIGEST_LEN);
    preimage.extend_from_slice(key.as_bytes());
    preimage.extend_from_slice(value.as_bytes());
    let mut step = hash(&preimage);
    for depth in (0..proof.len()).rev() {
        let sibling = &proof.siblings()[depth];
        let mut buf = Vec::with_capacity(2 * DIGEST_LEN);
        if key_bit(key, depth) {
            buf.extend_from_slice(sibling.as_bytes());
            buf.extend_from_slice(step.as_bytes());
        } else {
            buf.extend_from_slice(step.as_bytes());
            buf.extend_from_slice(sibling.as_bytes());
        }
        step = hash(&buf);
    }
    step
}
