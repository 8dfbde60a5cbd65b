//! Commitments: the portable proof objects tying a piece of content,
//! through a local and a global inclusion proof, to a published block root.
//!
//! The derivation pipeline, client side:
//!
//! 1. Each content item becomes a [`ContentEnvelope`] carrying a per-path
//!    sequence number, the target block index, and the content digest. The
//!    envelope hash is the *local value*; the hash of the local path is the
//!    *local key*.
//! 2. The local verifiable map over those pairs yields the *local root*.
//! 3. The *global key* is `hash(sign(encode(index, public-key, global-path)))`
//!    — unique per (index, identity, path) because the signature is unique —
//!    and the *global value* is `hash(encode(local-root))`.
//!
//! A [`Commitment`] bundles everything a verifier needs to replay both
//! proofs against nothing but the block root and the committer's public
//! key. [`verify_commitment`] is total: adversarial input yields `false`,
//! never a crash.
//!
//! [`Periodicity`] fixes a ledger's commit period to a power of two so
//! ledgers of different frequencies interoperate, and [`validate_window`]
//! implements the fork-window coverage rule: a run of sequentially
//! contiguous commitments is acceptable only if it covers more than half
//! of the indices expected in the window.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{encode, hash, AuthError, AuthKeypair, Digest, Field, PublicKey, Tag};
use crate::map::{implied_root, InclusionProof, MapError, VerifiableMap};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitmentError {
    #[error("global path must be nonempty")]
    EmptyGlobalPath,
    #[error("duplicate local path {0:?}")]
    DuplicatePath(String),
    #[error("commitment components do not fit together: {0}")]
    Mismatched(&'static str),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// The canonical content wrapper: sequence number and block index travel
/// inside the committed bytes so forks and back-dating are detectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContentEnvelope {
    pub sequence: u64,
    pub index: u64,
    pub payload_digest: Digest,
}

impl ContentEnvelope {
    /// The local value: hash of the canonically encoded envelope.
    pub fn local_value(&self) -> Digest {
        hash(&encode(&[
            Field::Uint(self.sequence),
            Field::Uint(self.index),
            Field::Bytes(self.payload_digest.as_bytes()),
        ]))
    }
}

/// The local key for a content path.
pub fn local_key(local_path: &str) -> Digest {
    hash(local_path.as_bytes())
}

/// The byte string signed to derive a global key.
pub fn global_key_message(index: u64, public_key: &PublicKey, global_path: &str) -> Vec<u8> {
    encode(&[
        Field::Uint(index),
        Field::Bytes(public_key.as_der()),
        Field::Str(global_path),
    ])
}

/// Derives the global key for (index, identity, global path): the unique
/// tag over the encoded tuple, hashed. Same inputs, same output, always.
pub fn derive_global_key(
    index: u64,
    keypair: &AuthKeypair,
    global_path: &str,
) -> Result<(Digest, Tag), CommitmentError> {
    if global_path.is_empty() {
        return Err(CommitmentError::EmptyGlobalPath);
    }
    let message = global_key_message(index, keypair.public_key(), global_path);
    let tag = keypair.sign(&message)?;
    Ok((hash(tag.as_bytes()), tag))
}

/// Derives the global value committed for a local root.
pub fn derive_global_value(local_root: &Digest) -> Digest {
    hash(&encode(&[Field::Bytes(local_root.as_bytes())]))
}

/// Builds the local verifiable map for one commit cycle and returns an
/// inclusion proof per path.
pub fn build_local_map<I>(
    contents: I,
) -> Result<(VerifiableMap, BTreeMap<String, InclusionProof>), CommitmentError>
where
    I: IntoIterator<Item = (String, ContentEnvelope)>,
{
    let mut keyed: Vec<(Digest, String)> = Vec::new();
    let mut entries: Vec<(Digest, Digest)> = Vec::new();
    let mut paths = std::collections::BTreeSet::new();
    for (path, envelope) in contents {
        if !paths.insert(path.clone()) {
            return Err(CommitmentError::DuplicatePath(path));
        }
        let key = local_key(&path);
        entries.push((key, envelope.local_value()));
        keyed.push((key, path));
    }
    let tree = VerifiableMap::build(entries)?;
    let mut proofs = BTreeMap::new();
    for (key, path) in keyed {
        let proof = tree.prove(&key)?;
        proofs.insert(path, proof);
    }
    Ok((tree, proofs))
}

/// The self-contained proof object a ledger publishes beside its content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Commitment {
    pub index: u64,
    pub public_key: PublicKey,
    pub global_path: String,
    pub tag: Tag,
    pub local_path: String,
    pub envelope: ContentEnvelope,
    pub local_proof: InclusionProof,
    pub local_root: Digest,
    pub global_proof: InclusionProof,
}

impl Commitment {
    /// The global key this commitment occupies: the hash of its tag.
    pub fn global_key(&self) -> Digest {
        hash(self.tag.as_bytes())
    }
}

/// Assembles a commitment after checking the parts actually chain together
/// up to the given block root.
#[allow(clippy::too_many_arguments)]
pub fn assemble_commitment(
    index: u64,
    public_key: PublicKey,
    global_path: String,
    tag: Tag,
    local_path: String,
    envelope: ContentEnvelope,
    local_proof: InclusionProof,
    local_root: Digest,
    global_proof: InclusionProof,
    block_root: &Digest,
) -> Result<Commitment, CommitmentError> {
    let commitment = Commitment {
        index,
        public_key,
        global_path,
        tag,
        local_path,
        envelope,
        local_proof,
        local_root,
        global_proof,
    };
    if implied_root(
        &local_key(&commitment.local_path),
        &commitment.envelope.local_value(),
        &commitment.local_proof,
    ) != commitment.local_root
    {
        return Err(CommitmentError::Mismatched("local proof does not reach local root"));
    }
    if !verify_commitment(&commitment, block_root) {
        return Err(CommitmentError::Mismatched("commitment does not verify against block root"));
    }
    Ok(commitment)
}

/// Replays a commitment against a block root.
///
/// True iff all of:
/// (a) the local value recomputed from the envelope,
/// (b) folded through the local proof, reaches the stated local root;
/// (c) the tag is the unique valid signature over (index, public key,
///     global path); and
/// (d) the global key/value folded through the global proof reaches
///     `block_root`.
pub fn verify_commitment(commitment: &Commitment, block_root: &Digest) -> bool {
    let local_value = commitment.envelope.local_value();
    if implied_root(
        &local_key(&commitment.local_path),
        &local_value,
        &commitment.local_proof,
    ) != commitment.local_root
    {
        return false;
    }
    let message = global_key_message(
        commitment.index,
        &commitment.public_key,
        &commitment.global_path,
    );
    if !commitment.public_key.verify(&message, &commitment.tag) {
        return false;
    }
    let global_key = commitment.global_key();
    let global_value = derive_global_value(&commitment.local_root);
    implied_root(&global_key, &global_value, &commitment.global_proof) == *block_root
}

/// A ledger's commit period exponent: the period is `2^value` blocks, so
/// committed indices must be divisible by `2^value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Periodicity(pub u32);

impl Periodicity {
    /// The period in blocks, `2^value`.
    pub fn period(&self) -> u128 {
        1u128 << self.0.min(127)
    }

    /// True iff `index` is divisible by the period. Periodicity 0 accepts
    /// every index.
    pub fn accepts(&self, index: u64) -> bool {
        (index as u128) % self.period() == 0
    }
}

/// An inclusive index window with the periodicity its coverage is judged
/// against. Both endpoints must be period-aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub start_index: u64,
    pub end_index: u64,
    pub periodicity: Periodicity,
}

impl WindowSpec {
    pub fn new(
        start_index: u64,
        end_index: u64,
        periodicity: Periodicity,
    ) -> Result<Self, CommitmentError> {
        if start_index > end_index {
            return Err(CommitmentError::InvalidWindow(format!(
                "start {start_index} after end {end_index}"
            )));
        }
        if !periodicity.accepts(start_index) || !periodicity.accepts(end_index) {
            return Err(CommitmentError::InvalidWindow(format!(
                "endpoints {start_index}..={end_index} not aligned to period {}",
                periodicity.period()
            )));
        }
        Ok(WindowSpec { start_index, end_index, periodicity })
    }

    /// Window length in blocks, end − start.
    pub fn block_length(&self) -> u64 {
        self.end_index - self.start_index
    }

    /// Number of period-aligned indices in the inclusive window.
    pub fn expected_count(&self) -> u64 {
        (self.block_length() as u128 / self.periodicity.period()) as u64 + 1
    }

    /// Minimum number of valid commitments that rules out a hidden fork:
    /// strictly more than half of the expected indices.
    pub fn required_count(&self) -> u64 {
        self.expected_count() / 2 + 1
    }
}

/// The fork-window test over a ledger's history.
///
/// True iff the commitments share one (public key, global path, local
/// path), every one verifies against its block root, their indices are
/// strictly increasing, in-window, and period-aligned, their sequence
/// numbers run consecutively with no gap or duplicate, and they cover more
/// than half of the window's expected indices.
pub fn validate_window(
    commitments: &[Commitment],
    window: &WindowSpec,
    block_roots: &BTreeMap<u64, Digest>,
) -> bool {
    let Some(first) = commitments.first() else {
        // zero coverage can never exceed half of a nonempty expectation
        return false;
    };
    for c in commitments {
        if c.public_key != first.public_key
            || c.global_path != first.global_path
            || c.local_path != first.local_path
        {
            return false;
        }
        if c.index < window.start_index
            || c.index > window.end_index
            || !window.periodicity.accepts(c.index)
        {
            return false;
        }
        let Some(root) = block_roots.get(&c.index) else {
            return false;
        };
        if !verify_commitment(c, root) {
            return false;
        }
    }
    let mut ordered: Vec<&Commitment> = commitments.iter().collect();
    ordered.sort_by_key(|c| c.index);
    for pair in ordered.windows(2) {
        if pair[1].index <= pair[0].index {
            return false; // duplicate index
        }
        if pair[1].envelope.sequence != pair[0].envelope.sequence + 1 {
            return false; // sequence gap, duplicate, or reversal
        }
    }
    ordered.len() as u64 >= window.required_count()
}
