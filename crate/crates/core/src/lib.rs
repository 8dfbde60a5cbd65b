//! Core library for the Synchronic Web: a minimal notarized blockchain whose
//! blocks commit to per-index verifiable maps, letting any client prove
//! "this identity committed this content — and only this content — at this
//! block index" against nothing more than a published block root.
//!
//! The pieces, bottom-up:
//!
//! - [`crypto`] — hashing, canonical byte encoding, and unique signatures.
//! - [`map`] — the collapsed binary-trie verifiable map with inclusion proofs.
//! - [`commitment`] — global key/value derivation, the portable [`Commitment`]
//!   object, periodicity, and the fork-window coverage rule.
//! - [`notary`] — the server side: per-index batches, sealed blocks, proof
//!   serving, retention/pruning, and signed promises.
//! - [`ledger`] — the writing client: resolve content, build local maps,
//!   run commit cycles, retain promises, audit the notary.
//! - [`verifier`] — the reading client: itemized verdicts over single
//!   commitments and history windows.
//! - [`sim`] — a deterministic rotating-leader quorum simulation with
//!   Byzantine fault injection, exercising the weak-availability guarantee.
//!
//! [`Commitment`]: commitment::Commitment

pub mod commitment;
pub mod crypto;
pub mod ledger;
pub mod map;
pub mod notary;
pub mod sim;
pub mod verifier;

pub use crypto::{hash, AuthKeypair, Digest, PublicKey, Tag};
pub use map::{implied_root, InclusionProof, VerifiableMap};
