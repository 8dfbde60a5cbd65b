//! Hashing, canonical encoding, and the unique-signature scheme.
//!
//! Everything above this module speaks in three byte-level primitives:
//!
//! - [`hash`] — SHA-256, always 32 bytes, with the distinguished zero-length
//!   [`Digest::EMPTY`] standing in for empty subtrees.
//! - [`encode`] — an injective, deterministic field encoding. Two distinct
//!   field lists never produce the same byte string, which is what makes
//!   a hash over an encoding a commitment to the fields themselves.
//! - [`AuthKeypair`] / [`Tag`] — signatures that are *unique*: for a fixed
//!   (message, public key) exactly one tag verifies. Plain Ed25519 is
//!   deterministic for an honest signer but not unique against a malicious
//!   one, so this module uses RSA PKCS#1 v1.5 with SHA-256, where
//!   verification is an equality check on a bijection of the signature
//!   value. Global keys are hashes of tags, so tag uniqueness is what makes
//!   global keys singular per (index, identity, path).

mod auth;
mod codec;
mod digest;

pub use auth::{AuthError, AuthKeypair, PublicKey, Tag, DEFAULT_KEY_BITS};
pub use codec::{decode, encode, CodecError, DecodedField, Field};
pub use digest::{hash, Digest, DigestError, DIGEST_LEN};
