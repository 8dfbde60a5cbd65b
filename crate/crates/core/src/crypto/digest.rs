use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Byte width of a non-empty digest.
pub const DIGEST_LEN: usize = 32;

/// Errors produced when parsing digest bytes or hex.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DigestError {
    #[error("digest must be 0 or 32 bytes, got {0}")]
    BadLength(usize),
    #[error("invalid digest hex: {0}")]
    BadHex(String),
}

/// A SHA-256 digest, or the distinguished zero-length empty digest.
///
/// The empty digest marks empty subtrees in the verifiable map. Because it
/// contributes zero bytes to any concatenation, `hash(EMPTY ++ x)` equals
/// `hash(x)`, which keeps tree construction, proving, and root
/// reconstruction mutually consistent when one side of a node is empty.
///
/// Hex rendering is lowercase, 64 chars; the empty digest renders as `""`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(Repr);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Repr {
    Empty,
    Full([u8; DIGEST_LEN]),
}

impl Digest {
    /// The zero-length digest used for empty subtrees.
    pub const EMPTY: Digest = Digest(Repr::Empty);

    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(Repr::Full(bytes))
    }

    /// Accepts exactly 0 bytes (the empty digest) or 32 bytes.
    pub fn from_slice(bytes: &[u8]) -> Result<Self, DigestError> {
        match bytes.len() {
            0 => Ok(Digest::EMPTY),
            DIGEST_LEN => {
                let mut buf = [0u8; DIGEST_LEN];
                buf.copy_from_slice(bytes);
                Ok(Digest(Repr::Full(buf)))
            }
            n => Err(DigestError::BadLength(n)),
        }
    }

    /// Zero-length slice for the empty digest, 32 bytes otherwise.
    pub fn as_bytes(&self) -> &[u8] {
        match &self.0 {
            Repr::Empty => &[],
            Repr::Full(bytes) => bytes,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.0, Repr::Empty)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.as_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, DigestError> {
        let bytes = hex::decode(s).map_err(|e| DigestError::BadHex(e.to_string()))?;
        Self::from_slice(&bytes)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            f.write_str("Digest(empty)")
        } else {
            write!(f, "Digest({})", self.to_hex())
        }
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of `data`. Always returns a full 32-byte digest.
pub fn hash(data: &[u8]) -> Digest {
    let out = Sha256::digest(data);
    let mut buf = [0u8; DIGEST_LEN];
    buf.copy_from_slice(&out);
    Digest::from_bytes(buf)
}
