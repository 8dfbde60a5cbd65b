//! Unique signatures over RSA PKCS#1 v1.5 with SHA-256.
//!
//! The contract this module exports is stronger than ordinary signature
//! determinism: for a fixed (message, public key) there is exactly *one*
//! tag that verifies. PKCS#1 v1.5 gives this for free — the padding is a
//! deterministic function of the message, and verification checks
//! `tag^e mod n` against that padding, so the accepted tag is the unique
//! preimage of a bijection on `[0, n)`. Verification additionally pins the
//! tag length to the modulus width, closing the `tag + n` re-encoding.
//!
//! Keypairs are derived deterministically from a seed so that identities
//! are reproducible across runs. Public keys travel as PKCS#1 DER bytes
//! and render as lowercase hex in wire formats.

use std::fmt;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use rsa::pkcs1::{DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey};
use rsa::pkcs1v15::{Signature, SigningKey, VerifyingKey};
use rsa::sha2::Sha256;
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::traits::PublicKeyParts;
use rsa::{RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::digest::hash;

/// Default modulus size for newly generated keypairs.
pub const DEFAULT_KEY_BITS: usize = 2048;

const MIN_KEY_BITS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("keypair seed must be nonempty")]
    EmptySeed,
    #[error("key size {0} below minimum {MIN_KEY_BITS}")]
    KeyTooSmall(usize),
    #[error("key generation failed: {0}")]
    Generation(String),
    #[error("malformed key material: {0}")]
    MalformedKey(String),
    #[error("signing failed: {0}")]
    Signing(String),
}

/// A signature tag. Exactly one tag verifies per (message, public key).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Tag(Vec<u8>);

impl Tag {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Tag(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, AuthError> {
        hex::decode(s)
            .map(Tag)
            .map_err(|e| AuthError::MalformedKey(format!("tag hex: {e}")))
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({})", self.to_hex())
    }
}

/// An RSA public key, carried as PKCS#1 DER bytes.
///
/// Parsing is deferred to verification time so that untrusted key bytes in
/// a commitment can never make a verifier fail earlier than "false".
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PublicKey {
    der: Vec<u8>,
}

impl PublicKey {
    pub fn from_der(der: Vec<u8>) -> Self {
        PublicKey { der }
    }

    pub fn as_der(&self) -> &[u8] {
        &self.der
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.der)
    }

    pub fn from_hex(s: &str) -> Result<Self, AuthError> {
        hex::decode(s)
            .map(|der| PublicKey { der })
            .map_err(|e| AuthError::MalformedKey(format!("public key hex: {e}")))
    }

    /// Checks that `tag` is the unique valid tag for `message` under this
    /// key. Total: malformed keys or tags yield `false`, never an error.
    pub fn verify(&self, message: &[u8], tag: &Tag) -> bool {
        let Ok(key) = RsaPublicKey::from_pkcs1_der(&self.der) else {
            return false;
        };
        // Pin the tag to the modulus width; a shorter or longer encoding of
        // the same residue must not verify.
        if tag.as_bytes().len() != key.size() {
            return false;
        }
        let Ok(signature) = Signature::try_from(tag.as_bytes()) else {
            return false;
        };
        VerifyingKey::<Sha256>::new(key)
            .verify(message, &signature)
            .is_ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

macro_rules! serde_as_hex {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }
        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                $ty::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_as_hex!(Tag);
serde_as_hex!(PublicKey);

/// A signing keypair. Immutable after creation; safe to share.
#[derive(Clone)]
pub struct AuthKeypair {
    signing: SigningKey<Sha256>,
    public: PublicKey,
}

impl AuthKeypair {
    /// Derives a keypair deterministically from a nonempty seed at the
    /// default key size. The same seed always yields the same keypair.
    pub fn from_seed(seed: &[u8]) -> Result<Self, AuthError> {
        Self::from_seed_with_bits(seed, DEFAULT_KEY_BITS)
    }

    /// Seeded generation at an explicit modulus size (minimum 1024 bits).
    pub fn from_seed_with_bits(seed: &[u8], bits: usize) -> Result<Self, AuthError> {
        if seed.is_empty() {
            return Err(AuthError::EmptySeed);
        }
        if bits < MIN_KEY_BITS {
            return Err(AuthError::KeyTooSmall(bits));
        }
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(hash(seed).as_bytes());
        let mut rng = ChaCha20Rng::from_seed(rng_seed);
        let secret = RsaPrivateKey::new(&mut rng, bits)
            .map_err(|e| AuthError::Generation(e.to_string()))?;
        Ok(Self::from_private(secret))
    }

    /// Restores a keypair from PKCS#1 DER private-key bytes.
    pub fn from_secret_der(der: &[u8]) -> Result<Self, AuthError> {
        let secret = RsaPrivateKey::from_pkcs1_der(der)
            .map_err(|e| AuthError::MalformedKey(e.to_string()))?;
        Ok(Self::from_private(secret))
    }

    fn from_private(secret: RsaPrivateKey) -> Self {
        let der = RsaPublicKey::from(&secret)
            .to_pkcs1_der()
            .expect("encoding a freshly parsed key cannot fail")
            .into_vec();
        AuthKeypair {
            signing: SigningKey::new(secret),
            public: PublicKey::from_der(der),
        }
    }

    /// PKCS#1 DER private-key bytes, for key files. Handle with care.
    pub fn secret_der(&self) -> Vec<u8> {
        self.signing
            .as_ref()
            .to_pkcs1_der()
            .expect("encoding an in-memory key cannot fail")
            .as_bytes()
            .to_vec()
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    /// Produces the unique tag for `message`: signing twice yields
    /// bit-identical tags.
    pub fn sign(&self, message: &[u8]) -> Result<Tag, AuthError> {
        self.signing
            .try_sign(message)
            .map(|sig| Tag(sig.to_bytes().into_vec()))
            .map_err(|e| AuthError::Signing(e.to_string()))
    }
}

impl fmt::Debug for AuthKeypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // never render private material
        f.debug_struct("AuthKeypair")
            .field("public", &self.public)
            .finish()
    }
}
