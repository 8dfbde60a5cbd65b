//! Canonical message encoding: the byte layout every hash and signature in
//! the system is computed over.
//!
//! A message is an ordered list of typed fields. Each field is rendered as
//!
//! ```text
//! type byte (0x01 uint | 0x02 bytes | 0x03 utf-8 string)
//! ++ 8-byte big-endian payload length
//! ++ payload (uints as 8-byte big-endian)
//! ```
//!
//! and fields are concatenated in order. The type tag plus explicit length
//! prefix make the encoding injective: distinct field lists can never
//! produce the same byte string.

use thiserror::Error;

const TAG_UINT: u8 = 0x01;
const TAG_BYTES: u8 = 0x02;
const TAG_STR: u8 = 0x03;

/// A borrowed field of a canonical message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field<'a> {
    Uint(u64),
    Bytes(&'a [u8]),
    Str(&'a str),
}

/// An owned field, as returned by [`decode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodedField {
    Uint(u64),
    Bytes(Vec<u8>),
    Str(String),
}

impl DecodedField {
    pub fn as_field(&self) -> Field<'_> {
        match self {
            DecodedField::Uint(v) => Field::Uint(*v),
            DecodedField::Bytes(b) => Field::Bytes(b),
            DecodedField::Str(s) => Field::Str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("message truncated at offset {0}")]
    Truncated(usize),
    #[error("unknown field tag {0:#04x} at offset {1}")]
    UnknownTag(u8, usize),
    #[error("uint field must have length 8, got {0}")]
    BadUintLength(u64),
    #[error("field length {0} exceeds remaining input")]
    Oversized(u64),
    #[error("string field is not valid UTF-8")]
    InvalidUtf8,
}

/// Encodes a field list into its canonical byte string.
///
/// The empty message encodes to the empty byte string.
pub fn encode(fields: &[Field<'_>]) -> Vec<u8> {
    let mut out = Vec::new();
    for field in fields {
        match field {
            Field::Uint(v) => {
                out.push(TAG_UINT);
                out.extend_from_slice(&8u64.to_be_bytes());
                out.extend_from_slice(&v.to_be_bytes());
            }
            Field::Bytes(b) => {
                out.push(TAG_BYTES);
                out.extend_from_slice(&(b.len() as u64).to_be_bytes());
                out.extend_from_slice(b);
            }
            Field::Str(s) => {
                out.push(TAG_STR);
                out.extend_from_slice(&(s.len() as u64).to_be_bytes());
                out.extend_from_slice(s.as_bytes());
            }
        }
    }
    out
}

/// Decodes a canonical byte string back into its field list.
///
/// `decode(encode(m)) == m` for every message; trailing or malformed bytes
/// are rejected.
pub fn decode(bytes: &[u8]) -> Result<Vec<DecodedField>, CodecError> {
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let tag = bytes[pos];
        pos += 1;
        let len_bytes: [u8; 8] = bytes
            .get(pos..pos + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or(CodecError::Truncated(pos))?;
        pos += 8;
        let len = u64::from_be_bytes(len_bytes);
        if len > (bytes.len() - pos) as u64 {
            return Err(CodecError::Oversized(len));
        }
        let payload = &bytes[pos..pos + len as usize];
        pos += len as usize;
        match tag {
            TAG_UINT => {
                if len != 8 {
                    return Err(CodecError::BadUintLength(len));
                }
                let v = u64::from_be_bytes(payload.try_into().expect("length checked"));
                fields.push(DecodedField::Uint(v));
            }
            TAG_BYTES => fields.push(DecodedField::Bytes(payload.to_vec())),
            TAG_STR => {
                let s = std::str::from_utf8(payload).map_err(|_| CodecError::InvalidUtf8)?;
                fields.push(DecodedField::Str(s.to_string()));
            }
            other => return Err(CodecError::UnknownTag(other, pos - 9 - len as usize)),
        }
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn empty_message_is_empty_bytes() {
        assert_eq!(encode(&[]), Vec::<u8>::new());
        assert_eq!(decode(&[]).unwrap(), Vec::new());
    }

    #[test]
    fn uint_layout_hand_applied() {
        // type 0x01 ++ length 8 (big-endian) ++ value 5 (big-endian)
        let expected = [
            0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x08, 0x00, 0x00, 0x00, 0x00, 0x00,
            0x00, 0x00, 0x05,
        ];
        assert_eq!(encode(&[Field::Uint(5)]), expected);
    }

    #[test]
    fn bytes_and_str_layout() {
        let enc = encode(&[Field::Bytes(b"ab"), Field::Str("c")]);
        let expected = [
            0x02, 0, 0, 0, 0, 0, 0, 0, 2, b'a', b'b', 0x03, 0, 0, 0, 0, 0, 0, 0, 1, b'c',
        ];
        assert_eq!(enc, expected);
    }

    #[test]
    fn decode_inverts_encode() {
        let fields = vec![
            DecodedField::Uint(u64::MAX),
            DecodedField::Bytes(vec![0, 1, 2, 255]),
            DecodedField::Str("path/α".to_string()),
            DecodedField::Uint(0),
            DecodedField::Bytes(vec![]),
            DecodedField::Str(String::new()),
        ];
        let borrowed: Vec<Field<'_>> = fields.iter().map(|f| f.as_field()).collect();
        assert_eq!(decode(&encode(&borrowed)).unwrap(), fields);
    }

    #[test]
    fn decode_rejects_malformed() {
        assert!(matches!(decode(&[0x01]), Err(CodecError::Truncated(_))));
        assert!(matches!(
            decode(&[0x07, 0, 0, 0, 0, 0, 0, 0, 0]),
            Err(CodecError::UnknownTag(0x07, 0))
        ));
        // uint with wrong payload length
        assert!(matches!(
            decode(&[0x01, 0, 0, 0, 0, 0, 0, 0, 2, 9, 9]),
            Err(CodecError::BadUintLength(2))
        ));
        // declared length runs past the end
        assert!(matches!(
            decode(&[0x02, 0, 0, 0, 0, 0, 0, 0, 9, 1]),
            Err(CodecError::Oversized(9))
        ));
        // invalid utf-8 in a string field
        assert!(matches!(
            decode(&[0x03, 0, 0, 0, 0, 0, 0, 0, 1, 0xff]),
            Err(CodecError::InvalidUtf8)
        ));
    }

    // Brute-force injectivity: generate pseudo-random field lists and check
    // that no two distinct lists collide on their encoding.
    #[test]
    fn injective_over_fuzzed_corpus() {
        let mut state = 0x853c_49e6_748f_ea9bu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state
        };
        let mut seen: HashSet<Vec<u8>> = HashSet::new();
        let mut lists: HashSet<Vec<u8>> = HashSet::new();
        for _ in 0..10_000 {
            let n_fields = (next() % 4) as usize;
            let mut fields: Vec<DecodedField> = Vec::new();
            for _ in 0..n_fields {
                match next() % 3 {
                    0 => fields.push(DecodedField::Uint(next() % 1000)),
                    1 => {
                        let len = (next() % 6) as usize;
                        fields.push(DecodedField::Bytes(
                            (0..len).map(|_| (next() % 7) as u8).collect(),
                        ));
                    }
                    _ => {
                        let len = (next() % 5) as usize;
                        fields.push(DecodedField::Str(
                            (0..len).map(|_| char::from(b'a' + (next() % 3) as u8)).collect(),
                        ));
                    }
                }
            }
            // key the list by a debug rendering to identify distinct inputs
            let key = format!("{fields:?}").into_bytes();
            let enc = encode(&fields.iter().map(|f| f.as_field()).collect::<Vec<_>>());
            if lists.insert(key) {
                assert!(
                    seen.insert(enc),
                    "two distinct field lists encoded identically"
                );
            }
        }
    }
}
