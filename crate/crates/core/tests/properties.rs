//! Property tests over the byte-level foundations: codec injectivity,
//! trie roundtrips, order independence, parallel equivalence, and tamper
//! sensitivity on randomized inputs.

use std::collections::BTreeMap;

use proptest::prelude::*;
use synchronic_core::crypto::{decode, encode, DecodedField, Field};
use synchronic_core::{hash, implied_root, Digest, InclusionProof, VerifiableMap};

fn digest_strategy() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest::from_bytes)
}

fn entries_strategy(max: usize) -> impl Strategy<Value = BTreeMap<Digest, Digest>> {
    prop::collection::btree_map(digest_strategy(), digest_strategy(), 0..max)
}

fn field_strategy() -> impl Strategy<Value = DecodedField> {
    prop_oneof![
        any::<u64>().prop_map(DecodedField::Uint),
        prop::collection::vec(any::<u8>(), 0..24).prop_map(DecodedField::Bytes),
        "[a-z0-9/]{0,16}".prop_map(DecodedField::Str),
    ]
}

fn fields_strategy() -> impl Strategy<Value = Vec<DecodedField>> {
    prop::collection::vec(field_strategy(), 0..5)
}

fn borrow(fields: &[DecodedField]) -> Vec<Field<'_>> {
    fields.iter().map(|f| f.as_field()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encoding_is_injective(a in fields_strategy(), b in fields_strategy()) {
        if a != b {
            prop_assert_ne!(encode(&borrow(&a)), encode(&borrow(&b)));
        }
    }

    #[test]
    fn decoding_inverts_encoding(fields in fields_strategy()) {
        prop_assert_eq!(decode(&encode(&borrow(&fields))).unwrap(), fields);
    }

    #[test]
    fn every_key_roundtrips_to_the_root(entries in entries_strategy(120)) {
        let tree = VerifiableMap::build(entries.clone()).unwrap();
        for (key, value) in &entries {
            let proof = tree.prove(key).unwrap();
            prop_assert_eq!(implied_root(key, value, &proof), *tree.root_digest());
        }
    }

    #[test]
    fn build_is_insertion_order_independent(
        entries in entries_strategy(80),
        rotation in any::<usize>(),
    ) {
        let mut shuffled: Vec<(Digest, Digest)> =
            entries.iter().map(|(k, v)| (*k, *v)).collect();
        if !shuffled.is_empty() {
            let pivot = rotation % shuffled.len();
            shuffled.rotate_left(pivot);
        }
        let a = VerifiableMap::build(entries).unwrap();
        let b = VerifiableMap::build(shuffled).unwrap();
        prop_assert_eq!(a.root_digest(), b.root_digest());
    }

    #[test]
    fn parallel_build_is_bit_identical(
        entries in entries_strategy(600),
        workers in 1usize..9,
    ) {
        let sequential = VerifiableMap::build(entries.clone()).unwrap();
        let parallel = VerifiableMap::build_parallel(entries, workers).unwrap();
        prop_assert_eq!(sequential, parallel);
    }

    #[test]
    fn any_single_bit_flip_changes_the_implied_root(
        entries in entries_strategy(60).prop_filter("nonempty", |m| !m.is_empty()),
        pick in any::<u64>(),
        bit in 0usize..256,
        target in 0u8..3,
    ) {
        let tree = VerifiableMap::build(entries.clone()).unwrap();
        let root = *tree.root_digest();
        let (key, value) = entries
            .iter()
            .nth(pick as usize % entries.len())
            .map(|(k, v)| (*k, *v))
            .unwrap();
        let proof = tree.prove(&key).unwrap();
        let flip = |digest: &Digest| {
            let mut bytes: [u8; 32] = digest.as_bytes().try_into().unwrap();
            bytes[bit / 8] ^= 1 << (bit % 8);
            Digest::from_bytes(bytes)
        };
        match target {
            0 => prop_assert_ne!(implied_root(&flip(&key), &value, &proof), root),
            1 => prop_assert_ne!(implied_root(&key, &flip(&value), &proof), root),
            _ => {
                if proof.is_empty() {
                    return Ok(());
                }
                let mut siblings = proof.siblings().to_vec();
                let i = (pick as usize / 7) % siblings.len();
                siblings[i] = if siblings[i].is_empty() {
                    hash(b"forged sibling")
                } else {
                    flip(&siblings[i])
                };
                let forged = InclusionProof::from_siblings(siblings).unwrap();
                prop_assert_ne!(implied_root(&key, &value, &forged), root);
            }
        }
    }

    #[test]
    fn proof_bytes_roundtrip(entries in entries_strategy(60)) {
        let tree = VerifiableMap::build(entries.clone()).unwrap();
        for (key, _) in entries.iter().take(8) {
            let proof = tree.prove(key).unwrap();
            prop_assert_eq!(InclusionProof::from_bytes(&proof.to_bytes()).unwrap(), proof);
        }
    }
}

/// 10^5 random distinct inputs, no digest collision and constant width.
#[test]
fn hash_is_wide_and_collision_free_at_desk_scale() {
    let mut seen = std::collections::HashSet::with_capacity(100_000);
    for i in 0u64..100_000 {
        let digest = hash(&i.to_be_bytes());
        assert_eq!(digest.as_bytes().len(), 32);
        assert!(seen.insert(digest), "collision at input {i}");
    }
}
