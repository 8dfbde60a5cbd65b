//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `cargo test --test acceptance -- --nocapture` to
//! see them). Every tolerance is pinned here in code.

use std::collections::BTreeMap;
use std::time::Instant;

use synchronic_core::commitment::{
    derive_global_key, validate_window, verify_commitment, Commitment, ContentEnvelope,
    Periodicity, WindowSpec,
};
use synchronic_core::crypto::DIGEST_LEN;
use synchronic_core::ledger::{LedgerError, LedgerState};
use synchronic_core::notary::{Notary, NotaryConfig};
use synchronic_core::sim::{simulate, FaultAssignment, FaultKind, SimConfig};
use synchronic_core::verifier::{verify_history, verify_single, Outcome};
use synchronic_core::{hash, implied_root, AuthKeypair, Digest, InclusionProof, VerifiableMap};

/// Deterministic uniform 32-byte digests from a hash chain.
fn random_digests(seed: &str, n: usize) -> Vec<Digest> {
    (0..n)
        .map(|i| hash(format!("{seed}/{i}").as_bytes()))
        .collect()
}

fn random_entries(seed: &str, n: usize) -> Vec<(Digest, Digest)> {
    random_digests(&format!("{seed}/keys"), n)
        .into_iter()
        .zip(random_digests(&format!("{seed}/values"), n))
        .collect()
}

fn keypair(seed: &[u8]) -> AuthKeypair {
    AuthKeypair::from_seed_with_bits(seed, 1024).unwrap()
}

fn flip_bit(digest: &Digest, bit: usize) -> Digest {
    let mut bytes: [u8; DIGEST_LEN] = digest.as_bytes().try_into().expect("full digest");
    bytes[(bit / 8) % DIGEST_LEN] ^= 1 << (bit % 8);
    Digest::from_bytes(bytes)
}

/// Criterion 1 — verifiable-map roundtrip across sizes 0..4096.
#[test]
fn criterion_1_map_roundtrip_across_sizes() {
    let start = Instant::now();
    for &n in &[0usize, 1, 2, 3, 17, 256, 4096] {
        let entries = random_entries(&format!("roundtrip/{n}"), n);
        let tree = VerifiableMap::build(entries.clone()).unwrap();
        for (key, value) in &entries {
            let proof = tree.prove(key).unwrap();
            assert_eq!(
                implied_root(key, value, &proof),
                *tree.root_digest(),
                "roundtrip failed for size {n}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10s");
    println!("criterion 1 (map roundtrip, n in {{0,1,2,3,17,256,4096}}): PASS in {elapsed:?}");
}

/// Criterion 2 — proof compactness at n = 4096: max length ≤ 40 and mean
/// within [11, 14], with a fixed seed for exact reproduction.
#[test]
fn criterion_2_proof_compactness() {
    let entries = random_entries("compactness/seed-2024", 4096);
    let tree = VerifiableMap::build(entries.clone()).unwrap();
    let lengths: Vec<usize> = entries
        .iter()
        .map(|(key, _)| tree.prove(key).unwrap().len())
        .collect();
    let max = *lengths.iter().max().unwrap();
    let mean = lengths.iter().sum::<usize>() as f64 / lengths.len() as f64;
    assert!(max <= 40, "max proof length {max} exceeds 40");
    assert!(
        (11.0..=14.0).contains(&mean),
        "mean proof length {mean} outside [11, 14]"
    );
    println!("criterion 2 (proof compactness): PASS, max {max}, mean {mean:.3}");
}

/// Criterion 3 — parallel construction is bit-identical to sequential on
/// a 10^4-entry map for 1, 2, and 8 workers.
#[test]
fn criterion_3_parallel_equals_sequential() {
    let entries = random_entries("parallel", 10_000);
    let sequential = VerifiableMap::build(entries.clone()).unwrap();
    for workers in [1usize, 2, 8] {
        let parallel = VerifiableMap::build_parallel(entries.clone(), workers).unwrap();
        assert_eq!(
            parallel.root_digest(),
            sequential.root_digest(),
            "root diverged with {workers} workers"
        );
    }
    println!("criterion 3 (parallel == sequential, 10^4 entries, workers 1/2/8): PASS");
}

/// Criterion 4 — the full commit/retrieve/verify scenario: one notary,
/// one ledger, three articles at one index, plus a 100-mutation single-bit
/// tamper sweep with zero false accepts.
#[test]
fn criterion_4_end_to_end_scenario_with_tamper_sweep() {
    let start = Instant::now();
    let mut notary = Notary::new(NotaryConfig::new("n0", keypair(b"acceptance notary"))).unwrap();
    notary.seal_block(0).unwrap();
    let mut ledger = LedgerState::new(keypair(b"alice"), "industry/news", Periodicity(0));
    let contents: BTreeMap<String, Vec<u8>> = [
        ("https://looking-glass.example/a", "article one"),
        ("https://looking-glass.example/b", "article two"),
        ("https://looking-glass.example/c", "article three"),
    ]
    .into_iter()
    .map(|(p, b)| (p.to_string(), b.as_bytes().to_vec()))
    .collect();
    let commitments = ledger.commit_cycle(&mut notary, &contents, 1).unwrap();
    assert_eq!(commitments.len(), 3);

    // the verifier confirms all three
    for commitment in commitments.values() {
        let report = verify_single(commitment, &mut notary);
        assert_eq!(report.outcome, Outcome::Valid);
    }

    // 100-mutation sweep: single-bit tampers of content digest, tag,
    // either proof, and the block root must all flip the verdict
    let block_root = notary.get_block(1).unwrap().payload;
    let subject: Vec<&Commitment> = commitments.values().collect();
    let mut rejected = 0usize;
    for trial in 0..100usize {
        let base = subject[trial % subject.len()].clone();
        let accepted = match trial % 5 {
            0 => {
                // content: a different article body implies a different
                // payload digest
                let mut mutated = base;
                mutated.envelope.payload_digest =
                    flip_bit(&mutated.envelope.payload_digest, trial * 7 + 3);
                verify_commitment(&mutated, &block_root)
            }
            1 => {
                let mut mutated = base;
                let mut tag = mutated.tag.as_bytes().to_vec();
                let i = (trial * 13) % tag.len();
                tag[i] ^= 1 << (trial % 8);
                mutated.tag = synchronic_core::Tag::from_bytes(tag);
                verify_commitment(&mutated, &block_root)
            }
            2 => {
                let mut mutated = base;
                let mut siblings = mutated.local_proof.siblings().to_vec();
                let i = (trial / 5) % siblings.len();
                siblings[i] = if siblings[i].is_empty() {
                    hash(b"conjured sibling")
                } else {
                    flip_bit(&siblings[i], trial * 11)
                };
                mutated.local_proof = InclusionProof::from_siblings(siblings).unwrap();
                verify_commitment(&mutated, &block_root)
            }
            3 => {
                let mut mutated = base;
                let mut siblings = mutated.global_proof.siblings().to_vec();
                if siblings.is_empty() {
                    // single-entry global map: tamper the root instead
                    verify_commitment(&mutated, &flip_bit(&block_root, trial))
                } else {
                    let i = (trial / 5) % siblings.len();
                    siblings[i] = if siblings[i].is_empty() {
                        hash(b"conjured sibling")
                    } else {
                        flip_bit(&siblings[i], trial * 17)
                    };
                    mutated.global_proof = InclusionProof::from_siblings(siblings).unwrap();
                    verify_commitment(&mutated, &block_root)
                }
            }
            _ => verify_commitment(&base, &flip_bit(&block_root, trial * 3 + 1)),
        };
        if !accepted {
            rejected += 1;
        }
    }
    assert_eq!(rejected, 100, "false accepts in the tamper sweep");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30s");
    println!("criterion 4 (end-to-end + 100-mutation sweep): PASS in {elapsed:?}");
}

/// Criterion 5 — consistency: the pipeline is deterministic for a fixed
/// (index, keypair, path), and no envelope substitution under the same
/// tuple survives verification, over 10^3 trials.
#[test]
fn criterion_5_consistency_under_substitution() {
    let kp = keypair(b"consistent alice");
    // identical reruns produce identical global keys
    let (reference_key, reference_tag) = derive_global_key(8, &kp, "industry/news").unwrap();
    for _ in 0..10 {
        let (key, tag) = derive_global_key(8, &kp, "industry/news").unwrap();
        assert_eq!(key, reference_key);
        assert_eq!(tag, reference_tag);
    }

    // an honestly produced commitment for the tuple
    let mut notary = Notary::new(NotaryConfig::new("n0", keypair(b"notary"))).unwrap();
    notary.seal_block(0).unwrap();
    let mut ledger = LedgerState::new(kp, "industry/news", Periodicity(0));
    let contents = [("https://e.org/story".to_string(), b"the one version".to_vec())]
        .into_iter()
        .collect();
    let out = ledger.commit_cycle(&mut notary, &contents, 1).unwrap();
    let honest = out["https://e.org/story"].clone();
    let block_root = notary.get_block(1).unwrap().payload;
    assert!(verify_commitment(&honest, &block_root));

    // every attempted second envelope under the same tuple fails
    let mut failures = 0usize;
    for trial in 0..1000usize {
        let substituted = ContentEnvelope {
            sequence: (trial as u64) % 7,
            index: 1,
            payload_digest: hash(format!("rewrite {trial}").as_bytes()),
        };
        assert_ne!(substituted, honest.envelope);
        let mut forged = honest.clone();
        forged.envelope = substituted;
        if !verify_commitment(&forged, &block_root) {
            failures += 1;
        }
    }
    assert_eq!(failures, 1000, "an envelope substitution was accepted");
    println!("criterion 5 (consistency, 10^3 substitutions rejected): PASS");
}

/// Criterion 6 — periodicity: for p in {0,1,3}, commits at indices not
/// divisible by 2^p are rejected and accepted otherwise, exhaustively
/// over indices 0..=64.
#[test]
fn criterion_6_periodicity_exhaustive() {
    for &p in &[0u32, 1, 3] {
        let periodicity = Periodicity(p);
        let period = 1u64 << p;
        // the divisibility rule itself, including index 0
        for index in 0..=64u64 {
            assert_eq!(
                periodicity.accepts(index),
                index % period == 0,
                "period rule mismatch at index {index}, p={p}"
            );
        }
        // the commit path: genesis aside, aligned indices are accepted and
        // misaligned ones are rejected before any network call
        let mut notary =
            Notary::new(NotaryConfig::new("n0", keypair(format!("n-{p}").as_bytes()))).unwrap();
        notary.seal_block(0).unwrap();
        let mut ledger = LedgerState::new(
            keypair(format!("alice-{p}").as_bytes()),
            "industry/news",
            periodicity,
        );
        for index in 1..=64u64 {
            let contents = [("p".to_string(), format!("v{index}").into_bytes())]
                .into_iter()
                .collect();
            let result = ledger.commit_cycle(&mut notary, &contents, index);
            if index % period == 0 {
                assert!(result.is_ok(), "aligned index {index} rejected at p={p}");
            } else {
                assert!(
                    matches!(result, Err(LedgerError::PeriodMisaligned { .. })),
                    "misaligned index {index} not rejected at p={p}"
                );
            }
        }
    }
    println!("criterion 6 (periodicity, p in {{0,1,3}}, indices 0..=64): PASS");
}

/// Criterion 7 — the fork-window rule at j = 10 expected indices:
/// 6 contiguous valid commitments pass, 5 fail, and an injected fork
/// (duplicate sequence, different envelope) fails.
#[test]
fn criterion_7_fork_window_rule() {
    let mut notary = Notary::new(NotaryConfig::new("n0", keypair(b"notary"))).unwrap();
    notary.seal_block(0).unwrap();
    let kp = keypair(b"windowed alice");
    let mut ledger = LedgerState::new(kp.clone(), "industry/news", Periodicity(0));
    let mut commitments = Vec::new();
    for index in 1..=10u64 {
        let contents = [("https://e.org/db".to_string(), format!("state {index}").into_bytes())]
            .into_iter()
            .collect();
        let out = ledger.commit_cycle(&mut notary, &contents, index).unwrap();
        commitments.push(out["https://e.org/db"].clone());
    }
    let window = WindowSpec::new(1, 10, Periodicity(0)).unwrap();
    assert_eq!(window.expected_count(), 10);
    assert_eq!(window.required_count(), 6);
    let roots: BTreeMap<u64, Digest> = (1..=10)
        .map(|i| (i, notary.get_block(i).unwrap().payload))
        .collect();

    assert!(validate_window(&commitments[2..8], &window, &roots), "6 of 10 must pass");
    assert!(!validate_window(&commitments[2..7], &window, &roots), "5 of 10 must fail");
    assert!(validate_window(&commitments, &window, &roots), "full coverage must pass");

    // fork: a second commitment reusing sequence 3 with different content
    let mut forker = LedgerState::new(kp, "industry/news", Periodicity(0));
    forker.import_commitments(commitments[..3].to_vec(), &roots);
    assert_eq!(forker.next_sequence("https://e.org/db"), 3);
    let forked_contents = [("https://e.org/db".to_string(), b"forked state".to_vec())]
        .into_iter()
        .collect();
    let out = forker.commit_cycle(&mut notary, &forked_contents, 11).unwrap();
    let forked = out["https://e.org/db"].clone();
    assert_eq!(forked.envelope.sequence, 3);

    let wide_window = WindowSpec::new(1, 11, Periodicity(0)).unwrap();
    let mut wide_roots = roots.clone();
    wide_roots.insert(11, notary.get_block(11).unwrap().payload);
    let mut with_fork = commitments.clone();
    with_fork.push(forked);
    assert!(
        !validate_window(&with_fork, &wide_window, &wide_roots),
        "duplicate sequence with a different envelope must invalidate the window"
    );
    let report = verify_history(&with_fork, &wide_window, &mut wide_roots.clone());
    assert_eq!(report.outcome, Outcome::Invalid);
    println!("criterion 7 (fork-window rule, 6/10 pass, 5/10 fail, fork fails): PASS");
}

/// Criterion 8 — consensus safety and weak availability: n=4, f=1 with a
/// drop-fault leader, b=3, 100 rounds, fixed seed. Honest chains end
/// bit-identical, the faulty notary is removed within 3 blocks of its
/// violation, and the trace replays identically.
#[test]
fn criterion_8_consensus_safety_and_weak_availability() {
    let start = Instant::now();
    let config = SimConfig { n: 4, f: 1, b: 3, rounds: 100, seed: 2024, ledgers: 3 };
    let faults = vec![FaultAssignment { notary: 1, kind: FaultKind::DropCommits, round: None }];

    let report = simulate(&config, &faults).unwrap();
    assert_eq!(report.trace.rounds.len(), 100);
    assert!(report.trace.rounds.iter().all(|r| !r.consensus_failure));

    // honest notaries end with bit-identical chains
    let honest = report.honest_chains();
    assert_eq!(honest.len(), 3);
    for pair in honest.windows(2) {
        assert_eq!(pair[0], pair[1], "honest chains diverged");
    }
    assert_eq!(honest[0].len(), 101); // genesis + 100 rounds

    // the faulty notary is removed within b blocks of its violation
    let offense = report
        .trace
        .rounds
        .iter()
        .find(|r| r.leader == 1 && r.promises_fulfilled < r.promises_issued)
        .expect("the drop-fault notary leads early in the rotation");
    let removal = report
        .trace
        .rounds
        .iter()
        .find(|r| r.removals.iter().any(|(id, _)| *id == 1))
        .expect("the offender is removed");
    assert!(removal.round >= offense.round);
    assert!(removal.round - offense.round <= config.b);
    assert!(!report.trace.final_membership.contains(&1));

    // the trace replays bit-identically
    let replay = simulate(&config, &faults).unwrap();
    assert_eq!(report.trace, replay.trace);
    assert_eq!(report.chains, replay.chains);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}, budget 10s");
    println!(
        "criterion 8 (consensus safety + weak availability, removal within {} rounds): PASS in {elapsed:?}",
        removal.round - offense.round
    );
}

/// Criterion 9 — storage model: with retention R=16, after sealing 2R
/// blocks the proofs for indices ≤ R are gone while every block 0..=2R
/// is still served.
#[test]
fn criterion_9_storage_retention() {
    const R: u64 = 16;
    let mut config = NotaryConfig::new("n0", keypair(b"storage notary"));
    config.retention_blocks = R;
    let mut notary = Notary::new(config).unwrap();
    notary.seal_block(0).unwrap();
    let mut keys = BTreeMap::new();
    for index in 1..=2 * R {
        let key = hash(format!("key {index}").as_bytes());
        notary
            .submit_commit("src", index, key, hash(format!("value {index}").as_bytes()))
            .unwrap();
        notary.seal_block(index).unwrap();
        keys.insert(index, key);
    }
    assert_eq!(notary.current_index(), 2 * R + 1);
    for index in 1..=2 * R {
        let proof = notary.get_proof(index, &keys[&index]);
        if index <= R {
            assert!(
                matches!(proof, Err(synchronic_core::notary::NotaryError::Gone(_))),
                "proof for pruned index {index} should be gone"
            );
        } else {
            assert!(proof.is_ok(), "proof for retained index {index} should be served");
        }
    }
    for index in 0..=2 * R {
        assert!(notary.get_block(index).is_ok(), "block {index} must be kept forever");
    }
    println!("criterion 9 (storage retention, R={R}, 2R blocks): PASS");
}
