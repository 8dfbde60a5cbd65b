//! The reading client: replays commitments against published block roots
//! and renders an itemized verdict.
//!
//! Verdicts are three-valued. A commitment whose reconstruction reaches a
//! root the chain does not vouch for is *invalid*; a commitment that could
//! not be judged because the chain source is unreachable is *inconclusive*.
//! The distinction matters: the fork-window rule deliberately tolerates
//! missing proofs, and a verifier that treated "notary down" as "fraud"
//! would render that tolerance useless.
//!
//! A [`ChainSource`] supplies block roots by index. Implementations here
//! cover an in-memory chain slice, a persisted block-log file, and the
//! in-process notary; the CLI adds an HTTP-backed source.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::commitment::{
    global_key_message, local_key, verify_commitment, Commitment, WindowSpec,
};
use crate::crypto::Digest;
use crate::map::implied_root;
use crate::notary::{verify_chain, Block, BlockStore, Notary, NotaryError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainSourceError {
    #[error("no block at index {0}")]
    NotFound(u64),
    #[error("chain source unavailable: {0}")]
    Unavailable(String),
    #[error("chain source corrupt: {0}")]
    Corrupt(String),
}

/// Supplies the published root for a block index.
pub trait ChainSource {
    fn block_root(&mut self, index: u64) -> Result<Digest, ChainSourceError>;
}

impl ChainSource for &[Block] {
    fn block_root(&mut self, index: u64) -> Result<Digest, ChainSourceError> {
        self.iter()
            .find(|b| b.index == index)
            .map(|b| b.payload)
            .ok_or(ChainSourceError::NotFound(index))
    }
}

impl ChainSource for BTreeMap<u64, Digest> {
    fn block_root(&mut self, index: u64) -> Result<Digest, ChainSourceError> {
        self.get(&index)
            .copied()
            .ok_or(ChainSourceError::NotFound(index))
    }
}

impl ChainSource for Notary {
    fn block_root(&mut self, index: u64) -> Result<Digest, ChainSourceError> {
        match self.get_block(index) {
            Ok(block) => Ok(block.payload),
            Err(NotaryError::BlockNotFound(i)) => Err(ChainSourceError::NotFound(i)),
            Err(e) => Err(ChainSourceError::Unavailable(e.to_string())),
        }
    }
}

/// A chain source backed by an exported block-log file, so verification
/// works fully offline.
pub struct ChainLogSource {
    blocks: Vec<Block>,
}

impl ChainLogSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ChainSourceError> {
        let blocks = BlockStore::load_path(path)
            .map_err(|e| ChainSourceError::Corrupt(e.to_string()))?;
        if !verify_chain(&blocks) {
            return Err(ChainSourceError::Corrupt("hash links do not verify".into()));
        }
        Ok(ChainLogSource { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }
}

impl ChainSource for ChainLogSource {
    fn block_root(&mut self, index: u64) -> Result<Digest, ChainSourceError> {
        (&mut self.blocks.as_slice()).block_root(index)
    }
}

/// Overall result of a verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Valid,
    Invalid,
    Inconclusive,
}

/// One named verification step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Itemized verdict over a commitment or a history window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerdictReport {
    pub outcome: Outcome,
    pub checks: Vec<Check>,
}

impl VerdictReport {
    /// True iff every check passed and nothing was left undecided.
    pub fn overall(&self) -> bool {
        self.outcome == Outcome::Valid
    }
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check { name, passed, detail: detail.into() }
}

/// Verifies one commitment against the chain, itemizing which step failed.
///
/// Chain unavailability yields an inconclusive verdict; a commitment that
/// fails a local check is invalid no matter what the chain says.
pub fn verify_single<S: ChainSource>(commitment: &Commitment, chain: &mut S) -> VerdictReport {
    let mut checks = Vec::new();

    let local_ok = implied_root(
        &local_key(&commitment.local_path),
        &commitment.envelope.local_value(),
        &commitment.local_proof,
    ) == commitment.local_root;
    checks.push(check(
        "local-root",
        local_ok,
        if local_ok {
            "local proof reaches the stated local root".to_string()
        } else {
            "local proof does not reach the stated local root".to_string()
        },
    ));

    let message = global_key_message(
        commitment.index,
        &commitment.public_key,
        &commitment.global_path,
    );
    let signature_ok = commitment.public_key.verify(&message, &commitment.tag);
    checks.push(check(
        "signature",
        signature_ok,
        if signature_ok {
            "tag verifies for (index, public key, global path)".to_string()
        } else {
            "tag does not verify for (index, public key, global path)".to_string()
        },
    ));

    match chain.block_root(commitment.index) {
        Ok(block_root) => {
            let reconstructed = implied_root(
                &commitment.global_key(),
                &crate::commitment::derive_global_value(&commitment.local_root),
                &commitment.global_proof,
            );
            let global_ok = reconstructed == block_root;
            checks.push(check(
                "global-root",
                global_ok,
                format!(
                    "reconstructed {} vs chain {} at index {}",
                    reconstructed, block_root, commitment.index
                ),
            ));
            let all = checks.iter().all(|c| c.passed);
            // the itemized checks and the one-shot verifier must agree
            debug_assert_eq!(all, verify_commitment(commitment, &block_root));
            VerdictReport {
                outcome: if all { Outcome::Valid } else { Outcome::Invalid },
                checks,
            }
        }
        Err(ChainSourceError::NotFound(i)) => {
            checks.push(check(
                "chain-root",
                false,
                format!("chain has no block at index {i}"),
            ));
            VerdictReport { outcome: Outcome::Invalid, checks }
        }
        Err(e) => {
            checks.push(check("chain-root", false, format!("undecidable: {e}")));
            let outcome = if checks[..checks.len() - 1].iter().all(|c| c.passed) {
                Outcome::Inconclusive
            } else {
                Outcome::Invalid
            };
            VerdictReport { outcome, checks }
        }
    }
}

/// Evaluates a ledger's history window: member validity, sequence
/// contiguity (fork detection), and the more-than-half coverage rule.
pub fn verify_history<S: ChainSource>(
    commitments: &[Commitment],
    window: &WindowSpec,
    chain: &mut S,
) -> VerdictReport {
    let mut checks = Vec::new();

    // structural checks that need no chain access
    let shared_identity = commitments.windows(2).all(|pair| {
        pair[0].public_key == pair[1].public_key
            && pair[0].global_path == pair[1].global_path
            && pair[0].local_path == pair[1].local_path
    });
    checks.push(check(
        "shared-identity",
        shared_identity,
        "all commitments name one (public key, global path, local path)",
    ));

    let aligned = commitments.iter().all(|c| {
        c.index >= window.start_index
            && c.index <= window.end_index
            && window.periodicity.accepts(c.index)
    });
    checks.push(check(
        "period-alignment",
        aligned,
        format!(
            "indices inside {}..={} and divisible by {}",
            window.start_index,
            window.end_index,
            window.periodicity.period()
        ),
    ));

    let mut ordered: Vec<&Commitment> = commitments.iter().collect();
    ordered.sort_by_key(|c| c.index);
    let contiguous = ordered.windows(2).all(|pair| {
        pair[1].index > pair[0].index
            && pair[1].envelope.sequence == pair[0].envelope.sequence + 1
    });
    checks.push(check(
        "sequence-chain",
        contiguous,
        "sequence numbers consecutive across increasing indices (no fork)",
    ));

    // per-member verification against the chain
    let mut verified = 0u64;
    let mut member_failure = false;
    let mut unavailable = false;
    for c in &ordered {
        match chain.block_root(c.index) {
            Ok(root) => {
                if verify_commitment(c, &root) {
                    verified += 1;
                } else {
                    member_failure = true;
                }
            }
            Err(ChainSourceError::NotFound(_)) => member_failure = true,
            Err(_) => unavailable = true,
        }
    }
    checks.push(check(
        "members-valid",
        !member_failure,
        format!("{verified} of {} members verified", ordered.len()),
    ));

    let expected = window.expected_count();
    let required = window.required_count();
    let covered = verified >= required;
    checks.push(check(
        "window-coverage",
        covered,
        format!("{verified} of {expected} expected indices; threshold {required}"),
    ));

    let hard_failure = !shared_identity || !aligned || !contiguous || member_failure;
    let outcome = if hard_failure {
        Outcome::Invalid
    } else if covered {
        Outcome::Valid
    } else if unavailable {
        // shortfall may be the chain source's fault, not the ledger's
        Outcome::Inconclusive
    } else {
        Outcome::Invalid
    };
    VerdictReport { outcome, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::{validate_window, Periodicity};
    use crate::crypto::{hash, AuthKeypair};
    use crate::ledger::LedgerState;
    use crate::notary::{Notary, NotaryConfig};

    struct DownSource;

    impl ChainSource for DownSource {
        fn block_root(&mut self, _index: u64) -> Result<Digest, ChainSourceError> {
            Err(ChainSourceError::Unavailable("connection refused".into()))
        }
    }

    fn keypair(seed: &[u8]) -> AuthKeypair {
        AuthKeypair::from_seed_with_bits(seed, 1024).unwrap()
    }

    /// A notary plus a ledger history of one commitment per index 1..=n.
    fn scenario(n: u64) -> (Notary, Vec<Commitment>) {
        let mut notary =
            Notary::new(NotaryConfig::new("n0", keypair(b"notary"))).unwrap();
        notary.seal_block(0).unwrap();
        let mut ledger = LedgerState::new(keypair(b"alice"), "industry/news", Periodicity(0));
        let mut commitments = Vec::new();
        for index in 1..=n {
            let contents = [("https://e.org/story".to_string(), format!("v{index}").into_bytes())]
                .into_iter()
                .collect();
            let out = ledger.commit_cycle(&mut notary, &contents, index).unwrap();
            commitments.push(out["https://e.org/story"].clone());
        }
        (notary, commitments)
    }

    #[test]
    fn honest_commitment_is_valid_with_all_checks() {
        let (mut notary, commitments) = scenario(1);
        let report = verify_single(&commitments[0], &mut notary);
        assert_eq!(report.outcome, Outcome::Valid);
        assert!(report.overall());
        assert!(report.checks.iter().all(|c| c.passed));
        let names: Vec<&str> = report.checks.iter().map(|c| c.name).collect();
        assert_eq!(names, ["local-root", "signature", "global-root"]);
    }

    #[test]
    fn mutated_global_path_fails_signature_check() {
        let (mut notary, commitments) = scenario(1);
        let mut forged = commitments[0].clone();
        forged.global_path = "industry/other".to_string();
        let report = verify_single(&forged, &mut notary);
        assert_eq!(report.outcome, Outcome::Invalid);
        let signature = report.checks.iter().find(|c| c.name == "signature").unwrap();
        assert!(!signature.passed);
    }

    #[test]
    fn unreachable_chain_is_inconclusive_not_false() {
        let (_, commitments) = scenario(1);
        let report = verify_single(&commitments[0], &mut DownSource);
        assert_eq!(report.outcome, Outcome::Inconclusive);
        assert!(!report.overall());
        // the locally checkable steps still ran and passed
        assert!(report.checks.iter().filter(|c| c.name != "chain-root").all(|c| c.passed));
        // a locally broken commitment is invalid even when the chain is down
        let mut broken = commitments[0].clone();
        broken.envelope.payload_digest = hash(b"tampered");
        let report = verify_single(&broken, &mut DownSource);
        assert_eq!(report.outcome, Outcome::Invalid);
    }

    #[test]
    fn missing_block_is_invalid() {
        let (mut notary, commitments) = scenario(1);
        let mut pointing_nowhere = commitments[0].clone();
        pointing_nowhere.index = 40; // unsealed index, signature breaks too
        let report = verify_single(&pointing_nowhere, &mut notary);
        assert_eq!(report.outcome, Outcome::Invalid);
    }

    #[test]
    fn history_thresholds_match_the_window_rule() {
        let (notary, commitments) = scenario(10);
        let window = WindowSpec::new(1, 10, Periodicity(0)).unwrap();
        let chain = notary.get_chain(0, 10).unwrap();
        let mut roots: BTreeMap<u64, Digest> =
            chain.iter().map(|b| (b.index, b.payload)).collect();

        let full = verify_history(&commitments, &window, &mut roots);
        assert_eq!(full.outcome, Outcome::Valid);

        let six = verify_history(&commitments[2..8], &window, &mut roots);
        assert_eq!(six.outcome, Outcome::Valid);
        let coverage = six.checks.iter().find(|c| c.name == "window-coverage").unwrap();
        assert!(coverage.detail.contains("6 of 10"));
        assert!(coverage.detail.contains("threshold 6"));

        let five = verify_history(&commitments[2..7], &window, &mut roots);
        assert_eq!(five.outcome, Outcome::Invalid);

        // itemized verdict and the one-shot rule agree when roots are all
        // available
        for slice in [&commitments[..], &commitments[2..8], &commitments[2..7]] {
            let report = verify_history(slice, &window, &mut roots);
            assert_eq!(report.overall(), validate_window(slice, &window, &roots));
        }
    }

    #[test]
    fn duplicate_sequence_with_different_envelope_is_fork_evidence() {
        let (mut notary, commitments) = scenario(8);
        // recommit sequence 3 at index 9 with different content, honestly
        // signed: an attempted fork
        let mut forker = LedgerState::new(keypair(b"alice"), "industry/news", Periodicity(0));
        // replay sequences 0..=2 so the forged branch starts at 3
        for (i, c) in commitments.iter().take(3).enumerate() {
            assert_eq!(c.envelope.sequence, i as u64);
        }
        let contents = [("https://e.org/story".to_string(), b"forked v4".to_vec())]
            .into_iter()
            .collect();
        for _ in 0..3 {
            // advance the forker's sequence counter without the network
            forker.import_commitments(
                commitments[..3].to_vec(),
                &notary.get_chain(0, 8).unwrap().iter().map(|b| (b.index, b.payload)).collect(),
            );
        }
        assert_eq!(forker.next_sequence("https://e.org/story"), 3);
        let out = forker.commit_cycle(&mut notary, &contents, 9).unwrap();
        let forked = out["https://e.org/story"].clone();
        assert_eq!(forked.envelope.sequence, 3);

        let window = WindowSpec::new(1, 10, Periodicity(0)).unwrap();
        let mut roots: BTreeMap<u64, Digest> = notary
            .get_chain(0, 10)
            .unwrap_or_else(|_| notary.get_chain(0, 9).unwrap())
            .iter()
            .map(|b| (b.index, b.payload))
            .collect();
        // both branches individually verify
        let mut honest_set = commitments[..8].to_vec();
        assert_eq!(
            verify_history(&honest_set, &window, &mut roots).outcome,
            Outcome::Valid
        );
        honest_set.push(forked);
        let report = verify_history(&honest_set, &window, &mut roots);
        assert_eq!(report.outcome, Outcome::Invalid);
        let chain_check = report.checks.iter().find(|c| c.name == "sequence-chain").unwrap();
        assert!(!chain_check.passed);
    }

    #[test]
    fn history_with_unreachable_chain_is_inconclusive() {
        let (_, commitments) = scenario(10);
        let window = WindowSpec::new(1, 10, Periodicity(0)).unwrap();
        let report = verify_history(&commitments, &window, &mut DownSource);
        assert_eq!(report.outcome, Outcome::Inconclusive);
    }

    #[test]
    fn chain_log_source_serves_offline_verification() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blocks.log");
        let commitments = {
            let mut notary = Notary::with_store(
                NotaryConfig::new("n0", keypair(b"notary")),
                &path,
            )
            .unwrap();
            notary.seal_block(0).unwrap();
            let mut ledger =
                LedgerState::new(keypair(b"alice"), "industry/news", Periodicity(0));
            let contents = [("p".to_string(), b"body".to_vec())].into_iter().collect();
            let out = ledger.commit_cycle(&mut notary, &contents, 1).unwrap();
            out["p"].clone()
        };
        let mut source = ChainLogSource::open(&path).unwrap();
        assert_eq!(source.blocks().len(), 2);
        let report = verify_single(&commitments, &mut source);
        assert_eq!(report.outcome, Outcome::Valid);
    }

    #[test]
    fn verdict_serializes_for_the_cli() {
        let (mut notary, commitments) = scenario(1);
        let report = verify_single(&commitments[0], &mut notary);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["outcome"], "valid");
        assert!(json["checks"].as_array().unwrap().len() >= 3);
    }
}
