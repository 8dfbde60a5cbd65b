//! Deterministic simulation of a small notary network running a
//! rotating-leader quorum protocol, with Byzantine fault injection.
//!
//! The model is intentionally synchronous and single-threaded: rounds are
//! logical ticks, broadcast among notaries is reliable, and the only
//! adversarial behavior is what [`FaultKind`] injects. That isolates the
//! two claims this module exists to exhibit:
//!
//! - **Safety** — with fewer than a third of the notaries faulty, honest
//!   notaries never finalize two different blocks for one index. Each
//!   round the leader proposes (index, predecessor hash, batch root);
//!   honest notaries rebuild the root from the broadcast batch and sign
//!   only on an exact match, and a block finalizes on `2f+1` signatures.
//!   Quorum intersection makes a double finalize impossible, and the
//!   engine asserts it every round.
//! - **Weak availability** — each round's submissions go to one designated
//!   receiver (the round's first leader), which answers with signed
//!   promises. A sealed block that omits a promised pair is evidence; the
//!   engine validates evidence (promise signature, finalized block, absence
//!   from the retained batch) and removes the offender from membership, no
//!   later than `b` blocks after the offending one.
//!
//! Everything is a pure function of (config, faults): replaying a scenario
//! yields a bit-identical [`SimTrace`]. This is a harness for the
//! protocol's claims, not a production BFT implementation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{encode, hash, AuthKeypair, Digest, Field, PublicKey};
use crate::map::VerifiableMap;
use crate::notary::{Block, Promise, PromiseViolation, QuorumSignature};

/// Key size for simulated notary identities. Small keys keep hundred-round
/// scenarios fast; the uniqueness contract is size-independent.
const SIM_KEY_BITS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("simulation setup failed: {0}")]
    Setup(String),
}

/// Simulation parameters. `f` must satisfy `3f < n`; the quorum is `2f+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Notary count.
    pub n: usize,
    /// Maximum Byzantine notaries tolerated.
    pub f: usize,
    /// Removal bound: a promise violator leaves membership within this
    /// many blocks of the offense.
    pub b: u64,
    /// Number of blocks to simulate (indices 1..=rounds after genesis).
    pub rounds: u64,
    /// Seed for all derived identities and content.
    pub seed: u64,
    /// Simulated ledger clients.
    pub ledgers: usize,
}

impl SimConfig {
    /// Signatures required to finalize: `2f+1` at the minimal `n = 3f+1`,
    /// and `n - f` for larger networks so any two quorums still intersect
    /// in an honest notary.
    pub fn quorum(&self) -> usize {
        (2 * self.f + 1).max(self.n - self.f)
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::InvalidConfig("n must be positive".into()));
        }
        if 3 * self.f >= self.n {
            return Err(SimError::InvalidConfig(format!(
                "fault bound violated: need 3f < n, got f={} n={}",
                self.f, self.n
            )));
        }
        if self.b == 0 {
            return Err(SimError::InvalidConfig("b must be at least 1".into()));
        }
        Ok(())
    }
}

/// How a faulty notary misbehaves when it is the round's leader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// No deviation.
    Honest,
    /// Issues promises, then proposes a batch omitting every promised
    /// entry.
    DropCommits,
    /// Proposes two different blocks to two halves of the network.
    Equivocate,
    /// Issues promises, then proposes nothing, forcing a view change.
    Silent,
}

/// Binds a fault to a notary, optionally only for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultAssignment {
    pub notary: usize,
    pub kind: FaultKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u64>,
}

impl FaultAssignment {
    fn active(&self, round: u64) -> bool {
        self.kind != FaultKind::Honest && self.round.is_none_or(|r| r == round)
    }
}

/// A scenario file: config plus fault assignments, as stored in JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub config: SimConfig,
    #[serde(default)]
    pub faults: Vec<FaultAssignment>,
}

/// One simulated block's worth of observable events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    /// Leader whose proposal finalized.
    pub leader: usize,
    /// Views consumed, 1 when the first leader succeeded.
    pub views: u32,
    pub payload: Digest,
    pub block_hash: Digest,
    pub quorum_signers: Vec<usize>,
    /// Membership in force during this round.
    pub membership: Vec<usize>,
    pub promises_issued: u64,
    pub promises_fulfilled: u64,
    /// Notaries removed at the end of this round, with the offending block
    /// index that triggered each removal.
    pub removals: Vec<(usize, u64)>,
    pub consensus_failure: bool,
}

/// The full deterministic event log of one simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub config: SimConfig,
    pub faults: Vec<FaultAssignment>,
    pub rounds: Vec<RoundRecord>,
    pub final_membership: Vec<usize>,
}

impl SimTrace {
    /// One JSON record per round, for offline assertion and plotting.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.rounds {
            out.push_str(&serde_json::to_string(record).expect("trace serializes"));
            out.push('\n');
        }
        out
    }
}

/// Everything a test can ask about a finished simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub trace: SimTrace,
    /// Every notary's full chain, indexed by notary id. Faulty notaries
    /// also track the finalized chain; their deviation is in leadership.
    pub chains: Vec<Vec<Block>>,
    /// Evidence accepted by the removal protocol, in acceptance order.
    pub violations: Vec<PromiseViolation>,
}

impl SimReport {
    /// Chains of notaries that were never assigned an active fault.
    pub fn honest_chains(&self) -> Vec<&Vec<Block>> {
        let faulty: Vec<usize> = self
            .trace
            .faults
            .iter()
            .filter(|f| f.kind != FaultKind::Honest)
            .map(|f| f.notary)
            .collect();
        self.chains
            .iter()
            .enumerate()
            .filter(|(id, _)| !faulty.contains(id))
            .map(|(_, chain)| chain)
            .collect()
    }
}

/// Validates promise-violation evidence against the finalized chain and a
/// retained batch. Forged signatures, mismatched blocks, and claims about
/// keys the batch actually contains are all rejected.
pub fn validate_evidence(
    evidence: &PromiseViolation,
    notary_public_key: &PublicKey,
    finalized_block: &Block,
    sealed_batch: Option<&BTreeMap<Digest, Digest>>,
) -> bool {
    if !evidence.promise.verify(notary_public_key) {
        return false;
    }
    if evidence.block != *finalized_block || evidence.promise.index != finalized_block.index {
        return false;
    }
    // the batch must be retained to decide absence; a pruned batch proves
    // nothing
    let Some(batch) = sealed_batch else {
        return false;
    };
    batch.get(&evidence.promise.global_key) != Some(&evidence.promise.global_value)
}

struct SimNotary {
    id: usize,
    keypair: AuthKeypair,
    fault: Option<FaultAssignment>,
    chain: Vec<Block>,
}

impl SimNotary {
    fn fault_kind(&self, round: u64) -> FaultKind {
        match &self.fault {
            Some(assignment) if assignment.active(round) => assignment.kind,
            _ => FaultKind::Honest,
        }
    }
}

struct SimLedger {
    id: usize,
    /// Content version; bumps only after successful inclusion.
    version: u64,
    /// Value awaiting inclusion; carried across rounds on a drop.
    pending_value: Option<Digest>,
    /// (promise, submitted value) pairs not yet audited.
    outstanding: Vec<(Promise, Digest)>,
}

struct Proposal {
    leader: usize,
    block: Block,
    batch: BTreeMap<Digest, Digest>,
    signers: Vec<usize>,
}

/// The stepwise simulation engine. [`simulate`] drives it to completion;
/// tests may also advance it round by round.
pub struct Simulation {
    config: SimConfig,
    faults: Vec<FaultAssignment>,
    notaries: Vec<SimNotary>,
    ledgers: Vec<SimLedger>,
    membership: Vec<usize>,
    /// Finalized batches by index, for evidence validation.
    finalized_batches: BTreeMap<u64, BTreeMap<Digest, Digest>>,
    next_round: u64,
    records: Vec<RoundRecord>,
    violations: Vec<PromiseViolation>,
    stalled: bool,
}

impl Simulation {
    pub fn new(config: SimConfig, faults: Vec<FaultAssignment>) -> Result<Self, SimError> {
        config.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for fault in &faults {
            if fault.notary >= config.n {
                return Err(SimError::InvalidConfig(format!(
                    "fault names notary {} but n is {}",
                    fault.notary, config.n
                )));
            }
            if fault.kind != FaultKind::Honest {
                seen.insert(fault.notary);
            }
        }
        if seen.len() > config.f {
            return Err(SimError::InvalidConfig(format!(
                "{} notaries assigned faults but f is {}",
                seen.len(),
                config.f
            )));
        }

        let genesis = Block::genesis();
        let mut notaries = Vec::with_capacity(config.n);
        for id in 0..config.n {
            let seed = encode(&[
                Field::Uint(config.seed),
                Field::Uint(id as u64),
                Field::Str("notary identity"),
            ]);
            let keypair = AuthKeypair::from_seed_with_bits(&seed, SIM_KEY_BITS)
                .map_err(|e| SimError::Setup(e.to_string()))?;
            notaries.push(SimNotary {
                id,
                keypair,
                fault: faults.iter().find(|f| f.notary == id).copied(),
                chain: vec![genesis.clone()],
            });
        }
        let ledgers = (0..config.ledgers)
            .map(|id| SimLedger { id, version: 0, pending_value: None, outstanding: Vec::new() })
            .collect();
        Ok(Simulation {
            membership: (0..config.n).collect(),
            config,
            faults,
            notaries,
            ledgers,
            finalized_batches: BTreeMap::new(),
            next_round: 1,
            records: Vec::new(),
            violations: Vec::new(),
            stalled: false,
        })
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn next_round(&self) -> u64 {
        self.next_round
    }

    pub fn notary_public_key(&self, id: usize) -> Option<&PublicKey> {
        self.notaries.get(id).map(|n| n.keypair.public_key())
    }

    /// The finalized block at `index`, if that round has completed.
    pub fn finalized_block(&self, index: u64) -> Option<&Block> {
        self.notaries.first().and_then(|n| n.chain.get(index as usize))
    }

    fn ledger_key(&self, ledger: usize, index: u64) -> Digest {
        hash(&encode(&[
            Field::Uint(self.config.seed),
            Field::Uint(ledger as u64),
            Field::Uint(index),
            Field::Str("ledger key"),
        ]))
    }

    fn ledger_value(&self, ledger: usize, version: u64) -> Digest {
        hash(&encode(&[
            Field::Uint(self.config.seed),
            Field::Uint(ledger as u64),
            Field::Uint(version),
            Field::Str("ledger value"),
        ]))
    }

    fn leader_for(&self, index: u64, view: u32) -> usize {
        let pos = ((index + view as u64) % self.membership.len() as u64) as usize;
        self.membership[pos]
    }

    fn sign_block(&self, notary: usize, block: &Block) -> QuorumSignature {
        QuorumSignature {
            notary_id: format!("notary-{notary}"),
            signature: self.notaries[notary]
                .keypair
                .sign(block.block_hash().as_bytes())
                .expect("in-memory keys sign"),
        }
    }

    /// The removal protocol: validates evidence against the finalized
    /// chain and the retained batch, and on success removes the offender
    /// from membership. Returns whether the evidence was accepted.
    pub fn submit_evidence(&mut self, evidence: &PromiseViolation) -> bool {
        let Some(offender) = self
            .notaries
            .iter()
            .position(|n| format!("notary-{}", n.id) == evidence.promise.notary_id)
        else {
            return false;
        };
        let index = evidence.promise.index;
        let Some(finalized) = self.notaries[0].chain.get(index as usize) else {
            return false;
        };
        let accepted = validate_evidence(
            evidence,
            self.notaries[offender].keypair.public_key(),
            finalized,
            self.finalized_batches.get(&index),
        );
        if !accepted || !self.membership.contains(&offender) {
            return false;
        }
        self.membership.retain(|id| *id != offender);
        self.violations.push(evidence.clone());
        if let Some(record) = self.records.last_mut() {
            record.removals.push((offender, evidence.promise.index));
        }
        true
    }

    /// Runs one consensus round: submissions, promises, proposal, quorum
    /// signing with deterministic view changes, finalization, and the
    /// end-of-round promise audit.
    pub fn run_round(&mut self) -> RoundRecord {
        assert!(!self.stalled, "simulation stalled on consensus failure");
        let index = self.next_round;
        let membership = self.membership.clone();

        // submissions go to the round's designated receiver: the view-0
        // leader
        let receiver = self.leader_for(index, 0);
        let receiver_kind = self.notaries[receiver].fault_kind(index);
        let submissions: Vec<(usize, Digest, Digest)> = self
            .ledgers
            .iter()
            .map(|ledger| {
                let value = ledger
                    .pending_value
                    .unwrap_or_else(|| self.ledger_value(ledger.id, ledger.version));
                (ledger.id, self.ledger_key(ledger.id, index), value)
            })
            .collect();
        let mut received: BTreeMap<Digest, Digest> = BTreeMap::new();
        let mut promises_issued = 0u64;
        for ((_, key, value), ledger) in submissions.iter().zip(&mut self.ledgers) {
            let promise = Promise::sign(
                &self.notaries[receiver].keypair,
                &format!("notary-{receiver}"),
                index,
                *key,
                *value,
            )
            .expect("in-memory keys sign");
            ledger.outstanding.push((promise, *value));
            ledger.pending_value = Some(*value);
            received.insert(*key, *value);
            promises_issued += 1;
        }

        // the receiver decides what its proposal batch looks like
        let proposal_batch = match receiver_kind {
            FaultKind::DropCommits => BTreeMap::new(), // promised, then dropped
            _ => received.clone(),
        };

        let prev_hash = self.notaries[0]
            .chain
            .last()
            .map(Block::block_hash)
            .unwrap_or(Digest::EMPTY);

        let mut finalized: Option<Proposal> = None;
        let mut views = 0u32;
        let max_views = membership.len() as u32;
        let mut consensus_failure = false;
        while finalized.is_none() {
            if views >= max_views {
                consensus_failure = true;
                break;
            }
            let leader = self.leader_for(index, views);
            let kind = self.notaries[leader].fault_kind(index);
            views += 1;

            // a view-change leader proposes only what was submitted to it
            // directly: nothing, in the designated-receiver model
            let batch = if leader == receiver {
                proposal_batch.clone()
            } else {
                BTreeMap::new()
            };

            let proposals: Vec<BTreeMap<Digest, Digest>> = match kind {
                FaultKind::Silent => {
                    continue; // no proposal: next view
                }
                FaultKind::Equivocate => vec![batch, BTreeMap::new()],
                _ => vec![batch],
            };

            let mut candidates: Vec<Proposal> = proposals
                .into_iter()
                .map(|batch| {
                    let map = VerifiableMap::build(batch.iter().map(|(k, v)| (*k, *v)))
                        .expect("distinct hashed keys");
                    let block = Block {
                        index,
                        prev_hash,
                        payload: *map.root_digest(),
                        quorum_signatures: Vec::new(),
                    };
                    Proposal { leader, block, batch, signers: vec![leader] }
                })
                .collect();

            // honest validators rebuild the root from the broadcast batch
            // and sign at most one proposal per view; under equivocation
            // each validator sees only one of the two proposals
            for &validator in &membership {
                if validator == leader {
                    continue;
                }
                let seen = if candidates.len() == 2 {
                    // deterministic network split
                    &mut candidates[validator % 2]
                } else {
                    &mut candidates[0]
                };
                let rebuilt = VerifiableMap::build(seen.batch.iter().map(|(k, v)| (*k, *v)))
                    .expect("distinct hashed keys");
                let consistent = *rebuilt.root_digest() == seen.block.payload
                    && seen.block.prev_hash == prev_hash
                    && seen.block.index == index;
                if consistent {
                    seen.signers.push(validator);
                }
            }

            let quorum = self.config.quorum();
            let mut reaching: Vec<Proposal> = candidates
                .into_iter()
                .filter(|p| p.signers.len() >= quorum)
                .collect();
            // quorum intersection: two quorums would need an honest
            // double-signer, which the loop above cannot produce
            assert!(reaching.len() <= 1, "two proposals reached quorum at index {index}");
            if let Some(mut winner) = reaching.pop() {
                winner.signers.sort_unstable();
                winner.block.quorum_signatures = winner
                    .signers
                    .iter()
                    .map(|&signer| self.sign_block(signer, &winner.block))
                    .collect();
                finalized = Some(winner);
            }
        }

        let record = if let Some(winner) = finalized {
            // every notary appends the finalized block
            for notary in &mut self.notaries {
                notary.chain.push(winner.block.clone());
            }
            self.finalized_batches.insert(index, winner.batch.clone());

            // ledgers observe the sealed batch
            let mut promises_fulfilled = 0u64;
            for ((_, key, value), ledger) in submissions.iter().zip(&mut self.ledgers) {
                if winner.batch.get(key) == Some(value) {
                    promises_fulfilled += 1;
                    ledger.pending_value = None;
                    ledger.version += 1;
                }
            }

            RoundRecord {
                round: index,
                leader: winner.leader,
                views,
                payload: winner.block.payload,
                block_hash: winner.block.block_hash(),
                quorum_signers: winner.signers.clone(),
                membership,
                promises_issued,
                promises_fulfilled,
                removals: Vec::new(),
                consensus_failure: false,
            }
        } else {
            self.stalled = true;
            RoundRecord {
                round: index,
                leader: receiver,
                views,
                payload: Digest::EMPTY,
                block_hash: Digest::EMPTY,
                quorum_signers: Vec::new(),
                membership,
                promises_issued,
                promises_fulfilled: 0,
                removals: Vec::new(),
                consensus_failure: true,
            }
        };
        self.records.push(record);

        if !consensus_failure {
            self.audit_promises(index);
            self.next_round += 1;
        }
        self.records.last().expect("just pushed").clone()
    }

    /// End-of-round audit: ledgers turn every unhonored promise for a
    /// sealed index into evidence and submit it to the removal protocol.
    fn audit_promises(&mut self, sealed_through: u64) {
        let mut evidence_queue = Vec::new();
        for ledger in &mut self.ledgers {
            let mut keep = Vec::new();
            for (promise, value) in ledger.outstanding.drain(..) {
                if promise.index > sealed_through {
                    keep.push((promise, value));
                    continue;
                }
                let fulfilled = self
                    .finalized_batches
                    .get(&promise.index)
                    .is_some_and(|batch| batch.get(&promise.global_key) == Some(&value));
                if !fulfilled {
                    let block = self.notaries[0].chain[promise.index as usize].clone();
                    evidence_queue.push(PromiseViolation { promise, block });
                }
            }
            ledger.outstanding = keep;
        }
        for evidence in evidence_queue {
            self.submit_evidence(&evidence);
        }
    }

    pub fn into_report(self) -> SimReport {
        SimReport {
            trace: SimTrace {
                config: self.config,
                faults: self.faults,
                rounds: self.records,
                final_membership: self.membership,
            },
            chains: self.notaries.into_iter().map(|n| n.chain).collect(),
            violations: self.violations,
        }
    }
}

/// Runs a full scenario to completion.
pub fn simulate(config: &SimConfig, faults: &[FaultAssignment]) -> Result<SimReport, SimError> {
    let mut sim = Simulation::new(config.clone(), faults.to_vec())?;
    for _ in 0..config.rounds {
        let record = sim.run_round();
        if record.consensus_failure {
            break;
        }
    }
    Ok(sim.into_report())
}
