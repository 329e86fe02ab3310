//! Slot-synchronous simulation of the two-transmitter network.
//!
//! A [`Policy`] decides who transmits what from the current queue state; the
//! loop draws the erasure outcome, lets every listener decode what it can,
//! hands the public feedback back to the policy and verifies each delivery
//! the policy claims against what the destination actually decoded.

mod queues;
mod trace;

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::erasure::{ErasureModel, Reception, Transmitter};
use crate::error::{Error, Result};
use crate::packet::{xor_combine, CodedPacket, Knowledge, Packet, PacketId};

pub use queues::{CodedEntry, CodedPair, Mirrored, QueueBank, QueueId};
pub use trace::{JsonLines, TraceRecord, TraceSink};

/// Number of packets needed to carry rate `r` over `n` slots, ⌈nR⌉.
pub fn packets_for(rate: f64, n: u64) -> usize {
    let x = rate * n as f64;
    // absorb representation error such as 0.3 * 10 = 3.0000000000000004
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as usize
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: ErasureModel,
    pub k1: usize,
    pub k2: usize,
    pub payload_len: usize,
    pub seed: u64,
    /// Slot budget; the run stops there and reports whether it finished.
    pub deadline: Option<u64>,
    /// Check the queue invariants after every slot (slow, for tests).
    pub check_invariants: bool,
}

impl SimConfig {
    pub fn new(model: ErasureModel, k1: usize, k2: usize, seed: u64) -> Self {
        SimConfig {
            model,
            k1,
            k2,
            payload_len: 8,
            seed,
            deadline: None,
            check_invariants: false,
        }
    }

    /// Message sizes ⌈nR₁⌉, ⌈nR₂⌉ for an `n`-slot code, with deadline `n`.
    pub fn for_rates(model: ErasureModel, r1: f64, r2: f64, n: u64, seed: u64) -> Self {
        let mut c = SimConfig::new(model, packets_for(r1, n), packets_for(r2, n), seed);
        c.deadline = Some(n);
        c
    }

    fn validate(&self) -> Result<()> {
        if self.k1 + self.k2 == 0 {
            return Err(Error::config("k1 + k2 must be at least 1"));
        }
        if self.k1 > u32::MAX as usize || self.k2 > u32::MAX as usize {
            return Err(Error::config("message too long"));
        }
        if self.payload_len == 0 {
            return Err(Error::config("payload length must be positive"));
        }
        Ok(())
    }
}

/// One slot's transmission as chosen by a policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    /// Index into [`Policy::steps`].
    pub step: usize,
    pub sender: Transmitter,
    /// Constituents of the transmitted packet; node 1 always sends one.
    pub packets: Vec<PacketId>,
}

impl Transmission {
    pub fn primary(step: usize, id: PacketId) -> Self {
        Transmission {
            step,
            sender: Transmitter::Primary,
            packets: vec![id],
        }
    }

    pub fn secondary(step: usize, packets: Vec<PacketId>) -> Self {
        Transmission {
            step,
            sender: Transmitter::Secondary,
            packets,
        }
    }
}

/// Mutable state a policy works on.
pub struct RunState {
    pub bank: QueueBank,
    /// The run's generator; policies draw their coins from it after the
    /// slot's erasure draw.
    pub rng: ChaCha8Rng,
    claims: Vec<PacketId>,
    counters: BTreeMap<&'static str, u64>,
    snapshots: BTreeMap<String, BTreeMap<&'static str, usize>>,
}

impl RunState {
    /// Claim that `id` has just become decodable at its destination.
    pub fn deliver(&mut self, id: PacketId) {
        self.claims.push(id);
    }

    pub fn count(&mut self, name: &'static str) {
        *self.counters.entry(name).or_default() += 1;
    }

    /// Record all queue sizes under `label`.
    pub fn snapshot(&mut self, label: &str) {
        self.snapshots.insert(label.to_string(), self.bank.sizes());
    }
}

/// A feedback-driven scheduling rule.
pub trait Policy {
    fn name(&self) -> &'static str;

    /// Step labels, in execution order.
    fn steps(&self) -> &'static [&'static str];

    /// Rejects configurations under which some phase that can be entered
    /// never completes.
    fn check_reachable(&self, model: &ErasureModel, k1: usize, k2: usize) -> Result<()>;

    /// The next transmission, or `None` once every packet is delivered.
    fn next(&mut self, state: &mut RunState) -> Option<Transmission>;

    /// Update the queues from the public feedback of `tx`.
    fn feedback(
        &mut self,
        tx: &Transmission,
        outcome: Reception,
        state: &mut RunState,
    ) -> Result<()>;
}

/// Requires `prob > 0` whenever the phase described by `what` can be entered.
pub(crate) fn require(enterable: bool, prob: f64, what: &str) -> Result<()> {
    if enterable && prob <= 0.0 {
        Err(Error::config(format!(
            "{what} never succeeds, so the expected completion time is infinite"
        )))
    } else {
        Ok(())
    }
}

/// Where the per-slot reception outcomes come from.
pub trait ErasureSource {
    /// The underlying model, if any; used for the reachability check.
    fn model(&self) -> Option<&ErasureModel>;

    fn draw(&mut self, tx: Transmitter, rng: &mut ChaCha8Rng) -> Result<Reception>;
}

/// Outcomes sampled from an erasure model.
pub struct ModelChannel<'a>(pub &'a ErasureModel);

impl ErasureSource for ModelChannel<'_> {
    fn model(&self) -> Option<&ErasureModel> {
        Some(self.0)
    }

    fn draw(&mut self, tx: Transmitter, rng: &mut ChaCha8Rng) -> Result<Reception> {
        Ok(self.0.sample(tx, rng))
    }
}

/// A fixed list of outcomes, consumed one per slot.
#[derive(Debug, Clone)]
pub struct ScriptedChannel {
    outcomes: VecDeque<Reception>,
}

impl ScriptedChannel {
    pub fn new(outcomes: impl IntoIterator<Item = Reception>) -> Self {
        ScriptedChannel {
            outcomes: outcomes.into_iter().collect(),
        }
    }
}

impl ErasureSource for ScriptedChannel {
    fn model(&self) -> Option<&ErasureModel> {
        None
    }

    fn draw(&mut self, tx: Transmitter, _rng: &mut ChaCha8Rng) -> Result<Reception> {
        let r = self
            .outcomes
            .pop_front()
            .ok_or_else(|| Error::config("scripted erasure trace exhausted"))?;
        if !r.receivers().is_subset(tx.listeners()) {
            return Err(Error::config(format!(
                "scripted outcome {:?} is not valid for node {}",
                r.receivers(),
                tx.node()
            )));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseDuration {
    pub step: &'static str,
    pub slots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecodeStatus {
    pub node3: bool,
    pub node4: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub algorithm: &'static str,
    pub k1: usize,
    pub k2: usize,
    pub seed: u64,
    pub total_slots: u64,
    pub phases: Vec<PhaseDuration>,
    /// τ counters: slots per transmitter, and node-1 slots whose packet had
    /// an earlier reception outcome satisfying the bracketed predicate.
    pub schedule_counters: BTreeMap<&'static str, u64>,
    /// Policy-specific event counts.
    pub counters: BTreeMap<&'static str, u64>,
    pub queue_snapshots: BTreeMap<String, BTreeMap<&'static str, usize>>,
    pub decoded_ok: DecodeStatus,
    pub completed: bool,
    pub deadline: Option<u64>,
    pub deadline_met: Option<bool>,
}

impl SimResult {
    pub fn phase(&self, step: &str) -> u64 {
        self.phases
            .iter()
            .find(|p| p.step == step)
            .map_or(0, |p| p.slots)
    }

    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn schedule_counter(&self, name: &str) -> u64 {
        self.schedule_counters.get(name).copied().unwrap_or(0)
    }

    pub fn snapshot(&self, label: &str, queue: &str) -> Option<usize> {
        self.queue_snapshots.get(label)?.get(queue).copied()
    }
}

type Predicate = fn(Reception) -> bool;

/// Reception-history predicates tracked for node-1 transmissions.
pub const HISTORY_COUNTERS: [(&str, Predicate); 7] = [
    ("tau_1[2&~3]", |r| r.received(2) && r.erased(3)),
    ("tau_1[3]", |r| r.received(3)),
    ("tau_1[2&~3&~4]", |r| {
        r.received(2) && r.erased(3) && r.erased(4)
    }),
    ("tau_1[2&3&~4]", |r| {
        r.received(2) && r.received(3) && r.erased(4)
    }),
    ("tau_1[~3&4]", |r| r.erased(3) && r.received(4)),
    ("tau_1[2&~3&4]", |r| {
        r.received(2) && r.erased(3) && r.received(4)
    }),
    ("tau_1[4]", |r| r.received(4)),
];

fn outcome_bit(r: Reception) -> u8 {
    1 << ((r.received(2) as u8) << 2 | (r.received(3) as u8) << 1 | r.received(4) as u8)
}

fn predicate_masks() -> [u8; 7] {
    let mut masks = [0u8; 7];
    for idx in 0..8u8 {
        let r = Reception::primary(idx & 4 != 0, idx & 2 != 0, idx & 1 != 0);
        for (m, (_, p)) in masks.iter_mut().zip(HISTORY_COUNTERS.iter()) {
            if p(r) {
                *m |= outcome_bit(r);
            }
        }
    }
    masks
}

fn payloads(count: usize, origin: Transmitter, len: usize, rng: &mut ChaCha8Rng) -> Vec<Packet> {
    (0..count as u32)
        .map(|i| {
            let mut bytes = vec![0u8; len];
            rng.fill(&mut bytes[..]);
            Packet::new(PacketId { origin, index: i }, bytes)
        })
        .collect()
}

/// Run `policy` on the model of `config` until every packet is delivered or
/// the deadline passes.
pub fn run_loop<P: Policy + ?Sized>(config: &SimConfig, policy: &mut P) -> Result<SimResult> {
    let model = config.model.clone();
    run_with(config, policy, &mut ModelChannel(&model), None)
}

/// [`run_loop`] with an explicit outcome source and optional trace sink.
pub fn run_with<P: Policy + ?Sized>(
    config: &SimConfig,
    policy: &mut P,
    source: &mut dyn ErasureSource,
    mut trace: Option<&mut dyn TraceSink>,
) -> Result<SimResult> {
    config.validate()?;
    let (k1, k2) = (config.k1, config.k2);
    if let Some(model) = source.model() {
        policy.check_reachable(model, k1, k2)?;
    }

    let mut payload_rng = ChaCha8Rng::seed_from_u64(config.seed);
    payload_rng.set_stream(1);
    let originals = [
        payloads(
            k1,
            Transmitter::Primary,
            config.payload_len,
            &mut payload_rng,
        ),
        payloads(
            k2,
            Transmitter::Secondary,
            config.payload_len,
            &mut payload_rng,
        ),
    ];
    // receivers 2, 3, 4
    let mut kb = [
        Knowledge::new(k1, k2),
        Knowledge::new(k1, k2),
        Knowledge::new(k1, k2),
    ];
    for p in &originals[1] {
        kb[0].insert(p);
    }
    let mut delivered = [vec![false; k1], vec![false; k2]];

    let mut state = RunState {
        bank: QueueBank::new(k1, k2),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        claims: Vec::new(),
        counters: BTreeMap::new(),
        snapshots: BTreeMap::new(),
    };
    let steps = policy.steps();
    let mut phase_slots = vec![0u64; steps.len()];
    let masks = predicate_masks();
    let mut history = vec![0u8; k1];
    let mut history_counts = [0u64; 7];
    let mut tau = [0u64; 2];
    let mut slot: u64 = 0;
    let mut completed = false;

    loop {
        let Some(tx) = policy.next(&mut state) else {
            completed = true;
            break;
        };
        if config.deadline.is_some_and(|n| slot >= n) {
            break;
        }
        slot += 1;
        let fail = |detail: String, bank: &QueueBank| Error::Decode {
            slot,
            detail,
            queues: bank.describe(),
        };

        let coded = match tx.sender {
            Transmitter::Primary => {
                let [id] = tx.packets[..] else {
                    return Err(Error::Internal(format!("node 1 sent {:?}", tx.packets)));
                };
                if id.origin != Transmitter::Primary {
                    return Err(Error::Internal(format!("node 1 sent foreign packet {id}")));
                }
                CodedPacket::from(&originals[0][id.index as usize])
            }
            Transmitter::Secondary => {
                let mut parts = tx.packets.iter().map(|id| {
                    kb[0]
                        .payload(*id)
                        .map(|p| Packet::new(*id, p.to_vec()))
                        .ok_or_else(|| fail(format!("node 2 does not hold {id}"), &state.bank))
                });
                let first = parts
                    .next()
                    .ok_or_else(|| Error::Internal("node 2 sent an empty packet".into()))??;
                let mut coded = CodedPacket::from(&first);
                for p in parts {
                    coded = xor_combine(&coded, &p?).map_err(|e| Error::Internal(e.to_string()))?;
                }
                coded
            }
        };

        let outcome = source.draw(tx.sender, &mut state.rng)?;
        for node in outcome.receivers().iter() {
            kb[node as usize - 2]
                .receive(&coded)
                .map_err(|e| fail(format!("node {node}: {e}"), &state.bank))?;
        }

        tau[tx.sender.node() as usize - 1] += 1;
        phase_slots[tx.step] += 1;
        if tx.sender == Transmitter::Primary {
            let h = &mut history[tx.packets[0].index as usize];
            for (c, m) in history_counts.iter_mut().zip(masks) {
                *c += (*h & m != 0) as u64;
            }
            *h |= outcome_bit(outcome);
        }

        policy.feedback(&tx, outcome, &mut state)?;

        for id in std::mem::take(&mut state.claims) {
            let dest = id.destination();
            let orig = &originals[(dest - 3) as usize][id.index as usize];
            if kb[dest as usize - 2].payload(id) != Some(orig.payload()) {
                return Err(fail(
                    format!("delivery of {id} claimed but node {dest} cannot recover it"),
                    &state.bank,
                ));
            }
            let flag = &mut delivered[(dest - 3) as usize][id.index as usize];
            if *flag {
                return Err(Error::Internal(format!(
                    "{id} delivered twice at slot {slot}"
                )));
            }
            *flag = true;
        }

        if config.check_invariants {
            state
                .bank
                .check_invariants([&delivered[0], &delivered[1]])
                .map_err(|e| Error::Internal(format!("slot {slot}: {e}")))?;
        }
        if let Some(sink) = trace.as_deref_mut() {
            sink.record(TraceRecord {
                slot,
                transmitter: tx.sender.node(),
                step: steps[tx.step],
                packet_ids: tx.packets.clone(),
                erasure_outcome: outcome.indicators(tx.sender),
                queues_after: state.bank.sizes(),
            })?;
        }
    }

    let all_known = |node: usize, origin: usize| {
        originals[origin]
            .iter()
            .all(|p| kb[node - 2].payload(p.id) == Some(p.payload()))
    };
    let decoded_ok = DecodeStatus {
        node3: all_known(3, 0),
        node4: all_known(4, 1),
    };
    if completed {
        if delivered.iter().flatten().any(|d| !d) {
            return Err(Error::Internal(format!(
                "{} finished with undelivered packets",
                policy.name()
            )));
        }
        if !(decoded_ok.node3 && decoded_ok.node4) {
            return Err(Error::Decode {
                slot,
                detail: "final payload comparison failed".into(),
                queues: state.bank.describe(),
            });
        }
    }
    if phase_slots.iter().sum::<u64>() != slot || tau[0] + tau[1] != slot {
        return Err(Error::Internal("slot accounting does not add up".into()));
    }

    let mut schedule_counters: BTreeMap<&'static str, u64> = BTreeMap::new();
    schedule_counters.insert("tau_1", tau[0]);
    schedule_counters.insert("tau_2", tau[1]);
    for ((name, _), c) in HISTORY_COUNTERS.iter().zip(history_counts) {
        schedule_counters.insert(name, c);
    }

    Ok(SimResult {
        algorithm: policy.name(),
        k1,
        k2,
        seed: config.seed,
        total_slots: slot,
        phases: steps
            .iter()
            .zip(&phase_slots)
            .map(|(s, n)| PhaseDuration { step: s, slots: *n })
            .collect(),
        schedule_counters,
        counters: state.counters,
        queue_snapshots: state.snapshots,
        decoded_ok,
        completed,
        deadline: config.deadline,
        deadline_met: config.deadline.map(|n| completed && slot <= n),
    })
}
