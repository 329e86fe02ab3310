//! The eight-step schedule. Packets heard by node 2 alone are split three
//! ways: a fraction `g` is retransmitted by node 1 itself, a fraction `s` is
//! XORed by node 2 with its own packets that node 3 already holds, and the
//! rest is relayed as in [`crate::alg1`]. When such a coded packet reaches
//! only node 4, node 1 later pushes the node-1 constituent so that node 4
//! can peel its own packet out.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alg1::{
    check_common, final_feedback, final_next, own_step, primary_step, relay_fresh_step,
};
use crate::erasure::{ErasureModel, Reception};
use crate::error::{Error, Result};
use crate::packet::PacketId;
use crate::sim::{
    require, CodedEntry, CodedPair, Mirrored, Policy, QueueId, RunState, Transmission,
};

const STEPS: [&str; 8] = [
    "step1", "step2", "step3", "step4", "step5", "step6", "step7", "step8",
];

/// Branching probabilities of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub g: f64,
    pub s: f64,
    pub u: f64,
}

impl MixParams {
    pub fn new(g: f64, s: f64, u: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !ok(g) || !ok(s) || !ok(u) {
            return Err(Error::domain(format!(
                "g, s, u must lie in [0, 1]; got {g}, {s}, {u}"
            )));
        }
        if g + s > 1.0 + 1e-12 {
            return Err(Error::domain(format!("g + s = {} exceeds 1", g + s)));
        }
        Ok(MixParams { g, s, u })
    }

    /// `g = s = 0`: the schedule degenerates to the four-step one.
    pub fn none() -> Self {
        MixParams {
            g: 0.0,
            s: 0.0,
            u: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Algorithm2 {
    params: MixParams,
    phase: usize,
    thinned: bool,
}

pub fn algorithm2_policy(params: MixParams) -> Algorithm2 {
    Algorithm2 {
        params,
        phase: 0,
        thinned: false,
    }
}

impl Algorithm2 {
    pub fn params(&self) -> MixParams {
        self.params
    }

    /// Each A₁,₂₃₄ packet is dropped with probability 1−u and its node-2
    /// partner goes back to Q₂,₃₄̄ for the final coded step.
    fn thin(&mut self, st: &mut RunState) {
        let entries: Vec<CodedEntry> = st.bank.coded_iter(CodedPair::AtBoth).collect();
        for e in entries {
            if st.rng.gen::<f64>() >= self.params.u {
                st.bank.remove_coded(CodedPair::AtBoth, e.primary);
                st.bank.push_mirrored(Mirrored::OwnAt3, e.secondary);
                st.count("step7_thinned");
            }
        }
        self.thinned = true;
    }
}

impl Policy for Algorithm2 {
    fn name(&self) -> &'static str {
        "alg2"
    }

    fn steps(&self) -> &'static [&'static str] {
        &STEPS
    }

    fn check_reachable(&self, model: &ErasureModel, k1: usize, k2: usize) -> Result<()> {
        let m = model.marginals();
        let fresh = check_common(&m, k1, k2)?;
        let MixParams { g, s, u } = self.params;
        require(
            g > 0.0 && fresh,
            1.0 - m.e1_34,
            "a node-1 retransmission reaching node 3 or 4",
        )?;
        let coded = s > 0.0 && fresh && k2 > 0 && m.e2_4 - m.e2_34 > 0.0;
        require(
            coded && m.e2_3 - m.e2_34 > 0.0,
            1.0 - m.e1_34,
            "a node-1 constituent push reaching node 3 or 4",
        )?;
        require(
            coded && u > 0.0,
            1.0 - m.e1_4,
            "a node-1 transmission reaching node 4",
        )
    }

    fn next(&mut self, st: &mut RunState) -> Option<Transmission> {
        loop {
            if self.phase == 6 && !self.thinned {
                self.thin(st);
            }
            let bank = &st.bank;
            let tx = match self.phase {
                0 => bank
                    .front(QueueId::Q1)
                    .map(|id| Transmission::primary(0, id)),
                1 => bank
                    .front(QueueId::G1)
                    .map(|id| Transmission::primary(1, id)),
                2 => bank
                    .front(QueueId::RelayFresh)
                    .map(|id| Transmission::secondary(2, vec![id])),
                3 => bank
                    .front(QueueId::Q2)
                    .map(|id| Transmission::secondary(3, vec![id])),
                4 => bank
                    .front(QueueId::S2)
                    .map(|a| match bank.front_mirrored(Mirrored::OwnAt3) {
                        Some(b) => Transmission::secondary(4, vec![a, b]),
                        None => Transmission::secondary(4, vec![a]),
                    }),
                5 => bank
                    .front(QueueId::APending)
                    .map(|id| Transmission::primary(5, id)),
                6 => bank
                    .front(QueueId::AAt3)
                    .map(|id| Transmission::primary(6, id)),
                7 => final_next(bank, 7),
                _ => return None,
            };
            if tx.is_some() {
                return tx;
            }
            st.snapshot(&format!("after_{}", STEPS[self.phase]));
            self.phase += 1;
        }
    }

    fn feedback(&mut self, tx: &Transmission, r: Reception, st: &mut RunState) -> Result<()> {
        match tx.step {
            0 => {
                if let Some(id) = primary_step(tx, r, st)? {
                    self.place_fresh(id, st);
                }
                Ok(())
            }
            1 => {
                let id = head(tx, st, QueueId::G1)?;
                if r.received(3) {
                    st.bank.remove_mirrored(Mirrored::G, id);
                    st.deliver(id);
                } else if r.received(4) {
                    st.bank.remove_mirrored(Mirrored::G, id);
                    st.bank.push_mirrored(Mirrored::RelayAt4, id);
                    st.count("step2_to_relay_at4");
                }
                Ok(())
            }
            2 => relay_fresh_step(tx, r, st),
            3 => own_step(tx, r, st),
            4 => coded_step(tx, r, st),
            5 => {
                let a = head(tx, st, QueueId::APending)?;
                if !r.received(3) && !r.received(4) {
                    return Ok(());
                }
                let e = st
                    .bank
                    .remove_coded(CodedPair::At4, a)
                    .ok_or_else(|| Error::Internal(format!("{a} has no coded partner")))?;
                match (r.received(3), r.received(4)) {
                    (true, true) => {
                        st.deliver(a);
                        st.deliver(e.secondary);
                    }
                    (false, true) => {
                        st.bank.push_mirrored(Mirrored::RelayAt4, a);
                        st.deliver(e.secondary);
                        st.count("step6_to_relay_at4");
                    }
                    _ => {
                        st.bank.push_coded(CodedPair::AtBoth, e);
                        st.deliver(a);
                    }
                }
                Ok(())
            }
            6 => {
                let a = head(tx, st, QueueId::AAt3)?;
                if r.received(4) {
                    let e = st
                        .bank
                        .remove_coded(CodedPair::AtBoth, a)
                        .ok_or_else(|| Error::Internal(format!("{a} has no coded partner")))?;
                    st.deliver(e.secondary);
                }
                Ok(())
            }
            7 => final_feedback(tx, r, st),
            s => Err(Error::Internal(format!("alg2 has no step index {s}"))),
        }
    }
}

impl Algorithm2 {
    /// Step 1e. No coin is drawn when g = s = 0, which keeps the random
    /// stream identical to the four-step schedule.
    fn place_fresh(&self, id: PacketId, st: &mut RunState) {
        let MixParams { g, s, .. } = self.params;
        if g + s > 0.0 {
            let x: f64 = st.rng.gen();
            if x < g {
                st.bank.push_mirrored(Mirrored::G, id);
                return;
            }
            if x < g + s {
                st.bank.push_mirrored(Mirrored::S, id);
                return;
            }
        }
        st.bank.push(QueueId::RelayFresh, id);
    }
}

fn head(tx: &Transmission, st: &RunState, q: QueueId) -> Result<PacketId> {
    match st.bank.front(q) {
        Some(h) if tx.packets[..] == [h] => Ok(h),
        _ => Err(Error::Internal(format!(
            "transmitted {:?} is not the head of {}",
            tx.packets,
            q.name()
        ))),
    }
}

/// Step 5: node 2 sends `s ⊕ q₂`, or `s` alone once Q₂,₃₄̄ has run dry.
fn coded_step(tx: &Transmission, r: Reception, st: &mut RunState) -> Result<()> {
    let s_head = st.bank.front(QueueId::S2);
    let own = st.bank.front_mirrored(Mirrored::OwnAt3);
    match tx.packets[..] {
        [a, b] if Some(a) == s_head && Some(b) == own => {
            let e = CodedEntry {
                primary: a,
                secondary: b,
            };
            match (r.received(3), r.received(4)) {
                (true, false) => {
                    st.bank.remove_mirrored(Mirrored::S, a);
                    st.deliver(a);
                }
                (false, true) => {
                    st.bank.remove_mirrored(Mirrored::S, a);
                    st.bank.remove_mirrored(Mirrored::OwnAt3, b);
                    st.bank.push_coded(CodedPair::At4, e);
                }
                (true, true) => {
                    st.bank.remove_mirrored(Mirrored::S, a);
                    st.bank.remove_mirrored(Mirrored::OwnAt3, b);
                    st.bank.push_coded(CodedPair::AtBoth, e);
                    st.deliver(a);
                }
                (false, false) => {}
            }
            Ok(())
        }
        [a] if Some(a) == s_head && own.is_none() => {
            if r.received(3) {
                st.bank.remove_mirrored(Mirrored::S, a);
                st.deliver(a);
                st.count("step5_uncoded");
            } else if r.received(4) {
                st.bank.remove_mirrored(Mirrored::S, a);
                st.bank.push_mirrored(Mirrored::RelayAt4, a);
                st.count("step5_uncoded");
            }
            Ok(())
        }
        _ => Err(Error::Internal(format!("step 5 sent {:?}", tx.packets))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alg1::algorithm1_policy;
    use crate::sim::{run_loop, run_with, ScriptedChannel, SimConfig, TraceRecord};

    #[test]
    fn params_validated() {
        assert!(MixParams::new(0.5, 0.5, 1.0).is_ok());
        assert!(MixParams::new(0.6, 0.5, 0.0).is_err());
        assert!(MixParams::new(-0.1, 0.0, 0.0).is_err());
        assert!(MixParams::new(0.0, 0.0, 1.5).is_err());
        assert!(MixParams::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_erasures_any_params() {
        let model = ErasureModel::independent(0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let p = MixParams::new(0.3, 0.4, 0.5).unwrap();
        let r = run_loop(&SimConfig::new(model, 7, 4, 2), &mut algorithm2_policy(p)).unwrap();
        assert_eq!(r.total_slots, 11);
    }

    #[test]
    fn degenerate_params_reproduce_alg1() {
        let model = ErasureModel::independent(0.4, 0.5, 0.3, 0.2, 0.6).unwrap();
        let cfg = SimConfig::new(model, 300, 200, 99);
        let p = MixParams::new(0.0, 0.0, 0.7).unwrap();
        let mut t1: Vec<TraceRecord> = Vec::new();
        let mut t2: Vec<TraceRecord> = Vec::new();
        let m = cfg.model.clone();
        let r1 = run_with(
            &cfg,
            &mut algorithm1_policy(),
            &mut crate::sim::ModelChannel(&m),
            Some(&mut t1),
        )
        .unwrap();
        let r2 = run_with(
            &cfg,
            &mut algorithm2_policy(p),
            &mut crate::sim::ModelChannel(&m),
            Some(&mut t2),
        )
        .unwrap();
        assert_eq!(r1.total_slots, r2.total_slots);
        let strip = |t: &[TraceRecord]| -> Vec<(u64, u8, Vec<PacketId>, Vec<u8>)> {
            t.iter()
                .map(|r| {
                    (
                        r.slot,
                        r.transmitter,
                        r.packet_ids.clone(),
                        r.erasure_outcome.clone(),
                    )
                })
                .collect()
        };
        assert_eq!(strip(&t1), strip(&t2));
    }

    // One node-1 packet w and one node-2 packet v. w is heard by node 2
    // alone and goes to S; v reaches node 3 only; w ⊕ v reaches node 4
    // only; node 1 then pushes w, heard by node 3 only; finally node 1
    // sends w again and node 4 peels v out of w ⊕ v.
    #[test]
    fn scripted_two_hop_recovery() {
        let model = ErasureModel::independent(0.5, 0.5, 0.5, 0.5, 0.5).unwrap();
        let mut cfg = SimConfig::new(model, 1, 1, 5);
        cfg.check_invariants = true;
        let p = MixParams::new(0.0, 1.0, 1.0).unwrap();
        let mut channel = ScriptedChannel::new([
            Reception::primary(true, false, false),
            Reception::secondary(true, false),
            Reception::secondary(false, true),
            Reception::primary(false, true, false),
            Reception::primary(false, false, true),
        ]);
        let mut trace: Vec<TraceRecord> = Vec::new();
        let r = run_with(
            &cfg,
            &mut algorithm2_policy(p),
            &mut channel,
            Some(&mut trace),
        )
        .unwrap();
        let steps: Vec<&str> = trace.iter().map(|t| t.step).collect();
        assert_eq!(steps, ["step1", "step4", "step5", "step6", "step7"]);
        assert_eq!(trace[2].queues_after["AA_2,~34"], 1);
        assert_eq!(trace[3].queues_after["AA2_4,3"], 1);
        assert_eq!(r.total_slots, 5);
        assert!(r.decoded_ok.node3 && r.decoded_ok.node4);
    }

    #[test]
    fn thinning_sends_partner_back_to_final_step() {
        let model = ErasureModel::independent(0.5, 0.5, 0.5, 0.5, 0.5).unwrap();
        let mut cfg = SimConfig::new(model, 1, 1, 5);
        cfg.check_invariants = true;
        let p = MixParams::new(0.0, 1.0, 0.0).unwrap();
        let mut channel = ScriptedChannel::new([
            Reception::primary(true, false, false),
            Reception::secondary(true, false),
            Reception::secondary(true, true),
            Reception::secondary(false, true),
        ]);
        let r = run_with(&cfg, &mut algorithm2_policy(p), &mut channel, None).unwrap();
        assert_eq!(r.counter("step7_thinned"), 1);
        assert_eq!(r.phase("step8"), 1);
        assert_eq!(r.total_slots, 4);
    }
}
