//! The four-step schedule: node 1 sends each packet until node 2 or 3 hears
//! it, node 2 relays what only it heard, sends its own message, and finally
//! XORs a node-1 packet node 4 already has with a node-2 packet node 3
//! already has.
//!
//! The per-step feedback rules are shared with [`crate::alg2`].

use crate::erasure::{ErasureModel, Marginals, Reception};
use crate::error::{Error, Result};
use crate::packet::PacketId;
use crate::sim::{require, Mirrored, Policy, QueueBank, QueueId, RunState, Transmission};

/// Counter of Step-2 packets that reach node 4 but not node 3.
pub const STEP2_TO_RELAY: &str = "step2_to_relay_at4";

const STEPS: [&str; 4] = ["step1", "step2", "step3", "step4"];

#[derive(Debug, Clone, Default)]
pub struct Algorithm1 {
    phase: usize,
}

pub fn algorithm1_policy() -> Algorithm1 {
    Algorithm1::default()
}

impl Policy for Algorithm1 {
    fn name(&self) -> &'static str {
        "alg1"
    }

    fn steps(&self) -> &'static [&'static str] {
        &STEPS
    }

    fn check_reachable(&self, model: &ErasureModel, k1: usize, k2: usize) -> Result<()> {
        check_common(&model.marginals(), k1, k2).map(|_| ())
    }

    fn next(&mut self, st: &mut RunState) -> Option<Transmission> {
        loop {
            let bank = &st.bank;
            let tx = match self.phase {
                0 => bank
                    .front(QueueId::Q1)
                    .map(|id| Transmission::primary(0, id)),
                1 => bank
                    .front(QueueId::RelayFresh)
                    .map(|id| Transmission::secondary(1, vec![id])),
                2 => bank
                    .front(QueueId::Q2)
                    .map(|id| Transmission::secondary(2, vec![id])),
                3 => final_next(bank, 3),
                _ => return None,
            };
            if tx.is_some() {
                return tx;
            }
            st.snapshot(&format!("after_{}", STEPS[self.phase]));
            self.phase += 1;
        }
    }

    fn feedback(&mut self, tx: &Transmission, outcome: Reception, st: &mut RunState) -> Result<()> {
        match tx.step {
            0 => {
                if let Some(id) = primary_step(tx, outcome, st)? {
                    st.bank.push(QueueId::RelayFresh, id);
                }
                Ok(())
            }
            1 => relay_fresh_step(tx, outcome, st),
            2 => own_step(tx, outcome, st),
            3 => final_feedback(tx, outcome, st),
            s => Err(Error::Internal(format!("alg1 has no step index {s}"))),
        }
    }
}

/// Reachability conditions shared by both schedules. Returns whether a
/// packet can end up heard by node 2 alone.
pub(crate) fn check_common(m: &Marginals, k1: usize, k2: usize) -> Result<bool> {
    let has1 = k1 > 0;
    require(
        has1,
        1.0 - m.e1_23,
        "a node-1 transmission reaching node 2 or 3",
    )?;
    let fresh = has1 && m.e1_34 - m.e1_234 > 0.0;
    require(fresh, 1.0 - m.e2_34, "a node-2 relay reaching node 3 or 4")?;
    require(
        has1 && m.e1_3 - m.e1_23 > 0.0,
        1.0 - m.e2_3,
        "a node-2 transmission reaching node 3",
    )?;
    require(
        k2 > 0,
        1.0 - m.e2_34,
        "a node-2 transmission reaching node 3 or 4",
    )?;
    require(
        k2 > 0 && m.e2_4 - m.e2_34 > 0.0,
        1.0 - m.e2_4,
        "a node-2 transmission reaching node 4",
    )?;
    Ok(fresh)
}

fn expect_head(tx: &Transmission, head: Option<PacketId>, queue: QueueId) -> Result<PacketId> {
    match head {
        Some(h) if tx.packets.first() == Some(&h) => Ok(h),
        _ => Err(Error::Internal(format!(
            "transmitted {:?} is not the head of {}",
            tx.packets,
            queue.name()
        ))),
    }
}

/// Step 1: node 1 sends the head of Q₁. Returns the packet when it was heard
/// by node 2 alone and is not marked; where it goes is up to the caller.
pub(crate) fn primary_step(
    tx: &Transmission,
    r: Reception,
    st: &mut RunState,
) -> Result<Option<PacketId>> {
    let id = expect_head(tx, st.bank.front(QueueId::Q1), QueueId::Q1)?;
    let marked = st.bank.front(QueueId::Marked) == Some(id);
    if !r.received(2) && !r.received(3) {
        if r.received(4) && !marked {
            st.bank.push(QueueId::Marked, id);
        }
        return Ok(None);
    }
    st.bank.pop(QueueId::Q1);
    if marked {
        st.bank.pop(QueueId::Marked);
    }
    if r.received(3) {
        st.deliver(id);
        Ok(None)
    } else if r.received(4) || marked {
        if marked && !r.received(4) {
            st.count("step1_marked_to_relay");
        }
        st.bank.push_mirrored(Mirrored::RelayAt4, id);
        Ok(None)
    } else {
        Ok(Some(id))
    }
}

/// Node 2 sends the head of Q¹₂,₃̄₄̄ until node 3 or 4 hears it.
pub(crate) fn relay_fresh_step(tx: &Transmission, r: Reception, st: &mut RunState) -> Result<()> {
    let id = expect_head(tx, st.bank.front(QueueId::RelayFresh), QueueId::RelayFresh)?;
    if r.received(3) {
        st.bank.pop(QueueId::RelayFresh);
        st.deliver(id);
    } else if r.received(4) {
        st.bank.pop(QueueId::RelayFresh);
        st.bank.push_mirrored(Mirrored::RelayAt4, id);
        st.count(STEP2_TO_RELAY);
    }
    Ok(())
}

/// Node 2 sends the head of Q₂ until node 3 or 4 hears it.
pub(crate) fn own_step(tx: &Transmission, r: Reception, st: &mut RunState) -> Result<()> {
    let id = expect_head(tx, st.bank.front(QueueId::Q2), QueueId::Q2)?;
    if r.received(4) {
        st.bank.pop(QueueId::Q2);
        st.deliver(id);
    } else if r.received(3) {
        st.bank.pop(QueueId::Q2);
        st.bank.push_mirrored(Mirrored::OwnAt3, id);
    }
    Ok(())
}

/// Final step: code the two cross-side-information queues together while
/// both are nonempty, then send what is left uncoded.
pub(crate) fn final_next(bank: &QueueBank, step: usize) -> Option<Transmission> {
    let relay = bank.front_mirrored(Mirrored::RelayAt4);
    let own = bank.front_mirrored(Mirrored::OwnAt3);
    match (relay, own) {
        (Some(a), Some(b)) => Some(Transmission::secondary(step, vec![a, b])),
        (Some(a), None) => Some(Transmission::secondary(step, vec![a])),
        (None, Some(b)) => Some(Transmission::secondary(step, vec![b])),
        (None, None) => None,
    }
}

pub(crate) fn final_feedback(tx: &Transmission, r: Reception, st: &mut RunState) -> Result<()> {
    let relay = st.bank.front_mirrored(Mirrored::RelayAt4);
    let own = st.bank.front_mirrored(Mirrored::OwnAt3);
    let (to3, to4) = match tx.packets[..] {
        [a, b] if Some(a) == relay && Some(b) == own => (Some(a), Some(b)),
        [a] if Some(a) == relay && own.is_none() => (Some(a), None),
        [b] if Some(b) == own && relay.is_none() => (None, Some(b)),
        _ => {
            return Err(Error::Internal(format!(
                "final step sent {:?} with heads {relay:?}/{own:?}",
                tx.packets
            )))
        }
    };
    if let Some(a) = to3.filter(|_| r.received(3)) {
        st.bank.remove_mirrored(Mirrored::RelayAt4, a);
        st.deliver(a);
    }
    if let Some(b) = to4.filter(|_| r.received(4)) {
        st.bank.remove_mirrored(Mirrored::OwnAt3, b);
        st.deliver(b);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run_loop, run_with, ScriptedChannel, SimConfig, TraceRecord};

    #[test]
    fn zero_erasures_take_one_slot_per_packet() {
        let model = ErasureModel::independent(0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let r = run_loop(&SimConfig::new(model, 5, 5, 1), &mut algorithm1_policy()).unwrap();
        assert_eq!(r.total_slots, 10);
        assert_eq!(r.phase("step2"), 0);
        assert_eq!(r.phase("step4"), 0);
        assert!(r.decoded_ok.node3 && r.decoded_ok.node4);
    }

    #[test]
    fn scripted_relay_then_code() {
        let model = ErasureModel::independent(0.5, 0.5, 0.5, 0.5, 0.5).unwrap();
        let mut cfg = SimConfig::new(model, 1, 1, 3);
        cfg.check_invariants = true;
        let mut channel = ScriptedChannel::new([
            Reception::primary(true, false, true),
            Reception::secondary(true, false),
            Reception::secondary(true, true),
        ]);
        let mut trace: Vec<TraceRecord> = Vec::new();
        let r = run_with(
            &cfg,
            &mut algorithm1_policy(),
            &mut channel,
            Some(&mut trace),
        )
        .unwrap();
        assert_eq!(r.total_slots, 3);
        assert!(r.decoded_ok.node3 && r.decoded_ok.node4);
        let steps: Vec<&str> = trace.iter().map(|t| t.step).collect();
        assert_eq!(steps, ["step1", "step3", "step4"]);
        assert_eq!(trace[0].queues_after["Q1_2,~34"], 1);
        assert_eq!(trace[0].queues_after["Q1_4,2~3"], 1);
        assert_eq!(trace[1].queues_after["Q_2,3~4"], 1);
        assert_eq!(trace[2].packet_ids.len(), 2);
    }

    #[test]
    fn marked_packet_is_relayed_when_node2_hears_it() {
        let model = ErasureModel::independent(0.5, 0.5, 0.5, 0.5, 0.5).unwrap();
        let mut cfg = SimConfig::new(model, 1, 0, 3);
        cfg.check_invariants = true;
        let mut channel = ScriptedChannel::new([
            Reception::primary(false, false, true),
            Reception::primary(false, false, true),
            Reception::primary(true, false, false),
            Reception::secondary(true, false),
        ]);
        let r = run_with(&cfg, &mut algorithm1_policy(), &mut channel, None).unwrap();
        assert_eq!(r.total_slots, 4);
        assert_eq!(r.counter("step1_marked_to_relay"), 1);
        assert_eq!(r.phase("step4"), 1);
    }

    #[test]
    fn unreachable_phase_is_a_config_error() {
        // node 2 never reaches node 4, but its own packets need it
        let model = ErasureModel::joint(
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            [0.5, 0.0, 0.5, 0.0],
        )
        .unwrap();
        let err = run_loop(&SimConfig::new(model, 1, 1, 0), &mut algorithm1_policy()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}
