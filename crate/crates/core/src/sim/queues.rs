//! The named queues shared by both schedules.
//!
//! Queue names follow the `X_{j,k l̄}` convention: the queue is held by
//! node `j` and contains packets received by `k` and erased at `l`. A
//! superscript is the origin of the packets when it is not obvious. In
//! ASCII names `~` marks an erasure, so `Q1_2,~34` is Q¹₂,₃̄₄.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use crate::erasure::Transmitter;
use crate::packet::PacketId;

/// Queues holding original packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueueId {
    /// Q₁, node 1's unsent message.
    Q1,
    /// Q₂, node 2's unsent message.
    Q2,
    /// Q¹₂,₃̄₄̄: heard by node 2 only.
    RelayFresh,
    /// Q¹₂,₃̄₄: node-1 packets node 2 holds that node 4 received but node 3 did not.
    RelayAt4,
    /// Q¹₄,₂₃̄: node 4's view of [`QueueId::RelayAt4`].
    RelayAt4Mirror,
    /// Q₂,₃₄̄: node-2 packets received by 3 and not by 4.
    OwnAt3,
    /// Q²₃,₄̄: node 3's view of [`QueueId::OwnAt3`].
    OwnAt3Mirror,
    /// B¹₄,₂̄₃̄: the marked head-of-line packet, if any.
    Marked,
    /// G₁,₂₃̄₄̄
    G1,
    /// G¹₂,₃̄₄̄
    G2,
    /// S₁,₂₃̄₄̄
    S1,
    /// S¹₂,₃̄₄̄
    S2,
    /// A₁,₂₃̄₄: constituents node 1 must push to 3 so that 4 can decode.
    APending,
    /// A₁,₂₃₄: constituents already at 3 whose partner node 4 still misses.
    AAt3,
}

impl QueueId {
    pub const ALL: [QueueId; 14] = [
        QueueId::Q1,
        QueueId::Q2,
        QueueId::RelayFresh,
        QueueId::RelayAt4,
        QueueId::RelayAt4Mirror,
        QueueId::OwnAt3,
        QueueId::OwnAt3Mirror,
        QueueId::Marked,
        QueueId::G1,
        QueueId::G2,
        QueueId::S1,
        QueueId::S2,
        QueueId::APending,
        QueueId::AAt3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueueId::Q1 => "Q_1",
            QueueId::Q2 => "Q_2",
            QueueId::RelayFresh => "Q1_2,~3~4",
            QueueId::RelayAt4 => "Q1_2,~34",
            QueueId::RelayAt4Mirror => "Q1_4,2~3",
            QueueId::OwnAt3 => "Q_2,3~4",
            QueueId::OwnAt3Mirror => "Q2_3,~4",
            QueueId::Marked => "B1_4,~2~3",
            QueueId::G1 => "G_1,2~3~4",
            QueueId::G2 => "G1_2,~3~4",
            QueueId::S1 => "S_1,2~3~4",
            QueueId::S2 => "S1_2,~3~4",
            QueueId::APending => "A_1,2~34",
            QueueId::AAt3 => "A_1,234",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Queue pairs that hold the same packets at two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mirrored {
    RelayAt4,
    OwnAt3,
    G,
    S,
}

impl Mirrored {
    pub fn queues(self) -> (QueueId, QueueId) {
        match self {
            Mirrored::RelayAt4 => (QueueId::RelayAt4, QueueId::RelayAt4Mirror),
            Mirrored::OwnAt3 => (QueueId::OwnAt3, QueueId::OwnAt3Mirror),
            Mirrored::G => (QueueId::G1, QueueId::G2),
            Mirrored::S => (QueueId::S1, QueueId::S2),
        }
    }
}

/// A coded packet `primary ⊕ secondary` awaiting completion at node 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CodedEntry {
    pub primary: PacketId,
    pub secondary: PacketId,
}

/// Coded queue pairs; both members always hold the same entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodedPair {
    /// 𝐀₂,₃̄₄ and 𝐀²₄,₃̄: received by 4 only.
    At4,
    /// 𝐀₂,₃₄ and 𝐀²₄,₃: received by both 3 and 4.
    AtBoth,
}

impl CodedPair {
    pub fn names(self) -> (&'static str, &'static str) {
        match self {
            CodedPair::At4 => ("AA_2,~34", "AA2_4,~3"),
            CodedPair::AtBoth => ("AA_2,34", "AA2_4,3"),
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// The uncoded queue whose entries are the node-1 constituents.
    pub fn constituent_queue(self) -> QueueId {
        match self {
            CodedPair::At4 => QueueId::APending,
            CodedPair::AtBoth => QueueId::AAt3,
        }
    }
}

/// All queues of a run. Mirror pairs are kept as two physical queues so
/// that their equality can be checked rather than assumed.
#[derive(Debug, Clone)]
pub struct QueueBank {
    plain: [VecDeque<PacketId>; 14],
    coded: [[VecDeque<CodedEntry>; 2]; 2],
}

impl QueueBank {
    /// Q₁ and Q₂ filled with the full messages, everything else empty.
    pub fn new(k1: usize, k2: usize) -> Self {
        let mut bank = QueueBank {
            plain: Default::default(),
            coded: Default::default(),
        };
        bank.plain[QueueId::Q1.index()] = (0..k1 as u32).map(PacketId::primary).collect();
        bank.plain[QueueId::Q2.index()] = (0..k2 as u32).map(PacketId::secondary).collect();
        bank
    }

    pub fn len(&self, q: QueueId) -> usize {
        self.plain[q.index()].len()
    }

    pub fn is_empty(&self, q: QueueId) -> bool {
        self.plain[q.index()].is_empty()
    }

    pub fn front(&self, q: QueueId) -> Option<PacketId> {
        self.plain[q.index()].front().copied()
    }

    pub fn iter(&self, q: QueueId) -> impl Iterator<Item = PacketId> + '_ {
        self.plain[q.index()].iter().copied()
    }

    pub fn push(&mut self, q: QueueId, id: PacketId) {
        self.plain[q.index()].push_back(id);
    }

    pub fn pop(&mut self, q: QueueId) -> Option<PacketId> {
        self.plain[q.index()].pop_front()
    }

    /// Remove `id` wherever it sits in `q`.
    pub fn remove(&mut self, q: QueueId, id: PacketId) -> bool {
        let queue = &mut self.plain[q.index()];
        match queue.iter().position(|x| *x == id) {
            Some(pos) => {
                queue.remove(pos);
                true
            }
            None => false,
        }
    }

    pub fn push_mirrored(&mut self, m: Mirrored, id: PacketId) {
        let (a, b) = m.queues();
        self.push(a, id);
        self.push(b, id);
    }

    pub fn front_mirrored(&self, m: Mirrored) -> Option<PacketId> {
        self.front(m.queues().0)
    }

    pub fn is_empty_mirrored(&self, m: Mirrored) -> bool {
        self.is_empty(m.queues().0)
    }

    /// Remove `id` from both queues of the pair.
    pub fn remove_mirrored(&mut self, m: Mirrored, id: PacketId) -> bool {
        let (a, b) = m.queues();
        let in_a = self.remove(a, id);
        let in_b = self.remove(b, id);
        in_a && in_b
    }

    pub fn coded_len(&self, pair: CodedPair) -> usize {
        self.coded[pair.index()][0].len()
    }

    pub fn coded_iter(&self, pair: CodedPair) -> impl Iterator<Item = CodedEntry> + '_ {
        self.coded[pair.index()][0].iter().copied()
    }

    /// Append to the coded pair and its constituent queue.
    pub fn push_coded(&mut self, pair: CodedPair, entry: CodedEntry) {
        for q in &mut self.coded[pair.index()] {
            q.push_back(entry);
        }
        self.push(pair.constituent_queue(), entry.primary);
    }

    /// Remove the entry whose node-1 constituent is `primary` from the coded
    /// pair and the constituent queue.
    pub fn remove_coded(&mut self, pair: CodedPair, primary: PacketId) -> Option<CodedEntry> {
        let mut found = None;
        for q in &mut self.coded[pair.index()] {
            let pos = q.iter().position(|e| e.primary == primary)?;
            found = q.remove(pos);
        }
        self.remove(pair.constituent_queue(), primary);
        found
    }

    /// Sizes of every queue, keyed by name.
    pub fn sizes(&self) -> BTreeMap<&'static str, usize> {
        let mut out: BTreeMap<&'static str, usize> = QueueId::ALL
            .iter()
            .map(|q| (q.name(), self.len(*q)))
            .collect();
        for pair in [CodedPair::At4, CodedPair::AtBoth] {
            let (a, b) = pair.names();
            out.insert(a, self.coded[pair.index()][0].len());
            out.insert(b, self.coded[pair.index()][1].len());
        }
        out
    }

    /// Compact listing of the nonempty queues for error reports.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (name, len) in self.sizes() {
            if len > 0 {
                let _ = write!(s, "{name}={len} ");
            }
        }
        s.trim_end().to_string()
    }

    /// Structural invariants at a slot boundary. `delivered` holds, per
    /// origin, which packets have reached their destination.
    pub fn check_invariants(&self, delivered: [&[bool]; 2]) -> Result<(), String> {
        for m in [
            Mirrored::RelayAt4,
            Mirrored::OwnAt3,
            Mirrored::G,
            Mirrored::S,
        ] {
            let (a, b) = m.queues();
            if self.plain[a.index()] != self.plain[b.index()] {
                return Err(format!(
                    "mirror queues {} and {} differ",
                    a.name(),
                    b.name()
                ));
            }
        }
        for pair in [CodedPair::At4, CodedPair::AtBoth] {
            let [a, b] = &self.coded[pair.index()];
            if a != b {
                return Err(format!("coded mirror queues {:?} differ", pair.names()));
            }
            let primaries: Vec<PacketId> = a.iter().map(|e| e.primary).collect();
            let listed: Vec<PacketId> = self.iter(pair.constituent_queue()).collect();
            if primaries != listed {
                return Err(format!(
                    "coded queue {} does not match {}",
                    pair.names().0,
                    pair.constituent_queue().name()
                ));
            }
        }
        let marked = self.len(QueueId::Marked);
        if marked > 1 {
            return Err(format!("marked buffer holds {marked} packets"));
        }
        if marked == 1 && self.front(QueueId::Marked) != self.front(QueueId::Q1) {
            return Err("marked packet is not the head of Q_1".into());
        }

        let mut count = [
            vec![0u32; delivered[0].len()],
            vec![0u32; delivered[1].len()],
        ];
        let tally = |id: PacketId, count: &mut [Vec<u32>; 2]| {
            let o = (id.origin == Transmitter::Secondary) as usize;
            count[o][id.index as usize] += 1;
        };
        for q in [
            QueueId::Q1,
            QueueId::RelayFresh,
            QueueId::RelayAt4,
            QueueId::G1,
            QueueId::S1,
            QueueId::APending,
            QueueId::Q2,
            QueueId::OwnAt3,
        ] {
            for id in self.iter(q) {
                tally(id, &mut count);
            }
        }
        for pair in [CodedPair::At4, CodedPair::AtBoth] {
            for e in self.coded_iter(pair) {
                tally(e.secondary, &mut count);
            }
        }
        for (o, origin) in count.iter().enumerate() {
            for (i, c) in origin.iter().enumerate() {
                let total = c + delivered[o][i] as u32;
                if total != 1 {
                    return Err(format!(
                        "packet {}:{} accounted for {total} times",
                        o + 1,
                        i
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_bank_is_consistent() {
        let bank = QueueBank::new(3, 2);
        assert_eq!(bank.len(QueueId::Q1), 3);
        assert_eq!(bank.len(QueueId::Q2), 2);
        bank.check_invariants([&[false; 3], &[false; 2]]).unwrap();
    }

    #[test]
    fn detects_broken_mirror_and_double_count() {
        let mut bank = QueueBank::new(1, 0);
        let id = bank.pop(QueueId::Q1).unwrap();
        bank.push(QueueId::RelayAt4, id);
        assert!(bank
            .check_invariants([&[false], &[]])
            .unwrap_err()
            .contains("mirror"));
        bank.push(QueueId::RelayAt4Mirror, id);
        bank.check_invariants([&[false], &[]]).unwrap();
        assert!(bank
            .check_invariants([&[true], &[]])
            .unwrap_err()
            .contains("2 times"));
    }

    #[test]
    fn coded_entries_track_constituent_queue() {
        let mut bank = QueueBank::new(1, 1);
        let a = bank.pop(QueueId::Q1).unwrap();
        let b = bank.pop(QueueId::Q2).unwrap();
        let e = CodedEntry {
            primary: a,
            secondary: b,
        };
        bank.push_coded(CodedPair::At4, e);
        assert_eq!(bank.front(QueueId::APending), Some(a));
        bank.check_invariants([&[false], &[false]]).unwrap();
        assert_eq!(bank.remove_coded(CodedPair::At4, a), Some(e));
        assert!(bank.is_empty(QueueId::APending));
        assert_eq!(bank.coded_len(CodedPair::At4), 0);
    }
}
