//! Packets, XOR-coded packets and receiver-side decoding.
//!
//! Payloads are byte strings of a fixed length and coding is bytewise XOR,
//! so a coded packet with two constituents can be decoded by any receiver
//! that already holds one of them.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::erasure::Transmitter;

/// Identity of an original packet: its origin node and position in the
/// message of that node.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketId {
    pub origin: Transmitter,
    pub index: u32,
}

impl PacketId {
    pub fn primary(index: u32) -> Self {
        PacketId {
            origin: Transmitter::Primary,
            index,
        }
    }

    pub fn secondary(index: u32) -> Self {
        PacketId {
            origin: Transmitter::Secondary,
            index,
        }
    }

    /// Receiver the packet is destined to.
    pub fn destination(self) -> u8 {
        self.origin.node() + 2
    }
}

impl fmt::Debug for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin.node(), self.index)
    }
}

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Serialize for PacketId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// An original packet. The payload is shared and never mutated.
#[derive(Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: PacketId,
    payload: Arc<[u8]>,
}

impl Packet {
    pub fn new(id: PacketId, payload: impl Into<Arc<[u8]>>) -> Self {
        Packet {
            id,
            payload: payload.into(),
        }
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }
}

impl fmt::Debug for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Packet({:?}, {:02x?})", self.id, &self.payload[..])
    }
}

/// XOR of one or two original packets.
#[derive(Clone, PartialEq, Eq)]
pub struct CodedPacket {
    constituents: Vec<PacketId>,
    payload: Vec<u8>,
}

impl CodedPacket {
    pub fn constituents(&self) -> &[PacketId] {
        &self.constituents
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }
}

impl From<&Packet> for CodedPacket {
    fn from(p: &Packet) -> Self {
        CodedPacket {
            constituents: vec![p.id],
            payload: p.payload.to_vec(),
        }
    }
}

impl fmt::Debug for CodedPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coded({:?}, {:02x?})", self.constituents, self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodingError {
    #[error("payload length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("packet {0} already constitutes the coded packet")]
    Duplicate(PacketId),
    #[error("a coded packet has at most two constituents")]
    TooManyConstituents,
    #[error("{0} unknown constituents in {1:?}; exactly one is required")]
    Undecodable(usize, Vec<PacketId>),
    #[error("side information for {0} has the wrong payload length")]
    SideInfoLength(PacketId),
}

/// `a ⊕ b`, with `b` added to the constituents of `a`.
pub fn xor_combine(a: &CodedPacket, b: &Packet) -> Result<CodedPacket, CodingError> {
    if a.payload.len() != b.payload.len() {
        return Err(CodingError::LengthMismatch(
            a.payload.len(),
            b.payload.len(),
        ));
    }
    if a.constituents.contains(&b.id) {
        return Err(CodingError::Duplicate(b.id));
    }
    if a.constituents.len() >= 2 {
        return Err(CodingError::TooManyConstituents);
    }
    let mut constituents = a.constituents.clone();
    constituents.push(b.id);
    let payload = a
        .payload
        .iter()
        .zip(b.payload.iter())
        .map(|(x, y)| x ^ y)
        .collect();
    Ok(CodedPacket {
        constituents,
        payload,
    })
}

/// Anything that can look up payloads of already known packets.
pub trait SideInfo {
    fn lookup(&self, id: PacketId) -> Option<&[u8]>;
}

impl SideInfo for HashMap<PacketId, Packet> {
    fn lookup(&self, id: PacketId) -> Option<&[u8]> {
        self.get(&id).map(Packet::payload)
    }
}

/// Recover the single constituent of `received` that is missing from
/// `side_info` by cancelling out the known ones.
pub fn decode_at_receiver<S: SideInfo + ?Sized>(
    received: &CodedPacket,
    side_info: &S,
) -> Result<Packet, CodingError> {
    let unknown: Vec<PacketId> = received
        .constituents
        .iter()
        .copied()
        .filter(|id| side_info.lookup(*id).is_none())
        .collect();
    if unknown.len() != 1 {
        return Err(CodingError::Undecodable(
            unknown.len(),
            received.constituents.clone(),
        ));
    }
    let mut payload = received.payload.clone();
    for id in &received.constituents {
        if let Some(known) = side_info.lookup(*id) {
            if known.len() != payload.len() {
                return Err(CodingError::SideInfoLength(*id));
            }
            payload.iter_mut().zip(known).for_each(|(x, y)| *x ^= y);
        }
    }
    Ok(Packet::new(unknown[0], payload))
}

/// Everything a node has received so far, decoded where possible.
///
/// Coded packets with two unknown constituents are buffered and decoded as
/// soon as either constituent becomes known.
#[derive(Debug, Clone)]
pub struct Knowledge {
    known: [Vec<Option<Arc<[u8]>>>; 2],
    pending: Vec<Option<CodedPacket>>,
    waiting: HashMap<PacketId, Vec<usize>>,
}

fn slot(id: PacketId) -> usize {
    match id.origin {
        Transmitter::Primary => 0,
        Transmitter::Secondary => 1,
    }
}

impl SideInfo for Knowledge {
    fn lookup(&self, id: PacketId) -> Option<&[u8]> {
        self.known[slot(id)]
            .get(id.index as usize)
            .and_then(|p| p.as_deref())
    }
}

impl Knowledge {
    /// Empty store able to hold `k1` node-1 and `k2` node-2 packets.
    pub fn new(k1: usize, k2: usize) -> Self {
        Knowledge {
            known: [vec![None; k1], vec![None; k2]],
            pending: Vec::new(),
            waiting: HashMap::new(),
        }
    }

    pub fn knows(&self, id: PacketId) -> bool {
        self.lookup(id).is_some()
    }

    pub fn payload(&self, id: PacketId) -> Option<&[u8]> {
        self.lookup(id)
    }

    /// Number of buffered coded packets that cannot be decoded yet.
    pub fn pending(&self) -> usize {
        self.pending.iter().filter(|p| p.is_some()).count()
    }

    /// Record a packet known from the start (a node's own message).
    pub fn insert(&mut self, packet: &Packet) {
        self.known[slot(packet.id)][packet.id.index as usize] = Some(packet.payload.clone());
    }

    /// Process a received packet; returns every packet that became known.
    pub fn receive(&mut self, coded: &CodedPacket) -> Result<Vec<PacketId>, CodingError> {
        let unknown = coded
            .constituents
            .iter()
            .filter(|id| !self.knows(**id))
            .count();
        match unknown {
            0 => Ok(Vec::new()),
            1 => {
                let packet = decode_at_receiver(coded, self)?;
                let mut learned = Vec::new();
                self.learn(packet, &mut learned)?;
                Ok(learned)
            }
            _ => {
                let idx = self.pending.len();
                for id in &coded.constituents {
                    self.waiting.entry(*id).or_default().push(idx);
                }
                self.pending.push(Some(coded.clone()));
                Ok(Vec::new())
            }
        }
    }

    fn learn(&mut self, packet: Packet, learned: &mut Vec<PacketId>) -> Result<(), CodingError> {
        let mut queue = vec![packet];
        while let Some(p) = queue.pop() {
            if self.knows(p.id) {
                continue;
            }
            let id = p.id;
            self.insert(&p);
            learned.push(id);
            for idx in self.waiting.remove(&id).unwrap_or_default() {
                if let Some(coded) = self.pending[idx].take() {
                    if coded.constituents.iter().any(|c| !self.knows(*c)) {
                        queue.push(decode_at_receiver(&coded, self)?);
                    }
                }
            }
        }
        Ok(())
    }
}
