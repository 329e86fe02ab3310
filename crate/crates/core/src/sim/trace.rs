//! Per-slot trace records, written as JSON lines.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::packet::PacketId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub slot: u64,
    pub transmitter: u8,
    pub step: &'static str,
    pub packet_ids: Vec<PacketId>,
    /// Reception indicators in listener order (2,3,4 or 3,4), 1 = received.
    pub erasure_outcome: Vec<u8>,
    pub queues_after: BTreeMap<&'static str, usize>,
}

pub trait TraceSink {
    fn record(&mut self, rec: TraceRecord) -> Result<()>;
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: TraceRecord) -> Result<()> {
        self.push(rec);
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct JsonLines<W: Write>(pub W);

impl<W: Write> TraceSink for JsonLines<W> {
    fn record(&mut self, rec: TraceRecord) -> Result<()> {
        serde_json::to_writer(&mut self.0, &rec).map_err(|e| Error::Internal(e.to_string()))?;
        self.0
            .write_all(b"\n")
            .map_err(|e| Error::Internal(format!("trace write failed: {e}")))
    }
}
