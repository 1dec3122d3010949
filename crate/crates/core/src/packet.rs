//! Tunnel packets and the 16-byte multipath overlay header.
//!
//! Wire layout, network byte order:
//!
//! ```text
//!  0        1        2                             8                 12                16
//! +--------+--------+-----------------------------+-----------------+-----------------+
//! | version| path_id|        overall_seq (48)     | sender_rtt (us) | flow_seq low 32 |
//! +--------+--------+-----------------------------+-----------------+-----------------+
//! ```

use crate::error::{Error, Result};
use crate::path::PathId;
use crate::time::SimTime;

pub const HEADER_LEN: usize = 16;
pub const HEADER_VERSION: u8 = 1;
pub const SEQ_MODULUS: u64 = 1 << 48;
pub const SEQ_MASK: u64 = SEQ_MODULUS - 1;

/// An ingress datagram wrapped for transport over one of the tunnel flows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TunnelPacket {
    /// Tunnel-wide sequence, 48 bits.
    pub overall_seq: u64,
    /// Per-flow sequence, 48 bits.
    pub flow_seq: u64,
    pub path_id: PathId,
    /// Sender's smoothed RTT for this path when the packet was accepted by
    /// the flow; 0 until the flow has a sample.
    pub sender_rtt_report: u32,
    pub payload_len: u32,
    pub ingress_time: SimTime,
    /// Set when the flow hands the packet to its path.
    pub sent_at: SimTime,
}

impl TunnelPacket {
    pub fn new(overall_seq: u64, payload_len: u32, ingress_time: SimTime) -> Self {
        TunnelPacket {
            overall_seq,
            flow_seq: 0,
            path_id: 0,
            sender_rtt_report: 0,
            payload_len,
            ingress_time,
            sent_at: ingress_time,
        }
    }

    pub fn header(&self) -> TunnelHeader {
        TunnelHeader {
            version: HEADER_VERSION,
            path_id: self.path_id,
            overall_seq: self.overall_seq & SEQ_MASK,
            sender_rtt_report_us: self.sender_rtt_report,
            flow_seq_low32: self.flow_seq as u32,
        }
    }
}

/// Saturate an RTT in microseconds into the 32-bit report field.
pub fn rtt_report(rtt_us: u64) -> u32 {
    u32::try_from(rtt_us).unwrap_or(u32::MAX)
}

/// Counter shared by all flows at the tunnel ingress; wraps modulo 2^48.
#[derive(Clone, Debug, Default)]
pub struct SeqCounter {
    next: u64,
}

impl SeqCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(next: u64) -> Self {
        SeqCounter {
            next: next & SEQ_MASK,
        }
    }

    pub fn take(&mut self) -> u64 {
        let seq = self.next;
        self.next = (self.next + 1) & SEQ_MASK;
        seq
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TunnelHeader {
    pub version: u8,
    pub path_id: PathId,
    pub overall_seq: u64,
    pub sender_rtt_report_us: u32,
    pub flow_seq_low32: u32,
}

impl TunnelHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0] = self.version;
        out[1] = self.path_id;
        out[2..8].copy_from_slice(&(self.overall_seq & SEQ_MASK).to_be_bytes()[2..]);
        out[8..12].copy_from_slice(&self.sender_rtt_report_us.to_be_bytes());
        out[12..16].copy_from_slice(&self.flow_seq_low32.to_be_bytes());
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < HEADER_LEN {
            return Err(Error::HeaderTooShort(buf.len()));
        }
        if buf[0] != HEADER_VERSION {
            return Err(Error::HeaderVersion(buf[0]));
        }
        let mut seq = [0u8; 8];
        seq[2..].copy_from_slice(&buf[2..8]);
        Ok(TunnelHeader {
            version: buf[0],
            path_id: buf[1],
            overall_seq: u64::from_be_bytes(seq),
            sender_rtt_report_us: u32::from_be_bytes(buf[8..12].try_into().unwrap()),
            flow_seq_low32: u32::from_be_bytes(buf[12..16].try_into().unwrap()),
        })
    }
}

pub fn encode_header(pkt: &TunnelPacket) -> [u8; HEADER_LEN] {
    pkt.header().encode()
}
