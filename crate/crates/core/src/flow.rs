//! Per-path tunnel flow: sequencing, send queue, TCP-like window congestion
//! control and RTT estimation.
//!
//! The window is counted in packets. Slow start adds one packet per ack
//! below `ssthresh`; congestion avoidance adds one packet per window of acks.
//! A loss halves the window at most once per window of data: losses of
//! packets sent before the previous reduction are absorbed by it.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::packet::{rtt_report, TunnelPacket, SEQ_MASK};
use crate::path::PathId;
use crate::time::SimTime;

pub const INITIAL_CWND: u32 = 2;
pub const INITIAL_SSTHRESH: u32 = 64;
pub const MIN_SSTHRESH: u32 = 2;
/// Packets acknowledged beyond an outstanding one before it is declared lost.
pub const LOSS_ACK_GAP: u64 = 3;
pub const RTO_SRTT_MULTIPLIER: u64 = 4;
/// Timeout used before the first RTT sample exists.
pub const INITIAL_RTO: SimTime = SimTime::from_secs(1);
const MAX_RTO_BACKOFF: u32 = 6;

/// Smoothed RTT and RTT variation, gains 1/8 and 1/4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RttEstimator {
    srtt: Option<u64>,
    rttvar: u64,
}

impl RttEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(srtt: u64, rttvar: u64) -> Self {
        RttEstimator {
            srtt: Some(srtt),
            rttvar,
        }
    }

    pub fn srtt(&self) -> Option<u64> {
        self.srtt
    }

    pub fn rttvar(&self) -> u64 {
        self.rttvar
    }

    pub fn update(&mut self, sample_us: u64) -> Result<()> {
        if sample_us == 0 {
            return Err(Error::NonPositiveRttSample);
        }
        match self.srtt {
            None => {
                self.srtt = Some(sample_us);
                self.rttvar = sample_us / 2;
            }
            Some(srtt) => {
                self.rttvar = (3 * self.rttvar + srtt.abs_diff(sample_us)) / 4;
                self.srtt = Some((7 * srtt + sample_us) / 8);
            }
        }
        Ok(())
    }
}

/// Acknowledgment of one flow packet as seen by the sender.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckRecord {
    pub flow_seq: u64,
    /// Echo of the packet's transmission time.
    pub send_time: SimTime,
    pub ack_time: SimTime,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FlowStats {
    pub path_id: PathId,
    pub transmitted: u64,
    pub acked: u64,
    pub losses: u64,
    pub halvings: u64,
    pub timeouts: u64,
    /// Transmissions that found `in_flight > cwnd`. Must stay zero.
    pub window_violations: u64,
    pub max_queue: usize,
    pub max_cwnd: u32,
}

/// What changed in a flow after an ack or timeout.
#[derive(Debug, Default)]
pub struct FlowUpdate {
    /// Packets released from the send queue, ready for the path.
    pub transmit: Vec<TunnelPacket>,
    pub rtt_sample: Option<u64>,
    pub lost: Vec<u64>,
    pub halved: bool,
}

#[derive(Debug)]
pub struct FlowState {
    path_id: PathId,
    cwnd: u32,
    ssthresh: u32,
    ca_acked: u32,
    rtt: RttEstimator,
    send_queue: VecDeque<TunnelPacket>,
    next_flow_seq: u64,
    outstanding: BTreeMap<u64, SimTime>,
    // declared lost but still able to yield an RTT sample if acked late
    lost: BTreeMap<u64, SimTime>,
    /// First flow_seq not yet transmitted at the last reduction.
    recovery_point: Option<u64>,
    rto_backoff: u32,
    rto_expiry: Option<SimTime>,
    stats: FlowStats,
}

impl FlowState {
    pub fn new(path_id: PathId) -> Self {
        FlowState {
            path_id,
            cwnd: INITIAL_CWND,
            ssthresh: INITIAL_SSTHRESH,
            ca_acked: 0,
            rtt: RttEstimator::new(),
            send_queue: VecDeque::new(),
            next_flow_seq: 0,
            outstanding: BTreeMap::new(),
            lost: BTreeMap::new(),
            recovery_point: None,
            rto_backoff: 0,
            rto_expiry: None,
            stats: FlowStats {
                path_id,
                max_cwnd: INITIAL_CWND,
                ..FlowStats::default()
            },
        }
    }

    /// Start from an explicit window, e.g. for scripted traces.
    pub fn with_window(path_id: PathId, cwnd: u32, ssthresh: u32) -> Self {
        let mut f = Self::new(path_id);
        f.cwnd = cwnd.max(1);
        f.ssthresh = ssthresh;
        f.stats.max_cwnd = f.cwnd;
        f
    }

    pub fn path_id(&self) -> PathId {
        self.path_id
    }

    pub fn cwnd(&self) -> u32 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> u32 {
        self.ssthresh
    }

    pub fn srtt(&self) -> Option<u64> {
        self.rtt.srtt()
    }

    pub fn rttvar(&self) -> u64 {
        self.rtt.rttvar()
    }

    pub fn in_flight(&self) -> u32 {
        self.outstanding.len() as u32
    }

    pub fn queue_len(&self) -> usize {
        self.send_queue.len()
    }

    pub fn queued(&self) -> impl Iterator<Item = &TunnelPacket> {
        self.send_queue.iter()
    }

    pub fn rto_expiry(&self) -> Option<SimTime> {
        self.rto_expiry
    }

    pub fn stats(&self) -> &FlowStats {
        &self.stats
    }

    pub fn rto(&self) -> SimTime {
        let base = self
            .rtt
            .srtt()
            .map(|s| SimTime(s * RTO_SRTT_MULTIPLIER))
            .unwrap_or(INITIAL_RTO);
        SimTime(base.0 << self.rto_backoff)
    }

    /// Accept a packet chosen for this flow. Returns the packets that may be
    /// put on the path right now.
    pub fn enqueue(&mut self, mut pkt: TunnelPacket, now: SimTime) -> Vec<TunnelPacket> {
        pkt.path_id = self.path_id;
        pkt.flow_seq = self.next_flow_seq;
        pkt.sender_rtt_report = rtt_report(self.rtt.srtt().unwrap_or(0));
        self.next_flow_seq = (self.next_flow_seq + 1) & SEQ_MASK;
        self.send_queue.push_back(pkt);
        self.stats.max_queue = self.stats.max_queue.max(self.send_queue.len());
        self.release(now)
    }

    fn release(&mut self, now: SimTime) -> Vec<TunnelPacket> {
        let mut out = Vec::new();
        while self.in_flight() < self.cwnd {
            let Some(mut pkt) = self.send_queue.pop_front() else {
                break;
            };
            pkt.sent_at = now;
            self.outstanding.insert(pkt.flow_seq, now);
            if self.in_flight() > self.cwnd {
                self.stats.window_violations += 1;
            }
            self.stats.transmitted += 1;
            out.push(pkt);
        }
        if !out.is_empty() && self.rto_expiry.is_none() {
            self.rto_expiry = Some(now + self.rto());
        }
        out
    }

    pub fn update_rtt(&mut self, sample_us: u64) -> Result<()> {
        self.rtt.update(sample_us)
    }

    pub fn on_ack(&mut self, ack: &AckRecord, now: SimTime) -> FlowUpdate {
        let mut update = FlowUpdate::default();
        let sample = ack.ack_time.0.saturating_sub(ack.send_time.0).max(1);
        if self.outstanding.remove(&ack.flow_seq).is_some() {
            self.stats.acked += 1;
            self.update_rtt(sample).expect("sample is positive");
            update.rtt_sample = Some(sample);
            self.grow();

            let cutoff = ack.flow_seq.checked_sub(LOSS_ACK_GAP - 1);
            if let Some(cutoff) = cutoff {
                let gone: Vec<u64> = self.outstanding.range(..cutoff).map(|(&s, _)| s).collect();
                for seq in gone {
                    let sent = self.outstanding.remove(&seq).unwrap();
                    self.lost.insert(seq, sent);
                    self.stats.losses += 1;
                    update.lost.push(seq);
                }
            }
            if let Some(&newest) = update.lost.last() {
                update.halved = self.on_loss(newest);
            }
        } else if self.lost.remove(&ack.flow_seq).is_some() {
            self.update_rtt(sample).expect("sample is positive");
            update.rtt_sample = Some(sample);
        } else {
            return update;
        }
        self.rto_backoff = 0;
        self.rto_expiry = (!self.outstanding.is_empty()).then(|| now + self.rto());
        update.transmit = self.release(now);
        update
    }

    fn grow(&mut self) {
        if self.cwnd < self.ssthresh {
            self.cwnd += 1;
        } else {
            self.ca_acked += 1;
            if self.ca_acked >= self.cwnd {
                self.ca_acked = 0;
                self.cwnd += 1;
            }
        }
        self.stats.max_cwnd = self.stats.max_cwnd.max(self.cwnd);
    }

    /// Halve the window for the loss of `flow_seq` unless that packet had
    /// already been sent at the previous reduction. Returns whether a reduction
    /// happened.
    pub fn on_loss(&mut self, flow_seq: u64) -> bool {
        if self.recovery_point.is_some_and(|r| flow_seq < r) {
            return false;
        }
        self.ssthresh = (self.cwnd / 2).max(MIN_SSTHRESH);
        self.cwnd = self.ssthresh;
        self.ca_acked = 0;
        let next_unsent = self
            .send_queue
            .front()
            .map_or(self.next_flow_seq, |p| p.flow_seq);
        self.recovery_point = Some(next_unsent);
        self.stats.halvings += 1;
        true
    }

    /// Retransmission-style timeout: everything outstanding is declared lost.
    /// Stale timer events (expiry moved since scheduling) are ignored.
    pub fn on_timeout(&mut self, now: SimTime) -> FlowUpdate {
        let mut update = FlowUpdate::default();
        if self.rto_expiry != Some(now) {
            return update;
        }
        self.rto_expiry = None;
        self.stats.timeouts += 1;
        let outstanding = std::mem::take(&mut self.outstanding);
        self.stats.losses += outstanding.len() as u64;
        update.lost = outstanding.keys().copied().collect();
        self.lost.extend(outstanding);
        if let Some(&newest) = update.lost.last() {
            update.halved = self.on_loss(newest);
        }
        self.rto_backoff = (self.rto_backoff + 1).min(MAX_RTO_BACKOFF);
        update.transmit = self.release(now);
        update
    }
}
