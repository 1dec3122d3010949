use std::collections::BTreeMap;

use crate::packet::{TunnelPacket, SEQ_MASK, SEQ_MODULUS};
use crate::time::SimTime;

use super::{Delivery, Disposition};

/// Sequence numbers skipped when a hold time expired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gap {
    pub time: SimTime,
    /// First missing (unwrapped) sequence number.
    pub first: u64,
    pub count: u64,
}

#[derive(Debug)]
struct Held {
    pkt: TunnelPacket,
    arrival: SimTime,
    deadline: SimTime,
}

/// Resequencing buffer keyed on the tunnel-wide sequence number.
///
/// In-order packets pass straight through. A packet ahead of the expected
/// sequence waits until the gap fills or its deadline passes; a packet behind
/// it (its gap was already given up) is handed over immediately and flagged
/// late.
#[derive(Debug, Default)]
pub struct ReorderBuffer {
    expected_next: u64,
    held: BTreeMap<u64, Held>,
    gaps: Vec<Gap>,
}

impl ReorderBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(expected_next: u64) -> Self {
        ReorderBuffer {
            expected_next,
            ..Self::default()
        }
    }

    pub fn expected_next(&self) -> u64 {
        self.expected_next
    }

    pub fn held_len(&self) -> usize {
        self.held.len()
    }

    pub fn held_seqs(&self) -> impl Iterator<Item = u64> + '_ {
        self.held.keys().copied()
    }

    pub fn next_deadline(&self) -> Option<SimTime> {
        self.held.values().map(|h| h.deadline).min()
    }

    /// Gaps recorded since the last call.
    pub fn take_gaps(&mut self) -> Vec<Gap> {
        std::mem::take(&mut self.gaps)
    }

    /// Map a 48-bit wire sequence onto the unwrapped sequence closest to
    /// `expected_next`.
    fn unwrap_seq(&self, seq: u64) -> u64 {
        let base = self.expected_next & !SEQ_MASK;
        let candidate = base | (seq & SEQ_MASK);
        let half = SEQ_MODULUS / 2;
        if candidate + half < self.expected_next {
            candidate + SEQ_MODULUS
        } else if candidate > self.expected_next + half && candidate >= SEQ_MODULUS {
            candidate - SEQ_MODULUS
        } else {
            candidate
        }
    }

    pub fn on_arrival(&mut self, pkt: TunnelPacket, now: SimTime, threshold: u64) -> Vec<Delivery> {
        let seq = self.unwrap_seq(pkt.overall_seq);
        let mut out = Vec::new();
        if seq == self.expected_next {
            out.push(Delivery {
                pkt,
                time: now,
                arrival: now,
                disposition: Disposition::Inorder,
            });
            self.expected_next += 1;
            self.release_consecutive(now, &mut out);
        } else if seq > self.expected_next && !self.held.contains_key(&seq) {
            self.held.insert(
                seq,
                Held {
                    pkt,
                    arrival: now,
                    deadline: now + SimTime(threshold),
                },
            );
        } else {
            out.push(Delivery {
                pkt,
                time: now,
                arrival: now,
                disposition: Disposition::Late,
            });
        }
        out
    }

    fn release_consecutive(&mut self, now: SimTime, out: &mut Vec<Delivery>) {
        while let Some(h) = self.held.remove(&self.expected_next) {
            out.push(Delivery {
                pkt: h.pkt,
                time: now,
                arrival: h.arrival,
                disposition: Disposition::Inorder,
            });
            self.expected_next += 1;
        }
    }

    /// Deliver every packet whose deadline has passed, together with all
    /// held packets below the highest expired one.
    pub fn on_deadline(&mut self, now: SimTime) -> Vec<Delivery> {
        let highest_expired = self
            .held
            .iter()
            .filter(|(_, h)| h.deadline <= now)
            .map(|(&s, _)| s)
            .next_back();
        let Some(limit) = highest_expired else {
            return Vec::new();
        };
        self.give_up_through(limit, now, Disposition::Timeout)
    }

    /// Deliver everything still held, e.g. at the end of a run.
    pub fn flush(&mut self, now: SimTime) -> Vec<Delivery> {
        match self.held.keys().next_back().copied() {
            Some(limit) => self.give_up_through(limit, now, Disposition::Timeout),
            None => Vec::new(),
        }
    }

    fn give_up_through(
        &mut self,
        limit: u64,
        now: SimTime,
        disposition: Disposition,
    ) -> Vec<Delivery> {
        let mut out = Vec::new();
        let rest = self.held.split_off(&(limit + 1));
        let released = std::mem::replace(&mut self.held, rest);
        for (seq, h) in released {
            if seq > self.expected_next {
                self.gaps.push(Gap {
                    time: now,
                    first: self.expected_next,
                    count: seq - self.expected_next,
                });
            }
            out.push(Delivery {
                pkt: h.pkt,
                time: now,
                arrival: h.arrival,
                disposition,
            });
            self.expected_next = seq + 1;
        }
        self.release_consecutive(now, &mut out);
        out
    }
}
