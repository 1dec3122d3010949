//! Receiver-side reordering.
//!
//! Three strategies sit behind the tunnel egress:
//!
//! * resequencing on the overall sequence number with a fixed hold time
//!   (`static`),
//! * the same buffer with a hold time recomputed from the per-path RTTs the
//!   sender reports in the tunnel header (`adaptive`),
//! * per-flow delay lines that pad faster paths up to the slowest path's
//!   one-way delay and ignore sequencing altogether (`delay_equalize`).

mod buffer;
mod equalizer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use buffer::{Gap, ReorderBuffer};
pub use equalizer::{EqualizeOutcome, Equalizer, LineStats};

use crate::flow::RttEstimator;
use crate::packet::TunnelPacket;
use crate::path::PathId;
use crate::time::SimTime;

pub const DEFAULT_ADAPTIVE_K: f64 = 4.0;
pub const DEFAULT_MAX_HOLD_US: u64 = 500_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReorderKind {
    Adaptive,
    DelayEqualize,
    None,
    Static,
}

impl ReorderKind {
    pub const ALL: [ReorderKind; 4] = [
        ReorderKind::Adaptive,
        ReorderKind::DelayEqualize,
        ReorderKind::None,
        ReorderKind::Static,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReorderKind::Adaptive => "adaptive",
            ReorderKind::DelayEqualize => "delay_equalize",
            ReorderKind::None => "none",
            ReorderKind::Static => "static",
        }
    }
}

fn default_k() -> f64 {
    DEFAULT_ADAPTIVE_K
}

fn default_max_hold() -> u64 {
    DEFAULT_MAX_HOLD_US
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReorderConfig {
    pub kind: ReorderKind,
    /// Fixed hold time for `static`. When absent it is derived once from the
    /// configured path latencies as the RTT difference of the slowest and
    /// fastest path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_threshold_us: Option<u64>,
    /// Multiplier on the largest RTT variation (`adaptive`,
    /// `delay_equalize`).
    #[serde(default = "default_k")]
    pub adaptive_k: f64,
    #[serde(default = "default_max_hold")]
    pub max_hold_us: u64,
}

impl ReorderConfig {
    pub fn new(kind: ReorderKind) -> Self {
        ReorderConfig {
            kind,
            static_threshold_us: None,
            adaptive_k: DEFAULT_ADAPTIVE_K,
            max_hold_us: DEFAULT_MAX_HOLD_US,
        }
    }

    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        if !(self.adaptive_k > 0.0 && self.adaptive_k.is_finite()) {
            errors.push("reorder.adaptive_k: must be a finite number > 0".into());
        }
        if let Some(t) = self.static_threshold_us {
            if self.kind != ReorderKind::Static {
                errors.push("reorder.static_threshold_us: only valid for static".into());
            }
            if t > self.max_hold_us {
                errors.push("reorder.static_threshold_us: must not exceed max_hold_us".into());
            }
        }
    }
}

/// Why a packet left the receiver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Inorder,
    Timeout,
    Late,
    Discarded,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Inorder => "inorder",
            Disposition::Timeout => "timeout",
            Disposition::Late => "late",
            Disposition::Discarded => "discarded",
        }
    }
}

/// A packet handed to the application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub pkt: TunnelPacket,
    pub time: SimTime,
    pub arrival: SimTime,
    pub disposition: Disposition,
}

impl Delivery {
    pub fn residency(&self) -> u64 {
        self.time.0 - self.arrival.0
    }
}

/// ΔRTT between the slowest and fastest path.
pub fn static_threshold(rtt_slower: u64, rtt_faster: u64) -> u64 {
    rtt_slower.saturating_sub(rtt_faster)
}

/// RTT knowledge at the receiver, fed from the header RTT option.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathRtt {
    /// Last SRTT reported by the sender.
    pub reported: u64,
    /// Re-smoothing of the report stream; its variation term is the only
    /// RTT variation the receiver can observe.
    pub smoothed: RttEstimator,
}

#[derive(Clone, Debug, Default)]
pub struct PathStats {
    paths: BTreeMap<PathId, PathRtt>,
}

impl PathStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record the RTT option of an arriving packet. A report of 0 means the
    /// sender has no sample yet and is ignored.
    pub fn observe(&mut self, path_id: PathId, report_us: u32) {
        if report_us == 0 {
            return;
        }
        let entry = self.paths.entry(path_id).or_default();
        entry.reported = u64::from(report_us);
        entry
            .smoothed
            .update(u64::from(report_us))
            .expect("report is positive");
    }

    /// Seed a path directly with an SRTT/RTTVAR pair.
    pub fn set(&mut self, path_id: PathId, srtt: u64, rttvar: u64) {
        self.paths.insert(
            path_id,
            PathRtt {
                reported: srtt,
                smoothed: RttEstimator::from_parts(srtt, rttvar),
            },
        );
    }

    pub fn get(&self, path_id: PathId) -> Option<&PathRtt> {
        self.paths.get(&path_id)
    }

    pub fn srtt(&self, path_id: PathId) -> Option<u64> {
        self.paths.get(&path_id).map(|p| p.reported)
    }

    pub fn known_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn max_srtt(&self) -> Option<u64> {
        self.paths.values().map(|p| p.reported).max()
    }

    pub fn min_srtt(&self) -> Option<u64> {
        self.paths.values().map(|p| p.reported).min()
    }

    pub fn max_rttvar(&self) -> u64 {
        self.paths
            .values()
            .map(|p| p.smoothed.rttvar())
            .max()
            .unwrap_or(0)
    }
}

fn guard(k: f64, rttvar: u64) -> u64 {
    (k * rttvar as f64).round() as u64
}

/// Hold time for the adaptive strategy: half the RTT spread (one-way skew)
/// plus `k` times the largest RTT variation, capped at `max_hold`. Until at
/// least two paths have reported an RTT the cap itself is used.
pub fn adaptive_threshold(stats: &PathStats, k: f64, max_hold: u64) -> u64 {
    if stats.known_paths() < 2 {
        return max_hold;
    }
    let skew = (stats.max_srtt().unwrap() - stats.min_srtt().unwrap()) / 2;
    (skew + guard(k, stats.max_rttvar())).min(max_hold)
}

/// Target one-way delay for delay equalization: the slowest path's half-RTT
/// plus the variation guard.
pub fn equalization_target(stats: &PathStats, k: f64) -> u64 {
    stats.max_srtt().unwrap_or(0) / 2 + guard(k, stats.max_rttvar())
}
