//! Run records and the evaluation quantities derived from them.

mod analysis;
pub mod export;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use analysis::{
    arrival_order_scatter, compute_pdv, inter_departure_stats, pdv_histogram, percentile,
    reordering_extent, throughput_series, Histogram, PdvReport, PdvSample, ReorderingExtent,
    SpacingStats, ThroughputBin,
};

use crate::flow::FlowStats;
use crate::packet::HEADER_LEN;
use crate::path::PathId;
use crate::reorder::{Disposition, LineStats};
use crate::time::SimTime;

/// Which packet stream a metric is computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSource {
    /// Raw tunnel egress, before any receiver module.
    Arrival,
    /// Application handoff after reordering or equalization.
    #[default]
    Delivery,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ArrivalRecord {
    pub time: SimTime,
    pub overall_seq: u64,
    pub path_id: PathId,
    pub ingress_time: SimTime,
    pub payload_len: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeliveryRecord {
    pub time: SimTime,
    pub overall_seq: u64,
    pub path_id: PathId,
    pub ingress_time: SimTime,
    pub arrival_time: SimTime,
    pub payload_len: u32,
    pub disposition: Disposition,
}

impl DeliveryRecord {
    pub fn residency(&self) -> u64 {
        self.time.0.saturating_sub(self.arrival_time.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionRecord {
    pub time: SimTime,
    pub overall_seq: u64,
    pub path_id: PathId,
    /// OTIAS arrival estimate per path at decision time, by path index.
    pub eta_us: Vec<u64>,
    /// Send-queue occupancy per path just before the packet was enqueued.
    pub queue: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowSample {
    pub time: SimTime,
    pub path_id: PathId,
    /// 0 until the flow has an RTT sample.
    pub srtt_us: u64,
    pub rttvar_us: u64,
    pub cwnd: u32,
    pub in_flight: u32,
    pub queue: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCause {
    Loss,
    Discard,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DropRecord {
    pub time: SimTime,
    pub overall_seq: u64,
    pub path_id: PathId,
    pub cause: DropCause,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GapRecord {
    pub time: SimTime,
    pub first_seq: u64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ThresholdSample {
    pub time: SimTime,
    pub threshold_us: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeaderRecord {
    pub time: SimTime,
    pub path_id: PathId,
    pub bytes: [u8; HEADER_LEN],
}

/// Append-only record of one run.
#[derive(Clone, Debug, Default)]
pub struct MetricsLog {
    pub nominal_interval_us: f64,
    pub path_ids: Vec<PathId>,
    pub emitted: u64,
    /// Packets still queued or in flight when the run was cut off.
    pub stranded: u64,
    pub arrivals: Vec<ArrivalRecord>,
    pub deliveries: Vec<DeliveryRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub flow_samples: Vec<FlowSample>,
    pub drops: Vec<DropRecord>,
    pub gaps: Vec<GapRecord>,
    pub thresholds: Vec<ThresholdSample>,
    pub headers: Vec<HeaderRecord>,
    pub flows: Vec<FlowStats>,
    pub lines: BTreeMap<PathId, LineStats>,
}

/// One packet of a stream: sequence, time and carrying path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamPoint {
    pub seq: u64,
    pub time: SimTime,
    pub path_id: PathId,
    pub bytes: u32,
}

impl MetricsLog {
    pub fn new(nominal_interval_us: f64, path_ids: Vec<PathId>) -> Self {
        MetricsLog {
            nominal_interval_us,
            path_ids,
            ..Default::default()
        }
    }

    pub fn stream(&self, source: StreamSource) -> Vec<StreamPoint> {
        match source {
            StreamSource::Arrival => self
                .arrivals
                .iter()
                .map(|a| StreamPoint {
                    seq: a.overall_seq,
                    time: a.time,
                    path_id: a.path_id,
                    bytes: a.payload_len,
                })
                .collect(),
            StreamSource::Delivery => self
                .deliveries
                .iter()
                .filter(|d| d.disposition != Disposition::Discarded)
                .map(|d| StreamPoint {
                    seq: d.overall_seq,
                    time: d.time,
                    path_id: d.path_id,
                    bytes: d.payload_len,
                })
                .collect(),
        }
    }

    pub fn delivered(&self) -> u64 {
        self.deliveries
            .iter()
            .filter(|d| d.disposition != Disposition::Discarded)
            .count() as u64
    }

    pub fn dropped(&self) -> u64 {
        self.drops
            .iter()
            .filter(|d| d.cause == DropCause::Loss)
            .count() as u64
    }

    pub fn discarded(&self) -> u64 {
        self.drops
            .iter()
            .filter(|d| d.cause == DropCause::Discard)
            .count() as u64
    }

    pub fn count_disposition(&self, disposition: Disposition) -> u64 {
        self.deliveries
            .iter()
            .filter(|d| d.disposition == disposition)
            .count() as u64
    }

    pub fn pdv(&self, source: StreamSource) -> PdvReport {
        compute_pdv(&self.stream(source), self.nominal_interval_us)
    }
}
