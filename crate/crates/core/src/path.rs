//! Simulated access links.
//!
//! Each path is an infinite FIFO with serialization delay followed by a
//! propagation delay that may be changed at scheduled instants. Random loss
//! is drawn from a generator owned by the path, so adding or removing a path
//! never shifts another path's loss sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::time::{serialization_time, SimTime};

pub type PathId = u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyEvent {
    pub at_us: u64,
    pub latency_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub path_id: PathId,
    pub one_way_latency_us: u64,
    pub bandwidth_bps: u64,
    #[serde(default)]
    pub loss_rate: f64,
    /// Abstract ordering weight for the cheapest-pipe-first scheduler.
    #[serde(default)]
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<LatencyEvent>,
}

impl PathConfig {
    pub fn new(path_id: PathId, one_way_latency_us: u64, bandwidth_bps: u64) -> Self {
        PathConfig {
            path_id,
            one_way_latency_us,
            bandwidth_bps,
            loss_rate: 0.0,
            cost: 0.0,
            events: Vec::new(),
        }
    }

    pub fn with_loss(mut self, loss_rate: f64) -> Self {
        self.loss_rate = loss_rate;
        self
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.cost = cost;
        self
    }

    pub fn with_event(mut self, at_us: u64, latency_us: u64) -> Self {
        self.events.push(LatencyEvent { at_us, latency_us });
        self
    }

    /// Largest one-way latency the path ever takes.
    pub fn max_latency_us(&self) -> u64 {
        self.events
            .iter()
            .map(|e| e.latency_us)
            .fold(self.one_way_latency_us, u64::max)
    }

    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        let id = self.path_id;
        if self.bandwidth_bps == 0 {
            errors.push(format!("paths[{id}].bandwidth_bps: must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            errors.push(format!("paths[{id}].loss_rate: must be within [0, 1]"));
        }
        if !(self.cost >= 0.0 && self.cost.is_finite()) {
            errors.push(format!(
                "paths[{id}].cost: must be a finite non-negative number"
            ));
        }
        if self.events.windows(2).any(|w| w[0].at_us >= w[1].at_us) {
            errors.push(format!(
                "paths[{id}].events: event times must be strictly increasing"
            ));
        }
    }
}

/// Outcome of handing a packet to a path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transmit {
    Deliver(SimTime),
    Drop,
}

#[derive(Debug)]
pub struct PathModel {
    config: PathConfig,
    latency: SimTime,
    busy_until: SimTime,
    last_data_arrival: SimTime,
    last_ack_arrival: SimTime,
    rng: ChaCha8Rng,
}

impl PathModel {
    pub fn new(config: PathConfig, seed: u64) -> Self {
        let stream = seed ^ (u64::from(config.path_id) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        PathModel {
            latency: SimTime(config.one_way_latency_us),
            busy_until: SimTime::ZERO,
            last_data_arrival: SimTime::ZERO,
            last_ack_arrival: SimTime::ZERO,
            rng: ChaCha8Rng::seed_from_u64(stream),
            config,
        }
    }

    pub fn id(&self) -> PathId {
        self.config.path_id
    }

    pub fn config(&self) -> &PathConfig {
        &self.config
    }

    pub fn latency(&self) -> SimTime {
        self.latency
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    /// Hand `bytes` to the link at `now`.
    ///
    /// The link is occupied for the serialization time whether or not the
    /// packet is later lost. Arrivals never overtake an earlier packet on the
    /// same link, even across a latency decrease.
    pub fn transmit(&mut self, bytes: u32, now: SimTime) -> Transmit {
        let start = now.max(self.busy_until);
        self.busy_until = start + serialization_time(bytes, self.config.bandwidth_bps);
        let lost = self.config.loss_rate > 0.0 && self.rng.gen::<f64>() < self.config.loss_rate;
        if lost {
            return Transmit::Drop;
        }
        let arrival = (self.busy_until + self.latency).max(self.last_data_arrival);
        self.last_data_arrival = arrival;
        Transmit::Deliver(arrival)
    }

    /// Arrival time at the sender of an acknowledgment emitted at `now`.
    /// Acks ride the reverse direction with the same propagation delay and
    /// are neither bandwidth-limited nor lost.
    pub fn ack_arrival(&mut self, now: SimTime) -> SimTime {
        let arrival = (now + self.latency).max(self.last_ack_arrival);
        self.last_ack_arrival = arrival;
        arrival
    }

    /// Packets handed over at or after `at` use `new_latency`; packets
    /// already in flight keep their computed arrival.
    pub fn apply_latency_event(&mut self, _at: SimTime, new_latency: SimTime) {
        self.latency = new_latency;
    }
}
