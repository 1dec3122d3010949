//! Ingress traffic sources.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    Cbr,
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub kind: TrafficKind,
    /// Bits per second, CBR only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_bps: Option<u64>,
    /// Size of each tunnel packet on the wire.
    pub packet_size: u32,
    #[serde(default)]
    pub start_us: u64,
    /// Defaults to the scenario duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_us: Option<u64>,
}

impl TrafficConfig {
    pub fn cbr(rate_bps: u64, packet_size: u32) -> Self {
        TrafficConfig {
            kind: TrafficKind::Cbr,
            rate_bps: Some(rate_bps),
            packet_size,
            start_us: 0,
            stop_us: None,
        }
    }

    pub fn greedy(packet_size: u32) -> Self {
        TrafficConfig {
            kind: TrafficKind::Greedy,
            rate_bps: None,
            packet_size,
            start_us: 0,
            stop_us: None,
        }
    }

    /// Nominal gap between CBR emissions in microseconds; 0 for greedy.
    pub fn nominal_interval_us(&self) -> f64 {
        match (self.kind, self.rate_bps) {
            (TrafficKind::Cbr, Some(rate)) if rate > 0 => {
                f64::from(self.packet_size) * 8.0 * 1e6 / rate as f64
            }
            _ => 0.0,
        }
    }

    pub(crate) fn validate(&self, duration_us: u64, errors: &mut Vec<String>) {
        if self.packet_size == 0 {
            errors.push("traffic.packet_size: must be > 0".into());
        }
        match (self.kind, self.rate_bps) {
            (TrafficKind::Cbr, None) => errors.push("traffic.rate_bps: required for cbr".into()),
            (TrafficKind::Cbr, Some(0)) => errors.push("traffic.rate_bps: must be > 0".into()),
            (TrafficKind::Greedy, Some(_)) => {
                errors.push("traffic.rate_bps: not allowed for greedy".into())
            }
            _ => {}
        }
        let stop = self.stop_us.unwrap_or(duration_us);
        if stop < self.start_us {
            errors.push("traffic.stop_us: must not precede start_us".into());
        }
        if stop > duration_us {
            errors.push("traffic.stop_us: must not exceed the scenario duration".into());
        }
    }
}

/// Emission schedule of a source.
#[derive(Clone, Debug)]
pub struct TrafficSource {
    config: TrafficConfig,
    stop: SimTime,
    emitted: u64,
}

impl TrafficSource {
    pub fn new(config: TrafficConfig, duration: SimTime) -> Self {
        let stop = config.stop_us.map(SimTime).unwrap_or(duration);
        TrafficSource {
            config,
            stop,
            emitted: 0,
        }
    }

    pub fn kind(&self) -> TrafficKind {
        self.config.kind
    }

    pub fn packet_size(&self) -> u32 {
        self.config.packet_size
    }

    pub fn start(&self) -> SimTime {
        SimTime(self.config.start_us)
    }

    pub fn stop(&self) -> SimTime {
        self.stop
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn is_active(&self, now: SimTime) -> bool {
        now >= self.start() && now < self.stop
    }

    /// Time of the `k`-th CBR emission. Computed from the start time rather
    /// than accumulated, so fractional intervals never drift.
    pub fn cbr_emission_time(&self, k: u64) -> Option<SimTime> {
        let rate = self.config.rate_bps?;
        let bits = u128::from(self.config.packet_size) * 8;
        let offset = u128::from(k) * bits * 1_000_000 / u128::from(rate);
        let t = self.start() + SimTime(offset as u64);
        (t < self.stop).then_some(t)
    }

    /// Record one emitted packet and return the time of the next CBR
    /// emission, if any.
    pub fn on_emit(&mut self) -> Option<SimTime> {
        self.emitted += 1;
        match self.config.kind {
            TrafficKind::Cbr => self.cbr_emission_time(self.emitted),
            TrafficKind::Greedy => None,
        }
    }
}
