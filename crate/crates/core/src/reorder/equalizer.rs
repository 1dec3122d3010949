use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::packet::TunnelPacket;
use crate::path::PathId;
use crate::time::SimTime;

use super::{equalization_target, Delivery, Disposition, PathStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqualizeOutcome {
    Release(SimTime),
    Discard,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LineStats {
    pub arrived: u64,
    pub delivered: u64,
    pub discarded: u64,
}

#[derive(Debug, Default)]
struct Line {
    fifo: VecDeque<(TunnelPacket, SimTime, SimTime)>,
    last_release: SimTime,
    stats: LineStats,
}

/// Per-flow delay lines.
///
/// Each flow's packets are held for `D - srtt_i / 2`, where `D` is the
/// slowest path's half-RTT plus a variation guard, so every path presents the
/// same one-way delay. Sequence numbers are never consulted. A packet whose
/// one-way delay already exceeds `D + max_hold` is discarded.
#[derive(Debug)]
pub struct Equalizer {
    k: f64,
    max_hold: u64,
    lines: BTreeMap<PathId, Line>,
}

impl Equalizer {
    pub fn new(k: f64, max_hold: u64) -> Self {
        Equalizer {
            k,
            max_hold,
            lines: BTreeMap::new(),
        }
    }

    /// Delay added to packets of `path_id` under the current statistics.
    pub fn added_delay(&self, stats: &PathStats, path_id: PathId) -> u64 {
        match stats.srtt(path_id) {
            Some(srtt) => equalization_target(stats, self.k).saturating_sub(srtt / 2),
            None => 0,
        }
    }

    pub fn on_arrival(
        &mut self,
        pkt: TunnelPacket,
        now: SimTime,
        stats: &PathStats,
    ) -> EqualizeOutcome {
        let target = equalization_target(stats, self.k);
        let delay = self.added_delay(stats, pkt.path_id);
        let line = self.lines.entry(pkt.path_id).or_default();
        line.stats.arrived += 1;
        let one_way = now.0.saturating_sub(pkt.ingress_time.0);
        if one_way > target + self.max_hold {
            line.stats.discarded += 1;
            return EqualizeOutcome::Discard;
        }
        let release = (now + SimTime(delay)).max(line.last_release);
        line.last_release = release;
        line.fifo.push_back((pkt, now, release));
        EqualizeOutcome::Release(release)
    }

    pub fn next_release(&self) -> Option<SimTime> {
        self.lines
            .values()
            .filter_map(|l| l.fifo.front().map(|(_, _, r)| *r))
            .min()
    }

    /// Hand over every packet due at or before `now`, ordered by release time
    /// and then path id.
    pub fn release_due(&mut self, now: SimTime) -> Vec<Delivery> {
        let mut out = Vec::new();
        for line in self.lines.values_mut() {
            while let Some((_, _, release)) = line.fifo.front() {
                if *release > now {
                    break;
                }
                let (pkt, arrival, release) = line.fifo.pop_front().unwrap();
                line.stats.delivered += 1;
                out.push(Delivery {
                    pkt,
                    time: release,
                    arrival,
                    disposition: Disposition::Inorder,
                });
            }
        }
        out.sort_by_key(|d| (d.time, d.pkt.path_id));
        out
    }

    /// Release everything regardless of schedule.
    pub fn flush(&mut self) -> Vec<Delivery> {
        self.release_due(SimTime::MAX)
    }

    pub fn line_stats(&self) -> BTreeMap<PathId, LineStats> {
        self.lines
            .iter()
            .map(|(&id, l)| (id, l.stats.clone()))
            .collect()
    }
}
