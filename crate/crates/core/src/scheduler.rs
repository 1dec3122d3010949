//! Sender-side packet schedulers.
//!
//! Every policy works on a read-only [`FlowView`] snapshot per path, sorted
//! by path id, and returns an index into that snapshot. Ties always go to the
//! lowest path id.

use serde::{Deserialize, Serialize};

use crate::path::PathId;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    CheapestPipeFirst,
    FixedRatio,
    Otias,
    RoundRobin,
    Srtt,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::CheapestPipeFirst,
        SchedulerKind::FixedRatio,
        SchedulerKind::Otias,
        SchedulerKind::RoundRobin,
        SchedulerKind::Srtt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::CheapestPipeFirst => "cheapest_pipe_first",
            SchedulerKind::FixedRatio => "fixed_ratio",
            SchedulerKind::Otias => "otias",
            SchedulerKind::RoundRobin => "round_robin",
            SchedulerKind::Srtt => "srtt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    /// Per-path packet weights, `fixed_ratio` only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<u32>,
    /// Per-path costs for `cheapest_pipe_first`; falls back to the path
    /// configs' `cost` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

impl SchedulerConfig {
    pub fn new(kind: SchedulerKind) -> Self {
        SchedulerConfig {
            kind,
            weights: Vec::new(),
            costs: None,
        }
    }

    pub fn fixed_ratio(weights: Vec<u32>) -> Self {
        SchedulerConfig {
            kind: SchedulerKind::FixedRatio,
            weights,
            costs: None,
        }
    }

    pub(crate) fn validate(&self, n_paths: usize, errors: &mut Vec<String>) {
        match self.kind {
            SchedulerKind::FixedRatio => {
                if self.weights.len() != n_paths {
                    errors.push(format!(
                        "scheduler.weights: expected {n_paths} entries, got {}",
                        self.weights.len()
                    ));
                }
                if self.weights.iter().all(|&w| w == 0) {
                    errors.push("scheduler.weights: must not be all zero".into());
                }
            }
            _ if !self.weights.is_empty() => {
                errors.push("scheduler.weights: only valid for fixed_ratio".into());
            }
            _ => {}
        }
        if let Some(costs) = &self.costs {
            if self.kind != SchedulerKind::CheapestPipeFirst {
                errors.push("scheduler.costs: only valid for cheapest_pipe_first".into());
            }
            if costs.len() != n_paths {
                errors.push(format!(
                    "scheduler.costs: expected {n_paths} entries, got {}",
                    costs.len()
                ));
            }
            if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                errors.push("scheduler.costs: must be finite and non-negative".into());
            }
        }
    }
}

/// Snapshot of one flow at decision time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowView {
    pub path_id: PathId,
    /// Measured SRTT, or twice the configured one-way latency before the
    /// first sample.
    pub srtt: u64,
    pub measured: bool,
    pub rttvar: u64,
    pub cwnd: u32,
    pub in_flight: u32,
    pub queue: u32,
    pub cost: f64,
}

impl FlowView {
    pub fn idle(path_id: PathId, srtt: u64, cwnd: u32) -> Self {
        FlowView {
            path_id,
            srtt,
            measured: true,
            rttvar: 0,
            cwnd,
            in_flight: 0,
            queue: 0,
            cost: 0.0,
        }
    }

    /// Room left in the congestion window after what is already queued.
    pub fn has_room(&self) -> bool {
        u64::from(self.in_flight) + u64::from(self.queue) < u64::from(self.cwnd)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RoundRobinState {
    next: usize,
}

pub fn pick_round_robin(state: &mut RoundRobinState, n_paths: usize) -> usize {
    assert!(n_paths >= 1, "round robin needs at least one path");
    let pick = state.next % n_paths;
    state.next = (pick + 1) % n_paths;
    pick
}

/// Smooth weighted round robin: each pick goes to the path with the largest
/// deficit `picks * w_i / W - chosen_i`.
#[derive(Clone, Debug, Default)]
pub struct FixedRatioState {
    picks: u64,
    chosen: Vec<u64>,
}

pub fn pick_fixed_ratio(state: &mut FixedRatioState, weights: &[u32]) -> usize {
    let total: u64 = weights.iter().map(|&w| u64::from(w)).sum();
    assert!(total > 0, "weights must not be all zero");
    state.chosen.resize(weights.len(), 0);
    state.picks += 1;
    // compare deficits scaled by W to stay in integers
    let deficit = |i: usize| {
        i128::from(state.picks) * i128::from(weights[i])
            - i128::from(state.chosen[i]) * i128::from(total)
    };
    let mut best = 0;
    for i in 1..weights.len() {
        if deficit(i) > deficit(best) {
            best = i;
        }
    }
    state.chosen[best] += 1;
    best
}

fn argmin_by_key<K: PartialOrd>(
    view: &[FlowView],
    filter: impl Fn(&FlowView) -> bool,
    key: impl Fn(&FlowView) -> K,
) -> Option<usize> {
    let mut best: Option<(usize, K)> = None;
    for (i, v) in view.iter().enumerate().filter(|(_, v)| filter(v)) {
        let k = key(v);
        match &best {
            Some((_, bk)) if k.partial_cmp(bk) != Some(std::cmp::Ordering::Less) => {}
            _ => best = Some((i, k)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn pick_cheapest_pipe_first(view: &[FlowView]) -> usize {
    argmin_by_key(view, FlowView::has_room, |v| v.cost)
        .or_else(|| argmin_by_key(view, |_| true, |v| v.cost))
        .expect("at least one path")
}

pub fn pick_srtt(view: &[FlowView]) -> usize {
    argmin_by_key(view, FlowView::has_room, |v| v.srtt)
        .or_else(|| argmin_by_key(view, |_| true, |v| v.srtt))
        .expect("at least one path")
}

/// Estimated time until a packet handed to this flow now reaches the
/// receiver: whole windows it has to wait behind, one SRTT each, plus half an
/// SRTT of forward delay.
pub fn otias_eta(v: &FlowView) -> u64 {
    let cwnd = u64::from(v.cwnd.max(1));
    let ahead = u64::from(v.queue) + u64::from(v.in_flight) + 1;
    let rounds = ahead.saturating_sub(cwnd).div_ceil(cwnd);
    rounds * v.srtt + v.srtt / 2
}

pub fn pick_otias(view: &[FlowView], _now: SimTime) -> usize {
    argmin_by_key(view, |_| true, otias_eta).expect("at least one path")
}

/// A configured scheduler with its internal counters.
#[derive(Clone, Debug)]
pub struct Scheduler {
    config: SchedulerConfig,
    round_robin: RoundRobinState,
    fixed_ratio: FixedRatioState,
}

impl Scheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        Scheduler {
            config,
            round_robin: RoundRobinState::default(),
            fixed_ratio: FixedRatioState::default(),
        }
    }

    pub fn kind(&self) -> SchedulerKind {
        self.config.kind
    }

    pub fn pick(&mut self, view: &[FlowView], now: SimTime) -> usize {
        match self.config.kind {
            SchedulerKind::RoundRobin => pick_round_robin(&mut self.round_robin, view.len()),
            SchedulerKind::FixedRatio => {
                pick_fixed_ratio(&mut self.fixed_ratio, &self.config.weights)
            }
            SchedulerKind::CheapestPipeFirst => pick_cheapest_pipe_first(view),
            SchedulerKind::Srtt => pick_srtt(view),
            SchedulerKind::Otias => pick_otias(view, now),
        }
    }
}
