use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::path::PathId;

use super::StreamPoint;

/// Delay variation of packet `overall_seq` relative to its predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PdvSample {
    pub overall_seq: u64,
    /// Signed microseconds; negative when the packet arrived before the
    /// nominal spacing behind its predecessor allows.
    pub pdv: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PdvReport {
    pub samples: Vec<PdvSample>,
    /// Packets whose predecessor never arrived.
    pub skipped: u64,
}

impl PdvReport {
    pub fn values(&self) -> Vec<i64> {
        self.samples.iter().map(|s| s.pdv).collect()
    }

    /// Fraction of samples with `|pdv| <= bound_us`.
    pub fn fraction_within(&self, bound_us: i64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let n = self
            .samples
            .iter()
            .filter(|s| s.pdv.abs() <= bound_us)
            .count();
        n as f64 / self.samples.len() as f64
    }
}

/// `pdv_n = (t_n - t_{n-1}) - nominal_interval` over consecutive sequence
/// numbers. Only the first appearance of a sequence number counts, so the
/// result depends on the (seq, time) pairs alone and not on record order.
pub fn compute_pdv(points: &[StreamPoint], nominal_interval_us: f64) -> PdvReport {
    let mut first: BTreeMap<u64, (u64, usize)> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let e = first.entry(p.seq).or_insert((p.time.0, i));
        // earliest time wins; ties resolved by position for stability
        if (p.time.0, i) < *e {
            *e = (p.time.0, i);
        }
    }
    let mut report = PdvReport::default();
    let mut prev: Option<(u64, u64)> = None;
    for (&seq, &(time, _)) in &first {
        match prev {
            Some((pseq, ptime)) if pseq + 1 == seq => {
                let delta = time as f64 - ptime as f64 - nominal_interval_us;
                report.samples.push(PdvSample {
                    overall_seq: seq,
                    pdv: delta.round() as i64,
                });
            }
            Some(_) => report.skipped += 1,
            None => {}
        }
        prev = Some((seq, time));
    }
    report
}

/// Sequence numbers in arrival order, paired with their arrival index.
pub fn arrival_order_scatter(points: &[StreamPoint]) -> Vec<(usize, u64)> {
    let mut ordered: Vec<&StreamPoint> = points.iter().collect();
    ordered.sort_by_key(|p| p.time);
    ordered
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.seq))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub struct ReorderingExtent {
    /// Packets arriving with a sequence number below the highest seen so far.
    pub out_of_order_count: u64,
    /// Largest `arrival_index - seq_index`, where `seq_index` is the rank of
    /// the sequence number among all received ones.
    pub max_displacement: u64,
    pub gap_count: u64,
}

pub fn reordering_extent(points: &[StreamPoint], gap_count: u64) -> ReorderingExtent {
    let order = arrival_order_scatter(points);
    let ranks: BTreeMap<u64, usize> = order
        .iter()
        .map(|&(_, s)| s)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(rank, s)| (s, rank))
        .collect();
    let mut extent = ReorderingExtent {
        gap_count,
        ..Default::default()
    };
    let mut highest: Option<u64> = None;
    for &(idx, seq) in &order {
        if highest.is_some_and(|h| seq < h) {
            extent.out_of_order_count += 1;
        }
        highest = Some(highest.map_or(seq, |h| h.max(seq)));
        let rank = ranks[&seq];
        if idx > rank {
            extent.max_displacement = extent.max_displacement.max((idx - rank) as u64);
        }
    }
    extent
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThroughputBin {
    pub start_us: u64,
    /// `None` for the aggregate series.
    pub path_id: Option<PathId>,
    pub bits: u64,
    pub bps: f64,
}

/// Delivered payload rate per `bin_us` window, per path or aggregated.
/// Bins cover `[0, last packet]`; paths that carried nothing in a bin still
/// get a zero entry.
pub fn throughput_series(
    points: &[StreamPoint],
    bin_us: u64,
    per_path: bool,
) -> Vec<ThroughputBin> {
    assert!(bin_us > 0, "bin width must be positive");
    let Some(last) = points.iter().map(|p| p.time.0).max() else {
        return Vec::new();
    };
    let n_bins = (last / bin_us + 1) as usize;
    let keys: Vec<Option<PathId>> = if per_path {
        points
            .iter()
            .map(|p| p.path_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None]
    };
    let mut bits: BTreeMap<Option<PathId>, Vec<u64>> =
        keys.iter().map(|&k| (k, vec![0; n_bins])).collect();
    for p in points {
        let key = if per_path { Some(p.path_id) } else { None };
        bits.get_mut(&key).unwrap()[(p.time.0 / bin_us) as usize] += u64::from(p.bytes) * 8;
    }
    (0..n_bins)
        .flat_map(|bin| {
            let bits = &bits;
            keys.iter().map(move |key| {
                let b = bits[key][bin];
                ThroughputBin {
                    start_us: bin as u64 * bin_us,
                    path_id: *key,
                    bits: b,
                    bps: b as f64 * 1e6 / bin_us as f64,
                }
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<i64>,
    pub counts: Vec<u64>,
}

/// Fixed-width histogram; `edges` has one more entry than `counts`, the
/// last bin is closed on the right.
pub fn pdv_histogram(values: &[i64], bin_width_us: i64) -> Histogram {
    assert!(bin_width_us > 0);
    let (Some(&lo), Some(&hi)) = (values.iter().min(), values.iter().max()) else {
        return Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
        };
    };
    let start = lo.div_euclid(bin_width_us) * bin_width_us;
    let n = ((hi - start) / bin_width_us + 1) as usize;
    let edges = (0..=n as i64).map(|i| start + i * bin_width_us).collect();
    let mut counts = vec![0u64; n];
    for &v in values {
        counts[((v - start) / bin_width_us) as usize] += 1;
    }
    Histogram { edges, counts }
}

/// Nearest-rank percentile of unsorted values.
pub fn percentile(values: &[i64], p: f64) -> Option<i64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpacingStats {
    pub count: usize,
    pub mean_us: f64,
    pub std_us: f64,
}

/// Mean and population standard deviation of the gaps between consecutive
/// stream times (time-ordered).
pub fn inter_departure_stats(points: &[StreamPoint]) -> Option<SpacingStats> {
    let mut times: Vec<u64> = points.iter().map(|p| p.time.0).collect();
    times.sort_unstable();
    if times.len() < 2 {
        return None;
    }
    let gaps: Vec<f64> = times.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64;
    Some(SpacingStats {
        count: gaps.len(),
        mean_us: mean,
        std_us: var.sqrt(),
    })
}
