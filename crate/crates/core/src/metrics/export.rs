//! Tabular CSV/JSON export of a [`MetricsLog`].
//!
//! Column schemas (version 1):
//!
//! | metric          | columns |
//! |-----------------|---------|
//! | `deliveries`    | delivery_time_us, overall_seq, path_id, buffer_residency_us, disposition |
//! | `arrivals`      | arrival_time_us, overall_seq, path_id, ingress_time_us, one_way_delay_us |
//! | `throughput`    | bin_start_us, path_id, bits, bps (`path_id` is `all` for the aggregate) |
//! | `srtt`          | time_us, path_id, srtt_us, rttvar_us, cwnd, in_flight, queue |
//! | `decisions`     | time_us, overall_seq, path_id, eta_us_<id>..., queue_<id>... |
//! | `pdv`           | overall_seq, pdv_us |
//! | `pdv_histogram` | bin_low_us, bin_high_us, count |
//! | `order`         | arrival_index, overall_seq |
//! | `headers`       | time_us, path_id, header_hex |
//! | `thresholds`    | time_us, threshold_us |
//! | `drops`         | time_us, overall_seq, path_id, cause |
//! | `gaps`          | time_us, first_seq, count |
//!
//! JSON output of a table is an array of objects keyed by column name. The
//! `summary` metric is JSON only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::flow::FlowStats;
use crate::path::PathId;
use crate::reorder::{Disposition, LineStats};

use super::{
    arrival_order_scatter, pdv_histogram, percentile, reordering_extent, throughput_series,
    MetricsLog, ReorderingExtent, StreamSource,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_THROUGHPUT_BIN_US: u64 = 100_000;
pub const DEFAULT_PDV_BIN_US: i64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Arrivals,
    Decisions,
    Deliveries,
    Drops,
    Gaps,
    Headers,
    Order,
    Pdv,
    PdvHistogram,
    Srtt,
    Summary,
    Thresholds,
    Throughput,
}

impl Metric {
    pub const ALL: [Metric; 13] = [
        Metric::Arrivals,
        Metric::Decisions,
        Metric::Deliveries,
        Metric::Drops,
        Metric::Gaps,
        Metric::Headers,
        Metric::Order,
        Metric::Pdv,
        Metric::PdvHistogram,
        Metric::Srtt,
        Metric::Summary,
        Metric::Thresholds,
        Metric::Throughput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Arrivals => "arrivals",
            Metric::Decisions => "decisions",
            Metric::Deliveries => "deliveries",
            Metric::Drops => "drops",
            Metric::Gaps => "gaps",
            Metric::Headers => "headers",
            Metric::Order => "order",
            Metric::Pdv => "pdv",
            Metric::PdvHistogram => "pdv_histogram",
            Metric::Srtt => "srtt",
            Metric::Summary => "summary",
            Metric::Thresholds => "thresholds",
            Metric::Throughput => "throughput",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Knobs for the derived tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExportOptions {
    /// Stream used for `pdv`, `pdv_histogram` and `order`.
    pub pdv_source: StreamSource,
    pub throughput_bin_us: u64,
    pub pdv_bin_us: i64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            pdv_source: StreamSource::Delivery,
            throughput_bin_us: DEFAULT_THROUGHPUT_BIN_US,
            pdv_bin_us: DEFAULT_PDV_BIN_US,
        }
    }
}

/// A rectangular table of JSON scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .cloned()
                    .zip(row.iter().cloned())
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("table serializes");
        s.push('\n');
        s
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn deliveries_table(log: &MetricsLog) -> Table {
    let mut t = Table::new([
        "delivery_time_us",
        "overall_seq",
        "path_id",
        "buffer_residency_us",
        "disposition",
    ]);
    for d in &log.deliveries {
        t.push(vec![
            d.time.0.into(),
            d.overall_seq.into(),
            d.path_id.into(),
            d.residency().into(),
            d.disposition.as_str().into(),
        ]);
    }
    t
}

pub fn arrivals_table(log: &MetricsLog) -> Table {
    let mut t = Table::new([
        "arrival_time_us",
        "overall_seq",
        "path_id",
        "ingress_time_us",
        "one_way_delay_us",
    ]);
    for a in &log.arrivals {
        t.push(vec![
            a.time.0.into(),
            a.overall_seq.into(),
            a.path_id.into(),
            a.ingress_time.0.into(),
            (a.time.0 - a.ingress_time.0).into(),
        ]);
    }
    t
}

pub fn throughput_table(log: &MetricsLog, bin_us: u64) -> Table {
    let points = log.stream(StreamSource::Delivery);
    let mut t = Table::new(["bin_start_us", "path_id", "bits", "bps"]);
    let mut bins = throughput_series(&points, bin_us, true);
    bins.extend(throughput_series(&points, bin_us, false));
    bins.sort_by_key(|b| (b.start_us, b.path_id.map_or(u16::MAX, u16::from)));
    for b in bins {
        let path: Value = match b.path_id {
            Some(id) => id.into(),
            None => "all".into(),
        };
        t.push(vec![b.start_us.into(), path, b.bits.into(), b.bps.into()]);
    }
    t
}

pub fn srtt_table(log: &MetricsLog) -> Table {
    let mut t = Table::new([
        "time_us",
        "path_id",
        "srtt_us",
        "rttvar_us",
        "cwnd",
        "in_flight",
        "queue",
    ]);
    for s in &log.flow_samples {
        t.push(vec![
            s.time.0.into(),
            s.path_id.into(),
            s.srtt_us.into(),
            s.rttvar_us.into(),
            s.cwnd.into(),
            s.in_flight.into(),
            s.queue.into(),
        ]);
    }
    t
}

pub fn decisions_table(log: &MetricsLog) -> Table {
    let mut columns: Vec<String> = vec!["time_us".into(), "overall_seq".into(), "path_id".into()];
    columns.extend(log.path_ids.iter().map(|id| format!("eta_us_{id}")));
    columns.extend(log.path_ids.iter().map(|id| format!("queue_{id}")));
    let mut t = Table::new(columns);
    for d in &log.decisions {
        let mut row: Vec<Value> = vec![d.time.0.into(), d.overall_seq.into(), d.path_id.into()];
        row.extend(d.eta_us.iter().map(|&e| Value::from(e)));
        row.extend(d.queue.iter().map(|&q| Value::from(q)));
        t.push(row);
    }
    t
}

pub fn pdv_table(log: &MetricsLog, source: StreamSource) -> Table {
    let mut t = Table::new(["overall_seq", "pdv_us"]);
    for s in log.pdv(source).samples {
        t.push(vec![s.overall_seq.into(), s.pdv.into()]);
    }
    t
}

pub fn pdv_histogram_table(log: &MetricsLog, source: StreamSource, bin_us: i64) -> Table {
    let h = pdv_histogram(&log.pdv(source).values(), bin_us);
    let mut t = Table::new(["bin_low_us", "bin_high_us", "count"]);
    for (i, &c) in h.counts.iter().enumerate() {
        t.push(vec![h.edges[i].into(), h.edges[i + 1].into(), c.into()]);
    }
    t
}

pub fn order_table(log: &MetricsLog, source: StreamSource) -> Table {
    let mut t = Table::new(["arrival_index", "overall_seq"]);
    for (i, seq) in arrival_order_scatter(&log.stream(source)) {
        t.push(vec![i.into(), seq.into()]);
    }
    t
}

pub fn headers_table(log: &MetricsLog) -> Table {
    let mut t = Table::new(["time_us", "path_id", "header_hex"]);
    for h in &log.headers {
        let hex = h.bytes.iter().fold(String::with_capacity(32), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        t.push(vec![h.time.0.into(), h.path_id.into(), hex.into()]);
    }
    t
}

pub fn thresholds_table(log: &MetricsLog) -> Table {
    let mut t = Table::new(["time_us", "threshold_us"]);
    for s in &log.thresholds {
        t.push(vec![s.time.0.into(), s.threshold_us.into()]);
    }
    t
}

pub fn drops_table(log: &MetricsLog) -> Table {
    let mut t = Table::new(["time_us", "overall_seq", "path_id", "cause"]);
    for d in &log.drops {
        let cause = serde_json::to_value(d.cause).expect("cause serializes");
        t.push(vec![
            d.time.0.into(),
            d.overall_seq.into(),
            d.path_id.into(),
            cause,
        ]);
    }
    t
}

pub fn gaps_table(log: &MetricsLog) -> Table {
    let mut t = Table::new(["time_us", "first_seq", "count"]);
    for g in &log.gaps {
        t.push(vec![g.time.0.into(), g.first_seq.into(), g.count.into()]);
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdvSummary {
    pub source: StreamSource,
    pub samples: usize,
    pub skipped: u64,
    pub mean_us: Option<f64>,
    pub p5_us: Option<i64>,
    pub p50_us: Option<i64>,
    pub p95_us: Option<i64>,
    pub p99_us: Option<i64>,
    pub min_us: Option<i64>,
    pub max_us: Option<i64>,
    pub within_2ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DispositionCounts {
    pub inorder: u64,
    pub timeout: u64,
    pub late: u64,
    pub discarded: u64,
}

/// Run totals written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub discarded: u64,
    pub stranded: u64,
    pub dispositions: DispositionCounts,
    pub pdv: PdvSummary,
    pub arrival_reordering: ReorderingExtent,
    pub delivery_reordering: ReorderingExtent,
    pub flows: Vec<FlowStats>,
    pub equalizer_lines: Vec<(PathId, LineStats)>,
}

impl Summary {
    pub fn new(scenario: &str, seed: u64, log: &MetricsLog, pdv_source: StreamSource) -> Self {
        let report = log.pdv(pdv_source);
        let values = report.values();
        let mean =
            (!values.is_empty()).then(|| values.iter().sum::<i64>() as f64 / values.len() as f64);
        let gaps = log.gaps.len() as u64;
        Summary {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            seed,
            sent: log.emitted,
            delivered: log.delivered(),
            dropped: log.dropped(),
            discarded: log.discarded(),
            stranded: log.stranded,
            dispositions: DispositionCounts {
                inorder: log.count_disposition(Disposition::Inorder),
                timeout: log.count_disposition(Disposition::Timeout),
                late: log.count_disposition(Disposition::Late),
                discarded: log.count_disposition(Disposition::Discarded),
            },
            pdv: PdvSummary {
                source: pdv_source,
                samples: values.len(),
                skipped: report.skipped,
                mean_us: mean,
                p5_us: percentile(&values, 5.0),
                p50_us: percentile(&values, 50.0),
                p95_us: percentile(&values, 95.0),
                p99_us: percentile(&values, 99.0),
                min_us: values.iter().min().copied(),
                max_us: values.iter().max().copied(),
                within_2ms: (!values.is_empty()).then(|| report.fraction_within(2_000)),
            },
            arrival_reordering: reordering_extent(&log.stream(StreamSource::Arrival), 0),
            delivery_reordering: reordering_extent(&log.stream(StreamSource::Delivery), gaps),
            flows: log.flows.clone(),
            equalizer_lines: log.lines.iter().map(|(&k, v)| (k, v.clone())).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

/// Build the table for a tabular metric. `None` for `summary`.
pub fn table(log: &MetricsLog, metric: Metric, opts: &ExportOptions) -> Option<Table> {
    Some(match metric {
        Metric::Arrivals => arrivals_table(log),
        Metric::Decisions => decisions_table(log),
        Metric::Deliveries => deliveries_table(log),
        Metric::Drops => drops_table(log),
        Metric::Gaps => gaps_table(log),
        Metric::Headers => headers_table(log),
        Metric::Order => order_table(log, opts.pdv_source),
        Metric::Pdv => pdv_table(log, opts.pdv_source),
        Metric::PdvHistogram => pdv_histogram_table(log, opts.pdv_source, opts.pdv_bin_us),
        Metric::Srtt => srtt_table(log),
        Metric::Thresholds => thresholds_table(log),
        Metric::Throughput => throughput_table(log, opts.throughput_bin_us),
        Metric::Summary => return None,
    })
}

/// Render one metric in the given format.
pub fn render(
    log: &MetricsLog,
    metric: Metric,
    format: Format,
    opts: &ExportOptions,
    summary: &Summary,
) -> Result<String> {
    match (table(log, metric, opts), format) {
        (Some(t), Format::Csv) => t.to_csv(),
        (Some(t), Format::Json) => Ok(t.to_json()),
        (None, _) => Ok(summary.to_json()),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
