//! Scenario files: strict JSON describing paths, traffic, scheduler,
//! receiver module and requested outputs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::export::{
    ExportOptions, Format, Metric, DEFAULT_PDV_BIN_US, DEFAULT_THROUGHPUT_BIN_US,
};
use crate::metrics::StreamSource;
use crate::path::PathConfig;
use crate::reorder::{ReorderConfig, ReorderKind};
use crate::scheduler::{SchedulerConfig, SchedulerKind};
use crate::time::SimTime;
use crate::traffic::TrafficConfig;

pub const DEFAULT_SAMPLE_INTERVAL_US: u64 = 10_000;

fn default_sample_interval() -> u64 {
    DEFAULT_SAMPLE_INTERVAL_US
}

fn default_throughput_bin() -> u64 {
    DEFAULT_THROUGHPUT_BIN_US
}

fn default_pdv_bin() -> i64 {
    DEFAULT_PDV_BIN_US
}

fn default_reorder() -> ReorderConfig {
    ReorderConfig::new(ReorderKind::None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub metric: Metric,
    pub format: Format,
    /// Relative file name inside the output directory. Defaults to
    /// `<metric>.<format>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl OutputSpec {
    pub fn new(metric: Metric, format: Format) -> Self {
        OutputSpec {
            metric,
            format,
            path: None,
        }
    }

    pub fn file_name(&self) -> String {
        self.path
            .clone()
            .unwrap_or_else(|| format!("{}.{}", self.metric.name(), self.format.extension()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    pub paths: Vec<PathConfig>,
    /// No traffic at all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficConfig>,
    pub scheduler: SchedulerConfig,
    #[serde(default = "default_reorder")]
    pub reorder: ReorderConfig,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
    /// Stream the PDV, histogram and order outputs are computed on.
    #[serde(default)]
    pub pdv_source: StreamSource,
    /// Period of per-flow SRTT/cwnd/queue samples.
    #[serde(default = "default_sample_interval")]
    pub sample_interval_us: u64,
    #[serde(default = "default_throughput_bin")]
    pub throughput_bin_us: u64,
    #[serde(default = "default_pdv_bin")]
    pub pdv_bin_us: i64,
}

impl ScenarioConfig {
    pub fn new(
        name: &str,
        duration_s: f64,
        paths: Vec<PathConfig>,
        traffic: Option<TrafficConfig>,
        scheduler: SchedulerConfig,
        reorder: ReorderConfig,
    ) -> Self {
        ScenarioConfig {
            name: name.to_string(),
            duration_s,
            seed: 0,
            paths,
            traffic,
            scheduler,
            reorder,
            outputs: Vec::new(),
            pdv_source: StreamSource::Delivery,
            sample_interval_us: DEFAULT_SAMPLE_INTERVAL_US,
            throughput_bin_us: DEFAULT_THROUGHPUT_BIN_US,
            pdv_bin_us: DEFAULT_PDV_BIN_US,
        }
    }

    pub fn duration(&self) -> SimTime {
        SimTime((self.duration_s * 1e6).round() as u64)
    }

    pub fn export_options(&self) -> ExportOptions {
        ExportOptions {
            pdv_source: self.pdv_source,
            throughput_bin_us: self.throughput_bin_us,
            pdv_bin_us: self.pdv_bin_us,
        }
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.outputs.iter().any(|o| o.metric == metric)
    }

    /// Every problem with the configuration, not just the first.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            errors.push("duration_s: must be a finite number > 0".into());
        }
        if self.paths.is_empty() {
            errors.push("paths: at least one path is required".into());
        }
        let mut seen = BTreeSet::new();
        for p in &self.paths {
            if !seen.insert(p.path_id) {
                errors.push(format!("paths: duplicate path_id {}", p.path_id));
            }
            p.validate(&mut errors);
        }
        let duration_us = self.duration().0;
        if let Some(t) = &self.traffic {
            t.validate(duration_us, &mut errors);
        }
        self.scheduler.validate(self.paths.len(), &mut errors);
        self.reorder.validate(&mut errors);
        if self.sample_interval_us == 0 {
            errors.push("sample_interval_us: must be > 0".into());
        }
        if self.throughput_bin_us == 0 {
            errors.push("throughput_bin_us: must be > 0".into());
        }
        if self.pdv_bin_us <= 0 {
            errors.push("pdv_bin_us: must be > 0".into());
        }
        let mut files = BTreeSet::new();
        for (i, o) in self.outputs.iter().enumerate() {
            if o.metric == Metric::Summary && o.format != Format::Json {
                errors.push(format!(
                    "outputs[{i}].format: summary is only available as json"
                ));
            }
            let name = o.file_name();
            if !is_plain_relative(&name) {
                errors.push(format!(
                    "outputs[{i}].path: must be a relative path without '..' ({name})"
                ));
            }
            if !files.insert(name.clone()) {
                errors.push(format!("outputs[{i}].path: {name} is written twice"));
            }
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.validation_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }

    pub fn uses_costs(&self) -> bool {
        self.scheduler.kind == SchedulerKind::CheapestPipeFirst
    }
}

fn is_plain_relative(name: &str) -> bool {
    let p = Path::new(name);
    !name.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_)))
}

/// Parse and validate a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "duration_s": 1,
        "paths": [{"path_id": 0, "one_way_latency_us": 10000, "bandwidth_bps": 10000000}],
        "traffic": {"kind": "cbr", "rate_bps": 1000000, "packet_size": 1000},
        "scheduler": {"kind": "round_robin"},
        "reorder": {"kind": "none"}
    }"#;

    fn errors_of(text: &str) -> Vec<String> {
        match parse_scenario(text) {
            Err(Error::Validation(e)) => e,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_file_loads() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.paths.len(), 1);
        assert_eq!(cfg.duration(), SimTime::from_secs(1));
        assert_eq!(cfg.reorder.max_hold_us, 500_000);
    }

    #[test]
    fn zero_weights_named() {
        let text = MINIMAL.replace(
            r#"{"kind": "round_robin"}"#,
            r#"{"kind": "fixed_ratio", "weights": [0]}"#,
        );
        let errs = errors_of(&text);
        assert!(errs.iter().any(|e| e.contains("weights")), "{errs:?}");
    }

    #[test]
    fn zero_weights_two_paths() {
        let text = r#"{
            "duration_s": 1,
            "paths": [
                {"path_id": 0, "one_way_latency_us": 10000, "bandwidth_bps": 10000000},
                {"path_id": 1, "one_way_latency_us": 10000, "bandwidth_bps": 10000000}
            ],
            "scheduler": {"kind": "fixed_ratio", "weights": [0, 0]}
        }"#;
        let errs = errors_of(text);
        assert!(errs.iter().any(|e| e.contains("weights")), "{errs:?}");
    }

    #[test]
    fn duplicate_path_id_rejected() {
        let text = r#"{
            "duration_s": 1,
            "paths": [
                {"path_id": 3, "one_way_latency_us": 10000, "bandwidth_bps": 10000000},
                {"path_id": 3, "one_way_latency_us": 20000, "bandwidth_bps": 10000000}
            ],
            "scheduler": {"kind": "round_robin"}
        }"#;
        let errs = errors_of(text);
        assert!(
            errs.iter().any(|e| e.contains("duplicate path_id 3")),
            "{errs:?}"
        );
    }

    #[test]
    fn all_errors_reported() {
        let text = r#"{
            "duration_s": -1,
            "paths": [{"path_id": 0, "one_way_latency_us": 0, "bandwidth_bps": 0, "loss_rate": 2}],
            "scheduler": {"kind": "round_robin"}
        }"#;
        let errs = errors_of(text);
        assert!(errs.len() >= 3, "{errs:?}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace(r#""duration_s": 1,"#, r#""duration_s": 1, "colour": 3,"#);
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn missing_key_named() {
        let text = MINIMAL.replace(r#""scheduler": {"kind": "round_robin"},"#, "");
        let err = parse_scenario(&text).unwrap_err().to_string();
        assert!(err.contains("scheduler"), "{err}");
    }

    #[test]
    fn output_paths_checked() {
        let text = MINIMAL.replace(
            r#""reorder": {"kind": "none"}"#,
            r#""reorder": {"kind": "none"},
               "outputs": [{"metric": "summary", "format": "csv"},
                           {"metric": "pdv", "format": "csv", "path": "../x.csv"}]"#,
        );
        let errs = errors_of(&text);
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse_scenario(&text).unwrap(), cfg);
    }
}
