//! Scenario orchestration behind the `mpdccp-sim` binary.

pub mod suite;

use std::path::{Path, PathBuf};
use std::thread;

use serde::Serialize;

use mpdccp_core::metrics::export::{render, write_file};
use mpdccp_core::reorder::ReorderKind;
use mpdccp_core::{run, MetricsLog, ScenarioConfig, SchedulerKind, Summary};

pub use suite::{canned, canned_scenario, CANNED};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mpdccp_core::Error),
    #[error("unknown canned scenario '{0}'")]
    UnknownScenario(String),
    #[error("simulation thread for '{0}' panicked")]
    Panicked(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for everything that went wrong while
    /// running or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(mpdccp_core::Error::Validation(_) | mpdccp_core::Error::Parse(_))
            | CliError::UnknownScenario(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Result of one scenario run.
#[derive(Debug)]
pub struct RunReport {
    pub log: MetricsLog,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Run `cfg` and write its requested outputs plus `summary.json` into
/// `out_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport> {
    let log = run(cfg)?;
    let summary = Summary::new(&cfg.name, cfg.seed, &log, cfg.pdv_source);
    let opts = cfg.export_options();
    let mut files = Vec::new();
    let mut wrote_summary = false;
    for o in &cfg.outputs {
        let path = out_dir.join(o.file_name());
        let text = render(&log, o.metric, o.format, &opts, &summary)?;
        write_file(&path, &text)?;
        wrote_summary |= o.file_name() == "summary.json";
        files.push(path);
    }
    if !wrote_summary {
        let path = out_dir.join("summary.json");
        write_file(&path, &summary.to_json())?;
        files.push(path);
    }
    Ok(RunReport {
        log,
        summary,
        files,
    })
}

/// Run every canned scenario into `out_dir/<name>/`. With `parallel` each
/// scenario gets its own thread; results come back in suite order either way.
pub fn paper_suite(out_dir: &Path, parallel: bool) -> Result<Vec<(String, RunReport)>> {
    let scenarios = canned()?;
    if !parallel {
        return scenarios
            .into_iter()
            .map(|cfg| {
                let report = run_scenario(&cfg, &out_dir.join(&cfg.name))?;
                Ok((cfg.name, report))
            })
            .collect();
    }
    thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|cfg| {
                let dir = out_dir.join(&cfg.name);
                (cfg.name.clone(), s.spawn(move || run_scenario(cfg, &dir)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(name, h)| match h.join() {
                Ok(r) => r.map(|r| (name, r)),
                Err(_) => Err(CliError::Panicked(name)),
            })
            .collect()
    })
}

#[derive(Debug, Serialize)]
pub struct PluginParam {
    pub name: &'static str,
    pub doc: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Plugin {
    pub category: &'static str,
    pub name: &'static str,
    pub doc: &'static str,
    pub params: Vec<PluginParam>,
}

fn param(name: &'static str, doc: &'static str) -> PluginParam {
    PluginParam { name, doc }
}

fn scheduler_plugin(kind: SchedulerKind) -> Plugin {
    let (doc, params) = match kind {
        SchedulerKind::CheapestPipeFirst => (
            "lowest-cost path whose window has room; lowest cost overall when none has room",
            vec![param(
                "costs",
                "per-path non-negative costs; defaults to each path's `cost`",
            )],
        ),
        SchedulerKind::FixedRatio => (
            "smooth weighted round robin over fixed per-path weights",
            vec![param(
                "weights",
                "per-path non-negative integers, not all zero",
            )],
        ),
        SchedulerKind::Otias => (
            "path with the earliest estimated arrival, counting queued packets ahead",
            vec![],
        ),
        SchedulerKind::RoundRobin => ("cycle through paths in path-id order", vec![]),
        SchedulerKind::Srtt => (
            "lowest smoothed RTT among paths whose window has room",
            vec![],
        ),
    };
    Plugin {
        category: "scheduler",
        name: kind.name(),
        doc,
        params,
    }
}

fn reorder_plugin(kind: ReorderKind) -> Plugin {
    let max_hold = param(
        "max_hold_us",
        "safety cap on any hold time (default 500000)",
    );
    let k = param(
        "adaptive_k",
        "multiplier on the largest RTT variation (default 4)",
    );
    let (doc, params) = match kind {
        ReorderKind::Adaptive => (
            "resequence with hold time = half the RTT spread + k * max RTT variation",
            vec![k, max_hold],
        ),
        ReorderKind::DelayEqualize => (
            "delay each path up to the slowest one-way delay; discard very late packets",
            vec![k, max_hold],
        ),
        ReorderKind::None => ("pass packets through in arrival order", vec![]),
        ReorderKind::Static => (
            "resequence with a fixed hold time",
            vec![
                param(
                    "static_threshold_us",
                    "hold time; defaults to the RTT difference of the configured paths",
                ),
                max_hold,
            ],
        ),
    };
    Plugin {
        category: "reorder",
        name: kind.name(),
        doc,
        params,
    }
}

/// All schedulers then all reorder kinds, each alphabetized.
pub fn plugins() -> Vec<Plugin> {
    SchedulerKind::ALL
        .into_iter()
        .map(scheduler_plugin)
        .chain(ReorderKind::ALL.into_iter().map(reorder_plugin))
        .collect()
}

pub fn list_plugins(json: bool) -> String {
    let plugins = plugins();
    if json {
        let mut s = serde_json::to_string_pretty(&plugins).expect("plugins serialize");
        s.push('\n');
        return s;
    }
    let mut out = String::new();
    let mut category = "";
    for p in &plugins {
        if p.category != category {
            if !category.is_empty() {
                out.push('\n');
            }
            category = p.category;
            out.push_str(&format!("{category}s:\n"));
        }
        out.push_str(&format!("  {:<20} {}\n", p.name, p.doc));
        for prm in &p.params {
            out.push_str(&format!("      {:<18} {}\n", prm.name, prm.doc));
        }
    }
    out
}
