//! Deterministic discrete-event simulator of a multipath datagram tunnel.
//!
//! Ingress packets get a tunnel-wide sequence number, a scheduler picks one
//! of several per-path flows with TCP-like window congestion control, the
//! flows carry them over simulated links, and a receiver module either
//! resequences them or equalizes per-path delay before handing them on.
//!
//! ```
//! use mpdccp_core::{run, PathConfig, ReorderConfig, ReorderKind, ScenarioConfig,
//!     SchedulerConfig, SchedulerKind, TrafficConfig};
//!
//! let cfg = ScenarioConfig::new(
//!     "demo",
//!     2.0,
//!     vec![PathConfig::new(0, 10_000, 10_000_000), PathConfig::new(1, 30_000, 10_000_000)],
//!     Some(TrafficConfig::cbr(1_000_000, 1000)),
//!     SchedulerConfig::new(SchedulerKind::RoundRobin),
//!     ReorderConfig::new(ReorderKind::Adaptive),
//! );
//! let log = run(&cfg).unwrap();
//! assert_eq!(log.emitted, 250);
//! ```

pub mod error;
pub mod event;
pub mod flow;
pub mod metrics;
pub mod packet;
pub mod path;
pub mod reorder;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod time;
pub mod traffic;

pub use error::{Error, Result};
pub use event::{EventId, EventQueue};
pub use flow::{AckRecord, FlowState, FlowStats, RttEstimator};
pub use metrics::export::{Format, Metric, Summary};
pub use metrics::{MetricsLog, PdvSample, StreamSource};
pub use packet::{encode_header, TunnelHeader, TunnelPacket};
pub use path::{LatencyEvent, PathConfig, PathId, PathModel};
pub use reorder::{Disposition, ReorderBuffer, ReorderConfig, ReorderKind};
pub use scenario::{load_scenario, parse_scenario, OutputSpec, ScenarioConfig};
pub use scheduler::{Scheduler, SchedulerConfig, SchedulerKind};
pub use sim::{run, Simulation};
pub use time::SimTime;
pub use traffic::{TrafficConfig, TrafficKind};
