//! Greedy Dual for min-cost (bipartite) perfect matching with delays.
//!
//! The crate provides an exact event-driven engine ([`engine`]), an
//! independent certifier that replays its event log ([`certify`]), offline
//! optimum oracles ([`opt`]), instance generators ([`generate`]) and the JSON
//! trace format ([`trace`]).

pub mod certify;
pub mod engine;
pub mod generate;
pub mod instance;
pub mod metric;
pub mod opt;
pub mod scalar;
pub mod trace;

pub use certify::{certify, certify_log, marked_path_check, ratio_report, DualCertificate, Property, RatioReport, Violation};
pub use engine::{run, run_checked, Engine, EventKind, EventRecord, MatchRecord, RunResult, RunSummary};
pub use instance::{parse_instance, AnyInstance, Instance, InstanceError, ParseOptions, Polarity, Variant};
pub use metric::{Metric, MetricKind, Point};
pub use opt::{opt_brute, opt_hungarian, OptError, OptMethod, OptSolution};
pub use scalar::{Exact, Float, NumericMode, Scalar};
