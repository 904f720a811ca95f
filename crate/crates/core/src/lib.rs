//! Buffer-based adaptive bitrate control: decision rules, a discrete-event
//! player simulator, an offline optimal oracle, trace/manifest generation and
//! session metrics.

pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod simulator;
pub mod traces;

pub use error::{Error, Result};
pub use metrics::Metrics;
pub use model::{PlayerConfig, Variant, VideoManifest};
pub use oracle::{OracleConfig, OracleResult};
pub use simulator::{NetworkTrace, SessionLog, TraceSegment};
