//! Hard-braking events as a crash surrogate for road segments.
//!
//! The pipeline detects hard-braking events in speed telemetry, joins them
//! with segment attributes and crash records, and fits Poisson / negative
//! binomial safety performance models with a log-exposure offset.

pub mod aggregate;
pub mod analysis;
pub mod cli;
pub mod detect;
pub mod error;
pub mod formats;
pub mod glm;
pub mod ingest;
pub mod model;
pub mod par;
pub mod synth;

pub use error::{AnalysisError, GlmError, IngestError, Rejection, SynthError};
