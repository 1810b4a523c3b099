//! HTTP service that runs live pairwise-comparison experiments with the
//! hybrid GM/MST sampler.
//!
//! Each experiment keeps an append-only, fsynced vote log; a vote is
//! acknowledged only after its log line is durable, and the in-memory
//! state is rebuilt from the log on start-up.

pub mod config;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod http;
pub mod record;
pub mod store;

pub use config::ServiceConfig;
pub use engine::{CreateExperiment, Engine};
pub use error::{Result, ServiceError};
pub use experiment::{BatchView, EstimateView, ExperimentView, VoteAck};
pub use http::{router, serve, shutdown_signal};
pub use record::{VoteRecord, VoteRequest};
