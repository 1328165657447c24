//! Real-time recommendation service over a metarank build: offline
//! artifacts, snapshot generations with atomic refresh, and the HTTP API.

pub mod api;
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod state;

pub use artifacts::{Build, Sources};
pub use config::ServiceConfig;
pub use state::{QueryRequest, QueryResponse, ServiceError, ServiceState};
