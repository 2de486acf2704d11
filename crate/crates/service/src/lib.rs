//! HTTP front end for image selection.
//!
//! `POST /v1/select` downloads an item's image urls with bounded
//! parallelism, runs the selection pipeline and answers with the ordered
//! set, the removals, per-stage timings and per-url fetch outcomes.
//! `GET /v1/health` reports the version and loaded categories.

pub mod api;
pub mod config;
pub mod fetch;
pub mod server;

pub use api::{
    handle_select, ApiError, AppState, RequestTimings, SelectRequest, SelectResponse, SourceUrls,
};
pub use config::{ConfigError, ServiceConfig};
pub use fetch::{fetch_images, FetchLimits, FetchOutcome, FetchStatus};
pub use server::{router, run, serve_on, Health};
