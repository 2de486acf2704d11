//! Request and response records for `POST /v1/select` and the handler
//! behind it.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use imgsel_core::selection::{
    run_pipeline_timed, CatalogItem, ImageSource, PipelineDeps, Removal, RemovalReason,
    SelectionResult, SupplierImages,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fetch::{fetch_images, FetchLimits, FetchOutcome, FetchStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceUrls {
    pub supplier: String,
    pub urls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectRequest {
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub sources: Vec<SourceUrls>,
    /// Manually curated items keep their images as given.
    #[serde(default)]
    pub curated: bool,
}

impl SelectRequest {
    pub fn validate(&self) -> Result<(), ApiError> {
        if self.item_id.trim().is_empty() {
            return Err(ApiError::BadRequest("item_id must be non-empty".into()));
        }
        if self.sources.iter().all(|s| s.urls.is_empty()) {
            return Err(ApiError::BadRequest("at least one url is required".into()));
        }
        if let Some(s) = self
            .sources
            .iter()
            .find(|s| s.urls.iter().any(|u| u.trim().is_empty()))
        {
            return Err(ApiError::BadRequest(format!(
                "supplier {:?} lists an empty url",
                s.supplier
            )));
        }
        Ok(())
    }

    pub fn urls(&self) -> Vec<String> {
        self.sources
            .iter()
            .flat_map(|s| s.urls.iter().cloned())
            .collect()
    }
}

/// Milliseconds per stage. Stage values never sum past `total_ms`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestTimings {
    pub fetch_ms: f64,
    pub aggregate_ms: f64,
    pub analyze_ms: f64,
    pub dedup_ms: f64,
    pub order_ms: f64,
    pub total_ms: f64,
}

impl RequestTimings {
    pub fn stage_sum(&self) -> f64 {
        self.fetch_ms + self.aggregate_ms + self.analyze_ms + self.dedup_ms + self.order_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectResponse {
    #[serde(flatten)]
    pub result: SelectionResult,
    pub timings: RequestTimings,
    pub fetch: Vec<FetchOutcome>,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ApiError::BadRequest(_) => 400,
            ApiError::Internal(_) => 500,
        }
    }

    pub fn body(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "code": self.code(), "message": self.to_string() } })
    }
}

/// Read-only state shared by all requests.
#[derive(Clone)]
pub struct AppState {
    pub deps: Arc<PipelineDeps>,
    pub client: reqwest::Client,
    pub limits: FetchLimits,
}

impl AppState {
    pub fn new(deps: PipelineDeps, limits: FetchLimits) -> Self {
        Self {
            deps: Arc::new(deps),
            client: reqwest::Client::new(),
            limits,
        }
    }
}

/// Fetches the request's images and runs the pipeline on what downloaded.
/// Unrecognized payloads are reported as `quality_fail` removals; timeouts
/// and HTTP failures only appear in `fetch`.
pub async fn handle_select(
    state: &AppState,
    req: SelectRequest,
) -> Result<SelectResponse, ApiError> {
    req.validate()?;
    let start = Instant::now();
    let outcomes = fetch_images(&state.client, &req.urls(), state.limits).await;
    let fetch_ms = start.elapsed().as_secs_f64() * 1000.0;

    let mut next = outcomes.iter().enumerate();
    let mut undecodable = Vec::new();
    let sources: Vec<SupplierImages> = req
        .sources
        .iter()
        .map(|s| {
            let mut images = Vec::new();
            for (position, outcome) in next.by_ref().take(s.urls.len()) {
                match (&outcome.status, &outcome.bytes) {
                    (FetchStatus::Ok, Some(bytes)) => {
                        images.push(ImageSource::new(outcome.url.clone(), bytes.clone()))
                    }
                    (FetchStatus::DecodeError, _) => undecodable.push((position, outcome)),
                    _ => {}
                }
            }
            SupplierImages {
                supplier: s.supplier.clone(),
                images,
            }
        })
        .collect();
    let item = CatalogItem {
        item_id: req.item_id.clone(),
        category_id: req.category.clone(),
        title: req.title.clone(),
        sources,
        curated: req.curated,
    };

    let deps = state.deps.clone();
    let (mut result, stages) =
        tokio::task::spawn_blocking(move || run_pipeline_timed(&item, &deps))
            .await
            .map_err(|e| ApiError::Internal(format!("pipeline failed: {e}")))?;

    let mut used: HashSet<String> = result
        .ordered
        .iter()
        .map(|o| o.image_id.clone())
        .chain(result.removed.iter().map(|r| r.image_id.clone()))
        .collect();
    for (position, outcome) in undecodable {
        let mut image_id = outcome.url.clone();
        if used.contains(&image_id) {
            image_id = format!("{}#{position}", outcome.url);
        }
        used.insert(image_id.clone());
        result.stats.inputs += 1;
        result.stats.quality_failed += 1;
        result.removed.push(Removal {
            image_id,
            reason: RemovalReason::QualityFail,
            detail: Some(format!(
                "undecodable: {}",
                outcome.error.as_deref().unwrap_or("unknown format")
            )),
        });
    }

    let timings = RequestTimings {
        fetch_ms,
        aggregate_ms: stages.aggregate_ms,
        analyze_ms: stages.analyze_ms,
        dedup_ms: stages.dedup_ms,
        order_ms: stages.order_ms,
        total_ms: start.elapsed().as_secs_f64() * 1000.0,
    };
    log::info!(
        "item {}: {} urls, {} selected in {:.0} ms",
        req.item_id,
        outcomes.len(),
        result.ordered.len(),
        timings.total_ms
    );
    Ok(SelectResponse {
        result,
        timings,
        fetch: outcomes,
    })
}
