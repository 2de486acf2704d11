//! Bounded-parallel image download.

use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use imgsel_core::RasterImage;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetchLimits {
    pub max_parallel: usize,
    pub per_url_timeout_secs: f64,
    pub max_bytes: u64,
}

impl Default for FetchLimits {
    fn default() -> Self {
        Self {
            max_parallel: 8,
            per_url_timeout_secs: 10.0,
            max_bytes: 20 * 1024 * 1024,
        }
    }
}

impl FetchLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_parallel == 0 {
            return Err("fetch.max_parallel must be positive".into());
        }
        if !(self.per_url_timeout_secs > 0.0 && self.per_url_timeout_secs.is_finite()) {
            return Err("fetch.per_url_timeout_secs must be positive".into());
        }
        if self.max_bytes == 0 {
            return Err("fetch.max_bytes must be positive".into());
        }
        Ok(())
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.per_url_timeout_secs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    Timeout,
    HttpError,
    DecodeError,
}

/// Result of one download. `bytes` is set exactly when the status is `ok`;
/// every other status carries `error` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchOutcome {
    pub url: String,
    pub status: FetchStatus,
    #[serde(skip)]
    pub bytes: Option<Arc<[u8]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub elapsed_ms: f64,
}

impl FetchOutcome {
    fn failed(url: &str, status: FetchStatus, error: String, started: Instant) -> Self {
        Self {
            url: url.to_string(),
            status,
            bytes: None,
            error: Some(error),
            elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
        }
    }
}

enum Failure {
    Http(String),
    Decode(String),
}

async fn download(client: &reqwest::Client, url: &str, max_bytes: u64) -> Result<Vec<u8>, Failure> {
    let mut resp = client
        .get(url)
        .send()
        .await
        .and_then(|r| r.error_for_status())
        .map_err(|e| Failure::Http(e.to_string()))?;
    if let Some(len) = resp.content_length().filter(|&n| n > max_bytes) {
        return Err(Failure::Http(format!(
            "content-length {len} exceeds max_bytes {max_bytes}"
        )));
    }
    let mut body = Vec::new();
    while let Some(chunk) = resp
        .chunk()
        .await
        .map_err(|e| Failure::Http(e.to_string()))?
    {
        if body.len() as u64 + chunk.len() as u64 > max_bytes {
            return Err(Failure::Http(format!("body exceeds max_bytes {max_bytes}")));
        }
        body.extend_from_slice(&chunk);
    }
    if !RasterImage::looks_decodable(&body) {
        return Err(Failure::Decode(format!(
            "unrecognized image format ({} bytes)",
            body.len()
        )));
    }
    Ok(body)
}

async fn fetch_one(client: &reqwest::Client, url: &str, limits: FetchLimits) -> FetchOutcome {
    let started = Instant::now();
    match tokio::time::timeout(limits.timeout(), download(client, url, limits.max_bytes)).await {
        Ok(Ok(body)) => FetchOutcome {
            url: url.to_string(),
            status: FetchStatus::Ok,
            bytes: Some(body.into()),
            error: None,
            elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
        },
        Ok(Err(Failure::Http(e))) => FetchOutcome::failed(url, FetchStatus::HttpError, e, started),
        Ok(Err(Failure::Decode(e))) => {
            FetchOutcome::failed(url, FetchStatus::DecodeError, e, started)
        }
        Err(_) => FetchOutcome::failed(
            url,
            FetchStatus::Timeout,
            format!(
                "no complete response within {}s",
                limits.per_url_timeout_secs
            ),
            started,
        ),
    }
}

/// Downloads every url with at most `limits.max_parallel` requests in flight.
/// Outcomes come back in input order; failures never abort the batch.
pub async fn fetch_images(
    client: &reqwest::Client,
    urls: &[String],
    limits: FetchLimits,
) -> Vec<FetchOutcome> {
    stream::iter(urls.to_vec())
        .map(|url| {
            let client = client.clone();
            async move { fetch_one(&client, &url, limits).await }
        })
        .buffered(limits.max_parallel.max(1))
        .collect()
        .await
}
