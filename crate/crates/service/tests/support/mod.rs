#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use imgsel_core::selection::{PipelineDeps, PipelineOptions};
use imgsel_core::synth::{tablet_profile, tablet_training_set, tablet_view, TabletView};
use imgsel_core::typing::{train_centroid_classifier, CategoryRegistry};
use imgsel_core::RasterImage;
use imgsel_service::{AppState, FetchLimits};
use serde::Deserialize;
use tokio::net::TcpListener;

/// Serves `/img/{name}` from memory, optionally after `?delay_ms=`, and
/// records how many requests were in flight at once.
#[derive(Clone, Default)]
pub struct Fixture {
    images: Arc<HashMap<String, Vec<u8>>>,
    in_flight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
    hits: Arc<AtomicUsize>,
}

pub struct FixtureServer {
    pub base: String,
    fixture: Fixture,
}

impl FixtureServer {
    pub fn url(&self, name: &str) -> String {
        format!("{}/img/{name}", self.base)
    }

    pub fn slow_url(&self, name: &str, delay_ms: u64) -> String {
        format!("{}/img/{name}?delay_ms={delay_ms}", self.base)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.fixture.peak.load(Ordering::SeqCst)
    }

    pub fn hits(&self) -> usize {
        self.fixture.hits.load(Ordering::SeqCst)
    }
}

#[derive(Deserialize)]
struct Delay {
    delay_ms: Option<u64>,
}

async fn serve_image(
    State(f): State<Fixture>,
    Path(name): Path<String>,
    Query(d): Query<Delay>,
) -> Response {
    f.hits.fetch_add(1, Ordering::SeqCst);
    let now = f.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    f.peak.fetch_max(now, Ordering::SeqCst);
    if let Some(ms) = d.delay_ms {
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
    let resp = match f.images.get(&name) {
        Some(bytes) => (
            [("content-type", "application/octet-stream")],
            bytes.clone(),
        )
            .into_response(),
        None => (StatusCode::NOT_FOUND, "no such image").into_response(),
    };
    f.in_flight.fetch_sub(1, Ordering::SeqCst);
    resp
}

pub async fn spawn_fixture(images: HashMap<String, Vec<u8>>) -> FixtureServer {
    let fixture = Fixture {
        images: Arc::new(images),
        ..Default::default()
    };
    let app = Router::new()
        .route("/img/{name}", get(serve_image))
        .with_state(fixture.clone());
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    FixtureServer { base, fixture }
}

pub async fn spawn_service(state: AppState) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(imgsel_service::serve_on(listener, state));
    base
}

pub fn png(img: &RasterImage) -> Vec<u8> {
    img.to_png_bytes()
}

pub fn tablet_png(view: TabletView, variant: u64) -> Vec<u8> {
    png(&tablet_view(view, variant).render())
}

/// Pipeline dependencies with the tablet category trained on variants 0..6.
pub fn tablet_deps() -> Arc<PipelineDeps> {
    static DEPS: OnceLock<Arc<PipelineDeps>> = OnceLock::new();
    DEPS.get_or_init(|| {
        let profile = tablet_profile();
        let model = train_centroid_classifier(&tablet_training_set(0..6), &profile).unwrap();
        let mut registry = CategoryRegistry::new();
        registry.insert(profile, Arc::new(model)).unwrap();
        Arc::new(PipelineDeps {
            registry,
            options: PipelineOptions::default(),
            ..Default::default()
        })
    })
    .clone()
}

pub fn tablet_state(limits: FetchLimits) -> AppState {
    AppState {
        deps: tablet_deps(),
        client: reqwest::Client::new(),
        limits,
    }
}
