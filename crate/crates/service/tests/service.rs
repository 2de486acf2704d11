mod support;

use std::collections::HashMap;

use imgsel_core::quality::{dominant_border_color, pad_augment, Padding};
use imgsel_core::selection::RemovalReason;
use imgsel_core::synth::{scale, tablet_view, TabletView};
use imgsel_service::{
    fetch_images, FetchLimits, FetchStatus, Health, SelectRequest, SelectResponse, SourceUrls,
};
use support::*;

fn limits(max_parallel: usize, timeout_secs: f64) -> FetchLimits {
    FetchLimits {
        max_parallel,
        per_url_timeout_secs: timeout_secs,
        ..Default::default()
    }
}

fn small_corpus(n: usize) -> HashMap<String, Vec<u8>> {
    (0..n)
        .map(|i| {
            (
                format!("p{i}.png"),
                png(&imgsel_core::synth::random_product(i as u64).render()),
            )
        })
        .collect()
}

fn request(
    item_id: &str,
    category: Option<&str>,
    sources: Vec<(&str, Vec<String>)>,
) -> SelectRequest {
    SelectRequest {
        item_id: item_id.into(),
        category: category.map(String::from),
        title: None,
        sources: sources
            .into_iter()
            .map(|(supplier, urls)| SourceUrls {
                supplier: supplier.into(),
                urls,
            })
            .collect(),
        curated: false,
    }
}

async fn post(base: &str, body: String) -> (u16, serde_json::Value) {
    let resp = reqwest::Client::new()
        .post(format!("{base}/v1/select"))
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .unwrap();
    let status = resp.status().as_u16();
    (
        status,
        serde_json::from_slice(&resp.bytes().await.unwrap()).unwrap(),
    )
}

#[tokio::test]
async fn fetch_keeps_input_order_when_completion_order_differs() {
    let server = spawn_fixture(small_corpus(6)).await;
    // later urls finish first
    let urls: Vec<String> = (0..6)
        .map(|i| server.slow_url(&format!("p{i}.png"), 300 - 50 * i))
        .collect();
    let out = fetch_images(&reqwest::Client::new(), &urls, limits(6, 5.0)).await;
    assert_eq!(out.len(), 6);
    for (o, u) in out.iter().zip(&urls) {
        assert_eq!(&o.url, u);
        assert_eq!(o.status, FetchStatus::Ok);
        assert!(o.bytes.is_some() && o.error.is_none());
    }
}

#[tokio::test]
async fn fetch_failures_are_captured_per_url() {
    let mut images = small_corpus(3);
    images.insert("junk.png".into(), b"definitely not an image".to_vec());
    let server = spawn_fixture(images).await;
    let urls = vec![
        server.url("p0.png"),
        server.url("missing.png"),
        server.url("p1.png"),
        server.slow_url("p2.png", 3_000),
        server.url("junk.png"),
        "http://127.0.0.1:1/refused.png".to_string(),
    ];
    let out = fetch_images(&reqwest::Client::new(), &urls, limits(4, 0.5)).await;
    let statuses: Vec<FetchStatus> = out.iter().map(|o| o.status).collect();
    assert_eq!(
        statuses,
        vec![
            FetchStatus::Ok,
            FetchStatus::HttpError,
            FetchStatus::Ok,
            FetchStatus::Timeout,
            FetchStatus::DecodeError,
            FetchStatus::HttpError,
        ]
    );
    for o in &out {
        assert_eq!(o.bytes.is_some(), o.error.is_none(), "{}", o.url);
    }
}

#[tokio::test]
async fn fetch_enforces_max_bytes() {
    let server = spawn_fixture(small_corpus(1)).await;
    let tight = FetchLimits {
        max_bytes: 64,
        ..Default::default()
    };
    let out = fetch_images(&reqwest::Client::new(), &[server.url("p0.png")], tight).await;
    assert_eq!(out[0].status, FetchStatus::HttpError);
    assert!(out[0].error.as_deref().unwrap().contains("max_bytes"));
}

#[tokio::test]
async fn fetch_parallelism_is_bounded() {
    let server = spawn_fixture(small_corpus(10)).await;
    let urls: Vec<String> = (0..10)
        .map(|i| server.slow_url(&format!("p{i}.png"), 150))
        .collect();
    let out = fetch_images(&reqwest::Client::new(), &urls, limits(4, 5.0)).await;
    assert!(out.iter().all(|o| o.status == FetchStatus::Ok));
    assert_eq!(server.hits(), 10);
    let peak = server.peak_in_flight();
    assert!(peak <= 4, "peak in flight {peak}");
    assert!(peak >= 2, "fetches never overlapped (peak {peak})");
}

#[tokio::test]
async fn single_url_request_is_bypassed() {
    let server = spawn_fixture(small_corpus(1)).await;
    let base = spawn_service(tablet_state(FetchLimits::default())).await;
    let req = request(
        "one",
        Some("tablets"),
        vec![("a", vec![server.url("p0.png")])],
    );
    let (status, body) = post(&base, serde_json::to_string(&req).unwrap()).await;
    assert_eq!(status, 200, "{body}");
    let resp: SelectResponse = serde_json::from_value(body).unwrap();
    assert!(resp.result.stats.bypassed);
    assert_eq!(
        resp.result.ordered_ids(),
        vec![server.url("p0.png").as_str()]
    );
    assert!(resp.result.removed.is_empty());
}

#[tokio::test]
async fn nine_image_tablet_request() {
    let r = |v, k| tablet_view(v, k).render();
    let (front, back, side, life) = (
        r(TabletView::Front, 202),
        r(TabletView::Back, 200),
        r(TabletView::Side, 201),
        r(TabletView::Lifestyle, 203),
    );
    let padded = pad_augment(&life, Padding::uniform(20), dominant_border_color(&life));
    let images: HashMap<String, Vec<u8>> = [
        ("back.png", png(&back)),
        ("side.png", png(&side)),
        ("front.png", png(&front)),
        ("life.png", png(&life)),
        ("front_small.png", png(&scale(&front, 0.75))),
        ("front_alt.png", png(&r(TabletView::Front, 204))),
        ("life_pad.png", png(&padded)),
        ("thumb.png", png(&scale(&side, 0.3))),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let server = spawn_fixture(images).await;
    let base = spawn_service(tablet_state(FetchLimits::default())).await;
    let u = |n: &str| server.url(n);
    let mut req = request(
        "tab-9",
        None,
        vec![
            (
                "brand",
                vec![u("back.png"), u("side.png"), u("front.png"), u("life.png")],
            ),
            (
                "retailer",
                vec![u("front_small.png"), u("back.png"), u("front_alt.png")],
            ),
            ("marketplace", vec![u("life_pad.png"), u("thumb.png")]),
        ],
    );
    req.title = Some("10-inch Tablet 64GB".into());
    let (status, body) = post(&base, serde_json::to_string(&req).unwrap()).await;
    assert_eq!(status, 200, "{body}");
    let resp: SelectResponse = serde_json::from_value(body).unwrap();
    let res = &resp.result;

    assert_eq!(res.stats.category_id.as_deref(), Some("tablets"));
    assert_eq!(res.ordered.len() + res.removed.len(), 9);
    // hero promotion: the brand listed the back first
    assert_eq!(res.ordered[0].type_label, "front");
    assert_eq!(res.removed_with(RemovalReason::ExactDuplicate).len(), 1);
    assert!(res
        .removed_with(RemovalReason::NearDuplicate)
        .contains(&u("front_small.png").as_str()));
    assert_eq!(
        res.removed_with(RemovalReason::QualityFail),
        vec![u("thumb.png").as_str()]
    );
    let labels: Vec<&str> = res.ordered.iter().map(|o| o.type_label.as_str()).collect();
    for view in ["front", "back", "side", "lifestyle"] {
        assert!(labels.contains(&view), "{view} missing from {labels:?}");
    }
    assert!(resp.timings.stage_sum() <= resp.timings.total_ms);
    assert!(resp.fetch.iter().all(|f| f.status == FetchStatus::Ok));
}

#[tokio::test]
async fn identical_requests_give_identical_results() {
    let server = spawn_fixture(small_corpus(5)).await;
    let base = spawn_service(tablet_state(FetchLimits::default())).await;
    let urls: Vec<String> = (0..5).map(|i| server.url(&format!("p{i}.png"))).collect();
    let body = serde_json::to_string(&request("same", Some("tablets"), vec![("a", urls)])).unwrap();
    let (_, a) = post(&base, body.clone()).await;
    let (_, b) = post(&base, body).await;
    let a: SelectResponse = serde_json::from_value(a).unwrap();
    let b: SelectResponse = serde_json::from_value(b).unwrap();
    assert_eq!(a.result, b.result);
}

#[tokio::test]
async fn undecodable_and_missing_images() {
    let mut images = small_corpus(2);
    images.insert("junk.png".into(), b"GIF? no".to_vec());
    let server = spawn_fixture(images).await;
    let base = spawn_service(tablet_state(FetchLimits::default())).await;
    let urls = vec![
        server.url("p0.png"),
        server.url("junk.png"),
        server.url("gone.png"),
        server.url("p1.png"),
    ];
    let (status, body) = post(
        &base,
        serde_json::to_string(&request("mixed", Some("tablets"), vec![("a", urls)])).unwrap(),
    )
    .await;
    assert_eq!(status, 200, "{body}");
    let resp: SelectResponse = serde_json::from_value(body).unwrap();
    let junk = server.url("junk.png");
    let removal = resp
        .result
        .removed
        .iter()
        .find(|r| r.image_id == junk)
        .unwrap();
    assert_eq!(removal.reason, RemovalReason::QualityFail);
    assert!(removal
        .detail
        .as_deref()
        .unwrap()
        .starts_with("undecodable"));
    assert_eq!(resp.fetch[2].status, FetchStatus::HttpError);
    // the 404 has no bytes and is only reported under fetch
    assert_eq!(resp.result.ordered.len() + resp.result.removed.len(), 3);
    assert_eq!(resp.result.stats.inputs, 3);
}

#[tokio::test]
async fn malformed_requests_get_structured_400() {
    let base = spawn_service(tablet_state(FetchLimits::default())).await;
    for body in [
        "{not json".to_string(),
        r#"{"item_id":"","sources":[{"supplier":"a","urls":["http://x/1.png"]}]}"#.to_string(),
        r#"{"item_id":"a","sources":[{"supplier":"a","urls":[]}]}"#.to_string(),
        r#"{"item_id":"a","sources":[],"extra":1}"#.to_string(),
    ] {
        let (status, json) = post(&base, body.clone()).await;
        assert_eq!(status, 400, "{body}");
        assert_eq!(json["error"]["code"], "bad_request");
        assert!(json["error"]["message"]
            .as_str()
            .is_some_and(|m| !m.is_empty()));
    }
}

#[tokio::test]
async fn health_lists_categories() {
    let base = spawn_service(tablet_state(FetchLimits::default())).await;
    let body = reqwest::get(format!("{base}/v1/health"))
        .await
        .unwrap()
        .bytes()
        .await
        .unwrap();
    let health: Health = serde_json::from_slice(&body).unwrap();
    assert_eq!(health.status, "ok");
    assert_eq!(health.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(health.categories, vec!["tablets".to_string()]);
}
