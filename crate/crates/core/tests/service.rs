mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use voxaug::nifti::encode;
use voxaug::render::render_slice;
use voxaug::service::router;
use voxaug::{AffineMatrix, Image, PipelineSpec, Rng, Subject};

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn send(app: &Router, req: Request<Body>) -> Reply {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: Vec<u8>) -> Reply {
    send(app, Request::post(uri).body(Body::from(body)).unwrap()).await
}

fn volume() -> Image {
    let a = AffineMatrix::diagonal(1.0, 1.5, 2.0).unwrap();
    Image::scalar(common::blob([20, 16, 12], 4.0), a)
}

async fn upload(app: &Router, image: &Image) -> String {
    let r = post(app, "/volumes", encode(image).unwrap()).await;
    assert_eq!(r.status, StatusCode::OK);
    r.json()["volume_id"].as_str().unwrap().to_string()
}

fn preview_body(volume_id: &str, pipeline: Value, seed: u64, axis: usize, index: usize) -> Vec<u8> {
    serde_json::to_vec(&json!({"volume_id": volume_id, "pipeline": pipeline, "seed": seed, "axis": axis, "index": index}))
        .unwrap()
}

fn random_pipeline() -> Value {
    json!({"type": "compose", "children": [
        {"type": "leaf", "name": "RandomAffine"},
        {"type": "leaf", "name": "RandomGhosting"},
        {"type": "leaf", "name": "RandomNoise"}
    ]})
}

#[tokio::test]
async fn transforms_are_listed_with_valid_defaults() {
    let app = router();
    let r = get(&app, "/transforms").await;
    assert_eq!(r.status, StatusCode::OK);
    let list = r.json();
    let names: Vec<&str> = list.as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), voxaug::Transform::NAMES.len());
    assert!(names.contains(&"RandomElasticDeformation"));
    for t in list.as_array().unwrap() {
        for p in t["params"].as_array().unwrap() {
            let Some(d) = p["default"].as_f64() else { continue };
            if let Some(min) = p["min"].as_f64() {
                assert!(d >= min, "{t}");
            }
            if let Some(max) = p["max"].as_f64() {
                assert!(d <= max, "{t}");
            }
        }
    }
}

#[tokio::test]
async fn volume_upload_reports_geometry() {
    let app = router();
    let image = volume();
    let mut gz = Vec::new();
    {
        use std::io::Write;
        let mut enc = flate2::write::GzEncoder::new(&mut gz, flate2::Compression::fast());
        enc.write_all(&encode(&image).unwrap()).unwrap();
        enc.finish().unwrap();
    }
    let r = post(&app, "/volumes", gz).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    assert_eq!(v["shape"], json!([1, 20, 16, 12]));
    assert_eq!(v["spacing"], json!([1.0, 1.5, 2.0]));
    assert_eq!(post(&app, "/volumes", b"not a nifti".to_vec()).await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn identity_preview_matches_a_direct_render() {
    let app = router();
    let image = volume();
    let id = upload(&app, &image).await;
    let r = post(&app, "/preview", preview_body(&id, json!({"type": "leaf", "name": "Identity"}), 0, 2, 5)).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["content-type"], "image/png");
    assert!(r.headers.contains_key("x-preview-id"));
    assert_eq!(r.body, render_slice(&image, 2, 5, None).unwrap());
    let info = png::Decoder::new(std::io::Cursor::new(&r.body)).read_info().unwrap();
    assert_eq!((info.info().width, info.info().height), (20, 16));
}

#[tokio::test]
async fn previews_are_reproducible_and_match_the_library() {
    let app = router();
    let image = volume();
    let id = upload(&app, &image).await;
    let body = preview_body(&id, random_pipeline(), 11, 1, 8);
    let first = post(&app, "/preview", body.clone()).await;
    let second = post(&app, "/preview", body).await;
    assert_eq!(first.status, StatusCode::OK);
    assert_eq!(first.body, second.body);
    assert_ne!(first.headers["x-preview-id"], second.headers["x-preview-id"]);

    let spec = PipelineSpec::from_value(random_pipeline()).unwrap();
    let lib = spec.apply(Subject::new().with_image("image", image.clone()), &mut Rng::new(11)).unwrap();
    assert_eq!(first.body, render_slice(&lib.images["image"], 1, 8, None).unwrap());

    // The stored history replays to the same volume.
    let pid = first.headers["x-preview-id"].to_str().unwrap();
    let h = get(&app, &format!("/history/{pid}")).await;
    assert_eq!(h.status, StatusCode::OK);
    let replay = PipelineSpec::from_value(h.json()).unwrap();
    let again = replay.apply(Subject::new().with_image("image", image), &mut Rng::new(0)).unwrap();
    assert_eq!(again.images["image"].data().unwrap(), lib.images["image"].data().unwrap());
}

#[tokio::test]
async fn windowing_is_honoured() {
    let app = router();
    let image = volume();
    let id = upload(&app, &image).await;
    let body = serde_json::to_vec(&json!({
        "volume_id": id, "pipeline": {"type": "leaf", "name": "Identity"},
        "axis": 0, "index": 10, "window": [0.0, 50.0]
    }))
    .unwrap();
    let r = post(&app, "/preview", body).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, render_slice(&image, 0, 10, Some([0.0, 50.0])).unwrap());
}

#[tokio::test]
async fn error_statuses() {
    let app = router();
    let id = upload(&app, &volume()).await;
    let bad_pipeline = preview_body(&id, json!({"type": "leaf", "name": "Flip", "params": {"bogus": 1}}), 0, 0, 0);
    assert_eq!(post(&app, "/preview", bad_pipeline).await.status, StatusCode::BAD_REQUEST);
    let unknown = preview_body(&id, json!({"type": "leaf", "name": "Sharpen"}), 0, 0, 0);
    assert_eq!(post(&app, "/preview", unknown).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(post(&app, "/preview", b"{oops".to_vec()).await.status, StatusCode::BAD_REQUEST);
    let identity = json!({"type": "leaf", "name": "Identity"});
    let missing = preview_body("v999", identity.clone(), 0, 0, 0);
    assert_eq!(post(&app, "/preview", missing).await.status, StatusCode::NOT_FOUND);
    let out_of_bounds = post(&app, "/preview", preview_body(&id, identity.clone(), 0, 2, 12)).await;
    assert_eq!(out_of_bounds.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(out_of_bounds.json()["error"].as_str().is_some());
    assert_eq!(post(&app, "/preview", preview_body(&id, identity, 0, 3, 0)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(get(&app, "/history/p12345").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn volume_store_keeps_the_four_most_recent() {
    let app = router();
    let image = volume();
    let mut ids = Vec::new();
    for _ in 0..5 {
        ids.push(upload(&app, &image).await);
    }
    let identity = json!({"type": "leaf", "name": "Identity"});
    assert_eq!(post(&app, "/preview", preview_body(&ids[0], identity.clone(), 0, 0, 0)).await.status, StatusCode::NOT_FOUND);
    for id in &ids[1..] {
        assert_eq!(post(&app, "/preview", preview_body(id, identity.clone(), 0, 0, 0)).await.status, StatusCode::OK);
    }
}
