#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rehab_cli::api::{router, AppState};
use rehab_core::acquisition::{train_agent, AgentConfig};
use rehab_core::corpus::Corpus;
use rehab_core::prediction::{default_grid, train, Algorithm};
use rehab_core::synthdata::{generate_dataset, write_dataset, GeneratorConfig};
use rehab_core::{Component, Exercise, QualityThreshold};
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

/// Small E1-only corpus: 2 healthy and 3 stroke subjects.
pub fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        seed: 3,
        healthy_subjects: 2,
        healthy_repetitions: 3,
        stroke_subjects: 3,
        stroke_repetitions: 10,
        exercises: vec![Exercise::E1],
        ..GeneratorConfig::default()
    }
}

/// Writes the small corpus, logistic models for every E1 component and a
/// briefly trained agent for E1 compensation.
pub fn data_dir() -> TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    let dataset = generate_dataset(&small_config()).expect("generate");
    write_dataset(&dataset, dir.path()).expect("write");
    let corpus = Corpus::from_sessions(&dataset.sessions).expect("segment");
    std::fs::create_dir_all(dir.path().join("models")).unwrap();
    std::fs::create_dir_all(dir.path().join("agents")).unwrap();
    for component in Component::ALL {
        let ds = corpus
            .dataset(Exercise::E1, component, QualityThreshold::FullScore)
            .expect("dataset");
        let model = train(Algorithm::Logistic, &ds, &default_grid(Algorithm::Logistic)[0]).expect("train");
        let path = dir.path().join("models").join(format!("E1_{component}.json"));
        std::fs::write(path, serde_json::to_string(&model).unwrap()).unwrap();
    }
    let ds = corpus
        .dataset(Exercise::E1, Component::Compensation, QualityThreshold::FullScore)
        .unwrap();
    let config = AgentConfig {
        episodes: 30,
        warmup: 32,
        batch_size: 16,
        ..AgentConfig::for_task(Exercise::E1, Component::Compensation, 1)
    };
    let (agent, _) = train_agent(&ds, &config).expect("agent");
    std::fs::write(
        dir.path().join("agents").join("E1_compensation.json"),
        serde_json::to_string(&agent).unwrap(),
    )
    .unwrap();
    dir
}

pub fn state(data: &Path) -> Arc<AppState> {
    Arc::new(AppState::load(data, &data.join("logs"), QualityThreshold::FullScore).expect("load"))
}

pub fn app(data: &Path) -> Router {
    router(state(data))
}

/// Sends one request and returns the status and raw body.
pub async fn call_raw(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, method, uri, body).await;
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|e| {
        panic!("{method} {uri}: non-JSON body ({e}): {}", String::from_utf8_lossy(&bytes))
    });
    (status, value)
}

/// Asserts the `{code, message}` error shape and returns the code.
pub fn error_code(body: &Value) -> String {
    let obj = body.as_object().expect("error object");
    assert_eq!(obj.len(), 2, "error body has exactly code and message: {body}");
    assert!(obj["message"].is_string());
    obj["code"].as_str().expect("code").to_string()
}

pub fn first_motion(data: &Path, prefix: &str) -> String {
    let corpus = Corpus::load(data).unwrap();
    corpus
        .clips
        .iter()
        .map(|c| c.id.clone())
        .find(|id| id.starts_with(prefix))
        .expect("motion with prefix")
}
