use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use cellcast_cli::config::RunConfig;
use cellcast_cli::engine::{Engine, TimeRange};
use cellcast_cli::service::router;
use cellcast_core::data::BIN_MS;
use cellcast_core::model::init_model;
use cellcast_core::prompting::OperatorPreference;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

mod common;

fn engine(cfg: &RunConfig, with_baseline: bool) -> Engine {
    let berto = init_model(&cfg.model, 1).unwrap();
    let baseline = with_baseline.then(|| init_model(&cfg.model, 2).unwrap());
    Engine::new(cfg, berto, baseline).unwrap()
}

fn service_for(orientation: &str) -> (axum::Router, Arc<Engine>) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path(), &format!("orientation = \"{orientation}\""));
    let e = Arc::new(engine(&cfg, true));
    (router(e.clone()), e)
}

async fn call(
    app: &axum::Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, Body::from))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

#[tokio::test]
async fn preferences_lists_the_five_phrases_with_q() {
    let (app, _) = service_for("eq4");
    let (status, body) = call(&app, "GET", "/preferences", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["orientation"], "eq4");
    assert_eq!(
        body["preferences"],
        json!([
            {"phrase": "Focus highly on service quality", "q": 0.1},
            {"phrase": "Focus on service quality", "q": 0.5},
            {"phrase": "No specific focus", "q": 1.0},
            {"phrase": "Focus on power savings", "q": 5.0},
            {"phrase": "Focus highly on power savings", "q": 10.0},
        ])
    );

    let (app, _) = service_for("table_consistent");
    let (_, body) = call(&app, "GET", "/preferences", None).await;
    assert_eq!(body["preferences"][4]["q"], 0.1);
}

#[tokio::test]
async fn health_reports_version() {
    let (app, _) = service_for("eq4");
    let (status, body) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn predict_neutral_reports_unit_q() {
    let (app, engine) = service_for("eq4");
    let sample = &engine.dataset.split.test[10];
    let end = sample.target_time_ms - BIN_MS;
    let req = json!({"cell_id": sample.cell_id, "window_end_time": end, "preference": "No specific focus"});
    let (status, body) = call(&app, "POST", "/predict", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["q"], 1.0);
    assert_eq!(body["preference"], "No specific focus");
    assert_eq!(body["target_time"], sample.target_time_ms);
    let direct = engine
        .predict(sample.cell_id, end, OperatorPreference::Neutral)
        .unwrap();
    assert_eq!(body["prediction"].as_f64().unwrap(), direct.prediction);
}

#[tokio::test]
async fn unknown_phrase_is_rejected_with_valid_list() {
    let (app, _) = service_for("eq4");
    for (uri, req) in [
        (
            "/predict",
            json!({"cell_id": 0, "window_end_time": 0, "preference": "save power"}),
        ),
        ("/simulate", json!({"preference": "Focus on Power Savings"})),
    ] {
        let (status, body) = call(&app, "POST", uri, Some(req.to_string())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
        assert_eq!(body["valid_preferences"].as_array().unwrap().len(), 5);
        assert_eq!(body["valid_preferences"][2], "No specific focus");
    }
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    let (app, _) = service_for("eq4");
    for (uri, body) in [
        ("/predict", "{not json"),
        (
            "/predict",
            r#"{"cell_id": "x", "window_end_time": 0, "preference": "No specific focus"}"#,
        ),
        ("/simulate", r#"{"time_range": {"start": 0, "end": 1}}"#),
        (
            "/simulate",
            r#"{"preference": "No specific focus", "extra": 1}"#,
        ),
    ] {
        let (status, _) = call(&app, "POST", uri, Some(body.to_string())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri} {body}");
    }
}

#[tokio::test]
async fn unknown_window_is_not_found() {
    let (app, _) = service_for("eq4");
    let req = json!({"cell_id": 999, "window_end_time": 0, "preference": "No specific focus"});
    let (status, _) = call(&app, "POST", "/predict", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn simulate_is_deterministic_and_matches_engine() {
    let (app, engine) = service_for("table_consistent");
    let req = json!({"preference": "Focus highly on power savings"}).to_string();
    let (s1, a) = call(&app, "POST", "/simulate", Some(req.clone())).await;
    let (s2, b) = call(&app, "POST", "/simulate", Some(req)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(a["q"], 0.1);
    assert_eq!(a["baseline"], "bert_mse");
    assert_eq!(a["per_pair"].as_array().unwrap().len(), 2);
    let table = engine
        .table(&[OperatorPreference::HighPowerSavings], None)
        .unwrap();
    assert_eq!(
        a["total_savings_w"].as_f64().unwrap(),
        table.rows[0].total_savings_w
    );
    assert_eq!(
        a["avg_throughput_loss_pct"].as_f64().unwrap(),
        table.rows[0].avg_throughput_loss_pct
    );
}

#[tokio::test]
async fn time_range_restricts_intervals() {
    let (app, engine) = service_for("eq4");
    let (_, full) = call(
        &app,
        "POST",
        "/simulate",
        Some(json!({"preference": "No specific focus"}).to_string()),
    )
    .await;
    let start = engine.dataset.split.test[0].target_time_ms;
    let range = TimeRange {
        start,
        end: start + 36 * BIN_MS,
    };
    let req = json!({"preference": "No specific focus", "time_range": range});
    let (status, part) = call(&app, "POST", "/simulate", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{part}");
    assert_eq!(part["intervals"], 36);
    assert!(part["intervals"].as_u64() < full["intervals"].as_u64());

    for bad in [
        json!({"start": start, "end": start}),
        json!({"start": 0, "end": 1000}),
    ] {
        let req = json!({"preference": "No specific focus", "time_range": bad});
        let (status, _) = call(&app, "POST", "/simulate", Some(req.to_string())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST);
    }
}

#[test]
fn missing_baseline_falls_back_to_unconditioned_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path(), "");
    let e = engine(&cfg, false);
    let s = e.summary(OperatorPreference::Neutral, None).unwrap();
    assert_eq!(s.baseline, "berto_no_preference");
}

#[test]
fn engine_refuses_to_start_without_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(dir.path(), "");
    let err = Engine::load(&cfg).err().unwrap().to_string();
    assert!(err.contains("berto.ckpt"), "{err}");
}
