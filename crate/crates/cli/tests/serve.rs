//! HTTP API tests against an in-process server on an ephemeral port.

use std::path::Path;
use std::sync::Arc;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use sprintctl::server::{spawn, AppState};
use sprintctl_core::{build, ingest, BuildConfig, ControlConfig, Grid, ThresholdRule, TrackedProject};
use tempfile::TempDir;

struct Server {
    dir: TempDir,
    url: String,
    client: Client,
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny").join(name)
}

async fn start() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let set = ingest(&fixture("curves.csv"), &fixture("contexts.csv"), &fixture("schema.json")).unwrap();
    let mut config = BuildConfig::new("effort", ThresholdRule::TargetClusters(2));
    config.grid = Grid::new(3).unwrap();
    let base = build(&set.records, &set.schema, &config).unwrap();
    let base_path = dir.path().join("base.eb");
    base.save(&base_path).unwrap();
    let state = AppState::load(&base_path, &dir.path().join("projects"), ControlConfig::default()).unwrap();
    let (addr, _handle) = spawn(Arc::new(state), "127.0.0.1:0").await.unwrap();
    Server {
        dir,
        url: format!("http://{addr}"),
        client: Client::new(),
    }
}

impl Server {
    async fn get(&self, path: &str) -> (StatusCode, String) {
        let resp = self.client.get(format!("{}{path}", self.url)).send().await.unwrap();
        (resp.status(), resp.text().await.unwrap())
    }

    async fn post(&self, path: &str, body: &str) -> (StatusCode, String) {
        let resp = self
            .client
            .post(format!("{}{path}", self.url))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        (resp.status(), resp.text().await.unwrap())
    }

    async fn create(&self, id: &str, lang: &str, size: f64) -> Value {
        let body = json!({
            "project_id": id,
            "context": {"lang": lang, "size": size},
            "planned_duration": 4.0,
        });
        let (status, text) = self.post("/api/projects", &body.to_string()).await;
        assert_eq!(status, StatusCode::CREATED, "{text}");
        serde_json::from_str(&text).unwrap()
    }

    fn project_file(&self, id: &str) -> TrackedProject {
        TrackedProject::load(&self.dir.path().join("projects").join(format!("{id}.tp"))).unwrap()
    }
}

fn parse(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn assert_error(status: StatusCode, text: &str, expected_status: StatusCode, code: &str) {
    assert_eq!(status, expected_status, "{text}");
    let v = parse(text);
    assert_eq!(v["error_code"], code, "{text}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn empty_directory_lists_no_projects() {
    let s = start().await;
    let (status, text) = s.get("/api/projects").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(text, "[]");
}

#[tokio::test]
async fn breaching_measurement_returns_and_persists_deviation() {
    let s = start().await;
    let created = s.create("N1", "rust", 12.0).await;
    assert_eq!(created["project"]["selected_cluster_id"], 0);
    assert_eq!(created["events"][0]["kind"], "Replanned");

    let (status, text) = s.post("/api/projects/N1/measurements", r#"{"t": 0.5, "value": 13}"#).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    // Numbers are written with six decimals.
    assert!(text.contains(r#""actual":13.000000"#), "{text}");
    assert!(text.contains(r#""deviation":0.300000"#), "{text}");
    let v = parse(&text);
    assert_eq!(v["events"].as_array().unwrap().len(), 1);
    assert_eq!(v["events"][0]["kind"], "DeviationDetected");

    // Persisted before the response was sent.
    let on_disk = s.project_file("N1");
    assert_eq!(on_disk.actuals, vec![(0.5, 13.0)]);

    // The next poll of the event feed already shows the alert.
    let (_, events) = s.get("/api/projects/N1/events").await;
    let events = parse(&events);
    assert_eq!(events.as_array().unwrap().last().unwrap()["kind"], "DeviationDetected");

    let (_, inside) = s.post("/api/projects/N1/measurements", r#"{"t": 0.75, "value": 15.5}"#).await;
    assert_eq!(parse(&inside)["events"], json!([]));
}

#[tokio::test]
async fn replan_wrong_experience_switches_cluster() {
    let s = start().await;
    s.create("N1", "rust", 12.0).await;
    let (status, text) = s.post("/api/projects/N1/replan", r#"{"cause": "WrongExperience"}"#).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let v = parse(&text);
    assert_eq!(v["project"]["selected_cluster_id"], 1);
    assert_eq!(v["events"][0]["kind"], "Replanned");
    assert_eq!(v["events"][0]["old_cluster"], 0);
    assert_eq!(v["events"][0]["new_cluster"], 1);

    let corrected = json!({"cause": "WrongContext", "context": {"lang": "rust", "size": 15}});
    let (status, text) = s.post("/api/projects/N1/replan", &corrected.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    assert_eq!(parse(&text)["project"]["selected_cluster_id"], 0);
    assert_eq!(s.project_file("N1").selected_cluster_id, 0);
}

#[tokio::test]
async fn curves_and_clusters_payloads() {
    let s = start().await;
    s.create("N1", "java", 70.0).await;
    s.post("/api/projects/N1/measurements", r#"{"t": 0.5, "value": 30}"#).await;
    let (status, text) = s.get("/api/projects/N1/curves").await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&text);
    assert_eq!(v["grid"], json!([0.0, 0.5, 1.0]));
    assert_eq!(v["plan"], json!([0.0, 40.0, 80.0]));
    assert_eq!(v["corridor_low"], json!([0.0, 32.0, 64.0]));
    assert_eq!(v["corridor_high"], json!([0.0, 48.0, 96.0]));
    assert_eq!(v["actuals"], json!([{"t": 0.5, "value": 30.0}]));

    let (status, text) = s.get("/api/clusters?attribute=effort").await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&text);
    assert_eq!(v["clusters"].as_array().unwrap().len(), 2);
    assert_eq!(v["clusters"][0]["member_ids"], json!(["A1", "A2"]));
    assert_eq!(v["clusters"][0]["curve"], json!([0.0, 10.0, 20.0]));
    assert!(text.contains(r#""threshold":19.364917"#), "{text}");
    // A single-attribute base needs no query parameter.
    assert_eq!(s.get("/api/clusters").await.1, text);

    let (_, schema) = s.get("/api/schema").await;
    assert_eq!(parse(&schema)[1], json!({"name": "size", "kind": "numeric", "weight": 2.0}));

    let (_, list) = s.get("/api/projects").await;
    let list = parse(&list);
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["project_id"], "N1");
    assert_eq!(list[0]["n_actuals"], 1);
}

#[tokio::test]
async fn errors_are_json_with_codes() {
    let s = start().await;
    s.create("N1", "rust", 12.0).await;

    let (st, t) = s.get("/api/projects/missing/curves").await;
    assert_error(st, &t, StatusCode::NOT_FOUND, "PROJECT_NOT_FOUND");

    let (st, t) = s.post("/api/projects/N1/measurements", "{not json").await;
    assert_error(st, &t, StatusCode::BAD_REQUEST, "BAD_REQUEST");

    let (st, t) = s.post("/api/projects/N1/measurements", r#"{"t": 0.5}"#).await;
    assert_error(st, &t, StatusCode::BAD_REQUEST, "BAD_REQUEST");

    let (st, t) = s.get("/api/projects/..%2F..%2Fbase/curves").await;
    assert_error(st, &t, StatusCode::BAD_REQUEST, "INVALID_PROJECT_ID");

    let (st, t) = s.get("/api/clusters?attribute=defects").await;
    assert_error(st, &t, StatusCode::NOT_FOUND, "UNKNOWN_ATTRIBUTE");

    let (st, t) = s.get("/api/nothing").await;
    assert_error(st, &t, StatusCode::NOT_FOUND, "NOT_FOUND");

    let dup = json!({"project_id": "N1", "context": {"lang": "rust"}, "planned_duration": 1.0});
    let (st, t) = s.post("/api/projects", &dup.to_string()).await;
    assert_error(st, &t, StatusCode::CONFLICT, "PROJECT_EXISTS");

    let bad_ctx = json!({"project_id": "N2", "context": {"lang": 3}, "planned_duration": 1.0});
    let (st, t) = s.post("/api/projects", &bad_ctx.to_string()).await;
    assert_error(st, &t, StatusCode::UNPROCESSABLE_ENTITY, "SCHEMA_VIOLATION");

    s.post("/api/projects/N1/measurements", r#"{"t": 0.5, "value": 10}"#).await;
    let before = s.project_file("N1");
    let (st, t) = s.post("/api/projects/N1/measurements", r#"{"t": 0.25, "value": 10}"#).await;
    assert_error(st, &t, StatusCode::UNPROCESSABLE_ENTITY, "NON_MONOTONE_TIME");
    let (st, t) = s.post("/api/projects/N1/replan", r#"{"cause": "WrongContext", "context": {"size": "big"}}"#).await;
    assert_error(st, &t, StatusCode::UNPROCESSABLE_ENTITY, "SCHEMA_VIOLATION");
    let (st, t) = s.post("/api/projects/N1/replan", r#"{"cause": "Bored"}"#).await;
    assert_error(st, &t, StatusCode::BAD_REQUEST, "BAD_REQUEST");
    assert_eq!(s.project_file("N1"), before);
}

#[tokio::test]
async fn concurrent_measurements_never_lose_updates() {
    let s = Arc::new(start().await);
    s.create("N1", "rust", 12.0).await;
    let tasks: Vec<_> = (1..=30)
        .map(|i| {
            let s = Arc::clone(&s);
            tokio::spawn(async move {
                let body = json!({"t": i as f64 / 40.0, "value": i as f64}).to_string();
                s.post("/api/projects/N1/measurements", &body).await.0
            })
        })
        .collect();
    let mut accepted = 0;
    for task in tasks {
        match task.await.unwrap() {
            StatusCode::OK => accepted += 1,
            StatusCode::UNPROCESSABLE_ENTITY => {}
            other => panic!("unexpected status {other}"),
        }
    }
    let project = s.project_file("N1");
    assert!(accepted >= 1);
    assert_eq!(project.actuals.len(), accepted);
    assert!(project.actuals.windows(2).all(|w| w[0].0 < w[1].0));
}

#[tokio::test]
async fn fresh_server_renders_the_same_state_after_replan() {
    let s = start().await;
    s.create("N1", "rust", 12.0).await;
    s.post("/api/projects/N1/measurements", r#"{"t": 0.5, "value": 13}"#).await;
    s.post("/api/projects/N1/replan", r#"{"cause": "WrongExperience"}"#).await;
    let curves = s.get("/api/projects/N1/curves").await.1;
    let events = s.get("/api/projects/N1/events").await.1;

    let state = AppState::load(&s.dir.path().join("base.eb"), &s.dir.path().join("projects"), ControlConfig::default())
        .unwrap();
    let (addr, _handle) = spawn(Arc::new(state), "127.0.0.1:0").await.unwrap();
    let other = format!("http://{addr}");
    let fetch = |path: &'static str| {
        let url = format!("{other}{path}");
        async move { reqwest::get(url).await.unwrap().text().await.unwrap() }
    };
    assert_eq!(fetch("/api/projects/N1/curves").await, curves);
    assert_eq!(fetch("/api/projects/N1/events").await, events);
}
