mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Stdio};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use iecsi::service::{router, AppState};

struct Api {
    router: Router,
}

impl Api {
    fn open(root: &std::path::Path) -> (Api, AppState) {
        let state = AppState::open(root).unwrap();
        (
            Api {
                router: router(state.clone()),
            },
            state,
        )
    }

    async fn raw(
        &self,
        method: Method,
        uri: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec();
        (status, bytes)
    }

    async fn call(
        &self,
        method: Method,
        uri: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let (status, bytes) = self.raw(method, uri, token, body).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    async fn get(&self, uri: &str, token: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, Some(token), None).await
    }

    async fn post(&self, uri: &str, token: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(token), Some(body)).await
    }
}

fn live_design() -> Value {
    let text = std::fs::read_to_string(common::golden_study().join("study.json")).unwrap();
    let mut design: Value = serde_json::from_str(&text).unwrap();
    design["study_id"] = json!("live");
    design
}

fn answers(step: &Value, value: i32) -> Value {
    let items: Vec<Value> = step["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| json!({"instrument_id": i["instrument_id"], "item_id": i["item_id"], "value": value}))
        .collect();
    Value::Array(items)
}

#[tokio::test]
async fn participant_flow_and_ratings() {
    let root = tempfile::tempdir().unwrap();
    let (api, _) = Api::open(root.path());

    let (status, created) = api
        .call(Method::POST, "/v1/studies", None, Some(live_design()))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(created["study_id"], "live");
    let researcher = created["researcher_token"].as_str().unwrap().to_owned();
    let (status, _) = api
        .call(Method::POST, "/v1/studies", None, Some(live_design()))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, s) = api
        .post(
            "/v1/studies/live/sessions",
            &researcher,
            json!({"participant_id": "p01", "condition_id": "conv", "topic": "tides"}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(s["session_id"], "p01-conv");
    let participant = s["participant_token"].as_str().unwrap().to_owned();

    // pre-search questionnaire: items first, then the summary
    let (status, step) = api.get("/v1/session/next", &participant).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(step["step"], "pre_questionnaire");
    assert!(step["items"]
        .as_array()
        .unwrap()
        .iter()
        .all(|i| i["answered"] == false));
    let (status, r) = api
        .post(
            "/v1/session/responses",
            &participant,
            json!({"responses": answers(&step, 3), "demographics": {"age_band": "25-34"}}),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["state"], "created");
    let (status, _) = api
        .post(
            "/v1/session/summary",
            &participant,
            json!({"phase": "post", "text": "early"}),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, r) = api
        .post(
            "/v1/session/summary",
            &participant,
            json!({"phase": "pre", "text": "Tides follow the moon."}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(r["state"], "pre_done");
    assert_eq!(r["summary_id"], "p01-conv-pre");

    // replays are rejected
    let (status, _) = api
        .post(
            "/v1/session/responses",
            &participant,
            json!({"responses": answers(&step, 3)}),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = api
        .post(
            "/v1/session/summary",
            &participant,
            json!({"phase": "pre", "text": "again"}),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, step) = api.get("/v1/session/next", &participant).await;
    assert_eq!(
        step,
        json!({"step": "task", "session_id": "p01-conv", "condition_id": "conv", "topic": "tides"})
    );
    let (status, _) = api
        .post("/v1/session/task", &participant, json!({"docs_viewed": 4}))
        .await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = api
        .post("/v1/session/task", &participant, json!({"docs_viewed": 9}))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, step) = api.get("/v1/session/next", &participant).await;
    assert_eq!(step["step"], "post_questionnaire");
    let first = &step["items"][0];
    let bad = json!({"responses": [{"instrument_id": first["instrument_id"], "item_id": first["item_id"], "value": 8}]});
    let (status, _) = api.post("/v1/session/responses", &participant, bad).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let wrong_phase = json!({"responses": [{"instrument_id": "SAL", "item_id": "background_knowledge", "value": 3}]});
    let (status, _) = api
        .post("/v1/session/responses", &participant, wrong_phase)
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, r) = api
        .post(
            "/v1/session/responses",
            &participant,
            json!({"responses": answers(&step, 6)}),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(r["accepted"], step["items"].as_array().unwrap().len());
    let (status, _) = api
        .post(
            "/v1/session/responses",
            &participant,
            json!({"responses": answers(&step, 6)}),
        )
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, r) = api
        .post(
            "/v1/session/summary",
            &participant,
            json!({"phase": "post", "text": "  "}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(r["zero_length"], true);
    assert_eq!(r["state"], "post_done");

    let (_, step) = api.get("/v1/session/next", &participant).await;
    assert_eq!(step["step"], "done");
    let (status, _) = api
        .call(Method::POST, "/v1/session/close", Some(&participant), None)
        .await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = api.get("/v1/session/next", &participant).await;
    assert_eq!(status, StatusCode::GONE);

    // persisted row for row
    let stored = iecsi::storage::load_study(&root.path().join("live")).unwrap();
    let session = stored.session("p01-conv").unwrap();
    assert_eq!(session.docs_viewed, 4);
    assert!(session
        .responses(iecsi::model::Phase::Pre)
        .iter()
        .all(|r| r.value == 3));
    assert!(session
        .responses(iecsi::model::Phase::Post)
        .iter()
        .all(|r| r.value == 6));
    assert_eq!(stored.participants[0].demographics["age_band"], "25-34");

    // annotators
    let mut tokens = Vec::new();
    for a in ["a1", "a2"] {
        let (status, r) = api
            .post(
                "/v1/studies/live/annotators",
                &researcher,
                json!({"annotator_id": a}),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED);
        tokens.push(r["annotator_token"].as_str().unwrap().to_owned());
    }
    let (_, list) = api.get("/v1/studies/live/summaries", &tokens[0]).await;
    assert_eq!(list["summaries"].as_array().unwrap().len(), 2);
    let (_, agreement) = api.get("/v1/studies/live/agreement", &tokens[0]).await;
    assert_eq!(agreement["status"], "insufficient");

    let rate = |id: &str, q: u8, i: u8, c: u8| json!({"summary_id": id, "dqual": q, "dintrp": i, "dcrit": c});
    let (status, _) = api
        .post("/v1/ratings", &tokens[0], rate("p01-conv-pre", 4, 0, 0))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = api
        .post("/v1/ratings", &tokens[0], rate("nope", 1, 0, 0))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    for t in &tokens {
        let (status, _) = api
            .post("/v1/ratings", t, rate("p01-conv-pre", 1, 0, 0))
            .await;
        assert_eq!(status, StatusCode::CREATED);
        let (status, _) = api
            .post("/v1/ratings", t, rate("p01-conv-post", 3, 2, 1))
            .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let (status, _) = api
        .post("/v1/ratings", &tokens[1], rate("p01-conv-pre", 1, 0, 0))
        .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (_, agreement) = api.get("/v1/studies/live/agreement", &researcher).await;
    assert_eq!(agreement["status"], "ok");
    assert_eq!(agreement["rated_pairs"], 2);
    assert_eq!(agreement["kappa"]["dqual"], 1.0);
    assert_eq!(agreement["gate_passed"], true);

    let (status, report) = api.get("/v1/studies/live/analysis", &researcher).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["complete"], false);
}

#[tokio::test]
async fn authorization() {
    let root = tempfile::tempdir().unwrap();
    let (api, _) = Api::open(root.path());
    let (_, a) = api
        .call(Method::POST, "/v1/studies", None, Some(live_design()))
        .await;
    let mut other = live_design();
    other["study_id"] = json!("other");
    let (_, b) = api
        .call(Method::POST, "/v1/studies", None, Some(other))
        .await;
    let token_a = a["researcher_token"].as_str().unwrap();
    let token_b = b["researcher_token"].as_str().unwrap();

    let (status, _) = api
        .call(Method::GET, "/v1/studies/live/analysis", None, None)
        .await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = api.get("/v1/studies/live/analysis", "bogus").await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = api.get("/v1/studies/live/agreement", token_b).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = api.get("/v1/studies/missing/analysis", token_a).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = api.get("/v1/session/next", token_a).await;
    assert_eq!(status, StatusCode::FORBIDDEN);

    let (_, s) = api
        .post(
            "/v1/studies/live/sessions",
            token_a,
            json!({"participant_id": "p01", "condition_id": "conv"}),
        )
        .await;
    let participant = s["participant_token"].as_str().unwrap();
    let (status, _) = api.get("/v1/studies/live/summaries", participant).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = api
        .post(
            "/v1/ratings",
            participant,
            json!({"summary_id": "x", "dqual": 0, "dintrp": 0, "dcrit": 0}),
        )
        .await;
    assert_eq!(status, StatusCode::FORBIDDEN);

    // empty study: analysis is a validation error
    let (status, body) = api.get("/v1/studies/other/analysis", token_b).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.to_string().contains("no sessions"), "{body}");
}

#[tokio::test]
async fn invalid_design_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let (api, _) = Api::open(root.path());
    let mut design = live_design();
    design["conditions"].as_array_mut().unwrap().truncate(1);
    let (status, _) = api
        .call(Method::POST, "/v1/studies", None, Some(design))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(!root.path().join("live").exists());
}

#[tokio::test]
async fn gate_failure_is_conflict() {
    let root = tempfile::tempdir().unwrap();
    common::copy_dir(&common::golden_study(), &root.path().join("synth-7"));
    common::plant_dqual(&root.path().join("synth-7"), &[3, 3, 2, 0], &[3, 2, 2, 0]);
    let (api, state) = Api::open(root.path());
    let token = state.ensure_researcher_tokens().unwrap().remove(0).1;
    let (status, body) = api.get("/v1/studies/synth-7/analysis", &token).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body.to_string().contains("dqual"), "{body}");
    let (_, agreement) = api.get("/v1/studies/synth-7/agreement", &token).await;
    assert_eq!(agreement["gate_passed"], false);
    assert_eq!(agreement["kappa"]["dqual"].as_f64().unwrap(), 7.0 / 11.0);
}

#[tokio::test]
async fn analysis_matches_cli_output() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("synth-7");
    common::copy_dir(&common::golden_study(), &dir);
    let (api, state) = Api::open(root.path());
    let tokens = state.ensure_researcher_tokens().unwrap();
    assert_eq!(tokens.len(), 1);
    // tokens are stable across restarts
    assert_eq!(
        AppState::open(root.path())
            .unwrap()
            .ensure_researcher_tokens()
            .unwrap(),
        tokens
    );

    let (status, body) = api
        .raw(
            Method::GET,
            "/v1/studies/synth-7/analysis",
            Some(&tokens[0].1),
            None,
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let cli = Command::new(env!("CARGO_BIN_EXE_iecsi"))
        .args(["analyze", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(cli.status.success());
    assert_eq!(body, cli.stdout);
}

fn http(addr: &str, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).unwrap();
    let status = text[9..12].parse().unwrap();
    let body = text.split("\r\n\r\n").nth(1).unwrap_or("").to_owned();
    (status, body)
}

#[test]
fn serve_round_trip_and_sigint() {
    let root = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_iecsi"))
        .args([
            "serve",
            "--addr",
            "127.0.0.1:0",
            "--data",
            root.path().to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server output").unwrap();
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.to_owned();
        }
    };

    let (status, body) = http(&addr, "POST", "/v1/studies", &live_design().to_string());
    assert_eq!(status, 201, "{body}");
    let created: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(created["study_id"], "live");
    assert!(root.path().join("live/study.json").is_file());

    unsafe { libc::kill(child.id() as libc::pid_t, libc::SIGINT) };
    let status = child.wait().unwrap();
    assert!(status.success());
    let rest: Vec<String> = lines.map(Result::unwrap).collect();
    assert_eq!(rest, ["shut down"]);
    let journal = std::fs::read_to_string(root.path().join("journal.log")).unwrap();
    assert_eq!(journal, "create live\nclose\n");
}
