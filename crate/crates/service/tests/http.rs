use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use clickseg::forge::{reshuffle_compose, ComposeConfig};
use clickseg::geometry::io::{load_cloud, parse_labels, write_xyzn};
use clickseg::{replay, Backend, Click, ClickKind, HyperParams, Shape};
use clickseg_service::{router, AppState, ServiceConfig};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

struct Server {
    base: String,
    client: Client,
    _dir: Option<tempfile::TempDir>,
}

async fn start(dir: &Path, max_points: usize) -> String {
    let cfg = ServiceConfig { max_points, ..ServiceConfig::new(dir.to_path_buf()) };
    let state = Arc::new(AppState::new(cfg).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    format!("http://{addr}")
}

impl Server {
    async fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let base = start(dir.path(), 10_000).await;
        Self { base, client: Client::new(), _dir: Some(dir) }
    }

    fn url(&self, p: &str) -> String {
        format!("{}{p}", self.base)
    }

    async fn post(&self, p: &str, body: Value) -> (StatusCode, Value) {
        let r = self.client.post(self.url(p)).json(&body).send().await.unwrap();
        let s = r.status();
        (s, r.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, p: &str) -> (StatusCode, Value) {
        let r = self.client.get(self.url(p)).send().await.unwrap();
        let s = r.status();
        (s, r.json().await.unwrap_or(Value::Null))
    }

    async fn upload(&self, body: String) -> (StatusCode, Value) {
        let r = self.client.post(self.url("/shapes")).body(body).send().await.unwrap();
        let s = r.status();
        (s, r.json().await.unwrap_or(Value::Null))
    }

    async fn session(&self, shape: &str) -> String {
        let (s, v) = self.post("/sessions", json!({ "shape_id": shape, "backend": "descriptor" })).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_string()
    }

    async fn op(&self, session: &str, body: Value) -> (StatusCode, Value) {
        self.post(&format!("/sessions/{session}/ops"), body).await
    }
}

fn shape(n: usize) -> Shape {
    reshuffle_compose(&ComposeConfig { k_min: 4, k_max: 6, n_points: n, ..ComposeConfig::default() }, 11).unwrap()
}

fn indices(v: &Value) -> Vec<usize> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn upload_contract() {
    let srv = Server::new().await;
    let text = write_xyzn(shape(4096).cloud());
    let (s, a) = srv.upload(text.clone()).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(a["points"], 4096);
    let (_, b) = srv.upload(text.clone()).await;
    assert_eq!(a["id"], b["id"]);

    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[16] = "1 2 three 0 0 1".into();
    let (s, e) = srv.upload(lines.join("\n")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["line"], 17);
    assert!(e["error"].as_str().unwrap().contains("17"));

    let big = write_xyzn(shape(10_001).cloud());
    assert_eq!(srv.upload(big).await.0, StatusCode::PAYLOAD_TOO_LARGE);

    let id = a["id"].as_str().unwrap();
    let r = srv.client.get(srv.url(&format!("/shapes/{id}"))).send().await.unwrap();
    assert_eq!(r.headers()["x-points"], "4096");
    assert_eq!(r.bytes().await.unwrap().len(), 4 + 4096 * 24);
    assert_eq!(srv.get("/shapes/nope").await.0, StatusCode::NOT_FOUND);
    let h = srv.client.get(srv.url("/healthz")).send().await.unwrap();
    assert_eq!(h.text().await.unwrap(), "ok");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn mutations_match_offline_replay() {
    let srv = Server::new().await;
    let sh = shape(2048);
    let (_, meta) = srv.upload(write_xyzn(sh.cloud())).await;
    let id = meta["id"].as_str().unwrap().to_string();
    let sess = srv.session(&id).await;

    let (s, d) = srv.op(&sess, json!({ "op": "add", "kind": "positive", "index": 5 })).await;
    assert_eq!(s, StatusCode::OK);
    let first_added = indices(&d["added"]);
    assert!(first_added.contains(&5));
    let (_, d2) = srv.op(&sess, json!({ "op": "add", "kind": "positive", "index": 900 })).await;
    let (_, u) = srv.op(&sess, json!({ "op": "undo" })).await;
    assert_eq!(indices(&u["removed"]), indices(&d2["added"]));
    assert_eq!(indices(&u["added"]), indices(&d2["removed"]));

    let script = [
        Click { kind: ClickKind::Positive, index: 5 },
        Click { kind: ClickKind::Negative, index: 1500 },
        Click { kind: ClickKind::Positive, index: 300 },
    ];
    srv.op(&sess, json!({ "op": "add", "kind": "negative", "index": 1500 })).await;
    srv.op(&sess, json!({ "op": "add", "kind": "positive", "index": 300 })).await;
    let (_, m) = srv.get(&format!("/sessions/{sess}/mask")).await;

    let stored = load_cloud::<f64>(&srv._dir.as_ref().unwrap().path().join("shapes").join(format!("{id}.xyzn"))).unwrap();
    let hp = HyperParams::default();
    let offline = replay(stored, &Backend::descriptor(), &script, hp.alpha, hp.postprocess(true, true)).unwrap();
    assert_eq!(indices(&m["indices"]), offline.mask().indices());

    let (s, e) = srv.op(&sess, json!({ "op": "add", "kind": "negative", "index": 5 })).await;
    assert_eq!(s, StatusCode::CONFLICT, "{e}");
    assert_eq!(srv.op(&sess, json!({ "op": "remove", "index": 77 })).await.0, StatusCode::CONFLICT);
    assert_eq!(srv.op(&sess, json!({ "op": "add", "kind": "positive", "index": 99999 })).await.0, StatusCode::CONFLICT);
    assert_eq!(srv.op("s999", json!({ "op": "undo" })).await.0, StatusCode::NOT_FOUND);
    let (_, after) = srv.get(&format!("/sessions/{sess}/mask")).await;
    assert_eq!(after["indices"], m["indices"]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scribble_is_one_request_equal_to_sequential_clicks() {
    let srv = Server::new().await;
    let (_, meta) = srv.upload(write_xyzn(shape(2048).cloud())).await;
    let id = meta["id"].as_str().unwrap().to_string();
    let a = srv.session(&id).await;
    let b = srv.session(&id).await;
    for s in [&a, &b] {
        srv.op(s, json!({ "op": "add", "kind": "positive", "index": 10 })).await;
    }
    let stroke: Vec<usize> = (0..30).map(|k| 1000 + 7 * k).collect();
    let (s, _) = srv.op(&a, json!({ "op": "scribble", "indices": stroke })).await;
    assert_eq!(s, StatusCode::OK);
    for i in &stroke {
        srv.op(&b, json!({ "op": "add", "kind": "negative", "index": i })).await;
    }
    let (_, ma) = srv.get(&format!("/sessions/{a}/mask")).await;
    let (_, mb) = srv.get(&format!("/sessions/{b}/mask")).await;
    assert_eq!(ma["indices"], mb["indices"]);
    assert_eq!(indices(&ma["negatives"]).len(), 30);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn debug_ground_truth_reports_iou_and_finetune_lowers_energy() {
    let srv = Server::new().await;
    let sh = shape(2048);
    let (_, meta) = srv.upload(write_xyzn(sh.cloud())).await;
    let id = meta["id"].as_str().unwrap();
    let gt = sh.segment_mask(&[0]).indices();
    let (_, v) = srv.post("/sessions", json!({ "shape_id": id, "backend": "descriptor", "gt": gt })).await;
    let sess = v["id"].as_str().unwrap();
    let (_, d) = srv.op(sess, json!({ "op": "add", "kind": "positive", "index": gt[0] })).await;
    let iou = d["iou"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&iou));
    let outside = (0..2048).find(|i| !gt.contains(i)).unwrap();
    srv.op(sess, json!({ "op": "add", "kind": "negative", "index": outside })).await;
    let (s, f) = srv.post(&format!("/sessions/{sess}/finetune"), json!({ "steps": 5 })).await;
    assert_eq!(s, StatusCode::OK, "{f}");
    let e: Vec<f64> = f["energy"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(srv.post("/sessions", json!({ "shape_id": id, "backend": "bogus" })).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(srv.post("/sessions", json!({ "shape_id": "missing", "backend": "descriptor" })).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn commits_persist_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let base = start(dir.path(), 10_000).await;
    let srv = Server { base, client: Client::new(), _dir: None };
    let (_, meta) = srv.upload(write_xyzn(shape(1024).cloud())).await;
    let id = meta["id"].as_str().unwrap().to_string();
    let sess = srv.session(&id).await;

    let (s, _) = srv.post(&format!("/sessions/{sess}/commit"), json!({ "label": "empty" })).await;
    assert_eq!(s, StatusCode::CONFLICT);

    srv.op(&sess, json!({ "op": "add", "kind": "positive", "index": 3 })).await;
    let (s, r0) = srv.post(&format!("/sessions/{sess}/commit"), json!({ "label": "leg" })).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(r0["clicks"], json!([{ "kind": "positive", "index": 3 }]));
    let (_, m) = srv.get(&format!("/sessions/{sess}/mask")).await;
    assert!(indices(&m["indices"]).is_empty());

    let first: BTreeSet<usize> = indices(&r0["indices"]).into_iter().collect();
    let other = (0..1024).find(|i| !first.contains(i)).unwrap();
    srv.op(&sess, json!({ "op": "add", "kind": "positive", "index": other })).await;
    srv.post(&format!("/sessions/{sess}/commit"), json!({ "label": "seat" })).await;

    // a second server over the same directory sees both records
    let base2 = start(dir.path(), 10_000).await;
    let srv2 = Server { base: base2, client: Client::new(), _dir: None };
    let (_, list) = srv2.get(&format!("/shapes/{id}/annotations")).await;
    let labels: Vec<&str> = list.as_array().unwrap().iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, vec!["leg", "seat"]);
    assert_eq!(list[0]["clicks"], r0["clicks"]);

    let text = srv2.client.get(srv2.url(&format!("/shapes/{id}/labels"))).send().await.unwrap().text().await.unwrap();
    let ids: BTreeSet<i64> = parse_labels(&text).unwrap().into_iter().collect();
    assert_eq!(ids, BTreeSet::from([-1, 0, 1]));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_on_one_session_are_serialized() {
    let srv = Arc::new(Server::new().await);
    let (_, meta) = srv.upload(write_xyzn(shape(2048).cloud())).await;
    let sess = srv.session(meta["id"].as_str().unwrap()).await;
    let tasks: Vec<_> = (0..12)
        .map(|k| {
            let srv = srv.clone();
            let sess = sess.clone();
            tokio::spawn(async move { srv.op(&sess, json!({ "op": "add", "kind": "positive", "index": 100 * k + 1 })).await.0 })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, m) = srv.get(&format!("/sessions/{sess}/mask")).await;
    assert_eq!(indices(&m["positives"]).len(), 12);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn mutation_round_trip_is_interactive() {
    let srv = Server::new().await;
    let (_, meta) = srv.upload(write_xyzn(shape(4096).cloud())).await;
    let sess = srv.session(meta["id"].as_str().unwrap()).await;
    let mut worst = 0.0f64;
    for k in 0..10 {
        let kind = if k % 3 == 2 { "negative" } else { "positive" };
        let t = Instant::now();
        let (s, _) = srv.op(&sess, json!({ "op": "add", "kind": kind, "index": 400 * k + 3 })).await;
        worst = worst.max(t.elapsed().as_secs_f64());
        assert_eq!(s, StatusCode::OK);
    }
    assert!(worst < 0.1, "slowest mutation {worst:.3} s");
}
