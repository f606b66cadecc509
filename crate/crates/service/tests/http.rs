use std::net::SocketAddr;
use std::time::{Duration, Instant};

use ekmanlab::ensembles::ModelKind;
use ekmanlab::features::TfIdfConfig;
use ekmanlab::modelstore::{self, BundleMetadata, ModelBundle};
use ekmanlab::pipeline::{train_bundle, EmojiTable, PredictResponse};
use ekmanlab::synth;
use ekmanlab::textnorm::{normalize_full, NormResources, PipelineMode};
use ekmanlab::CoarseLabel;
use ekmanlab_service::{run, AppState, ServiceConfig};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

fn stacking_bundle() -> ModelBundle {
    let data = synth::labelled_texts(400, 21);
    let res = NormResources::bundled();
    let docs: Vec<_> = data.iter().map(|(t, _)| normalize_full(t, &res)).collect();
    let y: Vec<CoarseLabel> = data.iter().map(|(_, l)| *l).collect();
    let cfg = synth::fast_config(ModelKind::Stacking);
    let meta = BundleMetadata {
        model_name: "stacking".into(),
        trained_at: 1_700_000_000,
        dataset_digest: "synthetic".into(),
        config: serde_json::to_value(&cfg).unwrap(),
    };
    train_bundle(&docs, &y, PipelineMode::Full, &res, &TfIdfConfig::default(), &cfg, meta)
        .unwrap()
        .0
}

struct Server {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Server {
    async fn start(config: ServiceConfig) -> Server {
        let state = AppState::new(stacking_bundle(), EmojiTable::default()).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            run(listener, state, &config, async {
                let _ = rx.await;
            })
            .await
        });
        Server {
            addr,
            stop: Some(tx),
            task,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    async fn shutdown(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.await.unwrap().unwrap();
    }
}

async fn post_text(client: &reqwest::Client, url: &str, body: String) -> (u16, Value) {
    let res = client
        .post(url)
        .header("content-type", "application/json")
        .body(body)
        .send()
        .await
        .unwrap();
    let status = res.status().as_u16();
    (status, res.json().await.unwrap())
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn predict_contract() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let url = server.url("/api/predict");

    let (status, body) = post_text(&client, &url, r#"{"text":"I love this, thanks so much!"}"#.into()).await;
    assert_eq!(status, 200);
    let r: PredictResponse = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(r.text, "I love this, thanks so much!");
    assert_eq!(body["probabilities"].as_object().unwrap().len(), 7);
    let total: f64 = r.probabilities.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() <= 1e-6);
    let argmax = r.probabilities.iter().fold(CoarseLabel::Anger, |best, (l, p)| {
        if *p > *r.probabilities.get(best) {
            l
        } else {
            best
        }
    });
    assert_eq!(r.label, argmax);
    assert_eq!(r.emoji, EmojiTable::default().get(r.label));
    assert_eq!(r.model_name, "stacking");

    for (body, code) in [
        ("{}".to_string(), "missing_field"),
        ("not json".to_string(), "invalid_json"),
        (format!(r#"{{"text":"{}"}}"#, "a".repeat(10_001)), "text_too_long"),
    ] {
        let (status, v) = post_text(&client, &url, body).await;
        assert_eq!(status, 400);
        assert_eq!(v["error"]["code"], code);
        assert!(v["error"]["message"].is_string());
    }

    let (status, v) = post_text(&client, &url, r#"{"text":""}"#.into()).await;
    assert_eq!(status, 200);
    assert_eq!(v["empty_input"], true);

    let res = client.get(server.url("/api/nothing")).send().await.unwrap();
    assert_eq!(res.status().as_u16(), 404);
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_and_model_info() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let health = || async {
        let v: Value = client
            .get(server.url("/api/health"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        v
    };
    let first = health().await;
    assert_eq!(first["status"], "ok");
    assert_eq!(first["model_name"], "stacking");
    tokio::time::sleep(Duration::from_millis(20)).await;
    let second = health().await;
    assert!(second["uptime_s"].as_f64().unwrap() > first["uptime_s"].as_f64().unwrap());

    let res = client.get(server.url("/api/model")).send().await.unwrap();
    let raw = res.bytes().await.unwrap();
    assert!(raw.len() < 64 * 1024);
    let v: Value = serde_json::from_slice(&raw).unwrap();
    assert_eq!(v["format_version"], 1);
    assert_eq!(v["metadata"]["trained_at"], 1_700_000_000);
    assert_eq!(v["model_kind"], "stacking");
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn hundred_concurrent_requests() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let url = server.url("/api/predict");
    let texts: Vec<String> = synth::labelled_texts(100, 77)
        .into_iter()
        .enumerate()
        .map(|(i, (t, _))| format!("{t} #{i}"))
        .collect();
    let handles: Vec<_> = texts
        .iter()
        .cloned()
        .map(|text| {
            let client = client.clone();
            let url = url.clone();
            tokio::spawn(async move {
                let start = Instant::now();
                let (status, v) = post_text(&client, &url, serde_json::json!({ "text": text }).to_string()).await;
                (text, status, v, start.elapsed())
            })
        })
        .collect();
    let mut latencies = Vec::new();
    let mut by_text = std::collections::HashMap::new();
    for h in handles {
        let (text, status, v, elapsed) = h.await.unwrap();
        assert_eq!(status, 200);
        let r: PredictResponse = serde_json::from_value(v).unwrap();
        assert_eq!(r.text, text);
        by_text.insert(text, r.probabilities);
        latencies.push(elapsed);
    }
    latencies.sort();
    let p95 = latencies[94];
    assert!(p95 <= Duration::from_millis(1800), "p95 {p95:?}");

    // Identical input gives identical output after the concurrent burst.
    for text in texts.iter().take(5) {
        let (_, v) = post_text(&client, &url, serde_json::json!({ "text": text }).to_string()).await;
        let r: PredictResponse = serde_json::from_value(v).unwrap();
        assert_eq!(&r.probabilities, &by_text[text]);
    }
    server.shutdown().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cors_allowlist_and_ui_mount() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<h1>ui</h1>").unwrap();
    let server = Server::start(ServiceConfig {
        cors_origins: vec!["http://localhost:5173".into()],
        ui_dir: Some(ui.path().to_path_buf()),
        ..Default::default()
    })
    .await;
    let client = reqwest::Client::new();
    let res = client
        .get(server.url("/api/health"))
        .header("origin", "http://localhost:5173")
        .send()
        .await
        .unwrap();
    assert_eq!(res.headers()["access-control-allow-origin"], "http://localhost:5173");
    let res = client
        .get(server.url("/api/health"))
        .header("origin", "http://evil.example")
        .send()
        .await
        .unwrap();
    assert!(res.headers().get("access-control-allow-origin").is_none());
    let page = client
        .get(server.url("/ui/index.html"))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(page, "<h1>ui</h1>");
    server.shutdown().await;
}

#[test]
fn missing_bundle_is_a_startup_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(AppState::load(&dir.path().join("none.emb"), EmojiTable::default()).is_err());
    let path = dir.path().join("m.emb");
    modelstore::save(&stacking_bundle(), &path).unwrap();
    let state = AppState::load(&path, EmojiTable::default()).unwrap();
    assert_eq!(state.bundle().metadata.model_name, "stacking");
}
