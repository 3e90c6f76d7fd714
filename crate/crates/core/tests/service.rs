use std::sync::Arc;
use std::time::Duration;

use mmore_core::index::{save_index, HashEmbedder, HybridIndex};
use mmore_core::postproc::Chunk;
use mmore_core::rag::{serve, ExtractiveGenerator, GenerationInput, Generator, GeneratorError, ServiceConfig};
use serde_json::{json, Value};

fn chunk(id: &str, text: &str) -> Chunk {
    Chunk {
        chunk_id: id.into(),
        doc_id: format!("doc-{id}"),
        text: text.into(),
        token_span: (0, 8),
        tags: vec![],
        modal_refs: vec![],
    }
}

fn build_index(dir: &std::path::Path, chunks: &[Chunk]) {
    let mut idx = HybridIndex::new();
    idx.add_chunks(chunks, &HashEmbedder::default()).unwrap();
    save_index(&idx, dir).unwrap();
}

fn agent() -> ureq::Agent {
    let config = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(10)))
        .http_status_as_error(false)
        .build();
    ureq::Agent::new_with_config(config)
}

fn post(base: &str, path: &str, body: &str) -> (u16, Value) {
    let mut resp = agent()
        .post(format!("{base}{path}"))
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

fn get(base: &str, path: &str) -> (u16, Value) {
    let mut resp = agent().get(format!("{base}{path}")).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap())
}

fn start(index_dir: Option<std::path::PathBuf>, generator: Arc<dyn Generator>) -> mmore_core::rag::ServiceHandle {
    let config = ServiceConfig { bind: "127.0.0.1:0".into(), index_dir, ..ServiceConfig::default() };
    serve(config, Arc::new(HashEmbedder::default()), generator, false).unwrap()
}

#[test]
fn answers_from_loaded_index() {
    let dir = tempfile::tempdir().unwrap();
    build_index(
        dir.path(),
        &[chunk("a", "The harbour opens at dawn."), chunk("b", "Lighthouses guide ships past reefs.")],
    );
    let svc = start(Some(dir.path().to_path_buf()), Arc::new(ExtractiveGenerator));
    let base = format!("http://{}", svc.addr());

    let (s, health) = get(&base, "/health");
    assert_eq!(s, 200);
    assert_eq!(health["status"], "ok");
    assert_eq!(health["chunks"], 2);
    assert_eq!(health["v"], 1);

    let (s, r) = post(&base, "/retrieve", r#"{"query":"lighthouses reefs","k":1,"mode":"sparse"}"#);
    assert_eq!(s, 200, "{r}");
    assert_eq!(r["hits"][0]["chunk_id"], "b");
    assert_eq!(r["hits"][0]["doc_id"], "doc-b");
    assert_eq!(r["hits"][0]["rank"], 1);

    let (s, r) = post(&base, "/rag", r#"{"query":"When does the harbour open?","k":2}"#);
    assert_eq!(s, 200, "{r}");
    assert_eq!(r["answer"], "The harbour opens at dawn.");
    assert_eq!(r["v"], 1);
    assert!(r["sources"].as_array().unwrap().len() <= 2);
    assert!(r["timing"]["total_ms"].as_f64().unwrap() >= 0.0);
    svc.shutdown();
}

#[test]
fn stays_up_without_index_until_reload() {
    let dir = tempfile::tempdir().unwrap();
    let svc = start(Some(dir.path().join("missing")), Arc::new(ExtractiveGenerator));
    let base = format!("http://{}", svc.addr());

    let (s, health) = get(&base, "/health");
    assert_eq!((s, health["status"].as_str()), (200, Some("no_index")));
    let (s, r) = post(&base, "/rag", r#"{"query":"anything"}"#);
    assert_eq!(s, 503);
    assert_eq!(r["error"]["stage"], "retrieve");

    let (s, r) = post(&base, "/admin/reload", "");
    assert_eq!(s, 422, "{r}");
    assert_eq!(r["error"]["stage"], "reload");

    let built = dir.path().join("built");
    build_index(&built, &[chunk("x", "Owls hunt at night.")]);
    let (s, r) = post(&base, "/admin/reload", &json!({"index_dir": built}).to_string());
    assert_eq!(s, 200, "{r}");
    assert_eq!(r["chunks"], 1);
    let (s, r) = post(&base, "/rag", r#"{"query":"When do owls hunt?","k":1}"#);
    assert_eq!(s, 200);
    assert_eq!(r["answer"], "Owls hunt at night.");
}

#[test]
fn malformed_bodies_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    build_index(dir.path(), &[chunk("a", "text")]);
    let svc = start(Some(dir.path().to_path_buf()), Arc::new(ExtractiveGenerator));
    let base = format!("http://{}", svc.addr());
    for body in ["{not json", r#"{"k":2}"#, r#"{"query":"q","mode":"psychic"}"#] {
        let (s, r) = post(&base, "/rag", body);
        assert_eq!(s, 400, "{body}");
        assert_eq!(r["error"]["stage"], "request");
    }
    let (s, _) = get(&base, "/health");
    assert_eq!(s, 200);
}

struct Failing;

impl Generator for Failing {
    fn identity(&self) -> String {
        "failing".into()
    }

    fn generate(&self, _: &GenerationInput<'_>) -> Result<String, GeneratorError> {
        Err(GeneratorError::Backend("model offline".into()))
    }
}

#[test]
fn generator_failure_is_a_structured_502() {
    let dir = tempfile::tempdir().unwrap();
    build_index(dir.path(), &[chunk("a", "text")]);
    let svc = start(Some(dir.path().to_path_buf()), Arc::new(Failing));
    let base = format!("http://{}", svc.addr());
    let (s, r) = post(&base, "/rag", r#"{"query":"text"}"#);
    assert_eq!(s, 502);
    assert_eq!(r["error"]["stage"], "generate");
    assert!(r["error"]["message"].as_str().unwrap().contains("model offline"));
}

#[test]
fn shutdown_releases_the_port() {
    let svc = start(None, Arc::new(ExtractiveGenerator));
    let addr = svc.addr();
    svc.shutdown();
    assert!(std::net::TcpStream::connect_timeout(&addr, Duration::from_millis(500)).is_err());
}
