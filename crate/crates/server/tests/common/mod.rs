#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use metarank::evalkit::synthetic::collateral_catalog;
use metarank::{BackendConfig, Backends, Catalog, RerankConfig};
use metarank_server::artifacts::{build_from_files, Sources};
use metarank_server::state::ServiceState;
use serde_json::Value;

pub const DIM: usize = 64;

/// Collateral catalog whose ids carry `prefix`, so every result names the
/// build it came from.
pub fn prefixed_catalog(prefix: &str, n: usize, seed: u64) -> Catalog {
    let mut cat = collateral_catalog(n, seed);
    for d in &mut cat.documents {
        d.id = format!("{prefix}-{}", d.id);
    }
    cat
}

/// Writes `schema.json` and `catalog.jsonl` under `dir`.
pub fn write_sources(dir: &Path, cat: &Catalog) -> Sources {
    std::fs::create_dir_all(dir).unwrap();
    let schema = dir.join("schema.json");
    let catalog = dir.join("catalog.jsonl");
    std::fs::write(&schema, cat.schema.to_json()).unwrap();
    cat.save(&catalog).unwrap();
    Sources { schema, catalog }
}

pub fn backends() -> Backends {
    Backends::from_config(&BackendConfig::stub(DIM)).unwrap()
}

pub fn state() -> Arc<ServiceState> {
    Arc::new(ServiceState::new(backends(), RerankConfig::default(), 512))
}

pub fn state_from(sources: &Sources) -> Arc<ServiceState> {
    let s = state();
    let build = build_from_files(sources, s.backends().bi.as_ref(), 512).unwrap();
    s.install(build).unwrap();
    s
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn post_json(url: &str, body: &Value) -> (u16, Value) {
    let mut resp = agent().post(url).send_json(body).unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}

pub fn post_raw(url: &str, body: &str) -> (u16, Value) {
    let mut resp = agent()
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}

pub fn get_json(url: &str) -> (u16, Value) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().unwrap_or(Value::Null))
}

/// Result ids with latency stripped, for comparing responses.
pub fn ranking(resp: &Value) -> Vec<(String, u64, u64)> {
    resp["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["doc_id"].as_str().unwrap().to_string(),
                (r["cross_score"].as_f64().unwrap() as f32).to_bits() as u64,
                r["rank"].as_u64().unwrap(),
            )
        })
        .collect()
}
