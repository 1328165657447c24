mod common;

use std::net::TcpListener;
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use common::{get_json, post_json, ranking};
use serde_json::json;

fn metarank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metarank"))
        .args(args)
        .env_remove("METARANK_PORT")
        .env_remove("METARANK_INDEX")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = metarank(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve(index: &str, port: u16) -> Server {
    let child = Command::new(env!("CARGO_BIN_EXE_metarank"))
        .args(["serve", "--index", index, "--dim", "64"])
        .env("METARANK_PORT", port.to_string())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let server = Server(child);
    let url = format!("http://127.0.0.1:{port}/v1/health");
    let deadline = Instant::now() + Duration::from_secs(30);
    while Instant::now() < deadline {
        if std::net::TcpStream::connect(("127.0.0.1", port)).is_ok() && get_json(&url).0 == 200 {
            return server;
        }
        thread::sleep(Duration::from_millis(50));
    }
    panic!("server on {port} never became healthy");
}

#[test]
fn synth_ingest_build_serve_refresh() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    ok(&[
        "synth",
        "--docs",
        "150",
        "--queries",
        "5",
        "--seed",
        "3",
        "--out",
        &d("data"),
    ]);
    let schema = d("data/schema.json");
    let catalog = d("data/catalog.jsonl");
    assert!(ok(&["ingest", "--schema", &schema, "--catalog", &catalog]).contains("150 documents"));
    ok(&[
        "build",
        "--schema",
        &schema,
        "--catalog",
        &catalog,
        "--out",
        &d("build"),
        "--dim",
        "64",
    ]);

    let mut answers = Vec::new();
    for _ in 0..2 {
        let port = free_port();
        let _server = serve(&d("build"), port);
        let base = format!("http://127.0.0.1:{port}");
        let (status, body) = post_json(
            &format!("{base}/v1/recommend"),
            &json!({"query": "Azure datasheet"}),
        );
        assert_eq!(status, 200, "{body}");
        answers.push(ranking(&body));

        let out = ok(&["refresh", "--url", &base]);
        assert!(out.contains("202"), "{out}");
        let deadline = Instant::now() + Duration::from_secs(30);
        while get_json(&format!("{base}/v1/health")).1["generation"] != 2 {
            assert!(Instant::now() < deadline, "refresh never landed");
            thread::sleep(Duration::from_millis(50));
        }
    }
    assert_eq!(answers[0].len(), 5);
    assert_eq!(answers[0], answers[1]);

    let bench_md = d("bench.md");
    let out = ok(&[
        "bench",
        "--index",
        &d("build"),
        "--queries",
        &d("data/queries.txt"),
        "--batch-sizes",
        "1,4",
        "--dim",
        "64",
        "--warmup",
        "0",
        "--markdown",
        &bench_md,
        "--csv",
        &d("bench.csv"),
    ]);
    assert!(out.contains("b=4"), "{out}");
    assert!(std::fs::read_to_string(d("bench.csv"))
        .unwrap()
        .starts_with("label,stat,b=1,b=4"));

    // rebuild files in place
    ok(&[
        "refresh",
        "--schema",
        &schema,
        "--catalog",
        &catalog,
        "--out",
        &d("build2"),
        "--dim",
        "64",
    ]);
    assert!(dir.path().join("build2/manifest.json").exists());
}

#[test]
fn eval_subcommands() {
    let t2 = ok(&["eval", "table2"]);
    assert!(
        t2.contains("15") && t2.contains("2.74") && t2.contains("3.26"),
        "{t2}"
    );
    let ab = ok(&["eval", "ablation"]);
    assert!(ab.contains("Dynamics 365"), "{ab}");
}

#[test]
fn failures_exit_non_zero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json").to_string_lossy().into_owned();
    let out = metarank(&["ingest", "--schema", &missing, "--catalog", &missing]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));

    let out = metarank(&["build", "--schema", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = metarank(&["serve"]);
    assert!(!out.status.success());
    let out = metarank(&["refresh", "--url", "http://127.0.0.1:9"]);
    assert!(!out.status.success());
}
