use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

const TINY: &str = "epochs = 2\nvocab_size = 128\nembed_dim = 8\nlatent_dim = 4\nhidden_dim = 6\n\n[baseline]\nepochs = 2\n";

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data")
}

fn hypergen(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypergen"))
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("MODELGPT_LLM_KEY")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn trained(dir: &Path) {
    std::fs::write(dir.join("tiny.toml"), TINY).unwrap();
    let data = data_dir();
    ok(&hypergen(
        &["train", "--config", "tiny.toml", "--tasks", data.to_str().unwrap(), "--out", "ckpt.mgpt"],
        dir,
    ));
}

#[test]
fn train_then_generate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    let req = "This is a tabular classification into 3 classes task on 4-dimensional rows from iris.";
    let a = ok(&hypergen(&["generate", "--ckpt", "ckpt.mgpt", "--requirement", req, "--out", "a.mgpt"], dir));
    ok(&hypergen(&["generate", "--ckpt", "ckpt.mgpt", "--requirement", req, "--out", "b.mgpt"], dir));
    assert!(a.contains("in_dim=4") && a.contains("out_dim=3"), "{a}");
    assert_eq!(std::fs::read(dir.join("a.mgpt")).unwrap(), std::fs::read(dir.join("b.mgpt")).unwrap());

    // counts from flags when the sentence lacks them
    let c = ok(&hypergen(
        &[
            "generate", "--ckpt", "ckpt.mgpt", "--requirement", "Classify iris flowers.", "--features", "4",
            "--classes", "3", "--out", "c.mgpt",
        ],
        dir,
    ));
    assert!(c.contains("in_dim=4"), "{c}");

    let bad = hypergen(&["generate", "--ckpt", "ckpt.mgpt", "--requirement", "hello there", "--out", "x.mgpt"], dir);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("does not name a task type"));
    assert!(!dir.join("x.mgpt").exists());

    std::fs::write(dir.join("junk.mgpt"), b"not a checkpoint").unwrap();
    let junk = hypergen(&["generate", "--ckpt", "junk.mgpt", "--requirement", req, "--out", "y.mgpt"], dir);
    assert!(!junk.status.success());
}

#[test]
fn bench_and_init_study_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    let data = data_dir();
    let out = ok(&hypergen(
        &[
            "bench", "--ckpt", "ckpt.mgpt", "--tasks", data.to_str().unwrap(), "--methods", "finetune,modelgpt",
            "--config", "tiny.toml", "--report", "rep",
        ],
        dir,
    ));
    assert!(out.contains("| modelgpt |"));
    let csv = std::fs::read_to_string(dir.join("rep/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    assert!(dir.join("rep/report.md").exists());

    let no_ckpt = hypergen(
        &["bench", "--tasks", data.to_str().unwrap(), "--methods", "modelgpt", "--report", "rep2"],
        dir,
    );
    assert!(!no_ckpt.status.success());

    let iris = data.join("iris.csv");
    ok(&hypergen(
        &[
            "init-study", "--ckpt", "ckpt.mgpt", "--task", iris.to_str().unwrap(), "--seeds", "2", "--config",
            "tiny.toml", "--report", "study",
        ],
        dir,
    ));
    for f in ["curves_generated.csv", "curves_fresh.csv", "summary.md"] {
        assert!(dir.join("study").join(f).exists(), "{f}");
    }
    let curves = std::fs::read_to_string(dir.join("study/curves_fresh.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 2);
}

/// Accepts one connection if any arrives within `wait`, answering with a
/// canned completion; returns the Authorization header it saw.
fn one_shot_server(reply: &'static str) -> (String, std::thread::JoinHandle<Option<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let deadline = std::time::Instant::now() + Duration::from_secs(20);
        let stream = loop {
            match listener.accept() {
                Ok((s, _)) => break s,
                Err(_) if std::time::Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
                Err(_) => return None,
            }
        };
        stream.set_nonblocking(false).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let (mut auth, mut len) = (None, 0usize);
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                match k.to_ascii_lowercase().as_str() {
                    "authorization" => auth = Some(v.trim().to_string()),
                    "content-length" => len = v.trim().parse().unwrap(),
                    _ => {}
                }
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let payload = serde_json_reply(reply);
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
            payload.len()
        )
        .unwrap();
        auth
    });
    (url, handle)
}

fn serde_json_reply(content: &str) -> String {
    format!(
        "{{\"choices\":[{{\"index\":0,\"message\":{{\"role\":\"assistant\",\"content\":\"{}\"}}}}]}}",
        content.replace('"', "\\\"")
    )
}

#[test]
fn requirement_uses_the_key_only_with_llm_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let wine = data_dir().join("wine.csv");
    let wine = wine.to_str().unwrap();

    let template = ok(&hypergen(&["requirement", "--data", wine], dir));
    assert_eq!(
        template.trim(),
        "This is a tabular classification into 3 classes task on 13-dimensional rows from wine."
    );

    let (url, server) = one_shot_server("Step one. This is a tabular classification into 3 classes task on wine chemistry.");
    std::fs::write(dir.join("llm.toml"), format!("[llm]\nendpoint = \"{url}\"\nmodel = \"m\"\ntimeout_secs = 10\n")).unwrap();
    let run = |llm: bool| {
        let mut args = vec!["requirement", "--data", wine, "--config", "llm.toml"];
        if llm {
            args.push("--llm");
        }
        let out = Command::new(env!("CARGO_BIN_EXE_hypergen"))
            .args(&args)
            .current_dir(dir)
            .env("MODELGPT_LLM_KEY", "k-123")
            .output()
            .unwrap();
        ok(&out)
    };
    assert_eq!(run(false), template, "without --llm no request is made");
    let answer = run(true);
    assert_eq!(answer.trim(), "This is a tabular classification into 3 classes task on wine chemistry.");
    assert_eq!(server.join().unwrap().as_deref(), Some("Bearer k-123"));

    // --llm without a key falls back to the template
    let fallback = ok(&hypergen(&["requirement", "--data", wine, "--config", "llm.toml", "--llm"], dir));
    assert_eq!(fallback, template);
}
