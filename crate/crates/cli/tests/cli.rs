use std::path::Path;
use std::process::{Command, Output};

fn shapeaug(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapeaug"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn error_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).unwrap_or_else(|| panic!("no JSON in {text}"));
    serde_json::from_str(line).unwrap()
}

const TINY: &str = r#"{"corpus": {"count": 6}, "model": {"resolution": 16, "latent_dim": 4, "channels": [4, 8]},
  "train": {"batch_size": 4, "phase1_epochs": 1, "phase2_epochs": 1}}"#;

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = shapeaug(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"]["kind"], "usage");
}

#[test]
fn missing_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = shapeaug(dir.path(), &["train", "--mode", "ae"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"]["kind"], "data");
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"augment": {"tee": 3}}"#).unwrap();
    let o = shapeaug(dir.path(), &["--config", cfg.to_str().unwrap(), "corpus", "toy"]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_json(&o)["error"]["kind"], "config");
}

#[test]
fn out_of_range_alpha_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"evaluate": {"alphas": [0.7]}}"#).unwrap();
    let o = shapeaug(dir.path(), &["--config", cfg.to_str().unwrap(), "corpus", "toy"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn import_reports_every_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    std::fs::write(input.join("good.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 2 3 4\nf 1 4 3\n").unwrap();
    std::fs::write(input.join("bad.obj"), "v 0 0 0\nf 1 2 9\n").unwrap();
    std::fs::write(input.join("junk.obj"), "this is not a mesh\n").unwrap();
    let o = shapeaug(&dir.path().join("out"), &["corpus", "import", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let details = error_json(&o)["error"]["details"].as_array().unwrap().clone();
    assert_eq!(details.len(), 2, "{details:?}");
    assert!(details.iter().all(|d| !d.as_str().unwrap().contains("good.obj")));
}

#[test]
fn import_of_valid_meshes_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    let tet = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 3 2\nf 1 2 4\nf 2 3 4\nf 1 4 3\n";
    for name in ["a.obj", "b.obj"] {
        std::fs::write(input.join(name), tet).unwrap();
    }
    std::fs::write(input.join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("out");
    let o = shapeaug(&out, &["corpus", "import", "--input", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("corpus/manifest.json")).unwrap()).unwrap();
    let ids: Vec<&str> = manifest["entries"].as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert!(out.join("reports/corpus.json").is_file());
}

#[test]
fn ae_critic_init_needs_matching_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, TINY).unwrap();
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("w");
    assert!(shapeaug(&out, &["--config", c, "corpus", "toy"]).status.success());
    assert!(shapeaug(&out, &["--config", c, "train", "--mode", "ae"]).status.success());

    let other = dir.path().join("other.json");
    std::fs::write(&other, TINY.replace("\"latent_dim\": 4", "\"latent_dim\": 6")).unwrap();
    let ckpt = out.join("models/ae.gfck");
    let o = shapeaug(&out, &["--config", other.to_str().unwrap(), "train", "--mode", "ae-critic", "--init", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let o = shapeaug(&out, &["--config", c, "train", "--mode", "ae", "--init", ckpt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_rejects_mismatched_resolutions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, TINY).unwrap();
    let big = dir.path().join("big.json");
    std::fs::write(&big, TINY.replace("\"resolution\": 16", "\"resolution\": 8")).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, c) in [(&a, &cfg), (&b, &big)] {
        let c = c.to_str().unwrap();
        assert!(shapeaug(out, &["--config", c, "corpus", "toy"]).status.success());
        assert!(shapeaug(out, &["--config", c, "train", "--mode", "ae"]).status.success());
    }
    let o = shapeaug(
        &a,
        &[
            "--config",
            cfg.to_str().unwrap(),
            "evaluate",
            "--checkpoint-a",
            a.join("models/ae.gfck").to_str().unwrap(),
            "--checkpoint-b",
            b.join("models/ae.gfck").to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
