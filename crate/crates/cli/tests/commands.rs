use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn faithtrace(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faithtrace"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FAITHTRACE_API_KEY")
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = faithtrace(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn world(cwd: &Path) {
    ok(
        cwd,
        &[
            "synth",
            "--out",
            "w",
            "--seed",
            "3",
            "--samples",
            "6",
            "--bank-size",
            "10",
        ],
    );
    ok(
        cwd,
        &[
            "train-aligner",
            "--features",
            "w/train_features.ftm",
            "--targets",
            "w/train_targets.ftm",
            "--out",
            "al.json",
        ],
    );
}

#[test]
fn train_aligner_reports_mse_and_default_ridge() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "w", "--seed", "1", "--samples", "2"]);
    let stdout = ok(
        dir.path(),
        &[
            "train-aligner",
            "--features",
            "w/train_features.ftm",
            "--targets",
            "w/train_targets.ftm",
            "--out",
            "al.json",
        ],
    );
    let mse: f64 = stdout
        .trim()
        .strip_prefix("train_mse=")
        .unwrap()
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(mse <= 1e-12);
    let manifest = json(&dir.path().join("al.json.manifest.json"));
    assert_eq!(manifest["manifest_version"], 1);
    assert_eq!(manifest["command"], "train-aligner");
    assert_eq!(manifest["config"]["ridge"], 1e-8);
    assert_eq!(manifest["inputs"]["features"], "w/train_features.ftm");
}

#[test]
fn mismatched_rows_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", "w", "--seed", "1", "--samples", "2"]);
    let out = faithtrace(
        dir.path(),
        &[
            "train-aligner",
            "--features",
            "w/train_features.ftm",
            "--targets",
            "w/samples/s0000/features.ftm",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn bad_magic_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.ftm"), b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0").unwrap();
    let out = faithtrace(
        dir.path(),
        &[
            "train-aligner",
            "--features",
            "bad.ftm",
            "--targets",
            "bad.ftm",
            "--out",
            "a.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
    let out = faithtrace(
        dir.path(),
        &[
            "train-aligner",
            "--features",
            "nope.ftm",
            "--targets",
            "nope.ftm",
            "--out",
            "a.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = faithtrace(dir.path(), &["explain", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn explain_outputs_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    let base = [
        "explain",
        "--features",
        "w/samples/s0002/features.ftm",
        "--aligner",
        "al.json",
        "--head",
        "w/head.json",
        "--bank",
        "w/samples/s0002/bank.json",
    ];
    let mut args = base.to_vec();
    args.extend(["--top-k", "1"]);
    let lines = ok(dir.path(), &args);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    let meta = json(&dir.path().join("w/samples/s0002/meta.json"));
    assert_eq!(first["rank"], 1);
    assert_eq!(first["method"], "faithtrace");
    assert_eq!(first["bank_index"], meta["planted_index"]);
    assert_eq!(first["class"], meta["class"]);
    assert!(first["score"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("explain.manifest.json").is_file());

    let mut random = base.to_vec();
    random.extend(["--method", "random", "--seed", "7", "--top-k", "4"]);
    let a = ok(dir.path(), &random);
    assert_eq!(a, ok(dir.path(), &random));
    assert_eq!(a.lines().count(), 4);

    let mut verify = base.to_vec();
    verify.extend(["--verify", "--class", "class_1", "--method", "t2c"]);
    let out = faithtrace(dir.path(), &verify);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let err: f64 = stderr.split("max_rel_err=").nth(1).unwrap().trim().parse().unwrap();
    assert!(err < 1e-4, "{stderr}");

    let mut bad = base.to_vec();
    bad.extend(["--class", "7"]);
    assert_eq!(faithtrace(dir.path(), &bad).status.code(), Some(2));
}

#[test]
fn evaluate_with_single_rho() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    ok(
        dir.path(),
        &[
            "evaluate",
            "--samples",
            "w/samples",
            "--aligner",
            "al.json",
            "--head",
            "w/head.json",
            "--method",
            "faithtrace,random",
            "--top-k",
            "2",
            "--curve-top-k",
            "2",
            "--rhos",
            "0.1",
            "--out",
            "r.json",
            "--csv",
            "c.csv",
            "--jobs",
            "2",
        ],
    );
    let csv = fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "method,rho,insertion,deletion");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("faithtrace,0.1,"));
    assert!(rows[2].starts_with("random,0.1,"));

    let report = json(&dir.path().join("r.json"));
    assert_eq!(report["sections"].as_array().unwrap().len(), 2);
    let ft = &report["sections"][0];
    assert_eq!(ft["negative_rate"], 0.0);
    assert_eq!(ft["pooling"], "pair");
    assert_eq!(ft["curve"]["rhos"].as_array().unwrap().len(), 1);
    let ids: Vec<&str> = ft["per_sample"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["sample_id"].as_str().unwrap())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert_eq!(report["curve_sum_display_unit"], 0.1);
}

#[test]
fn evaluate_rejects_empty_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    fs::create_dir(dir.path().join("empty")).unwrap();
    let base = [
        "evaluate",
        "--aligner",
        "al.json",
        "--head",
        "w/head.json",
        "--out",
        "r.json",
    ];
    let mut empty = base.to_vec();
    empty.extend(["--samples", "empty"]);
    let out = faithtrace(dir.path(), &empty);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no samples"));
    for extra in [
        ["--rhos", "0.2,0.1"],
        ["--metrics", "ds,bogus"],
        ["--method", "lime"],
        ["--top-k", "0"],
    ] {
        let mut args = base.to_vec();
        args.extend(["--samples", "w"]);
        args.extend(extra);
        assert_eq!(faithtrace(dir.path(), &args).status.code(), Some(2), "{extra:?}");
    }
}

#[test]
fn gen_bank_with_mock_and_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    fs::write(
        cwd.join("script.json"),
        r#"[["long tail", "Long Tail", "lemur ears"], ["gray fur"], ["forest"]]"#,
    )
    .unwrap();
    let stdout = ok(
        cwd,
        &[
            "gen-bank",
            "--class-name",
            "lemur",
            "--mock-script",
            "script.json",
            "--llm-count",
            "2",
            "--vlm-count",
            "1",
            "--out",
            "concepts.json",
        ],
    );
    assert!(stdout.contains("kept 3 concepts"));
    let concepts = json(&cwd.join("concepts.json"));
    let texts: Vec<&str> = concepts["concepts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["text"].as_str().unwrap())
        .collect();
    assert_eq!(texts, ["long tail", "gray fur", "forest"]);
    assert_eq!(concepts["concepts"][2]["source"], "vlm");
    assert_eq!(concepts["decoding"], "endpoint defaults");
    assert_eq!(json(&cwd.join("concepts.json.manifest.json"))["command"], "gen-bank");

    // Three 2-d embeddings, not unit length.
    let mut ftm = b"FTM1".to_vec();
    ftm.extend(3u32.to_le_bytes());
    ftm.extend(2u32.to_le_bytes());
    for v in [3.0f32, 4.0, 0.0, 2.0, -1.0, 0.0] {
        ftm.extend(v.to_le_bytes());
    }
    fs::write(cwd.join("emb.ftm"), &ftm).unwrap();
    ok(
        cwd,
        &[
            "attach-embeddings",
            "--concepts",
            "concepts.json",
            "--embeddings",
            "emb.ftm",
            "--out",
            "bank.json",
        ],
    );
    let bank = json(&cwd.join("bank.json"));
    assert_eq!(bank["class"], "lemur");
    assert_eq!(bank["concepts"][0]["embedding"], serde_json::json!([0.6, 0.8]));

    let mut truncated = b"FTM1".to_vec();
    truncated.extend(2u32.to_le_bytes());
    truncated.extend(2u32.to_le_bytes());
    truncated.extend([0u8; 16]);
    fs::write(cwd.join("two.ftm"), &truncated).unwrap();
    let out = faithtrace(
        cwd,
        &[
            "attach-embeddings",
            "--concepts",
            "concepts.json",
            "--embeddings",
            "two.ftm",
            "--out",
            "b.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_bank_needs_a_backend() {
    let dir = tempfile::tempdir().unwrap();
    let out = faithtrace(dir.path(), &["gen-bank", "--class-name", "cat", "--out", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synth",
            "--out",
            "a",
            "--seed",
            "9",
            "--samples",
            "3",
            "--head",
            "linear",
        ],
    );
    ok(
        dir.path(),
        &[
            "synth",
            "--out",
            "b",
            "--seed",
            "9",
            "--samples",
            "3",
            "--head",
            "linear",
        ],
    );
    for f in [
        "head.json",
        "true_aligner.json",
        "train_features.ftm",
        "samples/s0002/bank.json",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let world = json(&dir.path().join("a/world.json"));
    assert_eq!(world["generator"], "chacha8-v1");
}
