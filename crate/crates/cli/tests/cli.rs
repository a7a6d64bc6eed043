use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sae")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A 100-sample pool (5 classes × 20) and its test split.
fn small_pool(root: &Path) -> PathBuf {
    let out = root.join("pool");
    let o = sae(&["gen", "--k", "5", "--d", "16", "--n-per-class", "20", "--test-per-class", "10", "--seed", "3", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

/// Keeps the evidence head small so CLI tests stay quick.
fn write_config(root: &Path, pool: &Path, strategy: &str, out: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "pool_path": pool,
        "strategy": strategy,
        "seeds": [0, 1],
        "probe": {"learning_rate": 20.0, "epochs": 30},
        "seh": {"h1": 16, "h2": 8, "h_s": 4, "epochs": 5},
        "output_dir": out,
    });
    let path = root.join(format!("{strategy}.json"));
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn gen_writes_the_pool_format_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = sae(&["gen", "--k", "5", "--d", "64", "--n-per-class", "40", "--seed", "0", "--out", p(out)]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("zero-shot accuracy: pool="));
    }
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["embeddings.f32", "labels.i32", "pool.json", "prototypes.f32", "similarities.f32"]);
    for name in &names {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
    }
    assert!(dir.path().join("a_test").join("pool.json").exists());
    assert_eq!(std::fs::metadata(a.join("embeddings.f32")).unwrap().len(), 200 * 64 * 4);
}

#[test]
fn gen_rejects_a_single_class() {
    let dir = tempfile::tempdir().unwrap();
    let o = sae(&["gen", "--k", "1", "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn run_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let pool = small_pool(dir.path());
    let before: Vec<Vec<u8>> = ["pool.json", "embeddings.f32", "labels.i32"].iter().map(|f| read(&pool.join(f))).collect();
    for (strategy, runs) in [("random", ["r1", "r2"]), ("sae", ["s1", "s2"])] {
        for run in runs {
            let cfg = write_config(dir.path(), &pool, strategy, &dir.path().join(run));
            let o = sae(&["run", "--config", p(&cfg)]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        for file in ["rounds.csv", "selections.csv", "reliability.csv"] {
            assert_eq!(read(&dir.path().join(runs[0]).join(file)), read(&dir.path().join(runs[1]).join(file)), "{strategy} {file}");
        }
    }
    let after: Vec<Vec<u8>> = ["pool.json", "embeddings.f32", "labels.i32"].iter().map(|f| read(&pool.join(f))).collect();
    assert_eq!(before, after);

    let rounds = std::fs::read_to_string(dir.path().join("r1/rounds.csv")).unwrap();
    let rows: Vec<&str> = rounds.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[4].starts_with("0,5,20,"));
    assert!(rows[9].starts_with("1,5,20,"));

    let selections = std::fs::read_to_string(dir.path().join("s1/selections.csv")).unwrap();
    let round_one: Vec<&str> = selections.lines().skip(1).filter(|l| l.split(',').nth(1) == Some("1")).collect();
    assert_eq!(round_one.len(), 8);
    assert!(round_one.iter().all(|l| l.ends_with(",1.000000,0.000000")));
    let baseline = std::fs::read_to_string(dir.path().join("r1/selections.csv")).unwrap();
    assert!(baseline.lines().nth(1).unwrap().ends_with(",,,,"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let pool = small_pool(dir.path());
    let cfg = write_config(dir.path(), &pool, "random", &dir.path().join("ignored"));
    let out = dir.path().join("flagged");
    let o = sae(&["run", "--config", p(&cfg), "--strategy", "margin", "--seeds", "4", "--rounds", "2", "--output-dir", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rounds = std::fs::read_to_string(out.join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 3);
    assert!(rounds.lines().nth(2).unwrap().starts_with("4,2,20,"));
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn calib_reproduces_the_stored_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let pool = small_pool(dir.path());
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), &pool, "sae", &out);
    assert!(sae(&["run", "--config", p(&cfg)]).status.success());
    let result: serde_json::Value = serde_json::from_slice(&read(&out.join("result.json"))).unwrap();
    let stored = result["final_calibration"]["ece"].as_f64().unwrap();
    let nll = result["final_calibration"]["nll"].as_f64().unwrap();

    let calib_dir = dir.path().join("calib");
    let o = sae(&["calib", "--result", p(&out.join("result.json")), "--out", p(&calib_dir)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), format!("ECE={stored:.6} NLL={nll:.6}"));
    assert!(text.lines().nth(1).unwrap().starts_with("probe ECE="));
    assert_eq!(read(&calib_dir.join("reliability.csv")), read(&out.join("reliability.csv")));
    let csv = std::fs::read_to_string(calib_dir.join("reliability.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    assert_eq!(csv.lines().next().unwrap(), "bin_lo,bin_hi,count,mean_conf,accuracy");
}

#[test]
fn ablate_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let pool = small_pool(dir.path());
    let out = dir.path().join("abl");
    let cfg = write_config(dir.path(), &pool, "sae", &out);
    let o = sae(&["ablate", "--config", p(&cfg), "--axis", "schedule", "--seeds", "0", "--rounds", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    let variants: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(variants, ["dynamic", "vacuity_only", "dissonance_only", "static_balanced"]);
    assert!(out.join("dissonance_only").join("rounds.csv").exists());

    let bad = sae(&["ablate", "--config", p(&cfg), "--axis", "context_length"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let pool = small_pool(dir.path());
    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, format!(r#"{{"pool_path": {:?}, "strategy": "random", "output_dir": "x", "rh0": 0.2}}"#, p(&pool))).unwrap();
    let o = sae(&["run", "--config", p(&typo)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rh0"));

    assert_eq!(sae(&["run", "--pool-path", p(&pool), "--output-dir", "x"]).status.code(), Some(2));
    assert_eq!(sae(&["frobnicate"]).status.code(), Some(2));

    let missing = sae(&["run", "--pool-path", p(&dir.path().join("nope")), "--strategy", "random", "--output-dir", p(&dir.path().join("o"))]);
    assert_eq!(missing.status.code(), Some(3));

    let corrupt = dir.path().join("corrupt");
    std::fs::create_dir_all(&corrupt).unwrap();
    for f in ["pool.json", "embeddings.f32", "similarities.f32", "labels.i32", "prototypes.f32"] {
        std::fs::copy(pool.join(f), corrupt.join(f)).unwrap();
    }
    let emb = read(&corrupt.join("embeddings.f32"));
    std::fs::write(corrupt.join("embeddings.f32"), &emb[..emb.len() - 4]).unwrap();
    let o = sae(&["run", "--pool-path", p(&corrupt), "--test-path", p(&dir.path().join("pool_test")), "--strategy", "random", "--output-dir", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("embeddings.f32"));

    let no_result = sae(&["calib", "--result", p(&dir.path().join("nothing.json"))]);
    assert_eq!(no_result.status.code(), Some(3));
}
