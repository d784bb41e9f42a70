use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specmatch"));
    c.env("SPECMATCH_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_json(path: &Path, v: serde_json::Value) -> String {
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset with cached spectra at k = 20.
struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        let synth = write_json(
            &f.path("synth.json"),
            json!({"train_pairs": 2, "test_pairs": 1, "resolution": 150}),
        );
        let o = run(&["synth", "--config", &synth, "--out", s(&f.path("data"))]);
        assert!(o.status.success(), "{}", text(&o));
        let pre = write_json(
            &f.path("pre.json"),
            json!({"manifests": ["data/train.json", "data/test.json"], "k": 20}),
        );
        let o = run(&["precompute", "--config", &pre, "--out", s(&f.path("cache"))]);
        assert!(o.status.success(), "{}", text(&o));
        assert!(text(&o).contains("6 recomputed"), "{}", text(&o));
        f
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn train_config(&self, name: &str, extra: serde_json::Value) -> String {
        let mut train = json!({
            "epochs": 2,
            "max_iterations": 3,
            "loss": {"p_c": 5, "p_s": 5},
            "net": {"in_dim": 6, "width": 8, "blocks": 1},
        });
        if let (Some(t), Some(e)) = (train.as_object_mut(), extra.as_object()) {
            for (k, v) in e {
                t.insert(k.clone(), v.clone());
            }
        }
        write_json(
            &self.path(name),
            json!({"manifest": "data/train.json", "cache_dir": "cache", "k": 20, "train": train}),
        )
    }
}

#[test]
fn full_workflow() {
    let f = Fixture::new();

    // idempotent precompute
    let pre = s(&f.path("pre.json")).to_string();
    let o = run(&["precompute", "--config", &pre, "--out", s(&f.path("cache"))]);
    assert!(text(&o).contains("0 recomputed, 6 up to date"), "{}", text(&o));
    // a modified mesh is recomputed
    let mesh = f.path("data/meshes/bent_cylinder-s0-a.off");
    let orig = std::fs::read_to_string(&mesh).unwrap();
    let mut lines: Vec<String> = orig.lines().map(String::from).collect();
    let xyz: Vec<f64> = lines[2].split_whitespace().map(|t| t.parse().unwrap()).collect();
    lines[2] = format!("{} {} {}", xyz[0] * 1.01, xyz[1], xyz[2]);
    std::fs::write(&mesh, lines.join("\n") + "\n").unwrap();
    let o = run(&["precompute", "--config", &pre, "--out", s(&f.path("cache"))]);
    assert!(text(&o).contains("1 recomputed, 5 up to date"), "{}", text(&o));

    // train echoes resolved defaults and writes outputs
    let cfg = f.train_config("train.json", json!({}));
    let o = run(&["train", "--config", &cfg, "--out", s(&f.path("run")), "--seed", "3"]);
    assert!(o.status.success(), "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    for needle in [
        "\"learning_rate\": 0.001",
        "\"alpha\": 0.07",
        "\"theta_cross\": 1.0",
        "\"theta_self\": 0.1",
        "\"theta_align\": 1.0",
        "\"tau_c\": 1.0",
        "\"tau_s\": 1.0",
    ] {
        assert!(out.contains(needle), "missing {needle} in {out}");
    }
    for file in ["model.ckpt", "metrics.csv", "run.json"] {
        assert!(f.path("run").join(file).exists(), "{file}");
    }
    let run_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("run/run.json")).unwrap()).unwrap();
    assert_eq!(run_json["seed"], 3);
    assert_eq!(run_json["config"]["train"]["seed"], 3);
    assert!(run_json["versions"]["specmatch"].is_string());
    let metrics = std::fs::read_to_string(f.path("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "iter,pair,cross,self,align,total,grad_norm");

    // match on the test manifest, twice, byte-identical
    let m = write_json(
        &f.path("match.json"),
        json!({"checkpoint": "run/model.ckpt", "cache_dir": "cache", "manifest": "data/test.json"}),
    );
    for out in ["pred", "pred2"] {
        let o = run(&["match", "--config", &m, "--out", s(&f.path(out))]);
        assert!(o.status.success(), "{}", text(&o));
        assert!(text(&o).contains("vertices"));
    }
    let name = "bent_cylinder-s1000-a__bent_cylinder-s1000-b.txt";
    assert_eq!(
        std::fs::read(f.path("pred").join(name)).unwrap(),
        std::fs::read(f.path("pred2").join(name)).unwrap()
    );

    // k mismatch between request and checkpoint
    let bad = write_json(
        &f.path("match_k.json"),
        json!({"checkpoint": "run/model.ckpt", "cache_dir": "cache", "manifest": "data/test.json", "k": 30}),
    );
    let o = run(&["match", "--config", &bad, "--out", s(&f.path("pred_k"))]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("k = 30"));
    assert!(!f.path("pred_k").exists());

    // eval the predictions
    let e = write_json(
        &f.path("eval.json"),
        json!({"manifest": "data/test.json", "predictions": "pred"}),
    );
    let o = run(&["eval", "--config", &e, "--out", s(&f.path("report"))]);
    assert!(o.status.success(), "{}", text(&o));
    let report = std::fs::read_to_string(f.path("report/report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "pair,mean_geo_error_x100,pck@0.01,pck@0.05,pck@0.10");
    let errors: Vec<f64> = report.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let (mean, pairs) = errors.split_last().unwrap();
    assert!(report.lines().last().unwrap().starts_with("mean,"));
    assert!((mean - pairs.iter().sum::<f64>() / pairs.len() as f64).abs() <= 1e-12);
    assert!(std::fs::read_to_string(f.path("report/pck.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn identity_predictions_on_identical_pairs_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = write_json(
        &d.join("synth.json"),
        json!({"train_pairs": 0, "test_pairs": 2, "resolution": 120, "deform": {"bend_angle": 0.0, "bump_scale": 0.0}}),
    );
    let o = run(&["synth", "--config", &synth, "--out", s(&d.join("data"))]);
    assert!(o.status.success(), "{}", text(&o));
    // ground-truth files double as predictions
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("data/test.json")).unwrap()).unwrap();
    std::fs::create_dir(d.join("pred")).unwrap();
    for p in manifest["pairs"].as_array().unwrap() {
        let gt = d.join("data").join(p["gt"].as_str().unwrap());
        std::fs::copy(&gt, d.join("pred").join(gt.file_name().unwrap())).unwrap();
    }
    let e = write_json(&d.join("eval.json"), json!({"manifest": "data/test.json", "predictions": "pred", "svg": false}));
    let o = run(&["eval", "--config", &e, "--out", s(&d.join("report"))]);
    assert!(o.status.success(), "{}", text(&o));
    let report = std::fs::read_to_string(d.join("report/report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[4].parse::<f64>().unwrap(), 1.0);
    }
    assert!(!d.join("report/pck.svg").exists());
}

#[test]
fn missing_manifest_is_a_config_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("cache")).unwrap();
    let cfg = write_json(
        &dir.path().join("t.json"),
        json!({"manifest": "nope.json", "cache_dir": "cache", "train": {"epochs": 1}}),
    );
    let out = dir.path().join("out");
    let o = run(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("manifest"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(&dir.path().join("g.json"), json!({"probes": 5, "probez": 1}));
    let o = run(&["gradcheck", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("probez"));
    let o = run(&["train", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_cache_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let synth = write_json(&d.join("synth.json"), json!({"train_pairs": 1, "test_pairs": 0, "resolution": 120}));
    assert!(run(&["synth", "--config", &synth, "--out", s(&d.join("data"))]).status.success());
    std::fs::create_dir(d.join("cache")).unwrap();
    let cfg = write_json(
        &d.join("t.json"),
        json!({"manifest": "data/train.json", "cache_dir": "cache", "k": 10, "train": {"epochs": 1}}),
    );
    let o = run(&["train", "--config", &cfg, "--out", s(&d.join("out"))]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    assert!(text(&o).contains("precompute"));
    assert!(!d.join("out").exists());
}

#[test]
fn gradcheck_reports_every_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gradcheck", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", text(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    for name in ["cross_loss", "self_loss", "align_loss", "total_loss_through_network"] {
        assert!(out.lines().any(|l| l.starts_with(name) && l.ends_with("PASS")), "{out}");
    }
    assert!(dir.path().join("gradcheck.csv").exists());
}

#[test]
fn bench_writes_declared_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &dir.path().join("b.json"),
        json!({"sizes": [200, 400], "ks": [10], "reps": 5, "train_step_max_size": 200}),
    );
    let o = run(&["bench", "--config", &cfg, "--out", s(&dir.path().join("b"))]);
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(dir.path().join("b/bench.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "size,k,op,median_ms");
    assert!(csv.lines().any(|l| l.starts_with("400,10,projection_to_solver_ratio,")));
    let few = write_json(&dir.path().join("few.json"), json!({"reps": 2}));
    let o = run(&["bench", "--config", &few, "--out", s(&dir.path().join("c"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = bin().env("SPECMATCH_THREADS", "zero").args(["gradcheck"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_mode_trains_one_run_per_threshold() {
    let f = Fixture::new();
    let cfg = f.train_config("sweep.json", json!({"max_iterations": 1}));
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["sweep_p"] = json!([3, 6]);
    let cfg = write_json(Path::new(&cfg), v);
    let o = run(&["train", "--config", &cfg, "--out", s(&f.path("sweep"))]);
    assert!(o.status.success(), "{}", text(&o));
    for p in ["p3", "p6"] {
        assert!(f.path("sweep").join(p).join("model.ckpt").exists());
    }
}
