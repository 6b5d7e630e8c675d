use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cmdis(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmdis"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CMDIS_OUT")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = |out: &str| {
        cmdis(tmp.path(), &["--out", out, "gen", "--count", "10", "--kind", "rot", "--seed", "7", "--image-size", "490"])
    };
    ok(&gen("a"));
    ok(&gen("b"));
    let (a, b) = (files(&tmp.path().join("a")), files(&tmp.path().join("b")));
    assert_eq!(a.keys().filter(|p| p.ends_with("image.png")).count(), 10);
    assert!(a.contains_key(Path::new("run.json")));
    assert!(a == b, "generated directories differ");
}

#[test]
fn rigid_fixture_disambiguates_to_tie_and_h0() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&cmdis(tmp.path(), &["--out", "data", "gen", "--count", "1", "--kind", "rigid", "--clean", "--image-size", "160"]));
    let rec = tmp.path().join("data/000000");
    let image = rec.join("image.png");
    let mask = rec.join("mask.png");
    let o = cmdis(
        tmp.path(),
        &["--out", "run", "disambiguate", "--image", image.to_str().unwrap(), "--mask", mask.to_str().unwrap()],
    );
    ok(&o);
    let r = json(&tmp.path().join("run/result.json"));
    assert_eq!(r["tie"], Value::Bool(true));
    assert_eq!(r["decision"], "H0");
    assert_eq!(r["opt_status"]["status"], "opt-in");
    assert!(tmp.path().join("run/map.png").is_file());
    assert!(tmp.path().join("run/tamper.png").is_file());
    let manifest = json(&tmp.path().join("run/run.json"));
    assert_eq!(manifest["command"], "disambiguate");
    assert_eq!(manifest["toolkit"], "cmdis");
}

#[test]
fn validation_errors_exit_one_with_a_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["gen", "--count", "3", "--kind", "nope"][..],
        &["gen", "--count", "3", "--kind", "rot", "--frobnicate"],
        &["gen", "--count", "3", "--kind", "rot", "--image-size", "100"],
        &["--workers", "0", "gen", "--count", "3", "--kind", "rot"],
        &["eval", "--dataset", "missing"],
        &["train", "--dataset", "missing", "--arch", "twin"],
        &["sweep", "--dataset", "missing", "--axis", "jpeg"],
    ] {
        let o = cmdis(tmp.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        let err = stderr(&o);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
    }
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0, "validation must not write");
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&cmdis(tmp.path(), &["--out", "data", "gen", "--count", "2", "--kind", "rigid", "--image-size", "160"]));
    std::fs::write(tmp.path().join("data/000001/meta.json"), "{\"id\": 3}").unwrap();
    let o = cmdis(tmp.path(), &["--out", "ev", "eval", "--dataset", "data"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(stderr(&o).trim_end().lines().count(), 1);
}

#[test]
fn dry_run_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cmdis(tmp.path(), &["--out", "x", "--dry-run", "gen", "--count", "3", "--kind", "res", "--image-size", "688"]);
    ok(&o);
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn output_goes_under_the_env_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cmdis"))
        .args(["gen", "--count", "1", "--kind", "rigid", "--image-size", "160"])
        .current_dir(tmp.path())
        .env("CMDIS_OUT", "from-env")
        .output()
        .unwrap();
    ok(&o);
    let entries: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries, vec!["from-env"]);
    assert!(tmp.path().join("from-env/manifest.json").is_file());
}

#[test]
fn train_then_score_with_learned_models() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    ok(&cmdis(t, &["--out", "rigid", "gen", "--count", "6", "--kind", "rigid", "--image-size", "160"]));
    ok(&cmdis(t, &["--out", "rot", "gen", "--count", "6", "--kind", "rot", "--image-size", "490"]));
    ok(&cmdis(t, &["--out", "models", "train", "--dataset", "rigid", "--arch", "siamese", "--epochs", "1"]));
    ok(&cmdis(t, &["--out", "models", "train", "--dataset", "rot", "--arch", "twin", "--epochs", "1"]));
    for f in ["twin.json", "siamese.json", "twin_log.csv", "siamese_log.csv"] {
        assert!(t.join("models").join(f).is_file(), "{f}");
    }
    let log = std::fs::read_to_string(t.join("models/twin_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,loss,val_accuracy"));

    let o = cmdis(
        t,
        &["--out", "ev", "eval", "--dataset", "rot", "--scorers", "mse,twin,siamese", "--model-dir", "models"],
    );
    ok(&o);
    let csv = std::fs::read_to_string(t.join("ev/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("record_id,opt_status,decision,correct,f_h0_fused,f_h0_mse,f_h0_twin,f_h0_siamese,alpha,fx,fy")
    );
    assert_eq!(lines.count(), 6);
    let report = json(&t.join("ev/report.json"));
    assert_eq!(report["total"], 6);
    assert!(report.get("records").is_none());

    // A checkpoint of the wrong architecture is rejected at load time.
    std::fs::copy(t.join("models/siamese.json"), t.join("models/twin.json")).unwrap();
    let o = cmdis(t, &["--out", "ev2", "eval", "--dataset", "rot", "--scorers", "twin", "--model-dir", "models"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn sweep_writes_one_row_per_point_plus_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    ok(&cmdis(t, &["--out", "data", "gen", "--count", "4", "--kind", "res", "--image-size", "688"]));
    let o = cmdis(t, &["--out", "sw", "sweep", "--dataset", "data", "--axis", "jpeg", "--values", "100,75"]);
    ok(&o);
    let csv = std::fs::read_to_string(t.join("sw/sweep_jpeg.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("axis,value,total,opt_in,correct,accuracy,f1"));
    let bad = cmdis(t, &["--out", "sw2", "sweep", "--dataset", "data", "--axis", "noise", "--values", "0.3"]);
    assert_eq!(bad.status.code(), Some(1));
}

/// The resize split evaluated end to end: the analytic scorer on ground-truth
/// regions with estimated transforms.
#[test]
fn eval_on_resize_split_reaches_eighty_percent() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    ok(&cmdis(t, &["--out", "res", "--seed", "11", "gen", "--count", "200", "--kind", "res", "--image-size", "688"]));
    let o = cmdis(t, &["--out", "ev", "eval", "--dataset", "res", "--scorers", "mse"]);
    ok(&o);
    let report = json(&t.join("ev/report.json"));
    let acc = report["accuracy"].as_f64().unwrap();
    assert!(acc >= 0.80, "accuracy {acc}");
}
