use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[scenario]
kind = "acc"
duration = 20.0

[scenario.acc]
randomize = true

[detector]
intercept = 10.0
distance_coef = -0.5
occlusion_coef = -20.0

[planner]
kind = "acc"

[collect]
train_scenarios = [0, 1, 2]
test_scenarios = [10]

[train.ns]
iterations = 100
eval_every = 50
batch_size = 64
width = 16
blocks = 1

[train.lr]
iterations = 100

[run]
seeds = [0, 1]

[compare]
pkl_samples = 3
"#;

fn pemsim(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pemsim"))
        .current_dir(dir)
        .args(["--config", "cfg.toml", "--seed", "3"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "pemsim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Every subcommand in order; the working directory keeps paths relative.
fn pipeline(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::write(dir.join("cfg.toml"), CONFIG).unwrap();
    pemsim(dir, &["collect", "--out", "."]);
    for kind in ["ns", "lr", "gf"] {
        let model = format!("{kind}.model.json");
        pemsim(dir, &["train", "--dataset", "train.jsonl", "--kind", kind, "--out", &model]);
        let eval = format!("eval_{kind}.json");
        pemsim(dir, &["eval-model", "--model", &model, "--dataset", "test.jsonl", "--out", &eval]);
    }
    pemsim(dir, &["run", "--variant", "detector", "--seeds", "0,1", "--out", "."]);
    pemsim(dir, &["run", "--variant", "gt", "--seeds", "0,1", "--out", "."]);
    pemsim(dir, &["run", "--variant", "ns", "--model", "ns.model.json", "--seeds", "0,1", "--out", "."]);
    snapshot(dir)
}

#[test]
fn rerunning_every_subcommand_reproduces_its_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let timing = |k: &str| k.ends_with("timing.json");
    let keys: Vec<&String> = first.keys().filter(|k| !timing(k)).collect();
    assert!(keys.len() >= 15, "too few artifacts: {keys:?}");
    for k in keys {
        assert!(first.get(k) == second.get(k), "{k} differs between reruns");
    }

    // compare and report read wall-clock timings, so they are checked by
    // rerunning them on the same inputs.
    let dir = a.path();
    let later = |d: &Path| {
        pemsim(d, &["compare", "--runs", ".", "--variants", "detector,ns,gt", "--pkl-model", "ns.model.json"]);
        pemsim(d, &["report", "--compare", "compare.json", "--eval", "eval_ns.json", "--eval", "eval_lr.json", "--out", "report"]);
        snapshot(d)
    };
    let x = later(dir);
    let y = later(dir);
    assert_eq!(x, y);
    for f in ["compare.json", "report/report.csv", "report/report.md", "report/collision_cdf.csv"] {
        assert!(x.contains_key(f), "missing {f}");
    }
}

#[test]
fn help_lists_every_subcommand() {
    let out = Command::new(env!("CARGO_BIN_EXE_pemsim")).arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["collect", "train", "eval-model", "run", "compare", "report", "--seed", "--config"] {
        assert!(text.contains(cmd), "--help lacks {cmd}");
    }
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[scenario]\nkind = \"moon\"\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pemsim"))
        .current_dir(dir.path())
        .args(["--config", "bad.toml", "collect", "--out", "."])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    std::fs::write(dir.path().join("broken.model.json"), "{\"format\": 1}").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pemsim"))
        .current_dir(dir.path())
        .args(["run", "--variant", "ns", "--model", "broken.model.json", "--out", "."])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
