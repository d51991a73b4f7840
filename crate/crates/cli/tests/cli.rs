use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use prefdecomp::eval::Metrics;
use prefdecomp::io::{read_jsonl, to_jsonl_string};
use prefdecomp::reward::RewardFunction;
use prefdecomp::trainer::{initial_model, TrainConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prefdecomp"))
}

fn run(args: &[&str]) -> i32 {
    let out = bin().args(args).output().unwrap();
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a config for a small world whose paths live under `dir`.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = 1
[synth]
heldout_pairs = 100
[synth.world]
n_prompts = 40
n_responses = 80
n_pairs = 300
[train]
dataset = "{d}/s/dataset.jsonl"
heldout = "{d}/s/heldout.jsonl"
[train.params]
steps = 8
batch_size = 16
learning_rate = 0.1
snapshot_size = 50
[eval]
model = "{d}/t/model.json"
dataset = "{d}/s/heldout.jsonl"
n_replacements = 4
{extra}
"#,
        d = dir.display()
    );
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

fn synth_into(dir: &Path, cfg: &Path) -> PathBuf {
    let out = dir.join("s");
    assert_eq!(
        run(&["synth", "--config", path(cfg), "--out", path(&out)]),
        0
    );
    out
}

#[test]
fn synth_is_reproducible_and_reloads_losslessly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let a = synth_into(tmp.path(), &cfg);
    let first = fs::read_to_string(a.join("manifest.json")).unwrap();
    let b = tmp.path().join("again");
    assert_eq!(
        run(&["synth", "--config", path(&cfg), "--out", path(&b)]),
        0
    );
    assert_eq!(first, fs::read_to_string(b.join("manifest.json")).unwrap());

    let bytes = fs::read_to_string(a.join("dataset.jsonl")).unwrap();
    let d = read_jsonl(bytes.as_bytes()).unwrap();
    assert_eq!(to_jsonl_string(&d), bytes);

    let other = tmp.path().join("other");
    assert_eq!(
        run(&[
            "synth",
            "--config",
            path(&cfg),
            "--seed",
            "2",
            "--out",
            path(&other)
        ]),
        0
    );
    assert_ne!(
        bytes,
        fs::read_to_string(other.join("dataset.jsonl")).unwrap()
    );
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "[bogus]\nx = 1\n");
    assert_eq!(
        run(&[
            "synth",
            "--config",
            path(&cfg),
            "--out",
            path(&tmp.path().join("s"))
        ]),
        1
    );
    let cfg = tmp.path().join("nested.toml");
    fs::write(&cfg, "[train.params]\nstep = 3\n").unwrap();
    assert_eq!(
        run(&[
            "train",
            "--config",
            path(&cfg),
            "--out",
            path(&tmp.path().join("t"))
        ]),
        1
    );
}

#[test]
fn zero_steps_writes_the_initial_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let s = synth_into(tmp.path(), &cfg);
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("steps = 8", "steps = 0");
    fs::write(&cfg, text).unwrap();
    let t = tmp.path().join("t");
    assert_eq!(
        run(&["train", "--config", path(&cfg), "--out", path(&t)]),
        0
    );
    let model: RewardFunction =
        serde_json::from_str(&fs::read_to_string(t.join("model.json")).unwrap()).unwrap();
    let d = read_jsonl(fs::read(s.join("dataset.jsonl")).unwrap().as_slice()).unwrap();
    let init = initial_model(
        &d,
        &TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(model, init);
    assert!(t.join("quadrant_0.csv").exists());
}

fn train_into(cfg: &Path, out: &Path) -> String {
    assert_eq!(
        run(&["train", "--config", path(cfg), "--out", path(out)]),
        0
    );
    fs::read_to_string(out.join("steps.csv")).unwrap()
}

#[test]
fn training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    synth_into(tmp.path(), &cfg);
    let a = train_into(&cfg, &tmp.path().join("t1"));
    let b = train_into(&cfg, &tmp.path().join("t2"));
    assert_eq!(a, b);
    assert_eq!(
        a.lines().next().unwrap(),
        "step,accepted_ids,rejected_ids,lambda,lambda_hat,loss,grad_norm"
    );
    assert_eq!(a.lines().count(), 9);
}

#[test]
fn infinite_threshold_matches_vanilla_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    synth_into(tmp.path(), &cfg);
    let base = fs::read_to_string(&cfg).unwrap();
    fs::write(
        &cfg,
        base.replace("[train]\n", "[train]\nmode = \"vanilla\"\n"),
    )
    .unwrap();
    let v = train_into(&cfg, &tmp.path().join("v"));
    fs::write(
        &cfg,
        base.replace("[train]\n", "[train]\nmode = \"prioritized\"\n")
            .replace("steps = 8\n", "steps = 8\nlambda_override = inf\n"),
    )
    .unwrap();
    let p = train_into(&cfg, &tmp.path().join("p"));
    let cols = |text: &str| -> Vec<(String, String, String, String)> {
        text.lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].into(), f[1].into(), f[5].into(), f[6].into())
            })
            .collect()
    };
    assert_eq!(cols(&v), cols(&p));
    assert_eq!(
        fs::read(tmp.path().join("v/model.json")).unwrap(),
        fs::read(tmp.path().join("p/model.json")).unwrap()
    );
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    assert_eq!(run(&["verify", "--out", path(&out)]), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);

    let neg = tmp.path().join("neg.toml");
    fs::write(
        &neg,
        "[verify]\nsuite = \"negative_control\"\nn_worlds = 4\n",
    )
    .unwrap();
    assert_eq!(run(&["verify", "--config", path(&neg)]), 2);

    let empty = tmp.path().join("empty.toml");
    fs::write(&empty, "[verify]\nn_worlds = 0\n").unwrap();
    assert_eq!(run(&["verify", "--config", path(&empty)]), 1);
}

#[test]
fn eval_needs_a_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    synth_into(tmp.path(), &cfg);
    // configured path that does not exist
    assert_eq!(
        run(&[
            "eval",
            "--config",
            path(&cfg),
            "--out",
            path(&tmp.path().join("e"))
        ]),
        3
    );
    let bare = tmp.path().join("bare.toml");
    fs::write(&bare, "").unwrap();
    assert_eq!(
        run(&[
            "eval",
            "--config",
            path(&bare),
            "--out",
            path(&tmp.path().join("e"))
        ]),
        1
    );
}

#[test]
fn eval_outputs_are_deterministic_and_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    synth_into(tmp.path(), &cfg);
    train_into(&cfg, &tmp.path().join("t"));
    let read = |dir: &str, f: &str| fs::read(tmp.path().join(dir).join(f)).unwrap();
    for dir in ["e1", "e2"] {
        let out = tmp.path().join(dir);
        assert_eq!(
            run(&["eval", "--config", path(&cfg), "--out", path(&out)]),
            0
        );
    }
    for f in ["replacement_gaps.csv", "metrics.json", "manifest.json"] {
        assert_eq!(read("e1", f), read("e2", f), "{f}");
    }
    let m: Metrics = serde_json::from_slice(&read("e1", "metrics.json")).unwrap();
    assert!((0.0..=1.0).contains(&m.accuracy));
    assert_eq!(m.n_samples, 100);
}

#[test]
fn echoed_config_reruns_the_same_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    synth_into(tmp.path(), &cfg);
    let a = train_into(&cfg, &tmp.path().join("t1"));
    let echo = tmp.path().join("t1/config.toml");
    let b = train_into(&echo, &tmp.path().join("t2"));
    assert_eq!(a, b);
}
