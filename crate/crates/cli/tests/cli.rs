use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"{
  "env": {"name": "swingup", "params": {"horizon": 100}},
  "dyna": {
    "n_off": 300, "n_collect": 50, "n_batch": 1, "refits": 3,
    "surrogate_horizon": 100, "eval_episodes": 1,
    "dynamics": {"ensemble": {"n_members": 3}},
    "ppo": {"batch_size": 200, "hidden": [8]}
  },
  "distill": {
    "strategy": {"kind": "replay", "n_samples": 200},
    "sweep": {"thresholds": [0.01], "alphas": [1e-4], "n_members": 3, "row_bag_frac": 1.0, "lib_bag_frac": 1.0, "train_frac": 0.8},
    "compare_episodes": 2
  },
  "uq": {"target": "dynamics", "landscape": {
    "mesh": [{"axis": 1, "lo": -3.0, "hi": 3.0, "points": 10}, {"axis": 3, "lo": -5.0, "hi": 5.0, "points": 10}],
    "fixed": {"0": 0.0, "2": 0.0, "4": 0.0},
    "angle": 1
  }},
  "sweep": {"n_batch": [1, 2], "n_collect": [20, 40], "seeds": [0, 1], "target_return": 1e9}
}"#;

fn dictrl(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dictrl"))
        .args(args)
        .env("DICTRL_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

#[test]
fn fit_dynamics_writes_report_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = dictrl(&["fit-dynamics", "--config", s(&cfg), "--output", s(out)], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["config.json", "offline.csv", "dynamics.json", "fit_report.json", "dynamics_coefficients.csv"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let read = |p: &Path| std::fs::read_to_string(p).unwrap();
    assert_eq!(read(&a.join("dynamics.json")), read(&b.join("dynamics.json")));
    assert_eq!(data_rows(&a.join("offline.csv")), 300);

    // refit from the exported data gives the same model
    let c = tmp.path().join("c");
    let o = dictrl(
        &["fit-dynamics", "--config", s(&cfg), "--output", s(&c), "--data", s(&a.join("offline.csv"))],
        tmp.path(),
    );
    assert!(o.status.success());
    assert_eq!(read(&a.join("dynamics.json")), read(&c.join("dynamics.json")));

    // uq-map on the fitted model: one row per mesh node
    let u = tmp.path().join("u");
    let o = dictrl(&["uq-map", "--config", s(&cfg), "--model", s(&a.join("dynamics.json")), "--output", s(&u)], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&u.join("landscape.csv")), 100);
    assert!(u.join("landscape.json").is_file());
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = write(tmp.path(), "m.json", r#"{"dyna": {}}"#);
    let o = dictrl(&["fit-dynamics", "--config", s(&missing)], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`env`"));

    let typo = write(tmp.path(), "t.json", r#"{"env": {"name": "swingup"}, "dyna": {"ppo": {"clip_range": 0.1}}}"#);
    let o = dictrl(&["train", "--config", s(&typo)], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dyna.ppo.clip_range"));

    let zero = write(tmp.path(), "z.json", r#"{"env": {"name": "swingup"}, "dyna": {"n_batch": 0}}"#);
    assert_eq!(dictrl(&["train", "--config", s(&zero)], tmp.path()).status.code(), Some(2));
    assert_eq!(dictrl(&["train", "--config", s(&tmp.path().join("nope.json"))], tmp.path()).status.code(), Some(2));
    assert_eq!(dictrl(&["bogus"], tmp.path()).status.code(), Some(2));
}

#[test]
fn train_resume_distill_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", TINY);
    let o = dictrl(&["train", "--config", s(&cfg), "--seed", "5"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // default location from the env var
    let run = tmp.path().join("train-seed5");
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), s(&run));
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# dictrl-metrics/1\n"));
    assert_eq!(metrics.lines().count(), 2 + 3);
    for k in 1..=3 {
        assert!(run.join(format!("models/dynamics_{k:03}.json")).is_file());
    }
    let resolved = std::fs::read_to_string(run.join("config.json")).unwrap();
    assert!(resolved.contains("\"seed\": 5") && resolved.contains("\"lr_start\""));

    // collision
    let o = dictrl(&["train", "--config", s(&cfg), "--seed", "5"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    // a run interrupted before its first refit resumes to the same end state
    let other = tmp.path().join("interrupted");
    std::fs::create_dir_all(other.join("models")).unwrap();
    std::fs::copy(run.join("config.json"), other.join("config.json")).unwrap();
    let o = dictrl(&["train", "--resume", s(&other)], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["state.json", "metrics.csv", "best_policy.json"] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(other.join(f)).unwrap(), "{f}");
    }

    let d = tmp.path().join("d");
    let o = dictrl(&["distill", "--run", s(&run), "--output", s(&d)], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&d.join("comparison.csv")), 2);
    assert_eq!(data_rows(&d.join("sweep.csv")), 1);

    for (policy, out) in [(run.join("best_policy.json"), "e1"), (d.join("student.json"), "e2")] {
        let e = tmp.path().join(out);
        let o = dictrl(&["eval", "--config", s(&cfg), "--policy", s(&policy), "--episodes", "5", "--output", s(&e)], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(data_rows(&e.join("returns.csv")), 5);
    }

    let u = tmp.path().join("u");
    let o = dictrl(&["uq-map", "--run", s(&run), "--output", s(&u)], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&u.join("landscape.csv")), 100);
}

#[test]
fn sweep_emits_one_row_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", &TINY.replace("\"refits\": 3", "\"refits\": 1"));
    let out = tmp.path().join("s");
    let o = dictrl(&["sweep", "--config", s(&cfg), "--output", s(&out), "--workers", "2"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out.join("runs.csv")), 8);
    assert_eq!(data_rows(&out.join("cells.csv")), 4);
}
