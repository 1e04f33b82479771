use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn selfheal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfheal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FAST_TD3: [&str; 4] = ["--set", "td3.total_steps=1500", "--set", "td3.warmup=200"];

#[test]
fn compare_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let mut args = vec![
        "compare",
        "--agents",
        "td3,qlearning,heuristic,random",
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(FAST_TD3);
    let o = selfheal(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert!(csv.starts_with("agent,env,"));
    assert_eq!(csv.lines().count(), 5);
    for agent in ["td3/continuous", "qlearning/discrete", "heuristic/discrete", "random/discrete"] {
        let d = out.join(agent);
        for f in ["summary.csv", "trajectory.csv", "action_freq.csv", "supply_reward.csv"] {
            assert!(d.join(f).exists(), "{agent}/{f}");
        }
    }
    assert!(out.join("qlearning/discrete/policy.csv").exists());
    assert!(out.join("td3/continuous/policy.mlp").exists());
}

#[test]
fn gridsim_writes_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    let o = selfheal(&["gridsim", "--controller", "oracle", "--steps", "120", "--runs", "2", "--out", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let heat = fs::read_to_string(g.join("heatmap_t120.csv")).unwrap();
    assert_eq!(heat.lines().count(), 16);
    assert!(heat.lines().all(|l| l.split(',').count() == 16));
}

#[test]
fn td3_on_discrete_is_usage_error() {
    let o = selfheal(&["train", "--agent", "td3", "--env", "discrete"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("continuous"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn unknown_subcommand_lists_valid_set() {
    let o = selfheal(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("budget-study") && err.contains("selfcheck"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = selfheal(&["selfcheck", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_usage_error() {
    let o = selfheal(&["gridsim", "--set", "grid.nope=1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid.nope"));
}

#[test]
fn selfcheck_passes() {
    let o = selfheal(&["selfcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

fn help_keys() -> Vec<(String, String)> {
    let o = selfheal(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .filter_map(|l| l.trim().split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn every_help_key_round_trips_through_overrides() {
    let keys = help_keys();
    assert!(keys.len() > 50, "{}", keys.len());
    let dir = tempfile::tempdir().unwrap();
    // Re-applying every default must leave behaviour unchanged and parse.
    let mut args: Vec<String> = vec!["gridsim".into(), "--runs".into(), "1".into(), "--steps".into(), "2".into()];
    for (k, v) in &keys {
        args.push("--set".into());
        args.push(format!("{k}={v}"));
    }
    args.push("--out".into());
    args.push(dir.path().to_str().unwrap().into());
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = selfheal(&refs);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn config_file_then_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# grid overrides\ngrid.n = 12\ngrid.horizon = 10\n").unwrap();
    let out = dir.path().join("o");
    let run = |extra: &[&str]| {
        let mut args = vec!["gridsim", "--runs", "1", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = selfheal(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    };
    run(&[]);
    let heat = fs::read_to_string(out.join("heatmap_t10.csv")).unwrap();
    assert_eq!(heat.lines().count(), 12);
    run(&["--set", "grid.n=8"]);
    let heat = fs::read_to_string(out.join("heatmap_t10.csv")).unwrap();
    assert_eq!(heat.lines().count(), 8);
}

#[test]
fn missing_config_file_is_usage_error() {
    let o = selfheal(&["selfcheck", "--config", "/definitely/not/here.cfg"]);
    // selfcheck ignores config; use a subcommand that loads it
    let _ = o;
    let o = selfheal(&["gridsim", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_then_eval_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let t = selfheal(&["train", "--agent", "qlearning", "--seed", "7", "--out", out]);
    assert_eq!(t.status.code(), Some(0), "{}", stderr(&t));
    let e = selfheal(&["eval", "--agent", "qlearning", "--seed", "7", "--out", out]);
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    assert_eq!(t.stdout, e.stdout);
    assert!(Path::new(out).join("qlearning/discrete/eval/summary.csv").exists());
}

#[test]
fn identical_argv_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = selfheal(&["compare", "--agents", "qlearning,adaptive,random", "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["compare.csv", "qlearning/discrete/trajectory.csv", "qlearning/discrete/policy.csv", "random/discrete/supply_reward.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
