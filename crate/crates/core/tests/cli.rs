use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use multitopic::scenario::{builtin, Scenario, BUILTIN_NAMES};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multitopic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn scenarios_lists_and_emits_builtins() {
    let o = run(&["scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for name in ["fig5", "fig6", "fig7", "fig8", "fig9"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }

    let dir = tempfile::tempdir().unwrap();
    let o = run(&["scenarios", "--emit", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for name in BUILTIN_NAMES {
        let loaded = Scenario::load(&dir.path().join(format!("{name}.toml"))).unwrap();
        assert_eq!(loaded, builtin(name).unwrap());
    }
}

#[test]
fn analyze_reports_partial_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "fig6.toml", &builtin("fig6").unwrap().to_toml());
    let o = run(&["analyze", &file]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("regime: partial-consensus"));
    assert!(text.contains("cluster bound: 2"));
    assert!(text.contains("{1,2,3} {4,5}"));

    let report = dir.path().join("report.txt");
    let o = run(&["analyze", "fig9", "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(report).unwrap();
    assert!(text.contains("regime: no-guarantee"));
    assert!(text.contains("adjacency-only"));
}

#[test]
fn invalid_scenario_exits_two_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "bad.toml",
        "name = \"bad\"\nagents = 2\ntopics = 2\ninitial = [[0, 0], [1, 1]]\n\n\
         [[edge]]\nagents = [1, 2]\ncoupling = [[1, 0.5], [0, 1]]\n",
    );
    let o = run(&["analyze", &file]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 6") && err.contains("symmetry"), "{err}");
}

#[test]
fn missing_file_exits_one() {
    let o = run(&["analyze", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let args = ["simulate", "fig5", "--stride", "1000", "--out", out.to_str().unwrap()];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("1: consensus"));
    let csv = fs::read(out.join("fig5.csv")).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,agent,topic,value"));
    assert_eq!(lines.next(), Some("0,1,1,1"));
    // 50 time units at h = 1e-3, every 1000th step: 51 samples of 15 values.
    assert_eq!(text.lines().count(), 1 + 51 * 15);
    assert!(out.join("fig5.txt").exists());

    let o = run(&args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(out.join("fig5.csv")).unwrap(), csv);
}

#[test]
fn simulate_overrides_and_clusters() {
    let o = run(&["simulate", "fig9", "--h", "0.002", "--tf", "30", "--tol", "1e-3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for p in 1..=3 {
        assert!(text.contains(&format!("{p}: clustered")), "{text}");
    }
    assert!(text.contains("step: 0.002"));
}

#[test]
fn unsettled_run_exits_four_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["simulate", "fig5", "--tf", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("not settled"));
    assert!(!out.join("fig5.csv").exists());
}

const ANTI: &str = "name = \"anti\"\nagents = 2\ntopics = 1\ninitial = [[0], [1]]\n\
                    [feedback]\nmode = \"inverse-proportional\"\nsmoothing = \"exact\"\n\
                    [solver]\nstep = 0.01\nhorizon = 20.0\n{extra}\
                    [[edge]]\nagents = [1, 2]\ncoupling = [[1]]\nanti = [[1, 1]]\n";

#[test]
fn anti_coupling_needs_flag_and_diverges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let plain = write(dir.path(), "a.toml", &ANTI.replace("{extra}", ""));
    let o = run(&["simulate", &plain]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("allow_unstable"));

    let flagged = write(dir.path(), "b.toml", &ANTI.replace("{extra}", "allow_unstable = true\n"));
    let o = run(&["simulate", &flagged, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("divergence"));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());

    let o = run(&["analyze", &flagged]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_verdicts_and_exit_codes() {
    let o = run(&["compare", "fig5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: PASS"));

    let o = run(&["compare", "fig6"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: PASS"));

    let o = run(&["compare", "fig7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict: INFORMATIONAL"));

    // A settled run judged with a tolerance far below the remaining spread.
    let mut s = builtin("fig5").unwrap();
    s.solver.horizon = 20.0;
    s.solver.cluster_tol = 1e-15;
    s.solver.steady_tol = 1e-3;
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "strict.toml", &s.to_toml());
    let o = run(&["compare", &file]);
    assert_eq!(o.status.code(), Some(5), "{}", stdout(&o));
    assert!(stdout(&o).contains("verdict: FAIL"));
}

#[test]
fn simulate_all_runs_every_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("all");
    let o = run(&["simulate", "--all", "--h", "0.005", "--stride", "500", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in BUILTIN_NAMES {
        assert!(out.join(format!("{name}.csv")).exists(), "{name}");
        assert!(stdout(&o).contains(&format!("scenario: {name}")));
    }
}

#[test]
fn single_agent_scenario_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(
        dir.path(),
        "lone.toml",
        "name = \"lone\"\nagents = 1\ntopics = 2\ninitial = [[0.5, 1.5]]\n[solver]\nhorizon = 1.0\n",
    );
    let o = run(&["simulate", &file]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("consensus at [0.500000]"));
}
