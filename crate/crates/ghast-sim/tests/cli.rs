use std::path::Path;
use std::process::Command;

use ghast_core::confirm::confirmation_risk;
use ghast_sim::events::{check_legality, parse_log};
use ghast_sim::metrics::MetricsRecord;
use ghast_sim::report::ReportFile;
use ghast_sim::scenario::{parse_risk_answers, parse_risk_queries, sweep_from_csv};

fn ghast(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ghast")).args(args).current_dir(cwd).env("GHAST_LOG", "warn").output().unwrap()
}

const RUN: &str = "[sim]\nnodes = 12\nbeta = 0.25\ndelay = 2\neta_d = 1.5\nhorizon = 150\nseed = 3\n\
[protocol]\neta_w = 240\neta_a = 700\neta_t = 8\neta_b = 6\n\
[adversary]\nkind = withhold\nrelease_lead = 2\n\
[oracle]\nenabled = true\n\
[confirm]\nenabled = true\nbeta = 0.05\n";

#[test]
fn run_writes_four_readable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.cfg"), RUN).unwrap();
    let out = ghast(&["run", "a.cfg", "--out-dir", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    let events = parse_log(&std::fs::read_to_string(o.join("events.log")).unwrap()).unwrap();
    check_legality(&events, 2).unwrap();
    let blocks = MetricsRecord::blocks_from_csv(&std::fs::read_to_string(o.join("blocks.csv")).unwrap()).unwrap();
    let agg = MetricsRecord::aggregates_from_json(&std::fs::read_to_string(o.join("metrics.json")).unwrap()).unwrap();
    let report = ReportFile::from_json(&std::fs::read_to_string(o.join("oracle_report.json")).unwrap()).unwrap();
    // The table lists genesis; the aggregate count does not.
    assert_eq!(blocks.len() as u64, agg.blocks + 1);
    assert_eq!(agg.rounds, 150);
    assert!(report.enabled);
    assert_eq!(report.events_checked as usize, events.len());
    assert_eq!(report.violation_count, 0);

    let again = ghast(&["run", "a.cfg", "--out-dir", "p"], dir.path());
    assert!(again.status.success());
    for f in ["events.log", "blocks.csv", "metrics.json", "oracle_report.json"] {
        assert_eq!(std::fs::read(o.join(f)).unwrap(), std::fs::read(dir.path().join("p").join(f)).unwrap(), "{f}");
    }
    let reseeded = ghast(&["run", "a.cfg", "--seed", "4", "--out-dir", "q"], dir.path());
    assert!(reseeded.status.success());
    assert_ne!(std::fs::read(o.join("events.log")).unwrap(), std::fs::read(dir.path().join("q/events.log")).unwrap());
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "[sim]\nnodes = 4\nbeta = 0.7\n").unwrap();
    let out = ghast(&["run", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(ghast(&["run", "missing.cfg"], dir.path()).status.code(), Some(4));
    std::fs::write(dir.path().join("late.txt"), "0 delay 5\n").unwrap();
    std::fs::write(dir.path().join("s.cfg"), "[sim]\nnodes = 4\ndelay = 1\nhorizon = 20\n[adversary]\nkind = script\nscript = late.txt\n")
        .unwrap();
    assert_eq!(ghast(&["run", "s.cfg"], dir.path()).status.code(), Some(1));
    assert!(!ghast(&["frobnicate"], dir.path()).status.success());
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.cfg"), "[sim]\nnodes = 6\neta_d = 3\nhorizon = 100\n").unwrap();
    let out = ghast(&["sweep", "s.cfg", "--axis", "sim.beta", "--values", "0,0.1,0.2", "--seed", "5"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = sweep_from_csv(&std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), ["0", "0.1", "0.2"]);
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), [5, 6, 7]);
    assert_eq!(ghast(&["sweep", "s.cfg", "--axis", "sim.beta", "--values"], dir.path()).status.code(), Some(3));
}

#[test]
fn risk_mode_answers_each_query() {
    let dir = tempfile::tempdir().unwrap();
    let text = "# m n theta t beta eta_w\n10 40 2000 500 0.1 20\n0 5 100 10 0.2 4\n";
    std::fs::write(dir.path().join("q.txt"), text).unwrap();
    let out = ghast(&["risk", "q.txt", "--out", "a.txt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let answers = parse_risk_answers(&std::fs::read_to_string(dir.path().join("a.txt")).unwrap()).unwrap();
    let queries = parse_risk_queries(text).unwrap();
    assert_eq!(answers.len(), 2);
    for ((q, r), want) in answers.iter().zip(&queries) {
        assert_eq!(q, want);
        let exact = confirmation_risk(want).unwrap();
        assert!((r - exact).abs() <= 1e-12 * exact.max(1e-300), "{r} vs {exact}");
    }
    std::fs::write(dir.path().join("bad.txt"), "1 2 3\n").unwrap();
    assert_eq!(ghast(&["risk", "bad.txt"], dir.path()).status.code(), Some(3));
}
