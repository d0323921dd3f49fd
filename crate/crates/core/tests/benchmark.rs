//! Benchmark runs over the scripted founders scenario.

use dualpath::backends::ChatRule;
use dualpath::demo::founders;
use dualpath::eval::{load_benchmark, run_benchmark, EvalRecord};
use dualpath::{LanguageTag, Mode, Report};

fn de() -> LanguageTag {
    LanguageTag::new("de").unwrap()
}

fn read_records(path: &std::path::Path) -> Vec<EvalRecord> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn full_mode_scores_every_founder_question() {
    let s = founders(10);
    let (pipeline, _) = s.pipeline();
    let dir = tempfile::tempdir().unwrap();
    let run = run_benchmark(&s.benchmark, &de(), &pipeline, "founders", dir.path(), 4).unwrap();
    assert_eq!(run.report.n, 10);
    assert_eq!((run.report.em, run.report.f1, run.report.errors), (1.0, 1.0, 0));
    assert!(run.trace_failures.is_empty());

    let records = read_records(&dir.path().join("records.de.jsonl"));
    assert_eq!(records, run.records);
    let qids: Vec<&str> = records.iter().map(|r| r.qid.as_str()).collect();
    assert_eq!(qids, ["f01", "f02", "f03", "f04", "f05", "f06", "f07", "f08", "f09", "f10"], "records keep item order");

    let report: Report = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report, Report::from_records("founders", &de(), Mode::Full, &records));
    let mean_f1 = records.iter().map(|r| r.f1).sum::<f64>() / records.len() as f64;
    assert_eq!(report.f1, mean_f1);
    assert_eq!(std::fs::read_dir(dir.path().join("traces")).unwrap().count(), 10);
    assert!(dir.path().join("traces/founders.de.f03.trace.json").is_file());
}

#[test]
fn a_failing_item_is_scored_zero_and_counted() {
    let mut s = founders(3);
    s.script.chat.insert(0, ChatRule::fail(Some("decompose"), &["Firma 2 geboren"], "HTTP 500"));
    let (pipeline, _) = s.pipeline();
    let dir = tempfile::tempdir().unwrap();
    let run = run_benchmark(&s.benchmark, &de(), &pipeline, "founders", dir.path(), 2).unwrap();
    assert_eq!(run.report.errors, 1);
    let failed = &run.records[1];
    assert_eq!((failed.em, failed.f1), (0, 0.0));
    assert!(failed.error.as_deref().unwrap().contains("HTTP 500"));
    assert!((run.report.em - 2.0 / 3.0).abs() < 1e-12);
    // the failing trace is still written for inspection
    assert!(dir.path().join("traces/founders.de.f02.trace.json").is_file());
}

#[test]
fn every_mode_produces_a_report() {
    let s = founders(2);
    let dir = tempfile::tempdir().unwrap();
    for mode in Mode::ALL {
        let (pipeline, _) = s.pipeline();
        let pipeline = pipeline.with_mode(mode);
        let run = run_benchmark(&s.benchmark, &de(), &pipeline, "founders", &dir.path().join(mode.as_str()), 1).unwrap();
        assert_eq!(run.report.mode, mode);
        assert_eq!(run.report.n, 2);
        assert!(run.records.iter().all(|r| r.mode == mode));
        assert!(run.report.row().starts_with(&format!("founders de {mode} n=2 EM ")));
    }
}

#[test]
fn parallel_runs_match_sequential_runs() {
    let s = founders(10);
    let strip = |mut rs: Vec<EvalRecord>| {
        for r in &mut rs {
            r.latency_ms = 0;
        }
        rs
    };
    let dir = tempfile::tempdir().unwrap();
    let run = |jobs: usize| {
        let (pipeline, _) = s.pipeline();
        run_benchmark(&s.benchmark, &de(), &pipeline, "founders", &dir.path().join(jobs.to_string()), jobs).unwrap()
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(strip(one.records), strip(four.records));
    assert_eq!(one.report, four.report);
    let trace = |jobs: usize| std::fs::read(dir.path().join(format!("{jobs}/traces/founders.de.f07.trace.json"))).unwrap();
    assert_eq!(trace(1), trace(4));
}

#[test]
fn benchmark_files_round_trip() {
    let s = founders(4);
    let dir = tempfile::tempdir().unwrap();
    let files = s.write(dir.path()).unwrap();
    assert_eq!(load_benchmark(&files.benchmark).unwrap(), s.benchmark);
}
