use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ce_ocr::report::{read_reports, ReportLine};
use ce_ocr::ReportRecord;

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demo")
}

fn ce_ocr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ce-ocr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn reports(out: &Output) -> Vec<ReportRecord> {
    read_reports(&out.stdout[..])
        .unwrap()
        .into_iter()
        .map(|l| match l {
            ReportLine::Ok(r) => *r,
            ReportLine::Failed(f) => panic!("unexpected failure {f:?}"),
        })
        .collect()
}

/// Demo backends with every call logged to `log`.
fn logged_config(dir: &Path, log: &Path) -> PathBuf {
    let fixtures = demo().join("fixtures");
    let mut toml = String::new();
    for m in ["m1", "m2", "m3"] {
        toml += &format!(
            "[[candidates]]\nkind = \"fixture\"\nmodel_name = \"{m}\"\nfixture_dir = {:?}\ncall_log = {:?}\n\n",
            s(&fixtures),
            s(log)
        );
    }
    toml += &format!(
        "[expert]\nkind = \"fixture\"\nmodel_name = \"judge\"\nfixture_dir = {:?}\ncall_log = {:?}\n",
        s(&fixtures),
        s(log)
    );
    let path = dir.join("backends.toml");
    fs::write(&path, toml).unwrap();
    path
}

fn expert_calls(log: &Path) -> Vec<String> {
    fs::read_to_string(log)
        .unwrap_or_default()
        .lines()
        .filter(|l| l.ends_with("\tjudge"))
        .map(|l| l.split('\t').nth(1).unwrap().to_string())
        .collect()
}

#[test]
fn score_demo_matches_hand_values() {
    let corpus = demo().join("corpus.jsonl");
    let config = demo().join("backends.toml");
    let out = ce_ocr(&[
        "score",
        s(&corpus),
        "--backend-config",
        s(&config),
        "--no-timing",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = reports(&out);
    let ids: Vec<&str> = r.iter().map(|r| r.sample_id.as_str()).collect();
    assert_eq!(ids, ["split", "same", "near"]);

    assert!((r[0].delta - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(r[0].e_bar.get("m3"), Some(1.0));
    assert!((r[0].weights.get("m1").unwrap() - 0.4).abs() < 1e-12);
    assert_eq!(r[1].delta, 0.0);
    assert!((r[2].delta - 0.25).abs() < 1e-12);
    assert!(r
        .iter()
        .all(|r| r.ensemble_text.is_none() && r.timing_ms.is_none()));
}

#[test]
fn route_calls_the_expert_only_above_theta() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("calls.log");
    let config = logged_config(dir.path(), &log);
    let corpus = demo().join("corpus.jsonl");

    let out = ce_ocr(&["route", s(&corpus), "--backend-config", s(&config)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(expert_calls(&log), ["split"]);
    let r = reports(&out);
    assert!(r[0].expert_used && !r[1].expert_used && !r[2].expert_used);
    assert_eq!(r[0].final_text.as_deref(), Some("ab"));

    fs::remove_file(&log).unwrap();
    let out = ce_ocr(&[
        "route",
        s(&corpus),
        "--backend-config",
        s(&config),
        "--theta",
        "1",
    ]);
    assert!(out.status.success());
    assert!(expert_calls(&log).is_empty());
    assert!(reports(&out).iter().all(|r| !r.expert_used));
    // Candidates were still fetched.
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 9);
}

#[test]
fn route_without_expert_falls_back_with_warning() {
    let corpus = demo().join("corpus.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("backends.toml");
    let full = fs::read_to_string(demo().join("backends.toml")).unwrap();
    let fixtures = demo().join("fixtures");
    let no_expert = full
        .split("[expert]")
        .next()
        .unwrap()
        .replace("\"fixtures\"", &format!("{:?}", s(&fixtures)));
    fs::write(&config, no_expert).unwrap();

    let out = ce_ocr(&["route", s(&corpus), "--backend-config", s(&config)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = reports(&out);
    assert!(!r[0].expert_used);
    assert_eq!(r[0].final_text, r[0].ensemble_text);
    assert!(!r[0].warnings.is_empty());
}

#[test]
fn synth_at_rate_zero_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("synth.jsonl");
    let out = ce_ocr(&[
        "synth",
        "--samples",
        "20",
        "--min-len",
        "30",
        "--max-len",
        "60",
        "--rate",
        "0",
        "--seed",
        "7",
        "--out",
        s(&corpus),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = ce_ocr(&["score", s(&corpus)]);
    assert!(out.status.success());
    let r = reports(&out);
    assert_eq!(r.len(), 20);
    assert!(r.iter().all(|r| r.delta == 0.0));
}

#[test]
fn eval_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let corpus = demo().join("corpus.jsonl");
    let config = demo().join("backends.toml");
    let out = ce_ocr(&[
        "eval",
        s(&corpus),
        "--backend-config",
        s(&config),
        "--summary",
        s(&summary),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(v["samples"], 3);
    assert_eq!(v["expert_used"], 1);
    assert_eq!(v["mean_final_score"], 1.0);
    assert_eq!(v["verification"]["f1"], 1.0);
    assert!(reports(&out).iter().all(|r| r.rover_text.is_some()));
}

#[test]
fn sweep_from_reports_and_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo().join("corpus.jsonl");
    let config = demo().join("backends.toml");
    let rep = dir.path().join("reports.jsonl");
    let out = ce_ocr(&[
        "eval",
        s(&corpus),
        "--backend-config",
        s(&config),
        "--out",
        s(&rep),
    ]);
    assert!(out.status.success());

    let out = ce_ocr(&["sweep", "--reports", s(&rep), "--thetas", "0,0.5,1"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "theta,routed_fraction,precision,recall,f1,mean_score"
    );
    assert_eq!(lines.len(), 4);
    assert!(
        lines[2].starts_with("0.5,0.3333333333333333,1.0,1.0,1.0,"),
        "{}",
        lines[2]
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("best F1 1.0000 at theta 0.5"));

    let out = ce_ocr(&[
        "sweep",
        "--corpus",
        s(&corpus),
        "--backend-config",
        s(&config),
        "--steps",
        "4",
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 6);

    let out = ce_ocr(&["sweep", "--reports", s(&rep), "--thetas", "0.5,0.1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = demo().join("corpus.jsonl");
    let config = demo().join("backends.toml");

    assert_eq!(ce_ocr(&["--help"]).status.code(), Some(0));
    assert_eq!(ce_ocr(&["score"]).status.code(), Some(1));
    assert_eq!(ce_ocr(&["frobnicate"]).status.code(), Some(1));
    let bad_theta = ce_ocr(&["score", s(&corpus), "--theta", "1.5"]);
    assert_eq!(bad_theta.status.code(), Some(1));
    let missing = ce_ocr(&["score", s(&dir.path().join("nope.jsonl"))]);
    assert_eq!(missing.status.code(), Some(1));

    // Candidates absent and no backends: a data error.
    let out = ce_ocr(&["score", s(&corpus)]);
    assert_eq!(out.status.code(), Some(2));
    let malformed = dir.path().join("bad.jsonl");
    fs::write(&malformed, "{\"sample_id\": \n").unwrap();
    let out = ce_ocr(&["score", s(&malformed)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    // No fixtures for this sample at all.
    let unknown = dir.path().join("unknown.jsonl");
    fs::write(&unknown, "{\"sample_id\":\"ghost\"}\n").unwrap();
    let out = ce_ocr(&["score", s(&unknown), "--backend-config", s(&config)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn keep_going_reports_failures_in_place() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo().join("backends.toml");
    let corpus = dir.path().join("mixed.jsonl");
    fs::write(
        &corpus,
        "{\"sample_id\":\"same\"}\n{\"sample_id\":\"ghost\"}\n{\"sample_id\":\"near\"}\n",
    )
    .unwrap();

    let stop = ce_ocr(&["score", s(&corpus), "--backend-config", s(&config)]);
    assert_eq!(stop.status.code(), Some(3));
    assert_eq!(read_reports(&stop.stdout[..]).unwrap().len(), 1);

    let out = ce_ocr(&[
        "score",
        s(&corpus),
        "--backend-config",
        s(&config),
        "--keep-going",
    ]);
    assert!(out.status.success());
    let lines = read_reports(&out.stdout[..]).unwrap();
    assert_eq!(lines.len(), 3);
    match &lines[1] {
        ReportLine::Failed(f) => assert_eq!(f.sample_id, "ghost"),
        other => panic!("expected a failed line, got {other:?}"),
    }
    assert!(matches!(lines[2], ReportLine::Ok(_)));
}

#[test]
fn config_file_defaults_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let settings = dir.path().join("ce.toml");
    fs::write(
        &settings,
        format!(
            "theta = 0.2\nbackend_config = {:?}\nno_timing = true\n",
            s(&demo().join("backends.toml"))
        ),
    )
    .unwrap();
    let corpus = demo().join("corpus.jsonl");

    let out = ce_ocr(&["score", s(&corpus), "--config", s(&settings)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = reports(&out);
    assert!(r.iter().all(|r| r.theta == 0.2 && r.timing_ms.is_none()));
    assert_eq!(r[2].decision, ce_core::Route::Expert);

    let out = ce_ocr(&[
        "score",
        s(&corpus),
        "--config",
        s(&settings),
        "--theta",
        "0.3",
    ]);
    assert_eq!(reports(&out)[2].decision, ce_core::Route::Ensemble);
}
