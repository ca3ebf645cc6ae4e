use std::fs;
use std::path::Path;

use ce_backends::{
    attach_embeddings, gather_candidates, Backend, BackendConfig, BackendError, BackendSpec,
    EmbeddingRequest, GenerationRequest, ImageInput, SampleDescriptor,
};
use ce_core::{build_expert_request, run_sample, PipelineConfig, Sample, DEFAULT_TEMPLATE};

fn write(root: &Path, rel: &str, body: &str) {
    let p = root.join(rel);
    fs::create_dir_all(p.parent().unwrap()).unwrap();
    fs::write(p, body).unwrap();
}

fn request(sample_id: &str) -> GenerationRequest {
    GenerationRequest::new(sample_id, ImageInput::None, "read")
}

#[test]
fn fixture_hit_and_miss() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s1/alpha.txt", "recorded text\n");
    let b = Backend::new(BackendSpec::fixture("alpha", dir.path())).unwrap();

    let r = b.generate(&request("s1")).unwrap();
    assert_eq!(r.text, "recorded text");
    assert_eq!(r.attempts, 1);
    assert_eq!(r.model_name, "alpha");

    match b.generate(&request("s2")).unwrap_err() {
        BackendError::FixtureMiss {
            sample_id,
            model_name,
            path,
        } => {
            assert_eq!((sample_id.as_str(), model_name.as_str()), ("s2", "alpha"));
            assert!(path.ends_with("s2/alpha.txt"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(b.calls(), 2);
}

#[test]
fn fixture_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s1/a.emb", "0.25\n-0.5\n1\n");
    write(dir.path(), "s1/b.emb", "1\n0\n0\n");
    write(dir.path(), "s1/c.emb", "0\n1\n0\n");
    write(dir.path(), "s1/short.emb", "1\n0\n");
    let b = Backend::new(BackendSpec::fixture("bge", dir.path())).unwrap();

    let items = |pairs: &[(&str, &str)]| EmbeddingRequest {
        sample_id: "s1".into(),
        items: pairs
            .iter()
            .map(|(m, t)| (m.to_string(), t.to_string()))
            .collect(),
    };

    let v = b
        .embed(&items(&[("a", "x"), ("b", "y"), ("c", "z")]))
        .unwrap();
    assert_eq!(v.len(), 3);
    assert_eq!(v[0], vec![0.25, -0.5, 1.0]);
    assert!(v.iter().all(|e| e.len() == 3));

    let dup = b.embed(&items(&[("a", "same"), ("b", "same")])).unwrap();
    assert_eq!(dup[0], dup[1]);

    assert!(matches!(
        b.embed(&items(&[("a", "x"), ("short", "y")])),
        Err(BackendError::DimensionMismatch {
            expected: 3,
            found: 2
        })
    ));
    assert!(b.embed(&items(&[])).is_err());
}

fn three_backends(root: &Path) -> Vec<Backend> {
    ["m1", "m2", "m3"]
        .iter()
        .map(|m| Backend::new(BackendSpec::fixture(*m, root)).unwrap())
        .collect()
}

#[test]
fn gather_keeps_configured_order() {
    let dir = tempfile::tempdir().unwrap();
    for (m, t) in [("m1", "one"), ("m2", "two"), ("m3", "three")] {
        write(dir.path(), &format!("s/{m}.txt"), t);
    }
    let mut desc = SampleDescriptor::new("s");
    desc.truth = Some("one".into());
    let g = gather_candidates(&desc, &three_backends(dir.path())).unwrap();
    let got: Vec<(&str, &str)> = g
        .sample
        .candidates
        .iter()
        .map(|c| (c.model_id.as_str(), c.text.as_str()))
        .collect();
    assert_eq!(got, [("m1", "one"), ("m2", "two"), ("m3", "three")]);
    assert!(g.failures.is_empty());
    assert_eq!(g.sample.truth.as_deref(), Some("one"));
}

#[test]
fn gather_tolerates_one_failure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s/m1.txt", "one");
    write(dir.path(), "s/m3.txt", "three");
    let g = gather_candidates(&SampleDescriptor::new("s"), &three_backends(dir.path())).unwrap();
    assert_eq!(g.sample.len(), 2);
    assert_eq!(g.sample.candidates[1].model_id, "m3");
    assert_eq!(g.failures.len(), 1);
    assert_eq!(g.failures[0].model, "m2");
    assert!(g.failures[0].error.contains("no fixture"));
}

#[test]
fn gather_needs_two_successes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s/m2.txt", "two");
    match gather_candidates(&SampleDescriptor::new("s"), &three_backends(dir.path())) {
        Err(BackendError::InsufficientCandidates {
            sample_id,
            succeeded,
            failures,
        }) => {
            assert_eq!(sample_id, "s");
            assert_eq!(succeeded, 1);
            assert_eq!(
                failures
                    .iter()
                    .map(|f| f.model.as_str())
                    .collect::<Vec<_>>(),
                ["m1", "m3"]
            );
        }
        other => panic!("unexpected {other:?}"),
    }
    let one = &three_backends(dir.path())[..1];
    assert!(matches!(
        gather_candidates(&SampleDescriptor::new("s"), one),
        Err(BackendError::Config(_))
    ));
}

#[test]
fn attach_embeddings_fills_candidates() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s/m1.emb", "1\n0\n");
    write(dir.path(), "s/m2.emb", "0\n1\n");
    let mut sample = Sample::new(
        "s",
        vec![
            ce_core::Candidate::new("m1", "a"),
            ce_core::Candidate::new("m2", "b"),
        ],
    );
    attach_embeddings(
        &mut sample,
        &Backend::new(BackendSpec::fixture("emb", dir.path())).unwrap(),
    )
    .unwrap();
    assert_eq!(sample.candidates[1].embedding, Some(vec![0.0, 1.0]));
}

#[test]
fn call_log_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "fx/s/a.txt", "x");
    write(dir.path(), "fx/s/b.txt", "y");
    write(
        dir.path(),
        "backends.toml",
        r#"
[[candidates]]
kind = "fixture"
model_name = "a"
fixture_dir = "fx"
call_log = "calls.log"

[[candidates]]
kind = "fixture"
model_name = "b"
fixture_dir = "fx"
call_log = "calls.log"
"#,
    );
    let cfg = BackendConfig::load(&dir.path().join("backends.toml")).unwrap();
    let backends: Vec<Backend> = cfg
        .candidates
        .into_iter()
        .map(|s| Backend::new(s).unwrap())
        .collect();
    gather_candidates(&SampleDescriptor::new("s"), &backends).unwrap();
    let log = fs::read_to_string(dir.path().join("calls.log")).unwrap();
    let mut lines: Vec<&str> = log.lines().collect();
    lines.sort();
    assert_eq!(lines, ["generate\ts\ta", "generate\ts\tb"]);
}

fn golden_sample() -> Sample {
    let mut s = Sample::new(
        "receipt-7",
        vec![
            ce_core::Candidate::new("m1", "TOTAL 12.50"),
            ce_core::Candidate::new("m2", "TOTAL 12.S0"),
            ce_core::Candidate::new("m3", "T0TAL {12.50}"),
        ],
    );
    s.image_ref = Some("images/receipt-7.png".into());
    s
}

#[test]
fn expert_prompt_matches_golden_file() {
    let golden = include_str!("golden/expert_prompt.txt");
    let req = build_expert_request(&golden_sample(), "TOTAL 12.50", DEFAULT_TEMPLATE).unwrap();
    assert_eq!(req.prompt, golden);
}

#[test]
fn fixture_expert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "receipt-7/judge.txt", "TOTAL 12.50 EUR\n");
    let mut spec = BackendSpec::fixture("judge", dir.path());
    spec.call_log = Some(dir.path().join("expert.log"));
    let expert = Backend::new(spec).unwrap();

    let mut cfg = PipelineConfig::default();
    cfg.consensus.theta = 0.0;
    let out = run_sample(&golden_sample(), &cfg, Some(&expert)).unwrap();
    assert!(out.expert_used);
    assert_eq!(out.text, "TOTAL 12.50 EUR");
    assert_eq!(expert.calls(), 1);

    cfg.consensus.theta = 1.0;
    let out = run_sample(&golden_sample(), &cfg, Some(&expert)).unwrap();
    assert!(!out.expert_used);
    assert_eq!(expert.calls(), 1);
    assert_eq!(
        fs::read_to_string(dir.path().join("expert.log")).unwrap(),
        "generate\treceipt-7\tjudge\n"
    );
}
