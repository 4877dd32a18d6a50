mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use stalecomment_core::classify::{
    ClassifyError, Classifier, ConsistencyVerdict, ScriptedClassifier, VerdictRow, VerdictStatus,
};
use stalecomment_core::config::{ClassifierKind, PipelineConfig, RepoSpec};
use stalecomment_core::pipeline::{
    read_jsonl, sha256_file, IntroducerRow, Manifest, Pipeline, StageError, TargetRow,
};
use stalecomment_core::records::MethodRecord;

use common::{pipeline_fixture, PipelineFixture, PIPELINE_SCRIPT, PIPELINE_TABLES};

struct Setup {
    fx: PipelineFixture,
    out: tempfile::TempDir,
    config: PipelineConfig,
}

fn setup(kind: ClassifierKind) -> Setup {
    let fx = pipeline_fixture();
    let out = tempfile::tempdir().unwrap();
    let script = out.path().join("script.jsonl");
    fs::write(&script, PIPELINE_SCRIPT).unwrap();
    let mut config = PipelineConfig::for_repos(vec![RepoSpec {
        path: fx.repo.path().to_path_buf(),
        name: Some("calc".into()),
    }]);
    config.output_dir = out.path().join("run");
    config.classifier.kind = kind;
    config.classifier.script = Some(script);
    Setup { fx, out, config }
}

fn run_to_records(p: &Pipeline) {
    p.mine().unwrap();
    p.sample().unwrap();
    p.extract().unwrap();
}

#[test]
fn mock_script_reproduces_hand_computed_tables() {
    let s = setup(ClassifierKind::Mock);
    let p = Pipeline::new(s.config.clone());
    run_to_records(&p);
    let l = p.layout();

    let rows: Vec<IntroducerRow> = read_jsonl(&l.introducers()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].fix, s.fx.fix);
    let expected: BTreeSet<String> = [&s.fx.c0, &s.fx.c1, &s.fx.b].into_iter().cloned().collect();
    assert_eq!(rows[0].introducers, expected);

    let targets: Vec<TargetRow> = read_jsonl(&l.targets()).unwrap();
    let bug: BTreeSet<String> = targets.iter().filter(|t| t.is_bug_introducing).map(|t| t.commit.clone()).collect();
    let nonbug: BTreeSet<String> = targets.iter().filter(|t| !t.is_bug_introducing).map(|t| t.commit.clone()).collect();
    assert_eq!(bug, expected);
    assert_eq!(nonbug, [s.fx.fix.clone(), s.fx.d.clone()].into());

    let records: Vec<MethodRecord> = read_jsonl(&l.records()).unwrap();
    assert_eq!(records.len(), 23);
    assert_eq!(records.iter().filter(|r| r.is_bug_introducing).count(), 4);

    let classifier = p.build_classifier().unwrap();
    let report = p.classify(classifier.as_ref(), false).unwrap();
    assert_eq!((report.records, report.classified, report.unclassified), (23, 23, 0));

    let a = p.analyze().unwrap();
    assert_eq!(a.counts.classified, 23);
    assert_eq!(a.counts.outside_windows, 0);
    for (w, cells) in a.windows.iter().zip(PIPELINE_TABLES) {
        let t = w.total.table;
        assert_eq!([t.a, t.b, t.c, t.d], cells, "window {}", w.window);
        assert_eq!(w.per_repo.len(), 1);
        assert_eq!(w.per_repo[0].repo, "calc");
    }
    assert_eq!(a.windows[0].total.odds_ratio, Some(0.5));
    assert_eq!(a.windows[1].total.odds_ratio, None);

    let csv = fs::read_to_string(l.contingency_csv()).unwrap();
    assert!(csv.contains("calc,\"(0,7]\",2,2,6,3,0.500000000,"), "{csv}");
    assert!(csv.contains("total,\"(7,14]\",0,0,7,3,NA,NA,NA"), "{csv}");

    let text = p.report().unwrap();
    assert!(text.contains("calc"));
    assert_eq!(fs::read_to_string(l.report()).unwrap(), text);
    drop(s.out);
}

#[test]
fn stages_refuse_to_overwrite_without_force() {
    let s = setup(ClassifierKind::Heuristic);
    let p = Pipeline::new(s.config.clone());
    assert!(matches!(p.sample(), Err(StageError::MissingInput { stage: "mine", .. })));
    p.mine().unwrap();
    let before = fs::read(p.layout().introducers()).unwrap();
    let err = p.mine().unwrap_err();
    assert!(matches!(err, StageError::OutputExists(_)));
    assert_eq!(err.kind(), "output_exists");
    assert_eq!(fs::read(p.layout().introducers()).unwrap(), before);
    Pipeline::new(s.config.clone()).force(true).mine().unwrap();
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn manifests_record_hashes_and_heads() {
    let s = setup(ClassifierKind::Heuristic);
    let p = Pipeline::new(s.config.clone());
    run_to_records(&p);
    let l = p.layout();
    let head = s.fx.repo.git(&["rev-parse", "HEAD"]);
    for stage in ["mine", "sample", "extract"] {
        let m = manifest(&l.stage_dir(stage));
        assert_eq!(m.stage, stage);
        assert_eq!(m.config_hash.as_deref(), Some(s.config.hash().as_str()));
        assert_eq!(m.repo_heads.get("calc"), Some(&head));
        assert!(humantime::parse_rfc3339(&m.created_at).is_ok(), "{}", m.created_at);
        assert!(!m.outputs.is_empty());
        for d in m.inputs.iter().chain(&m.outputs) {
            let path = l.root().join(&d.path);
            let path = if path.exists() { path } else { Path::new(&d.path).to_path_buf() };
            assert_eq!(sha256_file(&path).unwrap(), d.sha256, "{}", d.path);
        }
    }
    let sample = manifest(&l.stage_dir("sample"));
    assert_eq!(sample.inputs.len(), 1);
    assert_eq!(sample.inputs[0].sha256, sha256_file(&l.introducers()).unwrap());
}

/// Wraps the script classifier, counts calls and can fail one signature.
struct Flaky {
    inner: ScriptedClassifier,
    fail: Option<&'static str>,
    calls: AtomicUsize,
}

impl Classifier for Flaky {
    fn classify(&self, record: &MethodRecord) -> Result<ConsistencyVerdict, ClassifyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail == Some(record.signature_key.as_str()) {
            return Err(ClassifyError::EndpointUnavailable("down".into()));
        }
        self.inner.classify(record)
    }
}

fn flaky(path: &Path, fail: Option<&'static str>) -> Flaky {
    Flaky {
        inner: ScriptedClassifier::load(path).unwrap(),
        fail,
        calls: AtomicUsize::new(0),
    }
}

#[test]
fn resume_reuses_classified_rows() {
    let s = setup(ClassifierKind::Mock);
    let script = s.config.classifier.script.clone().unwrap();
    let p = Pipeline::new(s.config.clone());
    run_to_records(&p);
    let l = p.layout();

    let first = flaky(&script, Some("Calc#m3()"));
    let r1 = p.classify(&first, false).unwrap();
    assert_eq!(first.calls.load(Ordering::SeqCst), 23);
    let m3 = 6;
    assert_eq!((r1.classified, r1.unclassified), (23 - m3, m3));
    assert_eq!(r1.errors.values().sum::<usize>(), m3);

    // A fresh run would clobber the results.
    assert!(matches!(p.classify(&first, false), Err(StageError::OutputExists(_))));

    let second = flaky(&script, None);
    let r2 = p.classify(&second, true).unwrap();
    assert_eq!(second.calls.load(Ordering::SeqCst), m3);
    assert_eq!((r2.classified, r2.unclassified, r2.resumed), (23, 0, 23 - m3));

    // Interrupted run: verdicts file gone, journal ends in a torn line.
    fs::remove_file(l.verdicts()).unwrap();
    let mut journal = fs::read_to_string(l.journal()).unwrap();
    journal.push_str("{\"old_commit\":\"abc");
    fs::write(l.journal(), journal).unwrap();
    let third = flaky(&script, None);
    let r3 = p.classify(&third, true).unwrap();
    assert_eq!(third.calls.load(Ordering::SeqCst), 0);
    assert_eq!(r3.resumed, 23);

    let rows: Vec<VerdictRow> = read_jsonl(&l.verdicts()).unwrap();
    assert!(rows.iter().all(|r| r.status == VerdictStatus::Classified));
    let records: Vec<MethodRecord> = read_jsonl(&l.records()).unwrap();
    let keys: Vec<_> = rows.iter().map(VerdictRow::key).collect();
    assert_eq!(keys, records.iter().map(MethodRecord::key).collect::<Vec<_>>());
}

fn stage_files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for stage in ["mine", "sample", "extract", "classify", "analyze"] {
        let mut names: Vec<_> = fs::read_dir(root.join(stage))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n != "manifest.json" && n != "journal.jsonl")
            .collect();
        names.sort();
        for n in names {
            let bytes = fs::read(root.join(stage).join(&n)).unwrap();
            out.push((format!("{stage}/{n}"), bytes));
        }
    }
    out
}

#[test]
fn heuristic_runs_are_byte_identical() {
    let s = setup(ClassifierKind::Heuristic);
    let mut runs = Vec::new();
    for name in ["one", "two"] {
        let mut config = s.config.clone();
        config.output_dir = s.out.path().join(name);
        let p = Pipeline::new(config);
        run_to_records(&p);
        let c = p.build_classifier().unwrap();
        p.classify(c.as_ref(), false).unwrap();
        p.analyze().unwrap();
        runs.push(stage_files(p.layout().root()));
    }
    assert!(runs[0].len() >= 10);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn mock_without_script_is_invalid() {
    let mut s = setup(ClassifierKind::Mock);
    s.config.classifier.script = None;
    let err = Pipeline::new(s.config).build_classifier().err().unwrap();
    assert_eq!(err.kind(), "invalid");
}
