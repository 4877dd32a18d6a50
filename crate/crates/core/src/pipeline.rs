//! File-based pipeline stages. Each stage reads its predecessor's files,
//! writes its own outputs plus a manifest, and refuses to overwrite
//! existing outputs unless forced.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::SystemTime;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bugfix::filter_bugfix_commits;
use crate::classify::{
    classify_records, Classifier, ClassifyError, Cup2Error, Cup2Reader, HeuristicClassifier,
    HttpChatClient, LlmClassifier, PromptTemplate, ScriptedClassifier, VerdictRow, VerdictStatus,
};
use crate::config::{AnalysisSettings, ClassifierKind, ConfigError, PipelineConfig, RepoSpec};
use crate::eval::{metrics, metrics_csv, metrics_text, ConfusionMatrix, Metrics};
use crate::git::{CommitMeta, GitError, GitRepo};
use crate::records::{
    build_records, select_targets, MethodRecord, RecordKey, RecordsError, SamplePlan, Target,
    TargetFailure, Window,
};
use crate::stats::{analyze, Analysis};
use crate::szz::{find_all_bug_introducing, Evidence, FixFailure};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{repo}: {source}")]
    Git { repo: String, source: GitError },
    #[error("{repo}: {source}")]
    Records { repo: String, source: RecordsError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Json { path: PathBuf, line: usize, message: String },
    #[error("{} already exists; pass --force to overwrite", .0.display())]
    OutputExists(PathBuf),
    #[error("missing input {}; run the {stage} stage first", path.display())]
    MissingInput { path: PathBuf, stage: &'static str },
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Dataset(#[from] Cup2Error),
    #[error("{0}")]
    Invalid(String),
}

impl StageError {
    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            StageError::Config(_) => "config",
            StageError::Git { .. } => "git",
            StageError::Records { .. } => "records",
            StageError::Io { .. } => "io",
            StageError::Json { .. } => "json",
            StageError::OutputExists(_) => "output_exists",
            StageError::MissingInput { .. } => "missing_input",
            StageError::Classify(_) => "classify",
            StageError::Dataset(_) => "dataset",
            StageError::Invalid(_) => "invalid",
        }
    }
}

pub type Result<T, E = StageError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn git_err(repo: &str) -> impl FnOnce(GitError) -> StageError + '_ {
    move |source| StageError::Git {
        repo: repo.to_string(),
        source,
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(io_err(path))?;
    Ok(hex::encode(h.finalize()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StageError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("serializable");
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value).expect("serializable");
    buf.push(b'\n');
    write_atomic(path, &buf)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StageError::Json {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance of one stage run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_hash: Option<String>,
    pub created_at: String,
    /// Resolved head commit per repository label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub repo_heads: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn digests(paths: &[&Path], base: &Path) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.strip_prefix(base).unwrap_or(p).display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

fn write_manifest(
    dir: &Path,
    stage: &str,
    config_hash: Option<String>,
    repo_heads: BTreeMap<String, String>,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let base = dir.parent().unwrap_or(dir);
    let manifest = Manifest {
        stage: stage.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        config_hash,
        created_at: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
        repo_heads,
        inputs: digests(inputs, base)?,
        outputs: digests(outputs, base)?,
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

fn guard_outputs(outputs: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    match outputs.iter().find(|p| p.exists()) {
        Some(p) => Err(StageError::OutputExists(p.to_path_buf())),
        None => Ok(()),
    }
}

fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(StageError::MissingInput {
            path: path.to_path_buf(),
            stage,
        })
    }
}

/// Where each stage keeps its files under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    pub fn manifest(&self, stage: &str) -> PathBuf {
        self.stage_dir(stage).join("manifest.json")
    }

    pub fn bugfixes(&self) -> PathBuf {
        self.stage_dir("mine").join("bugfixes.jsonl")
    }

    pub fn introducers(&self) -> PathBuf {
        self.stage_dir("mine").join("introducers.jsonl")
    }

    pub fn mine_report(&self) -> PathBuf {
        self.stage_dir("mine").join("report.json")
    }

    pub fn targets(&self) -> PathBuf {
        self.stage_dir("sample").join("targets.jsonl")
    }

    pub fn sample_report(&self) -> PathBuf {
        self.stage_dir("sample").join("report.json")
    }

    pub fn records(&self) -> PathBuf {
        self.stage_dir("extract").join("records.jsonl")
    }

    pub fn extract_report(&self) -> PathBuf {
        self.stage_dir("extract").join("report.json")
    }

    pub fn verdicts(&self) -> PathBuf {
        self.stage_dir("classify").join("verdicts.jsonl")
    }

    pub fn journal(&self) -> PathBuf {
        self.stage_dir("classify").join("journal.jsonl")
    }

    pub fn classify_report(&self) -> PathBuf {
        self.stage_dir("classify").join("report.json")
    }

    pub fn contingency_csv(&self) -> PathBuf {
        self.stage_dir("analyze").join("contingency.csv")
    }

    pub fn analysis_json(&self) -> PathBuf {
        self.stage_dir("analyze").join("summary.json")
    }

    pub fn analysis_text(&self) -> PathBuf {
        self.stage_dir("analyze").join("tables.txt")
    }

    pub fn report(&self) -> PathBuf {
        self.stage_dir("report").join("report.txt")
    }
}

/// One line of the introducers file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntroducerRow {
    pub repo: String,
    pub fix: String,
    pub introducers: BTreeSet<String>,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoMineSummary {
    pub repo: String,
    pub commits: usize,
    pub bugfixes: usize,
    pub introducers: usize,
    pub skipped_roots: Vec<String>,
    pub failures: Vec<FixFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineReport {
    pub repos: Vec<RepoMineSummary>,
}

/// One line of the targets file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRow {
    pub repo: String,
    pub commit: String,
    pub author_time: i64,
    pub is_bug_introducing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoSampleSummary {
    pub repo: String,
    pub plan: Option<SamplePlan>,
    pub bug_targets: usize,
    pub nonbug_targets: usize,
    pub insufficient_nonbug: bool,
    /// Set when the repository had nothing to sample.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub repos: Vec<RepoSampleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoExtractSummary {
    pub repo: String,
    pub window: Window,
    pub targets: usize,
    pub records: usize,
    pub unbalanced_files: usize,
    pub failures: Vec<TargetFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub repos: Vec<RepoExtractSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub classifier: String,
    pub records: usize,
    pub classified: usize,
    pub unclassified: usize,
    /// Rows reused from an earlier interrupted run.
    pub resumed: usize,
    /// Error message counts among unclassified rows.
    pub errors: BTreeMap<String, usize>,
}

/// Stage runner bound to one configuration.
type MinedRepo = (Vec<CommitMeta>, Vec<IntroducerRow>, RepoMineSummary);

pub struct Pipeline {
    config: PipelineConfig,
    layout: Layout,
    force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let layout = Layout::new(config.output_dir.clone());
        Pipeline {
            config,
            layout,
            force: false,
        }
    }

    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn open_repo(&self, spec: &RepoSpec) -> Result<GitRepo> {
        let label = spec.label();
        Ok(GitRepo::open(&spec.path, label.as_str())
            .map_err(git_err(&label))?
            .with_clock(self.config.git.clock)
            .with_branch(self.config.git.branch.clone()))
    }

    fn repo_heads(&self, repos: &[GitRepo]) -> Result<BTreeMap<String, String>> {
        let rev = self.config.git.branch.as_deref().unwrap_or("HEAD");
        repos
            .iter()
            .map(|r| Ok((r.name().to_string(), r.resolve(rev).map_err(git_err(r.name()))?)))
            .collect()
    }

    fn open_all(&self) -> Result<Vec<GitRepo>> {
        self.config.repos.iter().map(|s| self.open_repo(s)).collect()
    }

    /// Bug-fixing commits and their SZZ introducers for every repository.
    pub fn mine(&self) -> Result<MineReport> {
        let l = &self.layout;
        let outputs = [l.bugfixes(), l.introducers(), l.mine_report()];
        guard_outputs(&outputs.each_ref().map(PathBuf::as_path), self.force)?;
        let repos = self.open_all()?;
        let heads = self.repo_heads(&repos)?;

        let per_repo: Vec<Result<MinedRepo>> = repos
            .par_iter()
            .map(|repo| {
                let commits = repo.list_commits(None).map_err(git_err(repo.name()))?;
                let fixes = filter_bugfix_commits(&commits, &self.config.bugfix);
                let szz = find_all_bug_introducing(repo, &fixes, self.config.szz);
                let rows = szz
                    .per_fix
                    .into_iter()
                    .map(|s| IntroducerRow {
                        repo: repo.name().to_string(),
                        fix: s.fix,
                        introducers: s.introducers,
                        evidence: s.evidence,
                    })
                    .collect();
                let summary = RepoMineSummary {
                    repo: repo.name().to_string(),
                    commits: commits.len(),
                    bugfixes: fixes.len(),
                    introducers: szz.introducers.len(),
                    skipped_roots: szz.skipped_roots,
                    failures: szz.failures,
                };
                Ok((fixes, rows, summary))
            })
            .collect();

        let mut fixes = Vec::new();
        let mut rows = Vec::new();
        let mut report = MineReport::default();
        for r in per_repo {
            let (f, i, s) = r?;
            fixes.extend(f);
            rows.extend(i);
            report.repos.push(s);
        }
        write_jsonl(&l.bugfixes(), &fixes)?;
        write_jsonl(&l.introducers(), &rows)?;
        write_json(&l.mine_report(), &report)?;
        write_manifest(
            &l.stage_dir("mine"),
            "mine",
            Some(self.config.hash()),
            heads,
            &[],
            &outputs.each_ref().map(PathBuf::as_path),
        )?;
        Ok(report)
    }

    /// Seeded bug and non-bug target samples per repository.
    pub fn sample(&self) -> Result<SampleReport> {
        let l = &self.layout;
        require(&l.introducers(), "mine")?;
        let outputs = [l.targets(), l.sample_report()];
        guard_outputs(&outputs.each_ref().map(PathBuf::as_path), self.force)?;
        let rows: Vec<IntroducerRow> = read_jsonl(&l.introducers())?;
        let mut by_repo: HashMap<&str, BTreeSet<String>> = HashMap::new();
        for r in &rows {
            by_repo
                .entry(r.repo.as_str())
                .or_default()
                .extend(r.introducers.iter().cloned());
        }
        let repos = self.open_all()?;
        let heads = self.repo_heads(&repos)?;
        let s = self.config.sampling;

        let mut targets = Vec::new();
        let mut report = SampleReport::default();
        for repo in &repos {
            let name = repo.name();
            let introducers = by_repo.remove(name).unwrap_or_default();
            let commits = repo.list_commits(None).map_err(git_err(name))?;
            let population = commits.iter().filter(|c| introducers.contains(&c.id)).count() as u64;
            if population == 0 {
                log::warn!("{name}: no bug-introducing commits; nothing sampled");
                report.repos.push(RepoSampleSummary {
                    repo: name.to_string(),
                    plan: None,
                    bug_targets: 0,
                    nonbug_targets: 0,
                    insufficient_nonbug: false,
                    note: Some("no bug-introducing commits".into()),
                });
                continue;
            }
            let records_err = |source| StageError::Records {
                repo: name.to_string(),
                source,
            };
            let plan = SamplePlan::new(population, s.confidence, s.margin, s.seed).map_err(records_err)?;
            let sel = select_targets(repo, &commits, &introducers, &plan, &self.config.paths)
                .map_err(records_err)?;
            if sel.insufficient_nonbug {
                log::warn!(
                    "{name}: only {} non-bug targets for {} bug targets",
                    sel.nonbug.len(),
                    sel.bug.len()
                );
            }
            report.repos.push(RepoSampleSummary {
                repo: name.to_string(),
                plan: Some(plan),
                bug_targets: sel.bug.len(),
                nonbug_targets: sel.nonbug.len(),
                insufficient_nonbug: sel.insufficient_nonbug,
                note: None,
            });
            targets.extend(sel.targets().into_iter().map(|t| TargetRow {
                repo: name.to_string(),
                commit: t.commit.id,
                author_time: t.commit.author_time,
                is_bug_introducing: t.is_bug_introducing,
            }));
        }
        write_jsonl(&l.targets(), &targets)?;
        write_json(&l.sample_report(), &report)?;
        write_manifest(
            &l.stage_dir("sample"),
            "sample",
            Some(self.config.hash()),
            heads,
            &[&l.introducers()],
            &outputs.each_ref().map(PathBuf::as_path),
        )?;
        Ok(report)
    }

    /// Method-change records for every target over the envelope of the
    /// configured windows.
    pub fn extract(&self) -> Result<ExtractReport> {
        let l = &self.layout;
        require(&l.targets(), "sample")?;
        let outputs = [l.records(), l.extract_report()];
        guard_outputs(&outputs.each_ref().map(PathBuf::as_path), self.force)?;
        let rows: Vec<TargetRow> = read_jsonl(&l.targets())?;
        let windows = self.config.window_list()?;
        let envelope = Window::envelope(&windows)
            .ok_or_else(|| StageError::Invalid("no windows configured".into()))?;
        let repos = self.open_all()?;
        let heads = self.repo_heads(&repos)?;
        let opts = self.config.extract.diff_options();

        let per_repo: Vec<Result<(Vec<MethodRecord>, RepoExtractSummary)>> = repos
            .par_iter()
            .map(|repo| {
                let name = repo.name();
                let history = repo.list_commits(None).map_err(git_err(name))?;
                let by_id: HashMap<&str, &CommitMeta> =
                    history.iter().map(|c| (c.id.as_str(), c)).collect();
                let targets = rows
                    .iter()
                    .filter(|r| r.repo == name)
                    .map(|r| {
                        let commit = by_id.get(r.commit.as_str()).ok_or_else(|| StageError::Git {
                            repo: name.to_string(),
                            source: GitError::UnknownCommit(r.commit.clone()),
                        })?;
                        Ok(Target {
                            commit: (*commit).clone(),
                            is_bug_introducing: r.is_bug_introducing,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let batch = build_records(repo, &targets, &history, envelope, opts);
                let summary = RepoExtractSummary {
                    repo: name.to_string(),
                    window: envelope,
                    targets: targets.len(),
                    records: batch.records.len(),
                    unbalanced_files: batch.unbalanced_files,
                    failures: batch.failures,
                };
                Ok((batch.records, summary))
            })
            .collect();

        let mut records = Vec::new();
        let mut report = ExtractReport::default();
        for r in per_repo {
            let (recs, summary) = r?;
            records.extend(recs);
            report.repos.push(summary);
        }
        write_jsonl(&l.records(), &records)?;
        write_json(&l.extract_report(), &report)?;
        write_manifest(
            &l.stage_dir("extract"),
            "extract",
            Some(self.config.hash()),
            heads,
            &[&l.targets()],
            &outputs.each_ref().map(PathBuf::as_path),
        )?;
        Ok(report)
    }

    /// The classifier selected by the configuration.
    pub fn build_classifier(&self) -> Result<Box<dyn Classifier>> {
        build_classifier(&self.config)
    }

    /// Classifies every record. With `resume`, rows already classified in
    /// the journal or a previous verdicts file are kept and only the rest
    /// are sent to the classifier.
    pub fn classify(&self, classifier: &dyn Classifier, resume: bool) -> Result<ClassifyReport> {
        let l = &self.layout;
        require(&l.records(), "extract")?;
        let (verdicts, journal, report_path) = (l.verdicts(), l.journal(), l.classify_report());
        if !resume {
            guard_outputs(&[&verdicts, &journal, &report_path], self.force)?;
            for p in [&verdicts, &journal] {
                if p.exists() {
                    fs::remove_file(p).map_err(io_err(p))?;
                }
            }
        }
        let records: Vec<MethodRecord> = read_jsonl(&l.records())?;

        let mut previous: HashMap<RecordKey, VerdictRow> = HashMap::new();
        if resume {
            for p in [&verdicts, &journal] {
                if p.exists() {
                    for row in read_jsonl_lenient::<VerdictRow>(p)? {
                        if row.status == VerdictStatus::Classified {
                            previous.insert(row.key(), row);
                        }
                    }
                }
            }
        }

        let dir = l.stage_dir("classify");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal)
            .map_err(io_err(&journal))?;
        let writer = Mutex::new(BufWriter::new(file));
        let on_row = |row: &VerdictRow| {
            let mut w = writer.lock().unwrap_or_else(|e| e.into_inner());
            let line = serde_json::to_string(row).expect("serializable");
            if writeln!(w, "{line}").and_then(|_| w.flush()).is_err() {
                log::warn!("could not append to {}", journal.display());
            }
        };
        let concurrency = self.config.endpoint.concurrency;
        let rows = classify_records(&records, classifier, concurrency, &previous, &on_row);
        drop(writer);

        let mut report = ClassifyReport {
            classifier: format!("{:?}", self.config.classifier.kind).to_lowercase(),
            records: rows.len(),
            ..ClassifyReport::default()
        };
        for (row, rec) in rows.iter().zip(&records) {
            if previous.contains_key(&rec.key()) {
                report.resumed += 1;
            }
            match row.status {
                VerdictStatus::Classified => report.classified += 1,
                VerdictStatus::Unclassified => {
                    report.unclassified += 1;
                    let msg = row.error.clone().unwrap_or_default();
                    *report.errors.entry(error_class(&msg)).or_default() += 1;
                }
            }
        }
        write_jsonl(&verdicts, &rows)?;
        write_json(&report_path, &report)?;
        let mut inputs = vec![l.records()];
        if self.config.classifier.kind == ClassifierKind::Mock {
            inputs.extend(self.config.classifier.script.clone());
        }
        write_manifest(
            &dir,
            "classify",
            Some(self.config.hash()),
            BTreeMap::new(),
            &inputs.iter().map(PathBuf::as_path).collect::<Vec<_>>(),
            &[&verdicts, &report_path],
        )?;
        Ok(report)
    }

    pub fn analyze(&self) -> Result<Analysis> {
        let l = &self.layout;
        analyze_verdicts(
            &l.verdicts(),
            &l.stage_dir("analyze"),
            &self.config.window_list()?,
            self.config.analysis,
            Some(self.config.hash()),
            self.force,
        )
    }

    /// Human-readable summary of every stage that has run.
    pub fn report(&self) -> Result<String> {
        let l = &self.layout;
        require(&l.analysis_json(), "analyze")?;
        guard_outputs(&[&l.report()], self.force)?;
        let mut out = String::new();
        if l.mine_report().exists() {
            let m: MineReport = read_json(&l.mine_report())?;
            out.push_str("mining\n");
            for r in &m.repos {
                out.push_str(&format!(
                    "  {:<22} {:>6} commits {:>5} fixes {:>5} introducers {:>3} failures\n",
                    r.repo,
                    r.commits,
                    r.bugfixes,
                    r.introducers,
                    r.failures.len()
                ));
            }
        }
        if l.sample_report().exists() {
            let s: SampleReport = read_json(&l.sample_report())?;
            out.push_str("sampling\n");
            for r in &s.repos {
                let pop = r.plan.map_or(0, |p| p.population);
                out.push_str(&format!(
                    "  {:<22} population {:>5} bug {:>4} non-bug {:>4}{}\n",
                    r.repo,
                    pop,
                    r.bug_targets,
                    r.nonbug_targets,
                    if r.insufficient_nonbug { " (non-bug pool short)" } else { "" }
                ));
            }
        }
        if l.extract_report().exists() {
            let e: ExtractReport = read_json(&l.extract_report())?;
            out.push_str("extraction\n");
            for r in &e.repos {
                out.push_str(&format!(
                    "  {:<22} window {} targets {:>4} records {:>6} failures {}\n",
                    r.repo,
                    r.window,
                    r.targets,
                    r.records,
                    r.failures.len()
                ));
            }
        }
        if l.classify_report().exists() {
            let c: ClassifyReport = read_json(&l.classify_report())?;
            out.push_str(&format!(
                "classification ({})\n  {} records, {} classified, {} unclassified\n",
                c.classifier, c.records, c.classified, c.unclassified
            ));
        }
        let a: Analysis = read_json(&l.analysis_json())?;
        out.push('\n');
        out.push_str(&a.to_text());
        write_atomic(&l.report(), out.as_bytes())?;
        Ok(out)
    }
}

/// Like [`read_jsonl`] but ignores a torn final line, as left by an
/// interrupted append.
fn read_jsonl_lenient<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(e) => {
                return Err(StageError::Json {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn error_class(msg: &str) -> String {
    msg.split(':').next().unwrap_or(msg).trim().to_string()
}

pub fn build_classifier(config: &PipelineConfig) -> Result<Box<dyn Classifier>> {
    let c = &config.classifier;
    Ok(match c.kind {
        ClassifierKind::Heuristic => Box::new(HeuristicClassifier {
            diff: config.extract.diff_options(),
        }),
        ClassifierKind::Mock => {
            let script = c
                .script
                .as_ref()
                .ok_or_else(|| StageError::Invalid("the mock classifier needs a script".into()))?;
            Box::new(ScriptedClassifier::load(script)?)
        }
        ClassifierKind::Llm => {
            let client = HttpChatClient::new(&config.endpoint)?;
            let template = PromptTemplate::from_mode(c.prompt, c.few_shot_k);
            Box::new(LlmClassifier::new(Box::new(client), template, &config.endpoint))
        }
    })
}

/// Contingency tables and odds ratios from a verdicts file. Writes
/// `contingency.csv`, `summary.json`, `tables.txt` and a manifest to
/// `out_dir`.
pub fn analyze_verdicts(
    verdicts: &Path,
    out_dir: &Path,
    windows: &[Window],
    settings: AnalysisSettings,
    config_hash: Option<String>,
    force: bool,
) -> Result<Analysis> {
    require(verdicts, "classify")?;
    let csv = out_dir.join("contingency.csv");
    let json = out_dir.join("summary.json");
    let text = out_dir.join("tables.txt");
    guard_outputs(&[&csv, &json, &text], force)?;
    let rows: Vec<VerdictRow> = read_jsonl(verdicts)?;
    let analysis = analyze(&rows, windows, settings.confidence_level, settings.options);
    write_atomic(&csv, analysis.to_csv().as_bytes())?;
    write_json(&json, &analysis)?;
    write_atomic(&text, analysis.to_text().as_bytes())?;
    write_manifest(out_dir, "analyze", config_hash, BTreeMap::new(), &[verdicts], &[&csv, &json, &text])?;
    Ok(analysis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub classifier: String,
    pub dataset: String,
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    /// Instances the classifier could not decide; excluded from the matrix.
    pub unclassified: u64,
}

const EVAL_CHUNK: usize = 1024;

/// Scores `classifier` on a CUP2-layout dataset, streaming it in chunks.
///
/// Each instance is asked about its old comment against the new code; a
/// verdict of "not consistent with the new code" predicts a positive
/// (inconsistent) label.
pub fn evaluate_dataset(
    classifier: &dyn Classifier,
    dataset: &Path,
    concurrency: usize,
) -> Result<(ConfusionMatrix, u64)> {
    let name = dataset.display().to_string();
    let mut matrix = ConfusionMatrix::default();
    let mut unclassified = 0;
    let mut reader = Cup2Reader::open(dataset)?.enumerate();
    loop {
        let mut chunk = Vec::with_capacity(EVAL_CHUNK);
        for (i, inst) in reader.by_ref().take(EVAL_CHUNK) {
            let inst = inst?;
            let label = inst.effective_label();
            let key = inst.id.clone().unwrap_or_else(|| format!("#{}", i + 1));
            let record = MethodRecord {
                old_commit: String::new(),
                new_commit: String::new(),
                old_code: inst.old_code,
                new_code: inst.new_code,
                old_comment: inst.old_comment.clone(),
                new_comment: inst.old_comment,
                is_bug_introducing: false,
                old_time: 0,
                new_time: 0,
                repo_name: name.clone(),
                window_days_back: 0.0,
                path: name.clone(),
                signature_key: key,
            };
            chunk.push((record, label));
        }
        if chunk.is_empty() {
            break;
        }
        let records: Vec<MethodRecord> = chunk.iter().map(|(r, _)| r.clone()).collect();
        let rows = classify_records(&records, classifier, concurrency, &HashMap::new(), &|_| {});
        for (row, (_, label)) in rows.iter().zip(&chunk) {
            match &row.verdict {
                Some(v) => matrix.record(!v.consistent_with_new_code, *label),
                None => unclassified += 1,
            }
        }
    }
    Ok((matrix, unclassified))
}

/// Scores each classifier on each dataset and writes `metrics.csv`,
/// `metrics.txt` and `metrics.json` to `out_dir`.
pub fn evaluate(
    classifiers: &[(String, &dyn Classifier)],
    datasets: &[PathBuf],
    out_dir: &Path,
    concurrency: usize,
    force: bool,
) -> Result<Vec<EvalRow>> {
    let csv = out_dir.join("metrics.csv");
    let txt = out_dir.join("metrics.txt");
    let json = out_dir.join("metrics.json");
    guard_outputs(&[&csv, &txt, &json], force)?;
    let mut rows = Vec::new();
    for (name, classifier) in classifiers {
        for ds in datasets {
            let (matrix, unclassified) = evaluate_dataset(*classifier, ds, concurrency)?;
            rows.push(EvalRow {
                classifier: name.clone(),
                dataset: ds
                    .file_stem()
                    .map_or_else(|| ds.display().to_string(), |s| s.to_string_lossy().into_owned()),
                matrix,
                metrics: metrics(&matrix),
                unclassified,
            });
        }
    }
    let table: Vec<(String, String, ConfusionMatrix)> = rows
        .iter()
        .map(|r| (r.classifier.clone(), r.dataset.clone(), r.matrix))
        .collect();
    write_atomic(&csv, metrics_csv(&table).as_bytes())?;
    write_atomic(&txt, metrics_text(&table).as_bytes())?;
    write_json(&json, &rows)?;
    let inputs: Vec<&Path> = datasets.iter().map(PathBuf::as_path).collect();
    write_manifest(out_dir, "eval", None, BTreeMap::new(), &inputs, &[&csv, &txt, &json])?;
    Ok(rows)
}
