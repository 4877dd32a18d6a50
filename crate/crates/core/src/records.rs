//! Target selection and method-change record materialization.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stalecomment_java::{normalize_comment, pair_and_diff, DiffOptions};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::git::{sort_commits, CommitMeta, GitError, GitRepo, PathFilter, EMPTY_TREE};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, thiserror::Error)]
pub enum RecordsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no bug-introducing commits to sample from")]
    NoIntroducers,
    #[error(transparent)]
    Git(#[from] GitError),
}

/// Two-sided standard normal quantile for a confidence level.
pub fn z_score(confidence: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Cochran's sample size at p = 0.5 with finite-population correction,
/// capped at the population.
pub fn sample_size(population: u64, confidence: f64, margin: f64) -> Result<u64, RecordsError> {
    if population == 0 {
        return Err(RecordsError::InvalidParameter("population must be positive".into()));
    }
    for (name, v) in [("confidence", confidence), ("margin", margin)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(RecordsError::InvalidParameter(format!("{name} must be in (0,1), got {v}")));
        }
    }
    let z = z_score(confidence);
    let n0 = z * z * 0.25 / (margin * margin);
    let n = (n0 / (1.0 + (n0 - 1.0) / population as f64)).ceil() as u64;
    Ok(n.clamp(1, population))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub population: u64,
    pub sample_size: u64,
    pub confidence: f64,
    pub margin: f64,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(population: u64, confidence: f64, margin: f64, seed: u64) -> Result<Self, RecordsError> {
        Ok(SamplePlan {
            population,
            sample_size: sample_size(population, confidence, margin)?,
            confidence,
            margin,
            seed,
        })
    }
}

/// Path rules deciding which commits only touch documentation or tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathRules {
    pub test_dirs: Vec<String>,
    pub doc_dirs: Vec<String>,
    pub doc_extensions: Vec<String>,
}

impl Default for PathRules {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        PathRules {
            test_dirs: s(&["test", "tests", "it"]),
            doc_dirs: s(&["docs"]),
            doc_extensions: s(&["md", "txt", "adoc"]),
        }
    }
}

impl PathRules {
    pub fn is_doc_or_test(&self, path: &str) -> bool {
        let components: Vec<&str> = path.split('/').collect();
        let (file, dirs) = components.split_last().unwrap_or((&"", &[]));
        if components
            .iter()
            .any(|c| self.test_dirs.iter().any(|t| t == c))
        {
            return true;
        }
        if dirs.iter().any(|c| self.doc_dirs.iter().any(|d| d == c)) {
            return true;
        }
        Path::new(file)
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| self.doc_extensions.iter().any(|d| d.eq_ignore_ascii_case(e)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub commit: CommitMeta,
    pub is_bug_introducing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSelection {
    pub plan: SamplePlan,
    pub bug: Vec<CommitMeta>,
    pub nonbug: Vec<CommitMeta>,
    /// Fewer non-bug-introducing survivors than requested.
    pub insufficient_nonbug: bool,
}

impl TargetSelection {
    /// Bug-introducing targets followed by the baseline, each ascending by time.
    pub fn targets(&self) -> Vec<Target> {
        let tag = |c: &CommitMeta, bug| Target {
            commit: c.clone(),
            is_bug_introducing: bug,
        };
        self.bug
            .iter()
            .map(|c| tag(c, true))
            .chain(self.nonbug.iter().map(|c| tag(c, false)))
            .collect()
    }
}

/// `true` when the commit changes at least one path and every changed path
/// is documentation or tests.
pub fn touches_only_docs_or_tests(
    repo: &GitRepo,
    commit: &CommitMeta,
    rules: &PathRules,
) -> Result<bool, GitError> {
    let parent = commit.first_parent().unwrap_or(EMPTY_TREE);
    let paths = repo.changed_paths(parent, &commit.id)?;
    Ok(paths.iter().all(|(_, p)| rules.is_doc_or_test(p)))
}

/// Seeded uniform samples of bug-introducing targets and an equally sized
/// non-bug-introducing baseline that excludes documentation/test-only commits.
pub fn select_targets(
    repo: &GitRepo,
    commits: &[CommitMeta],
    introducers: &BTreeSet<String>,
    plan: &SamplePlan,
    rules: &PathRules,
) -> Result<TargetSelection, RecordsError> {
    let mut pool: Vec<CommitMeta> = commits
        .iter()
        .filter(|c| introducers.contains(&c.id))
        .cloned()
        .collect();
    if pool.is_empty() {
        return Err(RecordsError::NoIntroducers);
    }
    sort_commits(&mut pool);
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);

    let k = (plan.sample_size as usize).min(pool.len());
    let mut picked = index::sample(&mut rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    let bug: Vec<CommitMeta> = picked.into_iter().map(|i| pool[i].clone()).collect();

    let mut candidates: Vec<&CommitMeta> = commits
        .iter()
        .filter(|c| !introducers.contains(&c.id))
        .collect();
    candidates.sort_by(|a, b| a.author_time.cmp(&b.author_time).then_with(|| a.id.cmp(&b.id)));
    candidates.shuffle(&mut rng);
    // First k survivors of a uniform shuffle are a uniform sample of survivors.
    let mut nonbug = Vec::with_capacity(k);
    for c in candidates {
        if nonbug.len() == k {
            break;
        }
        if !touches_only_docs_or_tests(repo, c, rules)? {
            nonbug.push(c.clone());
        }
    }
    sort_commits(&mut nonbug);
    Ok(TargetSelection {
        plan: *plan,
        insufficient_nonbug: nonbug.len() < k,
        bug,
        nonbug,
    })
}

/// Half-open day interval `(lo, hi]` before a target commit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self, RecordsError> {
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(RecordsError::InvalidParameter(format!(
                "window ({lo},{hi}] must satisfy 0 <= lo < hi"
            )));
        }
        Ok(Window { lo, hi })
    }

    pub fn contains(&self, days_back: f64) -> bool {
        self.lo < days_back && days_back <= self.hi
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    /// Smallest window covering all of `windows`.
    pub fn envelope(windows: &[Window]) -> Option<Window> {
        let lo = windows.iter().map(|w| w.lo).reduce(f64::min)?;
        let hi = windows.iter().map(|w| w.hi).reduce(f64::max)?;
        Some(Window { lo, hi })
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub old_commit: String,
    pub new_commit: String,
    pub old_code: String,
    pub new_code: String,
    pub old_comment: String,
    pub new_comment: String,
    pub is_bug_introducing: bool,
    pub old_time: i64,
    pub new_time: i64,
    pub repo_name: String,
    pub window_days_back: f64,
    pub path: String,
    pub signature_key: String,
}

impl MethodRecord {
    /// Identity used to key verdicts.
    pub fn key(&self) -> RecordKey {
        RecordKey {
            old_commit: self.old_commit.clone(),
            new_commit: self.new_commit.clone(),
            path: self.path.clone(),
            signature_key: self.signature_key.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub old_commit: String,
    pub new_commit: String,
    pub path: String,
    pub signature_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetFailure {
    pub target: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordBatch {
    pub records: Vec<MethodRecord>,
    pub failures: Vec<TargetFailure>,
    /// File pairs where either side had unbalanced braces.
    pub unbalanced_files: usize,
}

fn records_for_target(
    repo: &GitRepo,
    target: &Target,
    history: &[CommitMeta],
    window: Window,
    opts: DiffOptions,
) -> Result<(Vec<MethodRecord>, usize), GitError> {
    let t = &target.commit;
    let java = PathFilter::java();
    let mut records = Vec::new();
    let mut unbalanced = 0;
    for p in history {
        if p.id == t.id {
            continue;
        }
        let days = (t.author_time - p.author_time) as f64 / SECONDS_PER_DAY;
        if !window.contains(days) || !repo.is_ancestor(&p.id, &t.id)? {
            continue;
        }
        for file in repo.diff(&p.id, &t.id, &java)? {
            let (Some(old), Some(new)) = (&file.old_blob, &file.new_blob) else {
                continue;
            };
            let outcome = pair_and_diff(old, new, opts);
            unbalanced += usize::from(outcome.unbalanced);
            for change in outcome.changes {
                if normalize_comment(&change.new.leading_comment).is_empty() {
                    continue;
                }
                records.push(MethodRecord {
                    old_commit: p.id.clone(),
                    new_commit: t.id.clone(),
                    old_code: change.old.body_text,
                    new_code: change.new.body_text,
                    old_comment: change.old.leading_comment,
                    new_comment: change.new.leading_comment,
                    is_bug_introducing: target.is_bug_introducing,
                    old_time: p.author_time,
                    new_time: t.author_time,
                    repo_name: t.repo_name.clone(),
                    window_days_back: days,
                    path: file.path.clone(),
                    signature_key: change.key,
                });
            }
        }
    }
    Ok((records, unbalanced))
}

/// Pairs each target with every ancestor whose age falls in `window` and
/// emits one record per changed method with a non-empty new comment.
///
/// `history` is the repository's commit list (any order). Output order is
/// target order, then old-commit time, then path, then method position.
pub fn build_records(
    repo: &GitRepo,
    targets: &[Target],
    history: &[CommitMeta],
    window: Window,
    opts: DiffOptions,
) -> RecordBatch {
    let mut sorted = history.to_vec();
    sort_commits(&mut sorted);
    let results: Vec<_> = targets
        .par_iter()
        .map(|t| records_for_target(&repo.clone(), t, &sorted, window, opts))
        .collect();
    let mut batch = RecordBatch::default();
    for (target, result) in targets.iter().zip(results) {
        match result {
            Ok((records, unbalanced)) => {
                batch.records.extend(records);
                batch.unbalanced_files += unbalanced;
            }
            Err(e) => batch.failures.push(TargetFailure {
                target: target.commit.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    batch
}
