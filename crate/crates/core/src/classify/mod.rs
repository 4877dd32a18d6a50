//! Comment-consistency verdicts and record categories.

mod cup2;
pub mod llm;
mod prompt;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stalecomment_java::{normalize_comment, DiffOptions};

use crate::records::{MethodRecord, RecordKey};

pub use cup2::{derived_label, load_cup2, Cup2Error, Cup2Instance, Cup2Reader};
pub use llm::{
    ChatClient, ChatMessage, ChatRequest, EndpointSettings, HttpChatClient, LlmClassifier,
    RetryPolicy, TransportError,
};
pub use prompt::{Exemplar, PromptMode, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Heuristic,
    Llm,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyVerdict {
    pub consistent_with_new_code: bool,
    pub consistent_with_old_code: bool,
    pub rationale: String,
    pub source: VerdictSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordCategory {
    Outdated,
    EarlierOutdated,
    Normal,
    UncategorizedInconsistent,
}

impl RecordCategory {
    pub const ALL: [RecordCategory; 4] = [
        RecordCategory::Outdated,
        RecordCategory::EarlierOutdated,
        RecordCategory::Normal,
        RecordCategory::UncategorizedInconsistent,
    ];
}

impl fmt::Display for RecordCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RecordCategory::Outdated => "outdated",
            RecordCategory::EarlierOutdated => "earlier_outdated",
            RecordCategory::Normal => "normal",
            RecordCategory::UncategorizedInconsistent => "uncategorized_inconsistent",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClassifyError {
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("endpoint unavailable: {0}")]
    EndpointUnavailable(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("no scripted verdict for {0}")]
    Unscripted(String),
}

pub trait Classifier: Send + Sync {
    fn classify(&self, record: &MethodRecord) -> Result<ConsistencyVerdict, ClassifyError>;
}

/// Old and new comments are equal after punctuation removal and whitespace
/// collapsing.
pub fn comment_unchanged(record: &MethodRecord) -> bool {
    normalize_comment(&record.old_comment) == normalize_comment(&record.new_comment)
}

/// Options for mapping verdicts to categories.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoryRules {
    /// Outdated additionally requires the comment to be unchanged.
    pub strict_outdated: bool,
}

pub fn categorize_parts(
    consistent_with_new_code: bool,
    consistent_with_old_code: bool,
    comment_unchanged: bool,
    rules: CategoryRules,
) -> RecordCategory {
    match (consistent_with_new_code, consistent_with_old_code) {
        (true, _) => RecordCategory::Normal,
        (false, true) if comment_unchanged || !rules.strict_outdated => RecordCategory::Outdated,
        (false, false) if comment_unchanged => RecordCategory::EarlierOutdated,
        _ => RecordCategory::UncategorizedInconsistent,
    }
}

pub fn categorize(
    record: &MethodRecord,
    verdict: &ConsistencyVerdict,
    rules: CategoryRules,
) -> RecordCategory {
    categorize_parts(
        verdict.consistent_with_new_code,
        verdict.consistent_with_old_code,
        comment_unchanged(record),
        rules,
    )
}

/// Comment-update heuristic: a body change without a comment change leaves
/// the comment describing the old code.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicClassifier {
    pub diff: DiffOptions,
}

pub fn classify_heuristic(record: &MethodRecord, diff: DiffOptions) -> ConsistencyVerdict {
    let same_comment = comment_unchanged(record);
    let body_changed = diff.bodies_differ(&record.old_code, &record.new_code);
    let (new, old, rationale) = match (same_comment, body_changed) {
        (true, true) => (false, true, "code changed without a comment update"),
        (false, _) => (true, false, "comment was updated with the change"),
        (true, false) => (true, true, "neither code nor comment changed"),
    };
    ConsistencyVerdict {
        consistent_with_new_code: new,
        consistent_with_old_code: old,
        rationale: rationale.to_string(),
        source: VerdictSource::Heuristic,
    }
}

impl Classifier for HeuristicClassifier {
    fn classify(&self, record: &MethodRecord) -> Result<ConsistencyVerdict, ClassifyError> {
        Ok(classify_heuristic(record, self.diff))
    }
}

/// One scripted verdict. Unset commit/path fields act as wildcards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub signature_key: String,
    #[serde(default)]
    pub old_commit: Option<String>,
    #[serde(default)]
    pub new_commit: Option<String>,
    #[serde(default)]
    pub path: Option<String>,
    pub consistent_with_new_code: bool,
    pub consistent_with_old_code: bool,
    #[serde(default)]
    pub rationale: Option<String>,
}

impl ScriptEntry {
    fn matches(&self, r: &MethodRecord) -> bool {
        let opt = |want: &Option<String>, have: &str| want.as_deref().is_none_or(|w| w == have);
        self.signature_key == r.signature_key
            && opt(&self.old_commit, &r.old_commit)
            && opt(&self.new_commit, &r.new_commit)
            && opt(&self.path, &r.path)
    }

    fn specificity(&self) -> usize {
        [&self.old_commit, &self.new_commit, &self.path]
            .iter()
            .filter(|f| f.is_some())
            .count()
    }
}

/// Replays verdicts from a script; records without a matching entry stay
/// unclassified.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClassifier {
    by_signature: HashMap<String, Vec<ScriptEntry>>,
}

impl ScriptedClassifier {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut by_signature: HashMap<String, Vec<ScriptEntry>> = HashMap::new();
        for e in entries {
            by_signature.entry(e.signature_key.clone()).or_default().push(e);
        }
        for list in by_signature.values_mut() {
            list.sort_by_key(|e| std::cmp::Reverse(e.specificity()));
        }
        ScriptedClassifier { by_signature }
    }

    /// Loads a JSON Lines script.
    pub fn load(path: &Path) -> Result<Self, Cup2Error> {
        let text = fs::read_to_string(path).map_err(|e| Cup2Error::Io(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(line).map_err(|e| Cup2Error::ParseError {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }
}

impl Classifier for ScriptedClassifier {
    fn classify(&self, record: &MethodRecord) -> Result<ConsistencyVerdict, ClassifyError> {
        let entry = self
            .by_signature
            .get(&record.signature_key)
            .and_then(|list| list.iter().find(|e| e.matches(record)))
            .ok_or_else(|| ClassifyError::Unscripted(record.signature_key.clone()))?;
        Ok(ConsistencyVerdict {
            consistent_with_new_code: entry.consistent_with_new_code,
            consistent_with_old_code: entry.consistent_with_old_code,
            rationale: entry.rationale.clone().unwrap_or_else(|| "scripted".into()),
            source: VerdictSource::Mock,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Classified,
    Unclassified,
}

/// One line of the verdicts file. Carries everything the analysis stage
/// needs so it can run from this file alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub old_commit: String,
    pub new_commit: String,
    pub path: String,
    pub signature_key: String,
    pub repo_name: String,
    pub is_bug_introducing: bool,
    pub window_days_back: f64,
    pub comment_unchanged: bool,
    pub status: VerdictStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ConsistencyVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VerdictRow {
    pub fn new(record: &MethodRecord, outcome: Result<ConsistencyVerdict, ClassifyError>) -> Self {
        let (status, verdict, error) = match outcome {
            Ok(v) => (VerdictStatus::Classified, Some(v), None),
            Err(e) => (VerdictStatus::Unclassified, None, Some(e.to_string())),
        };
        VerdictRow {
            old_commit: record.old_commit.clone(),
            new_commit: record.new_commit.clone(),
            path: record.path.clone(),
            signature_key: record.signature_key.clone(),
            repo_name: record.repo_name.clone(),
            is_bug_introducing: record.is_bug_introducing,
            window_days_back: record.window_days_back,
            comment_unchanged: comment_unchanged(record),
            status,
            verdict,
            error,
        }
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            old_commit: self.old_commit.clone(),
            new_commit: self.new_commit.clone(),
            path: self.path.clone(),
            signature_key: self.signature_key.clone(),
        }
    }

    /// Category of a classified row; `None` when unclassified.
    pub fn category(&self, rules: CategoryRules) -> Option<RecordCategory> {
        let v = self.verdict.as_ref()?;
        Some(categorize_parts(
            v.consistent_with_new_code,
            v.consistent_with_old_code,
            self.comment_unchanged,
            rules,
        ))
    }
}

/// Classifies records on a bounded pool. Rows already classified in
/// `previous` are reused; `on_row` sees each fresh row as it completes.
/// The returned rows follow `records` order.
pub fn classify_records<C: Classifier + ?Sized>(
    records: &[MethodRecord],
    classifier: &C,
    concurrency: usize,
    previous: &HashMap<RecordKey, VerdictRow>,
    on_row: &(dyn Fn(&VerdictRow) + Sync),
) -> Vec<VerdictRow> {
    let work = || {
        records
            .par_iter()
            .map(|r| {
                if let Some(done) = previous
                    .get(&r.key())
                    .filter(|row| row.status == VerdictStatus::Classified)
                {
                    return done.clone();
                }
                let row = VerdictRow::new(r, classifier.classify(r));
                on_row(&row);
                row
            })
            .collect()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
    {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(old_code: &str, new_code: &str, old_comment: &str, new_comment: &str) -> MethodRecord {
        MethodRecord {
            old_commit: "a".repeat(40),
            new_commit: "b".repeat(40),
            old_code: old_code.into(),
            new_code: new_code.into(),
            old_comment: old_comment.into(),
            new_comment: new_comment.into(),
            is_bug_introducing: true,
            old_time: 0,
            new_time: 86_400,
            repo_name: "r".into(),
            window_days_back: 1.0,
            path: "A.java".into(),
            signature_key: "A#f()".into(),
        }
    }

    fn flags(v: &ConsistencyVerdict) -> (bool, bool) {
        (v.consistent_with_new_code, v.consistent_with_old_code)
    }

    #[test]
    fn heuristic_rules() {
        let d = DiffOptions::default();
        let body_only = record("void f() { a(); }", "void f() { b(); }", "/** Does a. */", "/** Does a. */");
        assert_eq!(flags(&classify_heuristic(&body_only, d)), (false, true));
        let both = record("void f() { a(); }", "void f() { b(); }", "/** Does a. */", "/** Does b. */");
        assert_eq!(flags(&classify_heuristic(&both, d)), (true, false));
        let none = record("void f() { a(); }", "void f() {  a();  }", "/** Does a. */", "/** Does a */");
        assert_eq!(flags(&classify_heuristic(&none, d)), (true, true));
        assert_eq!(
            categorize(&none, &classify_heuristic(&none, d), CategoryRules::default()),
            RecordCategory::Normal
        );
    }

    #[test]
    fn category_table() {
        let r = CategoryRules::default();
        let strict = CategoryRules { strict_outdated: true };
        use RecordCategory::*;
        for unchanged in [true, false] {
            for old in [true, false] {
                assert_eq!(categorize_parts(true, old, unchanged, r), Normal);
            }
        }
        assert_eq!(categorize_parts(false, true, true, r), Outdated);
        assert_eq!(categorize_parts(false, true, false, r), Outdated);
        assert_eq!(categorize_parts(false, true, false, strict), UncategorizedInconsistent);
        assert_eq!(categorize_parts(false, true, true, strict), Outdated);
        assert_eq!(categorize_parts(false, false, true, r), EarlierOutdated);
        assert_eq!(categorize_parts(false, false, false, r), UncategorizedInconsistent);
    }

    #[test]
    fn scripted_classifier_prefers_specific_entries() {
        let rec = record("a", "b", "/** x */", "/** x */");
        let entry = |old: Option<String>, new_ok: bool| ScriptEntry {
            signature_key: "A#f()".into(),
            old_commit: old,
            new_commit: None,
            path: None,
            consistent_with_new_code: new_ok,
            consistent_with_old_code: true,
            rationale: None,
        };
        let c = ScriptedClassifier::new([entry(None, true), entry(Some("a".repeat(40)), false)]);
        assert!(!c.classify(&rec).unwrap().consistent_with_new_code);
        let mut other = rec.clone();
        other.old_commit = "c".repeat(40);
        assert!(c.classify(&other).unwrap().consistent_with_new_code);
        other.signature_key = "B#g()".into();
        assert!(matches!(c.classify(&other), Err(ClassifyError::Unscripted(_))));
    }

    #[test]
    fn classify_records_keeps_order_and_reuses_previous() {
        let recs: Vec<MethodRecord> = (0..20)
            .map(|i| {
                let mut r = record("a", "b", "/** x */", "/** x */");
                r.signature_key = format!("A#f{i}()");
                r
            })
            .collect();
        let first = classify_records(&recs, &HeuristicClassifier::default(), 4, &HashMap::new(), &|_| {});
        assert_eq!(first.len(), 20);
        assert!(first.iter().zip(&recs).all(|(row, r)| row.signature_key == r.signature_key));

        let previous: HashMap<_, _> = first.iter().map(|r| (r.key(), r.clone())).collect();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let again = classify_records(&recs, &HeuristicClassifier::default(), 2, &previous, &|_| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        });
        assert_eq!(again, first);
        assert_eq!(calls.into_inner(), 0);
    }

    #[test]
    fn unclassified_rows_have_no_category() {
        let rec = record("a", "b", "/** x */", "/** x */");
        let row = VerdictRow::new(&rec, Err(ClassifyError::EndpointUnavailable("down".into())));
        assert_eq!(row.status, VerdictStatus::Unclassified);
        assert_eq!(row.category(CategoryRules::default()), None);
    }
}
