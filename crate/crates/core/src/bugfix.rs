//! Keyword heuristics that flag bug-fixing commits from their messages.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::git::{CommitMeta, GitRepo, Result as GitResult};

pub const DEFAULT_KEYWORDS: [&str; 12] = [
    "fix", "fixed", "fixes", "bug", "defect", "error", "crash", "fault", "patch", "resolve",
    "resolves", "solved",
];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RulesetError {
    #[error("keyword set is empty")]
    NoKeywords,
    #[error("terms are both keywords and exclusions: {0:?}")]
    Overlap(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRuleset", into = "RawRuleset")]
pub struct KeywordRuleset {
    keywords: BTreeSet<String>,
    require_word_boundary: bool,
    exclusions: BTreeSet<String>,
    skip_merges: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawRuleset {
    #[serde(default = "default_keywords")]
    keywords: Vec<String>,
    #[serde(default = "yes")]
    require_word_boundary: bool,
    #[serde(default)]
    exclusions: Vec<String>,
    #[serde(default)]
    skip_merges: bool,
}

fn default_keywords() -> Vec<String> {
    DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

fn yes() -> bool {
    true
}

impl TryFrom<RawRuleset> for KeywordRuleset {
    type Error = RulesetError;

    fn try_from(raw: RawRuleset) -> Result<Self, Self::Error> {
        KeywordRuleset::new(raw.keywords, raw.require_word_boundary, raw.exclusions)
            .map(|r| r.with_skip_merges(raw.skip_merges))
    }
}

impl From<KeywordRuleset> for RawRuleset {
    fn from(r: KeywordRuleset) -> Self {
        RawRuleset {
            keywords: r.keywords.into_iter().collect(),
            require_word_boundary: r.require_word_boundary,
            exclusions: r.exclusions.into_iter().collect(),
            skip_merges: r.skip_merges,
        }
    }
}

impl Default for KeywordRuleset {
    fn default() -> Self {
        KeywordRuleset::new(DEFAULT_KEYWORDS, true, Vec::<String>::new()).expect("valid defaults")
    }
}

impl KeywordRuleset {
    pub fn new<K, E>(
        keywords: impl IntoIterator<Item = K>,
        require_word_boundary: bool,
        exclusions: impl IntoIterator<Item = E>,
    ) -> Result<Self, RulesetError>
    where
        K: AsRef<str>,
        E: AsRef<str>,
    {
        let lower = |s: &str| s.trim().to_lowercase();
        let keywords: BTreeSet<String> = keywords
            .into_iter()
            .map(|k| lower(k.as_ref()))
            .filter(|k| !k.is_empty())
            .collect();
        let exclusions: BTreeSet<String> = exclusions
            .into_iter()
            .map(|k| lower(k.as_ref()))
            .filter(|k| !k.is_empty())
            .collect();
        if keywords.is_empty() {
            return Err(RulesetError::NoKeywords);
        }
        let overlap: Vec<String> = keywords.intersection(&exclusions).cloned().collect();
        if !overlap.is_empty() {
            return Err(RulesetError::Overlap(overlap));
        }
        Ok(KeywordRuleset {
            keywords,
            require_word_boundary,
            exclusions,
            skip_merges: false,
        })
    }

    /// Excludes merge commits from [`find_bugfix_commits`].
    pub fn with_skip_merges(mut self, skip: bool) -> Self {
        self.skip_merges = skip;
        self
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(String::as_str)
    }

    fn occurs(&self, haystack: &str, term: &str) -> bool {
        if !self.require_word_boundary {
            return haystack.contains(term);
        }
        haystack.match_indices(term).any(|(at, _)| {
            let before = haystack[..at].chars().next_back();
            let after = haystack[at + term.len()..].chars().next();
            !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
        })
    }
}

/// Case-insensitive keyword test over the whole message.
pub fn is_bugfix(message: &str, rules: &KeywordRuleset) -> bool {
    let msg = message.to_lowercase();
    rules.keywords.iter().any(|k| rules.occurs(&msg, k))
        && !rules.exclusions.iter().any(|e| rules.occurs(&msg, e))
}

/// Bug-fixing commits among `commits`, order preserved.
pub fn filter_bugfix_commits(commits: &[CommitMeta], rules: &KeywordRuleset) -> Vec<CommitMeta> {
    commits
        .iter()
        .filter(|c| !(rules.skip_merges && c.is_merge()))
        .filter(|c| is_bugfix(&c.message, rules))
        .cloned()
        .collect()
}

pub fn find_bugfix_commits(repo: &GitRepo, rules: &KeywordRuleset) -> GitResult<Vec<CommitMeta>> {
    Ok(filter_bugfix_commits(&repo.list_commits(None)?, rules))
}
