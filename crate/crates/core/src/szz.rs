//! Bug-introducing commit identification by blaming lines that fixes remove.
//!
//! B-SZZ with the usual first refinement: blank lines and lines carrying only
//! comment text are not blamed, and non-Java paths can be skipped. Blame runs
//! at the fix's first parent.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stalecomment_java::code_lines;

use crate::git::{CommitMeta, GitError, GitRepo, PathFilter};

#[derive(Debug, thiserror::Error)]
pub enum SzzError {
    #[error("{0} has no parent")]
    NoParent(String),
    #[error(transparent)]
    Git(#[from] GitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SzzFilters {
    pub skip_blank: bool,
    pub skip_comments: bool,
    pub source_only: bool,
}

impl Default for SzzFilters {
    fn default() -> Self {
        SzzFilters {
            skip_blank: true,
            skip_comments: true,
            source_only: true,
        }
    }
}

impl SzzFilters {
    pub fn none() -> Self {
        SzzFilters {
            skip_blank: false,
            skip_comments: false,
            source_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub introducer: String,
    pub path: String,
    /// Line number at the fix's parent revision.
    pub line: u32,
}

/// One line of the introducers report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntroducerSet {
    pub fix: String,
    pub introducers: BTreeSet<String>,
    pub evidence: Vec<Evidence>,
}

fn is_java(path: &str) -> bool {
    path.ends_with(".java")
}

/// Blames every line the fix removes or replaces and returns the origins.
///
/// Origins dated after the fix (clock skew) are discarded so every returned
/// introducer predates its fix.
pub fn find_introducers(
    repo: &GitRepo,
    fix: &CommitMeta,
    filters: SzzFilters,
) -> Result<IntroducerSet, SzzError> {
    let parent = fix
        .first_parent()
        .ok_or_else(|| SzzError::NoParent(fix.id.clone()))?;
    let removed = repo.removed_lines(parent, &fix.id)?;
    let wanted = |p: &str| !filters.source_only || is_java(p);

    let old_sources: HashMap<String, String> = if filters.skip_blank || filters.skip_comments {
        let filter = if filters.source_only {
            PathFilter::java()
        } else {
            PathFilter::any()
        };
        repo.diff(parent, &fix.id, &filter)?
            .into_iter()
            .filter_map(|d| Some((d.old_path()?.to_string(), d.old_blob?)))
            .collect()
    } else {
        HashMap::new()
    };

    let mut evidence: Vec<(String, String, u32)> = Vec::new();
    for file in removed.iter().filter(|f| wanted(&f.old_path)) {
        let mut lines = file.lines.clone();
        if let Some(src) = old_sources.get(&file.old_path) {
            let text: Vec<&str> = src.split('\n').collect();
            let code = is_java(&file.old_path).then(|| code_lines(src));
            lines.retain(|&n| {
                let idx = n as usize - 1;
                let blank = text.get(idx).is_none_or(|l| l.trim().is_empty());
                if blank {
                    return !filters.skip_blank;
                }
                match &code {
                    Some(mask) if filters.skip_comments => mask.get(idx).copied().unwrap_or(true),
                    _ => true,
                }
            });
        }
        if lines.is_empty() {
            continue;
        }
        let blame = repo.blame(parent, &file.old_path)?;
        for n in lines {
            if let Some(b) = blame.get(n as usize - 1) {
                evidence.push((b.origin_commit.clone(), file.old_path.clone(), n));
            }
        }
    }

    let origins: BTreeSet<&str> = evidence.iter().map(|(c, _, _)| c.as_str()).collect();
    let origins: Vec<&str> = origins.into_iter().collect();
    let metas = repo.commits(&origins)?;
    let keep = |id: &str| {
        id != fix.id
            && metas
                .get(id)
                .is_some_and(|m| m.author_time <= fix.author_time)
    };

    let mut by_introducer: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
    for (origin, path, line) in evidence {
        if keep(&origin) {
            by_introducer.entry(origin).or_default().push((path, line));
        }
    }
    let introducers = by_introducer.keys().cloned().collect();
    let evidence = by_introducer
        .into_iter()
        .flat_map(|(introducer, lines)| {
            lines.into_iter().map(move |(path, line)| Evidence {
                introducer: introducer.clone(),
                path,
                line,
            })
        })
        .collect();
    Ok(IntroducerSet {
        fix: fix.id.clone(),
        introducers,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixFailure {
    pub fix: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SzzReport {
    pub introducers: BTreeSet<String>,
    /// One entry per processed fix, in input order.
    pub per_fix: Vec<IntroducerSet>,
    pub failures: Vec<FixFailure>,
    /// Root commits among the fixes; nothing to blame against.
    pub skipped_roots: Vec<String>,
}

/// Runs [`find_introducers`] over all fixes; per-fix failures are collected
/// instead of aborting the batch.
pub fn find_all_bug_introducing(
    repo: &GitRepo,
    fixes: &[CommitMeta],
    filters: SzzFilters,
) -> SzzReport {
    let results: Vec<_> = fixes
        .par_iter()
        .map(|fix| {
            if fix.parent_ids.is_empty() {
                return None;
            }
            let handle = repo.clone();
            Some(find_introducers(&handle, fix, filters))
        })
        .collect();

    let mut report = SzzReport::default();
    for (fix, result) in fixes.iter().zip(results) {
        match result {
            None => report.skipped_roots.push(fix.id.clone()),
            Some(Ok(set)) => {
                report.introducers.extend(set.introducers.iter().cloned());
                report.per_fix.push(set);
            }
            Some(Err(e)) => report.failures.push(FixFailure {
                fix: fix.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    report
}
