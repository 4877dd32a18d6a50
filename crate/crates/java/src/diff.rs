//! Pairs methods across two versions of a file and reports the changed ones.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::extract::{extract_methods, MethodInfo};
use crate::normalize::{normalize_body, normalize_comment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    BodyChanged,
    CommentChanged,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodChange {
    pub key: String,
    pub old: MethodInfo,
    pub new: MethodInfo,
    pub change_kind: ChangeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffOptions {
    /// Compare bodies token-wise instead of byte-wise.
    pub normalize_body: bool,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            normalize_body: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairOutcome {
    /// Changed methods in new-file order.
    pub changes: Vec<MethodChange>,
    /// Either version had unbalanced braces.
    pub unbalanced: bool,
}

impl DiffOptions {
    pub fn bodies_differ(&self, old: &str, new: &str) -> bool {
        if self.normalize_body {
            normalize_body(old) != normalize_body(new)
        } else {
            old != new
        }
    }
}

/// Matches methods by signature key and keeps those whose normalized body or
/// normalized comment differs. Methods present in only one version are
/// dropped. Repeated keys within a file pair up in source order.
pub fn pair_and_diff(old_source: &str, new_source: &str, opts: DiffOptions) -> PairOutcome {
    let old = extract_methods(old_source);
    let new = extract_methods(new_source);

    let mut by_key: HashMap<&str, Vec<&MethodInfo>> = HashMap::new();
    for m in old.methods.iter().rev() {
        by_key.entry(&m.signature_key).or_default().push(m);
    }

    let mut changes = Vec::new();
    for n in &new.methods {
        let Some(o) = by_key.get_mut(n.signature_key.as_str()).and_then(Vec::pop) else {
            continue;
        };
        let body = opts.bodies_differ(&o.body_text, &n.body_text);
        let comment = normalize_comment(&o.leading_comment) != normalize_comment(&n.leading_comment);
        let change_kind = match (body, comment) {
            (true, true) => ChangeKind::Both,
            (true, false) => ChangeKind::BodyChanged,
            (false, true) => ChangeKind::CommentChanged,
            (false, false) => continue,
        };
        changes.push(MethodChange {
            key: n.signature_key.clone(),
            old: o.clone(),
            new: n.clone(),
            change_kind,
        });
    }
    PairOutcome {
        changes,
        unbalanced: old.unbalanced || new.unbalanced,
    }
}
