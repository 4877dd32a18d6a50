//! Read-only git access through the host `git` executable.
//!
//! Every query shells out to plumbing commands so that rename detection and
//! blame attribution are exactly what `git` itself reports.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};

/// Object id of the empty tree, used as the "parent" of root commits.
pub const EMPTY_TREE: &str = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";

const NULL_OID: &str = "0000000000000000000000000000000000000000";

#[derive(Debug, thiserror::Error)]
pub enum GitError {
    #[error("repository not found: {0}")]
    RepoNotFound(PathBuf),
    #[error("repository {0} has no commits")]
    EmptyRepo(String),
    #[error("unknown commit: {0}")]
    UnknownCommit(String),
    #[error("{path} does not exist at {commit}")]
    PathAbsentAtRevision { commit: String, path: String },
    #[error("git {args} failed ({status}): {stderr}")]
    Command {
        args: String,
        status: String,
        stderr: String,
    },
    #[error("unexpected git output: {0}")]
    Parse(String),
    #[error("failed to run git: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid path pattern: {0}")]
    Pattern(#[from] globset::Error),
}

pub type Result<T> = std::result::Result<T, GitError>;

/// Which timestamp orders and windows commits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    #[default]
    Author,
    Committer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitMeta {
    pub id: String,
    /// UTC seconds from the configured clock (author time by default).
    pub author_time: i64,
    pub message: String,
    pub parent_ids: Vec<String>,
    pub repo_name: String,
}

impl CommitMeta {
    pub fn first_parent(&self) -> Option<&str> {
        self.parent_ids.first().map(String::as_str)
    }

    pub fn is_merge(&self) -> bool {
        self.parent_ids.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Deleted,
    Modified,
    Renamed { old_path: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    /// Path after the change (the removed path for deletions).
    pub path: String,
    pub old_blob: Option<String>,
    pub new_blob: Option<String>,
    pub change_kind: ChangeKind,
}

impl FileDiff {
    /// Path on the old side of the diff, if the file existed there.
    pub fn old_path(&self) -> Option<&str> {
        match &self.change_kind {
            ChangeKind::Added => None,
            ChangeKind::Renamed { old_path } => Some(old_path),
            _ => Some(&self.path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlameLine {
    pub line_no: u32,
    pub origin_commit: String,
    pub content: String,
}

/// Lines removed or replaced in one file, numbered on the old side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovedLines {
    pub old_path: String,
    pub new_path: Option<String>,
    pub lines: Vec<u32>,
}

/// Glob-based path selection; an empty filter accepts every path.
#[derive(Debug, Clone)]
pub struct PathFilter {
    set: Option<GlobSet>,
}

impl PathFilter {
    pub fn any() -> Self {
        PathFilter { set: None }
    }

    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self> {
        if patterns.is_empty() {
            return Ok(Self::any());
        }
        let mut builder = GlobSetBuilder::new();
        for p in patterns {
            builder.add(Glob::new(p.as_ref())?);
        }
        Ok(PathFilter {
            set: Some(builder.build()?),
        })
    }

    pub fn java() -> Self {
        Self::new(&["*.java"]).expect("static pattern")
    }

    pub fn matches(&self, path: &str) -> bool {
        self.set.as_ref().is_none_or(|s| s.is_match(path))
    }
}

pub fn is_commit_id(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Handle on one local repository. Cheap to clone; holds no open resources.
#[derive(Debug, Clone)]
pub struct GitRepo {
    root: PathBuf,
    name: String,
    clock: Clock,
    branch: Option<String>,
}

impl GitRepo {
    pub fn open(path: impl AsRef<Path>, name: impl Into<String>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(GitError::RepoNotFound(root));
        }
        let ok = Command::new("git")
            .arg("-C")
            .arg(&root)
            .args(["rev-parse", "--git-dir"])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()?
            .success();
        if !ok {
            return Err(GitError::RepoNotFound(root));
        }
        Ok(GitRepo {
            root,
            name: name.into(),
            clock: Clock::Author,
            branch: None,
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Mine `branch` instead of whatever HEAD points at.
    pub fn with_branch(mut self, branch: Option<String>) -> Self {
        self.branch = branch;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.root)
            .args(["-c", "core.quotepath=false", "-c", "log.showSignature=false"])
            .env("LC_ALL", "C")
            .stdin(Stdio::null());
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<Vec<u8>> {
        let out = self.command().args(args).output()?;
        if !out.status.success() {
            return Err(GitError::Command {
                args: args.join(" "),
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(out.stdout)
    }

    fn succeeds(&self, args: &[&str]) -> Result<bool> {
        let status = self
            .command()
            .args(args)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()?;
        Ok(status.success())
    }

    fn head_ref(&self) -> &str {
        self.branch.as_deref().unwrap_or("HEAD")
    }

    /// Full id of `rev`, which must name a commit.
    pub fn resolve(&self, rev: &str) -> Result<String> {
        let spec = format!("{rev}^{{commit}}");
        match self.run(&["rev-parse", "--verify", "--quiet", &spec]) {
            Ok(out) => Ok(String::from_utf8_lossy(&out).trim().to_string()),
            Err(GitError::Command { .. }) => Err(GitError::UnknownCommit(rev.to_string())),
            Err(e) => Err(e),
        }
    }

    fn time_format(&self) -> &'static str {
        match self.clock {
            Clock::Author => "%H%n%at%n%P%n%B",
            Clock::Committer => "%H%n%ct%n%P%n%B",
        }
    }

    fn parse_log(&self, raw: &[u8]) -> Result<Vec<CommitMeta>> {
        let text = String::from_utf8_lossy(raw);
        let mut out = Vec::new();
        for rec in text.split('\0') {
            let rec = rec.trim_start_matches('\n');
            if rec.is_empty() {
                continue;
            }
            let mut parts = rec.splitn(4, '\n');
            let id = parts.next().unwrap_or_default().to_string();
            let time = parts.next().unwrap_or_default();
            let parents = parts.next().unwrap_or_default();
            let message = parts.next().unwrap_or_default().trim_end_matches('\n');
            if !is_commit_id(&id) {
                return Err(GitError::Parse(format!("bad commit id {id:?}")));
            }
            let author_time = time
                .parse()
                .map_err(|_| GitError::Parse(format!("bad timestamp {time:?}")))?;
            out.push(CommitMeta {
                id,
                author_time,
                message: message.to_string(),
                parent_ids: parents.split_whitespace().map(str::to_string).collect(),
                repo_name: self.name.clone(),
            });
        }
        Ok(out)
    }

    /// All commits reachable from the mined branch, ascending by time with
    /// ties broken by id. `until` keeps commits at or before that time.
    pub fn list_commits(&self, until: Option<i64>) -> Result<Vec<CommitMeta>> {
        let head = self.head_ref();
        if self.resolve(head).is_err() {
            return Err(GitError::EmptyRepo(self.name.clone()));
        }
        let format = format!("--format={}", self.time_format());
        let raw = self.run(&["log", "-z", "--no-show-signature", &format, head, "--"])?;
        let mut commits = self.parse_log(&raw)?;
        if let Some(until) = until {
            commits.retain(|c| c.author_time <= until);
        }
        sort_commits(&mut commits);
        Ok(commits)
    }

    /// Metadata for specific commits, keyed by id.
    pub fn commits(&self, ids: &[&str]) -> Result<HashMap<String, CommitMeta>> {
        if ids.is_empty() {
            return Ok(HashMap::new());
        }
        let format = format!("--format={}", self.time_format());
        let mut args = vec!["log", "-z", "--no-walk=unsorted", "--no-show-signature", &format];
        args.extend(ids);
        args.push("--");
        let raw = self.run(&args)?;
        Ok(self
            .parse_log(&raw)?
            .into_iter()
            .map(|c| (c.id.clone(), c))
            .collect())
    }

    pub fn commit(&self, id: &str) -> Result<CommitMeta> {
        let full = self.resolve(id)?;
        self.commits(&[&full])?
            .remove(&full)
            .ok_or(GitError::UnknownCommit(full))
    }

    /// `true` when `ancestor` is reachable from `descendant` (or equal to it).
    pub fn is_ancestor(&self, ancestor: &str, descendant: &str) -> Result<bool> {
        self.succeeds(&["merge-base", "--is-ancestor", ancestor, descendant])
    }

    /// Raw changed-path list between two tree-ish revisions, no blob content.
    pub fn changed_paths(&self, old: &str, new: &str) -> Result<Vec<(ChangeKind, String)>> {
        Ok(self
            .raw_diff(old, new)?
            .into_iter()
            .filter(|e| e.old_oid != e.new_oid || matches!(e.kind, ChangeKind::Renamed { .. }))
            .map(|e| (e.kind, e.path))
            .collect())
    }

    fn raw_diff(&self, old: &str, new: &str) -> Result<Vec<RawEntry>> {
        let raw = self.run(&["diff-tree", "-r", "-z", "-M", "--no-ext-diff", old, new, "--"])?;
        parse_raw_diff(&raw)
    }

    fn check_tree_ish(&self, rev: &str) -> Result<()> {
        if rev == EMPTY_TREE {
            return Ok(());
        }
        self.resolve(rev).map(|_| ())
    }

    /// File-level diff between two revisions, restricted to `filter`.
    /// Byte-identical files are omitted; pure renames are kept.
    pub fn diff(&self, old_id: &str, new_id: &str, filter: &PathFilter) -> Result<Vec<FileDiff>> {
        self.check_tree_ish(old_id)?;
        self.check_tree_ish(new_id)?;
        if old_id == new_id {
            return Ok(Vec::new());
        }
        let entries: Vec<RawEntry> = self
            .raw_diff(old_id, new_id)?
            .into_iter()
            .filter(|e| {
                filter.matches(&e.path)
                    || matches!(&e.kind, ChangeKind::Renamed { old_path } if filter.matches(old_path))
            })
            .filter(|e| e.old_oid != e.new_oid || matches!(e.kind, ChangeKind::Renamed { .. }))
            .collect();

        let mut wanted: Vec<&str> = Vec::new();
        for e in &entries {
            for oid in [&e.old_oid, &e.new_oid] {
                if oid != NULL_OID {
                    wanted.push(oid);
                }
            }
        }
        let blobs = self.read_blobs(&wanted)?;
        let blob = |oid: &str| -> Option<String> {
            (oid != NULL_OID).then(|| blobs.get(oid).cloned().unwrap_or_default())
        };
        Ok(entries
            .iter()
            .map(|e| FileDiff {
                path: e.path.clone(),
                old_blob: blob(&e.old_oid),
                new_blob: blob(&e.new_oid),
                change_kind: e.kind.clone(),
            })
            .collect())
    }

    /// Diff of a commit against its first parent (the empty tree for roots).
    pub fn diff_to_parent(&self, commit: &CommitMeta, filter: &PathFilter) -> Result<Vec<FileDiff>> {
        self.diff(commit.first_parent().unwrap_or(EMPTY_TREE), &commit.id, filter)
    }

    fn read_blobs(&self, oids: &[&str]) -> Result<HashMap<String, String>> {
        if oids.is_empty() {
            return Ok(HashMap::new());
        }
        let mut child = self
            .command()
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let input: String = oids.iter().map(|o| format!("{o}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let mut raw = Vec::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_end(&mut raw)?;
        writer
            .join()
            .map_err(|_| GitError::Parse("cat-file writer panicked".into()))??;
        child.wait()?;

        let mut out = HashMap::new();
        let mut pos = 0;
        while pos < raw.len() {
            let nl = raw[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| GitError::Parse("truncated cat-file header".into()))?;
            let header = String::from_utf8_lossy(&raw[pos..pos + nl]).to_string();
            pos += nl + 1;
            let fields: Vec<&str> = header.split(' ').collect();
            if fields.len() != 3 {
                // "<oid> missing"
                continue;
            }
            let size: usize = fields[2]
                .parse()
                .map_err(|_| GitError::Parse(format!("bad cat-file header {header:?}")))?;
            let end = (pos + size).min(raw.len());
            out.insert(
                fields[0].to_string(),
                String::from_utf8_lossy(&raw[pos..end]).into_owned(),
            );
            pos = end + 1;
        }
        Ok(out)
    }

    /// Old-side line numbers removed or replaced between two revisions,
    /// per file, from a zero-context patch.
    pub fn removed_lines(&self, old_id: &str, new_id: &str) -> Result<Vec<RemovedLines>> {
        let raw = self.run(&[
            "diff",
            "-U0",
            "-M",
            "--no-color",
            "--no-ext-diff",
            "--no-textconv",
            "--diff-algorithm=myers",
            "--src-prefix=a/",
            "--dst-prefix=b/",
            old_id,
            new_id,
            "--",
        ])?;
        parse_zero_context_patch(&String::from_utf8_lossy(&raw))
    }

    /// Content of `path` at `commit`, or `None` when absent there.
    pub fn file_at(&self, commit: &str, path: &str) -> Result<Option<String>> {
        let spec = format!("{commit}:{path}");
        if !self.succeeds(&["cat-file", "-e", &spec])? {
            return Ok(None);
        }
        let raw = self.run(&["cat-file", "blob", &spec])?;
        Ok(Some(String::from_utf8_lossy(&raw).into_owned()))
    }

    /// Line-level attribution of `path` as of `commit`.
    pub fn blame(&self, commit_id: &str, path: &str) -> Result<Vec<BlameLine>> {
        let commit = self.resolve(commit_id)?;
        let spec = format!("{commit}:{path}");
        if !self.succeeds(&["cat-file", "-e", &spec])? {
            return Err(GitError::PathAbsentAtRevision {
                commit,
                path: path.to_string(),
            });
        }
        let raw = self.run(&["blame", "--porcelain", &commit, "--", path])?;
        parse_porcelain_blame(&String::from_utf8_lossy(&raw))
    }
}

impl fmt::Display for GitRepo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name, self.root.display())
    }
}

pub fn sort_commits(commits: &mut [CommitMeta]) {
    commits.sort_by(|a, b| a.author_time.cmp(&b.author_time).then_with(|| a.id.cmp(&b.id)));
}

#[derive(Debug)]
struct RawEntry {
    old_oid: String,
    new_oid: String,
    kind: ChangeKind,
    path: String,
}

fn parse_raw_diff(raw: &[u8]) -> Result<Vec<RawEntry>> {
    let text = String::from_utf8_lossy(raw);
    let mut fields = text.split('\0').filter(|s| !s.is_empty());
    let mut out = Vec::new();
    while let Some(meta) = fields.next() {
        let meta = meta.trim_start_matches('\n');
        let parts: Vec<&str> = meta.trim_start_matches(':').split(' ').collect();
        if parts.len() < 5 {
            return Err(GitError::Parse(format!("bad raw diff entry {meta:?}")));
        }
        let (old_mode, new_mode) = (parts[0], parts[1]);
        let status = parts[4];
        let first = fields
            .next()
            .ok_or_else(|| GitError::Parse("missing path".into()))?
            .to_string();
        let (kind, path) = match status.chars().next() {
            Some('A') => (ChangeKind::Added, first),
            Some('D') => (ChangeKind::Deleted, first),
            Some('R') => {
                let new_path = fields
                    .next()
                    .ok_or_else(|| GitError::Parse("missing rename target".into()))?
                    .to_string();
                (ChangeKind::Renamed { old_path: first }, new_path)
            }
            Some('C') => {
                let new_path = fields
                    .next()
                    .ok_or_else(|| GitError::Parse("missing copy target".into()))?
                    .to_string();
                (ChangeKind::Added, new_path)
            }
            _ => (ChangeKind::Modified, first),
        };
        // Submodule entries have no blob content.
        if old_mode == "160000" || new_mode == "160000" {
            continue;
        }
        let old_oid = if kind == ChangeKind::Added {
            NULL_OID.to_string()
        } else {
            parts[2].to_string()
        };
        out.push(RawEntry {
            old_oid,
            new_oid: parts[3].to_string(),
            kind,
            path,
        });
    }
    Ok(out)
}

/// Undoes git's C-style quoting of unusual paths.
fn unquote_path(p: &str) -> String {
    let Some(inner) = p.strip_prefix('"').and_then(|s| s.strip_suffix('"')) else {
        return p.to_string();
    };
    let mut bytes = Vec::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            let mut buf = [0u8; 4];
            bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            continue;
        }
        match chars.next() {
            Some('n') => bytes.push(b'\n'),
            Some('t') => bytes.push(b'\t'),
            Some('"') => bytes.push(b'"'),
            Some('\\') => bytes.push(b'\\'),
            Some(d @ '0'..='7') => {
                let mut v = d.to_digit(8).unwrap_or(0);
                for _ in 0..2 {
                    if let Some(n) = chars.peek().and_then(|c| c.to_digit(8)) {
                        v = v * 8 + n;
                        chars.next();
                    }
                }
                bytes.push(v as u8);
            }
            Some(other) => bytes.push(other as u8),
            None => {}
        }
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

fn strip_side_prefix<'a>(p: &'a str, prefix: &str) -> Option<&'a str> {
    if p == "/dev/null" {
        None
    } else {
        Some(p.strip_prefix(prefix).unwrap_or(p))
    }
}

fn parse_zero_context_patch(text: &str) -> Result<Vec<RemovedLines>> {
    let mut out: Vec<RemovedLines> = Vec::new();
    let mut current: Option<RemovedLines> = None;
    let mut old_path: Option<String> = None;
    // Lines still expected in the current hunk (old side, new side).
    let mut pending = (0u32, 0u32);
    for line in text.lines() {
        if pending != (0, 0) {
            match line.as_bytes().first() {
                Some(b'-') => pending.0 = pending.0.saturating_sub(1),
                Some(b'+') => pending.1 = pending.1.saturating_sub(1),
                Some(b'\\') => {}
                _ => {
                    pending.0 = pending.0.saturating_sub(1);
                    pending.1 = pending.1.saturating_sub(1);
                }
            }
            continue;
        }
        if line.starts_with("diff --git ") {
            out.extend(current.take().filter(|r| !r.lines.is_empty()));
            old_path = None;
        } else if let Some(p) = line.strip_prefix("--- ") {
            let p = unquote_path(p.trim_end_matches('\t'));
            old_path = strip_side_prefix(&p, "a/").map(str::to_string);
        } else if let Some(p) = line.strip_prefix("+++ ") {
            let p = unquote_path(p.trim_end_matches('\t'));
            let new_path = strip_side_prefix(&p, "b/").map(str::to_string);
            current = old_path.clone().map(|old_path| RemovedLines {
                old_path,
                new_path,
                lines: Vec::new(),
            });
        } else if let Some(rest) = line.strip_prefix("@@ -") {
            let bad = || GitError::Parse(format!("bad hunk header {line:?}"));
            let mut ranges = rest.split(' ');
            let (old_start, old_count) = parse_range(ranges.next().ok_or_else(bad)?).ok_or_else(bad)?;
            let new_range = ranges.next().and_then(|r| r.strip_prefix('+')).ok_or_else(bad)?;
            let (_, new_count) = parse_range(new_range).ok_or_else(bad)?;
            pending = (old_count, new_count);
            if let Some(cur) = current.as_mut() {
                cur.lines.extend(old_start..old_start + old_count);
            }
        }
    }
    out.extend(current.take().filter(|r| !r.lines.is_empty()));
    Ok(out)
}

/// `start[,count]` from a hunk header; count defaults to 1.
fn parse_range(range: &str) -> Option<(u32, u32)> {
    let (start, count) = range.split_once(',').unwrap_or((range, "1"));
    Some((start.parse().ok()?, count.parse().ok()?))
}

fn parse_porcelain_blame(text: &str) -> Result<Vec<BlameLine>> {
    let mut out = Vec::new();
    let mut pending: Option<(String, u32)> = None;
    for line in text.split_inclusive('\n') {
        if let Some(content) = line.strip_prefix('\t') {
            let (origin_commit, line_no) = pending
                .take()
                .ok_or_else(|| GitError::Parse("blame content without header".into()))?;
            out.push(BlameLine {
                line_no,
                origin_commit,
                content: content.strip_suffix('\n').unwrap_or(content).to_string(),
            });
            continue;
        }
        let mut parts = line.trim_end().split(' ');
        let Some(first) = parts.next() else { continue };
        if is_commit_id(first) {
            let _orig_line = parts.next();
            let final_line = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| GitError::Parse(format!("bad blame header {line:?}")))?;
            pending = Some((first.to_string(), final_line));
        }
    }
    Ok(out)
}
