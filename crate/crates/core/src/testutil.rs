//! Scripted git repositories for tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

/// Epoch of day 0 in fixture histories (2020-09-13T12:26:40Z).
pub const BASE_TIME: i64 = 1_600_000_000;

/// A throwaway repository whose commits carry explicit timestamps.
pub struct FixtureRepo {
    dir: TempDir,
}

impl FixtureRepo {
    pub fn new() -> Self {
        let dir = tempfile::Builder::new()
            .prefix("fixture-repo")
            .tempdir()
            .expect("temp dir");
        let repo = FixtureRepo { dir };
        repo.git(&["init", "-q", "-b", "main"]);
        repo.git(&["config", "user.name", "Fixture"]);
        repo.git(&["config", "user.email", "fixture@example.com"]);
        repo.git(&["config", "commit.gpgsign", "false"]);
        repo
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Runs git in the repository and returns trimmed stdout; panics on
    /// failure.
    pub fn git(&self, args: &[&str]) -> String {
        self.git_env(args, &[])
    }

    fn git_env(&self, args: &[&str], env: &[(&str, String)]) -> String {
        let out = Command::new("git")
            .arg("-C")
            .arg(self.path())
            .args(args)
            .envs(env.iter().map(|(k, v)| (*k, v.as_str())))
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("HOME", self.path())
            .output()
            .expect("git runs");
        assert!(
            out.status.success(),
            "git {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).trim().to_string()
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.path().join(rel)
    }

    pub fn write(&self, rel: &str, contents: &str) -> &Self {
        let p = self.file(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).expect("mkdir");
        }
        fs::write(p, contents).expect("write fixture file");
        self
    }

    pub fn remove(&self, rel: &str) -> &Self {
        fs::remove_file(self.file(rel)).expect("remove fixture file");
        self
    }

    pub fn rename(&self, from: &str, to: &str) -> &Self {
        if let Some(dir) = self.file(to).parent() {
            fs::create_dir_all(dir).expect("mkdir");
        }
        self.git(&["mv", from, to]);
        self
    }

    /// Stages everything and commits with author and committer time
    /// `time` (UTC seconds). Returns the new commit id.
    pub fn commit_at(&self, message: &str, time: i64) -> String {
        self.git(&["add", "-A"]);
        let date = format!("@{time} +0000");
        let env = [("GIT_AUTHOR_DATE", date.clone()), ("GIT_COMMITTER_DATE", date)];
        self.git_env(&["commit", "-q", "--allow-empty", "--no-verify", "-m", message], &env);
        self.git(&["rev-parse", "HEAD"])
    }

    /// Commits at `BASE_TIME` plus `day` days.
    pub fn commit_day(&self, message: &str, day: f64) -> String {
        self.commit_at(message, BASE_TIME + (day * 86_400.0).round() as i64)
    }

    /// Merges `branch` into the current branch without fast-forwarding.
    pub fn merge_at(&self, branch: &str, message: &str, time: i64) -> String {
        let date = format!("@{time} +0000");
        let env = [("GIT_AUTHOR_DATE", date.clone()), ("GIT_COMMITTER_DATE", date)];
        self.git_env(&["merge", "-q", "--no-ff", "--no-edit", "-m", message, branch], &env);
        self.git(&["rev-parse", "HEAD"])
    }
}

impl Default for FixtureRepo {
    fn default() -> Self {
        Self::new()
    }
}
