//! Pipeline configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stalecomment_java::DiffOptions;

use crate::bugfix::KeywordRuleset;
use crate::classify::{EndpointSettings, PromptMode};
use crate::git::Clock;
use crate::records::{PathRules, Window};
use crate::stats::AnalysisOptions;
use crate::szz::SzzFilters;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoSpec {
    pub path: PathBuf,
    /// Short label used in records and reports; defaults to the directory
    /// name.
    #[serde(default)]
    pub name: Option<String>,
}

impl RepoSpec {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| self.path.display().to_string())
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GitSettings {
    pub clock: Clock,
    /// Revision whose history is mined; HEAD when unset.
    pub branch: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSettings {
    pub confidence: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        SamplingSettings {
            confidence: 0.90,
            margin: 0.10,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractSettings {
    /// Ignore whitespace-only body edits.
    pub normalize_body: bool,
}

impl Default for ExtractSettings {
    fn default() -> Self {
        ExtractSettings { normalize_body: true }
    }
}

impl ExtractSettings {
    pub fn diff_options(&self) -> DiffOptions {
        DiffOptions {
            normalize_body: self.normalize_body,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[default]
    Heuristic,
    Llm,
    Mock,
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(ClassifierKind::Heuristic),
            "llm" => Ok(ClassifierKind::Llm),
            "mock" => Ok(ClassifierKind::Mock),
            other => Err(format!("unknown classifier {other:?} (heuristic, llm, mock)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierSettings {
    pub kind: ClassifierKind,
    pub prompt: PromptMode,
    pub few_shot_k: usize,
    /// JSON Lines verdict script for the mock classifier.
    pub script: Option<PathBuf>,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        ClassifierSettings {
            kind: ClassifierKind::Heuristic,
            prompt: PromptMode::ZeroShot,
            few_shot_k: 4,
            script: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    /// Level of the Wald interval.
    pub confidence_level: f64,
    #[serde(flatten)]
    pub options: AnalysisOptions,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            confidence_level: 0.95,
            options: AnalysisOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub repos: Vec<RepoSpec>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// `(lo, hi]` day windows, e.g. `[[0, 7], [7, 14]]`.
    #[serde(default = "default_windows")]
    pub windows: Vec<(f64, f64)>,
    #[serde(default)]
    pub git: GitSettings,
    #[serde(default)]
    pub bugfix: KeywordRuleset,
    #[serde(default)]
    pub szz: SzzFilters,
    #[serde(default)]
    pub sampling: SamplingSettings,
    #[serde(default)]
    pub paths: PathRules,
    #[serde(default)]
    pub extract: ExtractSettings,
    #[serde(default)]
    pub classifier: ClassifierSettings,
    #[serde(default)]
    pub endpoint: EndpointSettings,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_windows() -> Vec<(f64, f64)> {
    vec![(0.0, 7.0), (7.0, 14.0)]
}

impl PipelineConfig {
    /// A config with defaults for everything but the repositories.
    pub fn for_repos(repos: Vec<RepoSpec>) -> Self {
        PipelineConfig {
            repos,
            output_dir: default_output_dir(),
            windows: default_windows(),
            git: GitSettings::default(),
            bugfix: KeywordRuleset::default(),
            szz: SzzFilters::default(),
            sampling: SamplingSettings::default(),
            paths: PathRules::default(),
            extract: ExtractSettings::default(),
            classifier: ClassifierSettings::default(),
            endpoint: EndpointSettings::default(),
            analysis: AnalysisSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative repo, script and output paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for r in &mut self.repos {
            fix(&mut r.path);
        }
        fix(&mut self.output_dir);
        if let Some(s) = &mut self.classifier.script {
            fix(s);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.repos.is_empty() {
            return invalid("at least one repo is required".into());
        }
        let mut labels: Vec<String> = self.repos.iter().map(RepoSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return invalid(format!("duplicate repo label {:?}", w[0]));
        }
        let windows = self.window_list()?;
        if windows.is_empty() {
            return invalid("at least one window is required".into());
        }
        for (i, a) in windows.iter().enumerate() {
            if let Some(b) = windows[i + 1..].iter().find(|b| a.overlaps(b)) {
                return invalid(format!("windows {a} and {b} overlap"));
            }
        }
        let s = &self.sampling;
        for (name, v) in [("sampling.confidence", s.confidence), ("sampling.margin", s.margin)] {
            if !(v > 0.0 && v < 1.0) {
                return invalid(format!("{name} must be in (0,1), got {v}"));
            }
        }
        let level = self.analysis.confidence_level;
        if !(0.0..1.0).contains(&level) {
            return invalid(format!("analysis.confidence_level must be in [0,1), got {level}"));
        }
        if self.endpoint.concurrency == 0 {
            return invalid("endpoint.concurrency must be at least 1".into());
        }
        Ok(())
    }

    pub fn window_list(&self) -> Result<Vec<Window>, ConfigError> {
        self.windows
            .iter()
            .map(|&(lo, hi)| Window::new(lo, hi).map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect()
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
