//! Chat prompt rendering for comment-consistency questions.

use serde::{Deserialize, Serialize};

use super::llm::ChatMessage;

const EXEMPLARS_JSON: &str = include_str!("exemplars.json");

const SYSTEM: &str = "You review Java code changes. Given a method before and after a commit \
together with its documentation comment before and after, decide whether the new comment \
accurately describes the new code and whether it accurately describes the old code. \
Explain your reasoning in the rationale field before committing to an answer.";

const SCHEMA: &str = "Answer with exactly one JSON object and nothing else:\n\
{\"consistent_with_new_code\": true|false, \"consistent_with_old_code\": true|false, \
\"rationale\": \"<short explanation>\"}";

const RETRY: &str = "Your previous reply could not be parsed. Reply again with exactly one JSON \
object with the keys consistent_with_new_code (boolean), consistent_with_old_code (boolean) \
and rationale (non-empty string), and no other text.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    #[default]
    ZeroShot,
    FewShot,
}

/// A labeled example embedded in few-shot prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub old_code: String,
    pub new_code: String,
    pub old_comment: String,
    pub new_comment: String,
    pub consistent_with_new_code: bool,
    pub consistent_with_old_code: bool,
    pub rationale: String,
}

impl Exemplar {
    /// The hand-written exemplars shipped with the crate.
    pub fn builtin() -> Vec<Exemplar> {
        serde_json::from_str(EXEMPLARS_JSON).expect("embedded exemplars are valid JSON")
    }

    fn answer(&self) -> String {
        serde_json::json!({
            "consistent_with_new_code": self.consistent_with_new_code,
            "consistent_with_old_code": self.consistent_with_old_code,
            "rationale": self.rationale,
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    mode: PromptMode,
    exemplars: Vec<Exemplar>,
}

impl PromptTemplate {
    pub fn zero_shot() -> Self {
        PromptTemplate {
            mode: PromptMode::ZeroShot,
            exemplars: Vec::new(),
        }
    }

    /// Few-shot template with the first `k` built-in exemplars.
    pub fn few_shot(k: usize) -> Self {
        Self::with_exemplars(Exemplar::builtin().into_iter().take(k).collect())
    }

    pub fn with_exemplars(exemplars: Vec<Exemplar>) -> Self {
        PromptTemplate {
            mode: PromptMode::FewShot,
            exemplars,
        }
    }

    pub fn from_mode(mode: PromptMode, k: usize) -> Self {
        match mode {
            PromptMode::ZeroShot => Self::zero_shot(),
            PromptMode::FewShot => Self::few_shot(k),
        }
    }

    pub fn mode(&self) -> PromptMode {
        self.mode
    }

    pub fn exemplar_count(&self) -> usize {
        self.exemplars.len()
    }

    /// Conversation for one question. Few-shot exemplars are replayed as
    /// prior user/assistant turns.
    pub fn render(
        &self,
        old_code: &str,
        new_code: &str,
        new_comment: &str,
        old_comment: &str,
    ) -> Vec<ChatMessage> {
        let mut messages = vec![ChatMessage::system(format!("{SYSTEM}\n\n{SCHEMA}"))];
        for ex in &self.exemplars {
            messages.push(ChatMessage::user(question(
                &ex.old_code,
                &ex.new_code,
                &ex.new_comment,
                &ex.old_comment,
            )));
            messages.push(ChatMessage::assistant(ex.answer()));
        }
        messages.push(ChatMessage::user(question(
            old_code,
            new_code,
            new_comment,
            old_comment,
        )));
        messages
    }

    /// Follow-up turn sent after an unparseable reply.
    pub fn retry_message() -> ChatMessage {
        ChatMessage::user(RETRY.to_string())
    }
}

fn question(old_code: &str, new_code: &str, new_comment: &str, old_comment: &str) -> String {
    format!(
        "Old code:\n```java\n{old_code}\n```\n\nNew code:\n```java\n{new_code}\n```\n\n\
         Old comment:\n```\n{old_comment}\n```\n\nNew comment:\n```\n{new_comment}\n```\n\n{SCHEMA}"
    )
}
