//! Java method and summary-comment extraction.
//!
//! A hand-written lexer plus brace matcher finds method and constructor
//! declarations, their exact source text and the comment block directly
//! above each one. Historical revisions often fail to compile, so every
//! entry point is best-effort and total.

pub mod diff;
pub mod extract;
pub mod lexer;
pub mod normalize;

pub use diff::{pair_and_diff, ChangeKind, DiffOptions, MethodChange, PairOutcome};
pub use extract::{extract_methods, Extraction, MethodInfo};
pub use lexer::code_lines;
pub use normalize::{normalize_body, normalize_comment};
