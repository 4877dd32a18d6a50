//! Text normalization used for change detection.

use crate::lexer::tokenize;

/// Drops punctuation and collapses whitespace runs; case is preserved.
///
/// Comment delimiters (`/**`, `*`, `//`) are punctuation, so a Javadoc block
/// and the same text as line comments normalize identically.
pub fn normalize_comment(comment: &str) -> String {
    let stripped: String = comment
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    collapse_whitespace(&stripped)
}

/// Joins tokens with single spaces. Literal text is kept verbatim; whitespace
/// inside comments is collapsed.
pub fn normalize_body(body: &str) -> String {
    let mut out = String::with_capacity(body.len());
    for tok in tokenize(body) {
        if !out.is_empty() {
            out.push(' ');
        }
        let text = tok.text(body);
        if tok.kind.is_comment() {
            out.push_str(&collapse_whitespace(text));
        } else {
            out.push_str(text);
        }
    }
    out
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
