//! Loader for labeled comment-inconsistency datasets in the CUP2 JSON Lines
//! layout.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use stalecomment_java::normalize_comment;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Cup2Error {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
}

/// One labeled instance. `label` is true for "inconsistent" (the comment
/// needed an update).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cup2Instance {
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "any_id")]
    pub id: Option<String>,
    #[serde(alias = "src_method")]
    pub old_code: String,
    #[serde(alias = "dst_method")]
    pub new_code: String,
    #[serde(alias = "src_desc")]
    pub old_comment: String,
    #[serde(alias = "dst_desc")]
    pub new_comment: String,
    #[serde(default, deserialize_with = "bool_or_int")]
    pub label: Option<bool>,
}

impl Cup2Instance {
    /// The stored label, or the label derived from the comments when the
    /// line carries none.
    pub fn effective_label(&self) -> bool {
        self.label
            .unwrap_or_else(|| derived_label(&self.old_comment, &self.new_comment))
    }
}

/// Positive when the comments differ after punctuation removal.
pub fn derived_label(old_comment: &str, new_comment: &str) -> bool {
    normalize_comment(old_comment) != normalize_comment(new_comment)
}

fn bool_or_int<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        B(bool),
        I(i64),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::B(b)) => Ok(Some(b)),
        Some(Raw::I(0)) => Ok(Some(false)),
        Some(Raw::I(1)) => Ok(Some(true)),
        Some(Raw::I(n)) => Err(serde::de::Error::custom(format!("label must be 0 or 1, got {n}"))),
    }
}

fn any_id<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    Ok(match Option::<serde_json::Value>::deserialize(d)? {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(s),
        Some(other) => Some(other.to_string()),
    })
}

/// Streams instances from a reader; blank lines are skipped.
pub struct Cup2Reader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Cup2Reader<R> {
    pub fn new(reader: R) -> Self {
        Cup2Reader {
            lines: reader.lines(),
            line_no: 0,
        }
    }
}

impl Cup2Reader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, Cup2Error> {
        let f = File::open(path).map_err(|e| Cup2Error::Io(format!("{}: {e}", path.display())))?;
        Ok(Self::new(BufReader::new(f)))
    }
}

impl<R: BufRead> Iterator for Cup2Reader<R> {
    type Item = Result<Cup2Instance, Cup2Error>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Cup2Error::Io(e.to_string()))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(serde_json::from_str(&line).map_err(|e| Cup2Error::ParseError {
                line: self.line_no,
                message: e.to_string(),
            }));
        }
    }
}

pub fn load_cup2(path: &Path) -> Result<Vec<Cup2Instance>, Cup2Error> {
    Cup2Reader::open(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Vec<Cup2Instance>, Cup2Error> {
        Cup2Reader::new(text.as_bytes()).collect()
    }

    #[test]
    fn three_lines_three_instances() {
        let text = concat!(
            r#"{"old_code":"a","new_code":"b","old_comment":"x","new_comment":"x","label":false}"#, "\n",
            r#"{"src_method":"a","dst_method":"b","src_desc":"x","dst_desc":"y","label":1}"#, "\n",
            "\n",
            r#"{"id":7,"old_code":"a","new_code":"b","old_comment":"x","new_comment":"y"}"#, "\n",
        );
        let v = read(text).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[1].label, Some(true));
        assert_eq!(v[2].id.as_deref(), Some("7"));
        assert_eq!(v[2].label, None);
        assert!(v[2].effective_label());
    }

    #[test]
    fn missing_field_reports_line() {
        let text = concat!(
            r#"{"old_code":"a","new_code":"b","old_comment":"x","new_comment":"x"}"#, "\n",
            r#"{"old_code":"a","new_code":"b","old_comment":"x"}"#, "\n",
        );
        match read(text) {
            Err(Cup2Error::ParseError { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn punctuation_only_difference_is_negative() {
        assert!(!derived_label("/** Returns the sum. */", "/** Returns the sum */"));
        assert!(!derived_label("// a, b; c", "// a b c!"));
        assert!(derived_label("/** Returns the sum. */", "/** Returns the total. */"));
    }

    #[test]
    fn bad_label_is_rejected() {
        let text = r#"{"old_code":"a","new_code":"b","old_comment":"x","new_comment":"x","label":2}"#;
        assert!(matches!(read(text), Err(Cup2Error::ParseError { line: 1, .. })));
    }
}
