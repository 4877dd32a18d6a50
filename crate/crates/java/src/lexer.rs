//! Token-level Java scanner.
//!
//! The scanner never fails: unterminated literals and comments end at the
//! line break (literals) or at end of input (comments, text blocks). Every
//! token's span is a valid byte range into the input.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    TextBlock,
    Char,
    LineComment,
    BlockComment,
    Punct(char),
}

impl TokenKind {
    pub fn is_comment(self) -> bool {
        matches!(self, TokenKind::LineComment | TokenKind::BlockComment)
    }

    pub fn is_literal(self) -> bool {
        matches!(self, TokenKind::Str | TokenKind::TextBlock | TokenKind::Char)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.span.clone()]
    }

    pub fn is_punct(&self, c: char) -> bool {
        self.kind == TokenKind::Punct(c)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_part(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.src[self.pos..].starts_with(s)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn eat_while(&mut self, f: impl Fn(char) -> bool) {
        while let Some(c) = self.peek() {
            if !f(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    /// Quoted literal that may not span lines. Stops before a newline when
    /// unterminated.
    fn quoted(&mut self, quote: char) {
        while let Some(c) = self.peek() {
            match c {
                '\n' => return,
                '\\' => {
                    self.bump();
                    if self.peek().is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                _ => {
                    self.bump();
                    if c == quote {
                        return;
                    }
                }
            }
        }
    }

    fn text_block(&mut self) {
        while self.peek().is_some() {
            if self.starts_with("\"\"\"") {
                self.pos += 3;
                return;
            }
            if self.bump() == Some('\\') {
                self.bump();
            }
        }
    }
}

/// Splits Java source into tokens, dropping whitespace.
pub fn tokenize(src: &str) -> Vec<Token> {
    let mut cur = Cursor { src, pos: 0 };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let start = cur.pos;
        let kind = if c.is_whitespace() {
            cur.eat_while(char::is_whitespace);
            continue;
        } else if cur.starts_with("//") {
            cur.eat_while(|c| c != '\n');
            TokenKind::LineComment
        } else if cur.starts_with("/*") {
            cur.pos += 2;
            match src[cur.pos..].find("*/") {
                Some(end) => cur.pos += end + 2,
                None => cur.pos = src.len(),
            }
            TokenKind::BlockComment
        } else if cur.starts_with("\"\"\"") {
            cur.pos += 3;
            cur.text_block();
            TokenKind::TextBlock
        } else if c == '"' {
            cur.bump();
            cur.quoted('"');
            TokenKind::Str
        } else if c == '\'' {
            cur.bump();
            cur.quoted('\'');
            TokenKind::Char
        } else if is_ident_start(c) {
            cur.eat_while(is_ident_part);
            TokenKind::Ident
        } else if c.is_ascii_digit()
            || (c == '.' && cur.peek_at(1).is_some_and(|d| d.is_ascii_digit()))
        {
            cur.bump();
            cur.eat_while(|c| c.is_alphanumeric() || c == '_' || c == '.');
            TokenKind::Number
        } else {
            cur.bump();
            TokenKind::Punct(c)
        };
        out.push(Token {
            kind,
            span: start..cur.pos,
        });
    }
    out
}

/// Byte offsets of line starts; line `n` (1-based) starts at `starts[n - 1]`.
#[derive(Debug, Clone)]
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(src: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// 1-based line containing byte offset `pos`.
    pub fn line_of(&self, pos: usize) -> usize {
        match self.starts.binary_search(&pos) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }

    pub fn line_count(&self) -> usize {
        self.starts.len()
    }
}

/// Per-line flag telling whether the line carries any code token.
///
/// Index 0 is line 1. Blank lines and lines holding only comment text are
/// `false`; a multi-line literal marks every line it spans.
pub fn code_lines(src: &str) -> Vec<bool> {
    let index = LineIndex::new(src);
    let mut mask = vec![false; index.line_count()];
    for tok in tokenize(src) {
        if tok.kind.is_comment() {
            continue;
        }
        let first = index.line_of(tok.span.start);
        let last = index.line_of(tok.span.end.saturating_sub(1).max(tok.span.start));
        for line in first..=last {
            mask[line - 1] = true;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, &str)> {
        tokenize(src)
            .into_iter()
            .map(|t| (t.kind, &src[t.span]))
            .collect()
    }

    #[test]
    fn strings_hide_braces() {
        let toks = kinds(r#"s = "a}\"{"; c = '}';"#);
        assert!(toks.contains(&(TokenKind::Str, r#""a}\"{""#)));
        assert!(toks.contains(&(TokenKind::Char, "'}'")));
        assert!(!toks.iter().any(|(k, _)| *k == TokenKind::Punct('}')));
    }

    #[test]
    fn text_block_spans_lines() {
        let src = "String s = \"\"\"\n  { \"\"\" ;";
        let toks = kinds(src);
        assert_eq!(toks[3], (TokenKind::TextBlock, "\"\"\"\n  { \"\"\""));
    }

    #[test]
    fn comments() {
        let toks = kinds("a // x }\n/* { */ b /** doc */");
        assert_eq!(
            toks,
            vec![
                (TokenKind::Ident, "a"),
                (TokenKind::LineComment, "// x }"),
                (TokenKind::BlockComment, "/* { */"),
                (TokenKind::Ident, "b"),
                (TokenKind::BlockComment, "/** doc */"),
            ]
        );
    }

    #[test]
    fn unterminated_literals_stop_at_newline() {
        let toks = kinds("\"abc\n}");
        assert_eq!(toks, vec![(TokenKind::Str, "\"abc"), (TokenKind::Punct('}'), "}")]);
        let toks = kinds("/* never closed {");
        assert_eq!(toks.len(), 1);
    }

    #[test]
    fn code_line_mask() {
        let src = "int a;\n\n// only comment\n/* block\n still */ b();\n  \"\"\"\n x\"\"\";";
        assert_eq!(code_lines(src), vec![true, false, false, false, true, true, true]);
    }

    #[test]
    fn line_index() {
        let idx = LineIndex::new("a\nb\n");
        assert_eq!(idx.line_of(0), 1);
        assert_eq!(idx.line_of(2), 2);
        assert_eq!(idx.line_of(4), 3);
    }
}
