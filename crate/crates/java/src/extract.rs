//! Method declaration scanner built on top of the lexer.
//!
//! The scanner tracks a stack of brace scopes. Inside a type body (or at
//! the top level, so loose snippets still yield methods) it accumulates the
//! tokens of the current member declaration; when the member opens a brace,
//! the accumulated tokens decide whether the brace starts a nested type, a
//! method or constructor body, or something we do not index (initializer
//! blocks, field initializers, enum constant bodies).

use serde::{Deserialize, Serialize};

use crate::lexer::{tokenize, LineIndex, Token, TokenKind};

/// One method or constructor with a body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodInfo {
    /// `Outer.Inner#name(Type1,Type2)` using source-level simple type names.
    pub signature_key: String,
    pub name: String,
    /// Source slice from the first annotation or modifier to the closing brace.
    pub body_text: String,
    /// Raw text of the comment block directly above the declaration, or empty.
    pub leading_comment: String,
    /// 1-based inclusive line range of `body_text`.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    /// Methods in source order.
    pub methods: Vec<MethodInfo>,
    /// Brace imbalance was detected; `methods` holds what was closed before it.
    pub unbalanced: bool,
}

const TYPE_KEYWORDS: [&str; 4] = ["class", "interface", "enum", "record"];

const NOT_A_METHOD_NAME: [&str; 18] = [
    "if", "for", "while", "switch", "catch", "synchronized", "return", "new", "throw", "else",
    "try", "do", "assert", "super", "this", "case", "default", "finally",
];

/// Words that cannot appear among the modifiers and return type.
const NOT_A_DECLARATION_WORD: [&str; 13] = [
    "if", "for", "while", "switch", "catch", "return", "new", "throw", "else", "try", "do",
    "case", "finally",
];

#[derive(Debug)]
enum Scope {
    Members(MemberState),
    Method(PendingMethod),
    /// Any other brace block. `keeps_member` is set for braces that sit
    /// inside a field initializer or an enum constant, where the enclosing
    /// member continues after the block closes.
    Block { keeps_member: bool },
}

#[derive(Debug)]
struct MemberState {
    path: Vec<String>,
    enum_constants: bool,
    /// Token index where the current member's tokens begin (comments included).
    boundary: usize,
    /// Nesting of `(`/`)` and braces opened inside parentheses.
    inner: usize,
}

impl MemberState {
    fn new(path: Vec<String>, enum_constants: bool, boundary: usize) -> Self {
        MemberState {
            path,
            enum_constants,
            boundary,
            inner: 0,
        }
    }
}

#[derive(Debug)]
struct PendingMethod {
    signature_key: String,
    name: String,
    start: usize,
    leading_comment: String,
}

struct Scanner<'a> {
    src: &'a str,
    toks: Vec<Token>,
    lines: LineIndex,
}

/// Extracts every method and constructor with a body.
///
/// Methods declared inside method bodies (local or anonymous classes) are part
/// of the enclosing body and are not reported separately.
pub fn extract_methods(src: &str) -> Extraction {
    let scanner = Scanner {
        src,
        toks: tokenize(src),
        lines: LineIndex::new(src),
    };
    scanner.run()
}

impl<'a> Scanner<'a> {
    fn run(&self) -> Extraction {
        let mut out = Extraction::default();
        let mut stack: Vec<Scope> = vec![Scope::Members(MemberState::new(Vec::new(), false, 0))];

        for (i, tok) in self.toks.iter().enumerate() {
            if tok.kind.is_comment() {
                continue;
            }
            let TokenKind::Punct(p) = tok.kind else {
                continue;
            };
            match stack.last_mut() {
                Some(Scope::Members(m)) => {
                    if m.inner > 0 {
                        match p {
                            '(' | '{' => m.inner += 1,
                            ')' | '}' => m.inner -= 1,
                            _ => {}
                        }
                        continue;
                    }
                    match p {
                        '(' => m.inner = 1,
                        ';' => {
                            m.enum_constants = false;
                            m.boundary = i + 1;
                        }
                        ',' if m.enum_constants => m.boundary = i + 1,
                        '}' => {
                            if stack.len() == 1 {
                                // Stray closer at the top level.
                                out.unbalanced = true;
                                if let Some(Scope::Members(m)) = stack.last_mut() {
                                    m.boundary = i + 1;
                                }
                            } else {
                                stack.pop();
                                self.after_close(&mut stack, i, false);
                            }
                        }
                        '{' => {
                            let scope = self.open_member_brace(m, i);
                            if !matches!(scope, Scope::Block { keeps_member: true }) {
                                m.boundary = i + 1;
                            }
                            stack.push(scope);
                        }
                        _ => {}
                    }
                }
                Some(Scope::Method(_)) | Some(Scope::Block { .. }) => match p {
                    '{' => stack.push(Scope::Block { keeps_member: false }),
                    '}' => {
                        let closed = stack.pop();
                        let keeps = match closed {
                            Some(Scope::Method(pending)) => {
                                out.methods.push(self.finish(pending, tok));
                                false
                            }
                            Some(Scope::Block { keeps_member }) => keeps_member,
                            _ => false,
                        };
                        self.after_close(&mut stack, i, keeps);
                    }
                    _ => {}
                },
                None => unreachable!("top-level scope is never popped"),
            }
        }

        if stack.len() > 1 {
            out.unbalanced = true;
        }
        out.methods.sort_by_key(|m| m.span);
        out
    }

    /// Resets the parent member after a nested brace scope closes, unless the
    /// closed block belongs to a member that continues.
    fn after_close(&self, stack: &mut [Scope], i: usize, keeps_member: bool) {
        if keeps_member {
            return;
        }
        if let Some(Scope::Members(m)) = stack.last_mut() {
            m.boundary = i + 1;
        }
    }

    fn open_member_brace(&self, m: &MemberState, brace: usize) -> Scope {
        if m.enum_constants {
            return Scope::Block { keeps_member: true };
        }
        let member: Vec<usize> = (m.boundary..brace)
            .filter(|&j| !self.toks[j].kind.is_comment())
            .collect();
        if let Some(name) = self.type_declaration_name(&member) {
            let mut path = m.path.clone();
            path.push(name.to_string());
            let is_enum = member.iter().any(|&j| self.is_word(j, "enum"));
            return Scope::Members(MemberState::new(path, is_enum, brace + 1));
        }
        if self.has_top_level_assign(&member) {
            return Scope::Block { keeps_member: true };
        }
        match self.method_signature(&member) {
            Some((name, params)) => {
                let type_path = m.path.join(".");
                let start_tok = member[0];
                let sig_start = self.skip_annotations(&member, 0);
                let sig_start_tok = member.get(sig_start).copied().unwrap_or(brace);
                Scope::Method(PendingMethod {
                    signature_key: format!("{type_path}#{name}({})", params.join(",")),
                    name: name.to_string(),
                    start: self.toks[start_tok].span.start,
                    leading_comment: self.leading_comment(m.boundary, sig_start_tok),
                })
            }
            None => Scope::Block { keeps_member: false },
        }
    }

    fn finish(&self, pending: PendingMethod, close: &Token) -> MethodInfo {
        let end = close.span.end;
        MethodInfo {
            signature_key: pending.signature_key,
            name: pending.name,
            body_text: self.src[pending.start..end].to_string(),
            leading_comment: pending.leading_comment,
            span: (self.lines.line_of(pending.start), self.lines.line_of(end - 1)),
        }
    }

    fn text(&self, j: usize) -> &'a str {
        self.toks[j].text(self.src)
    }

    fn is_word(&self, j: usize, w: &str) -> bool {
        self.toks[j].kind == TokenKind::Ident && self.text(j) == w
    }

    fn is_punct(&self, j: usize, c: char) -> bool {
        self.toks[j].is_punct(c)
    }

    /// Index (into `member`) just past the annotations starting at `k`.
    fn skip_annotations(&self, member: &[usize], mut k: usize) -> usize {
        while k + 1 < member.len()
            && self.is_punct(member[k], '@')
            && self.toks[member[k + 1]].kind == TokenKind::Ident
            && !self.is_word(member[k + 1], "interface")
        {
            k += 2;
            while k + 1 < member.len()
                && self.is_punct(member[k], '.')
                && self.toks[member[k + 1]].kind == TokenKind::Ident
            {
                k += 2;
            }
            if k < member.len() && self.is_punct(member[k], '(') {
                k = self.skip_group(member, k, '(', ')');
            }
        }
        k
    }

    /// Index just past the group opened at `member[k]`.
    fn skip_group(&self, member: &[usize], k: usize, open: char, close: char) -> usize {
        let mut depth = 0usize;
        for (off, &j) in member[k..].iter().enumerate() {
            if self.is_punct(j, open) {
                depth += 1;
            } else if self.is_punct(j, close) {
                depth -= 1;
                if depth == 0 {
                    return k + off + 1;
                }
            }
        }
        member.len()
    }

    /// Visits member tokens outside parentheses, with annotations skipped.
    fn top_level(&self, member: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut k = 0;
        while k < member.len() {
            let after = self.skip_annotations(member, k);
            if after != k {
                k = after;
                continue;
            }
            if self.is_punct(member[k], '(') {
                k = self.skip_group(member, k, '(', ')');
                continue;
            }
            out.push(k);
            k += 1;
        }
        out
    }

    fn type_declaration_name(&self, member: &[usize]) -> Option<&'a str> {
        let top = self.top_level(member);
        for (n, &k) in top.iter().enumerate() {
            let j = member[k];
            if !TYPE_KEYWORDS.iter().any(|kw| self.is_word(j, kw)) {
                continue;
            }
            if n > 0 && self.is_punct(member[top[n - 1]], '.') {
                continue;
            }
            let next = *member.get(k + 1)?;
            if self.toks[next].kind == TokenKind::Ident {
                return Some(self.text(next));
            }
        }
        None
    }

    fn has_top_level_assign(&self, member: &[usize]) -> bool {
        self.top_level(member)
            .into_iter()
            .any(|k| self.is_punct(member[k], '='))
    }

    /// Parses `modifiers type-params return-type name(params) [dims] [throws ...]`.
    fn method_signature(&self, member: &[usize]) -> Option<(&'a str, Vec<String>)> {
        let start = self.skip_annotations(member, 0);
        let open = (start..member.len()).find(|&k| self.is_punct(member[k], '('))?;
        if open == start {
            return None;
        }
        let name_tok = member[open - 1];
        if self.toks[name_tok].kind != TokenKind::Ident {
            return None;
        }
        let name = self.text(name_tok);
        if NOT_A_METHOD_NAME.contains(&name) || TYPE_KEYWORDS.contains(&name) {
            return None;
        }
        let mut k = start;
        while k < open - 1 {
            let j = member[k];
            let ok = match self.toks[j].kind {
                TokenKind::Ident => !NOT_A_DECLARATION_WORD.contains(&self.text(j)),
                TokenKind::Punct(c) => matches!(c, '.' | '<' | '>' | ',' | '?' | '[' | ']' | '&'),
                _ => false,
            };
            if self.is_punct(j, '@') {
                let after = self.skip_annotations(member, k);
                if after == k {
                    return None;
                }
                k = after;
                continue;
            }
            if !ok {
                return None;
            }
            k += 1;
        }
        let close = self.skip_group(member, open, '(', ')');
        if close > member.len() || !self.is_punct(member[close - 1], ')') {
            return None;
        }
        let mut k = close;
        while k + 1 < member.len() && self.is_punct(member[k], '[') && self.is_punct(member[k + 1], ']') {
            k += 2;
        }
        if k < member.len() {
            if !self.is_word(member[k], "throws") {
                return None;
            }
            for &j in &member[k + 1..] {
                let ok = match self.toks[j].kind {
                    TokenKind::Ident => true,
                    TokenKind::Punct(c) => matches!(c, '.' | '<' | '>' | ',' | '?' | '@'),
                    _ => false,
                };
                if !ok {
                    return None;
                }
            }
        }
        let params = self.parameter_types(&member[open + 1..close - 1]);
        Some((name, params))
    }

    fn parameter_types(&self, inner: &[usize]) -> Vec<String> {
        let mut params = Vec::new();
        let mut depth = 0i32;
        let mut cur: Vec<usize> = Vec::new();
        for &j in inner {
            match self.toks[j].kind {
                TokenKind::Punct('(' | '<' | '[') => depth += 1,
                TokenKind::Punct(')' | '>' | ']') => depth -= 1,
                TokenKind::Punct(',') if depth == 0 => {
                    params.extend(self.parameter_type(&cur));
                    cur.clear();
                    continue;
                }
                _ => {}
            }
            cur.push(j);
        }
        params.extend(self.parameter_type(&cur));
        params
    }

    /// Simple type name of one formal parameter; `None` for receiver
    /// parameters and empty input.
    fn parameter_type(&self, param: &[usize]) -> Option<String> {
        let start = self.skip_annotations(param, 0);
        let mut toks: Vec<usize> = param[start..]
            .iter()
            .copied()
            .filter(|&j| !self.is_word(j, "final"))
            .collect();
        let mut trailing_dims = 0;
        while toks.len() >= 2
            && self.is_punct(toks[toks.len() - 1], ']')
            && self.is_punct(toks[toks.len() - 2], '[')
        {
            toks.truncate(toks.len() - 2);
            trailing_dims += 1;
        }
        let name = toks.pop()?;
        if self.is_word(name, "this") || toks.is_empty() {
            return None;
        }
        let mut text = String::new();
        let mut angle = 0usize;
        let mut k = 0;
        while k < toks.len() {
            let j = toks[k];
            if self.is_punct(j, '@') {
                let after = self.skip_annotations(&toks, k);
                if after > k {
                    k = after;
                    continue;
                }
            }
            if self.is_punct(j, '<') {
                angle += 1;
            } else if self.is_punct(j, '>') {
                angle = angle.saturating_sub(1);
            } else if angle == 0 {
                text.push_str(self.text(j));
            }
            k += 1;
        }
        let mut suffix = String::new();
        let mut base = text.as_str();
        loop {
            if let Some(rest) = base.strip_suffix("...") {
                suffix.insert_str(0, "...");
                base = rest;
            } else if let Some(rest) = base.strip_suffix("[]") {
                suffix.insert_str(0, "[]");
                base = rest;
            } else {
                break;
            }
        }
        let simple = base.rsplit('.').next().unwrap_or(base);
        let mut out = format!("{simple}{suffix}");
        for _ in 0..trailing_dims {
            out.push_str("[]");
        }
        Some(out)
    }

    /// Comment block directly above the signature. Only annotations may sit
    /// between the comment and the signature, and the comment must start on
    /// its own line.
    fn leading_comment(&self, boundary: usize, sig_start: usize) -> String {
        let mut depth = 0usize;
        let mut last = None;
        for j in boundary..sig_start {
            let tok = &self.toks[j];
            match tok.kind {
                TokenKind::Punct('(') => depth += 1,
                TokenKind::Punct(')') => depth = depth.saturating_sub(1),
                k if k.is_comment() && depth == 0 => last = Some(j),
                _ => {}
            }
        }
        let Some(last) = last else {
            return String::new();
        };
        // Extend over comments on the same line or on the line right above.
        let mut first = last;
        while first > boundary && self.toks[first - 1].kind.is_comment() {
            let prev = first - 1;
            let prev_end = self.lines.line_of(self.toks[prev].span.end - 1);
            let cur_start = self.lines.line_of(self.toks[first].span.start);
            let same_line = prev_end == cur_start;
            if !(same_line || (prev_end + 1 == cur_start && self.starts_own_line(prev))) {
                break;
            }
            first = prev;
        }
        if !self.starts_own_line(first) {
            return String::new();
        }
        self.src[self.toks[first].span.start..self.toks[last].span.end].to_string()
    }

    fn starts_own_line(&self, j: usize) -> bool {
        if j == 0 {
            return true;
        }
        let prev_end = self.toks[j - 1].span.end;
        self.lines.line_of(prev_end.saturating_sub(1)) < self.lines.line_of(self.toks[j].span.start)
    }
}
