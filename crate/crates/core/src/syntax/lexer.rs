//! Lexer for the supported Python subset.
//!
//! Produces a flat token stream with explicit `Newline`, `Indent` and `Dedent`
//! tokens. Comments, blank lines and intra-line whitespace are dropped, so two
//! sources that differ only in layout lex to the same token texts.

use std::fmt;
use std::ops::{Deref, Range};

use serde::{Deserialize, Serialize};

use super::LexError;

pub const NEWLINE_TEXT: &str = "<NL>";
pub const INDENT_TEXT: &str = "<INDENT>";
pub const DEDENT_TEXT: &str = "<DEDENT>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Operator,
    NumberLiteral,
    StringLiteral,
    Punctuation,
    Newline,
    Indent,
    Dedent,
}

impl TokenKind {
    /// Newline, Indent and Dedent carry layout only and may be zero-width.
    pub fn is_structural(self) -> bool {
        matches!(self, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent)
    }
}

/// Byte range `[start, end)` in the source the token was lexed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    pub index: usize,
    pub span: Span,
}

impl Token {
    pub fn is(&self, kind: TokenKind, text: &str) -> bool {
        self.kind == kind && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.is(TokenKind::Punctuation, text)
    }

    pub fn is_keyword(&self, text: &str) -> bool {
        self.is(TokenKind::Keyword, text)
    }

    /// True if an expression can end with this token, which is what separates
    /// binary from unary uses of `-`, `+` and `*`.
    pub fn ends_operand(&self) -> bool {
        match self.kind {
            TokenKind::Identifier | TokenKind::NumberLiteral | TokenKind::StringLiteral => true,
            TokenKind::Punctuation => matches!(self.text.as_str(), ")" | "]" | "}"),
            TokenKind::Keyword => matches!(self.text.as_str(), "True" | "False" | "None"),
            _ => false,
        }
    }
}

/// Ordered token sequence whose indices are contiguous from zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    tokens: Vec<Token>,
}

impl TokenStream {
    /// Builds a stream and renumbers token indices contiguously.
    pub fn from_tokens(mut tokens: Vec<Token>) -> Self {
        for (i, t) in tokens.iter_mut().enumerate() {
            t.index = i;
        }
        TokenStream { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<Token> {
        self.tokens
    }

    pub fn texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    /// Sub-stream over `range`, renumbered from zero.
    pub fn slice(&self, range: Range<usize>) -> TokenStream {
        TokenStream::from_tokens(self.tokens[range].to_vec())
    }

    pub fn same_text(&self, other: &TokenStream) -> bool {
        self.len() == other.len()
            && self.iter().zip(other.iter()).all(|(a, b)| a.text == b.text)
    }

    /// Canonical source rendering: one logical line per `Newline`, four spaces
    /// per indentation level, single spaces between tokens except around
    /// brackets, dots and commas.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut depth = 0usize;
        let mut at_line_start = true;
        let mut prev: Option<&Token> = None;
        for tok in &self.tokens {
            match tok.kind {
                TokenKind::Indent => depth += 1,
                TokenKind::Dedent => depth = depth.saturating_sub(1),
                TokenKind::Newline => {
                    out.push('\n');
                    at_line_start = true;
                    prev = None;
                }
                _ => {
                    if at_line_start {
                        out.push_str(&"    ".repeat(depth));
                        at_line_start = false;
                    } else if let Some(p) = prev {
                        if needs_space(p, tok) {
                            out.push(' ');
                        }
                    }
                    out.push_str(&tok.text);
                    prev = Some(tok);
                }
            }
        }
        out
    }
}

fn needs_space(prev: &Token, next: &Token) -> bool {
    let p = prev.text.as_str();
    let n = next.text.as_str();
    if prev.kind == TokenKind::Punctuation && matches!(p, "(" | "[" | "{" | ".") {
        return false;
    }
    if next.kind == TokenKind::Punctuation && matches!(n, ")" | "]" | "}" | "," | ":" | "." | ";") {
        return false;
    }
    if next.kind == TokenKind::Punctuation && matches!(n, "(" | "[") && prev.ends_operand() {
        return false;
    }
    true
}

impl Deref for TokenStream {
    type Target = [Token];

    fn deref(&self) -> &[Token] {
        &self.tokens
    }
}

impl fmt::Display for TokenStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

// Longest first so that maximal munch picks `**=` over `**` over `*`.
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "**", "//", "==", "!=", "<=", ">=", "<<", ">>", "->", ":=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "<", ">", "&",
    "|", "^", "~", "@",
];

const PUNCTUATION: &[char] = &['(', ')', '[', ']', '{', '}', ',', ':', '.', ';', '='];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

/// Token kind a lone operator word receives when lexed; used when rewriting an
/// operator token in place.
pub fn operator_kind(text: &str) -> TokenKind {
    if is_keyword(text) {
        TokenKind::Keyword
    } else {
        TokenKind::Operator
    }
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    out: Vec<Token>,
    indents: Vec<usize>,
    bracket_depth: usize,
    line_has_tokens: bool,
}

/// Lexes `source` into a token stream.
pub fn lex(source: &str) -> Result<TokenStream, LexError> {
    let mut lx = Lexer {
        src: source,
        bytes: source.as_bytes(),
        pos: 0,
        out: Vec::new(),
        indents: vec![0],
        bracket_depth: 0,
        line_has_tokens: false,
    };
    lx.run()?;
    Ok(TokenStream::from_tokens(fuse_two_word_operators(lx.out)))
}

impl<'a> Lexer<'a> {
    fn push(&mut self, kind: TokenKind, start: usize, end: usize) {
        let text = match kind {
            TokenKind::Newline => NEWLINE_TEXT.to_string(),
            TokenKind::Indent => INDENT_TEXT.to_string(),
            TokenKind::Dedent => DEDENT_TEXT.to_string(),
            _ => self.src[start..end].to_string(),
        };
        let index = self.out.len();
        self.out.push(Token { text, kind, index, span: Span::new(start, end) });
        if !kind.is_structural() {
            self.line_has_tokens = true;
        }
    }

    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn run(&mut self) -> Result<(), LexError> {
        let mut at_line_start = true;
        while self.pos < self.bytes.len() {
            if at_line_start && self.bracket_depth == 0 {
                if self.handle_indentation()? {
                    continue;
                }
                at_line_start = false;
            }
            let c = self.bytes[self.pos];
            match c {
                b'\n' => {
                    if self.bracket_depth == 0 {
                        if self.line_has_tokens {
                            self.push(TokenKind::Newline, self.pos, self.pos + 1);
                            self.line_has_tokens = false;
                        }
                        at_line_start = true;
                    }
                    self.pos += 1;
                }
                b' ' | b'\t' | b'\r' | b'\x0c' => self.pos += 1,
                b'#' => self.skip_comment(),
                b'\\' => {
                    // explicit line continuation
                    let next = self.peek(1);
                    if next == Some(b'\n') {
                        self.pos += 2;
                    } else if next == Some(b'\r') && self.peek(2) == Some(b'\n') {
                        self.pos += 3;
                    } else {
                        return Err(LexError::new(self.pos, "stray backslash"));
                    }
                }
                b'"' | b'\'' => self.lex_string(self.pos)?,
                b'0'..=b'9' => self.lex_number(),
                b'.' if matches!(self.peek(1), Some(b'0'..=b'9')) => self.lex_number(),
                c if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => self.lex_word()?,
                _ => self.lex_symbol()?,
            }
        }
        if self.line_has_tokens {
            self.push(TokenKind::Newline, self.pos, self.pos);
            self.line_has_tokens = false;
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(TokenKind::Dedent, self.pos, self.pos);
        }
        Ok(())
    }

    /// Measures the indentation of the line starting at `pos`. Returns true if
    /// the line is blank or comment-only (consumed without tokens).
    fn handle_indentation(&mut self) -> Result<bool, LexError> {
        let mut col = 0usize;
        let mut p = self.pos;
        while p < self.bytes.len() {
            match self.bytes[p] {
                b' ' => col += 1,
                b'\t' => col = (col / 8 + 1) * 8,
                b'\x0c' => col = 0,
                _ => break,
            }
            p += 1;
        }
        match self.bytes.get(p) {
            None => {
                self.pos = p;
                return Ok(true);
            }
            Some(b'\n') => {
                self.pos = p + 1;
                return Ok(true);
            }
            Some(b'\r') if self.bytes.get(p + 1) == Some(&b'\n') => {
                self.pos = p + 2;
                return Ok(true);
            }
            Some(b'#') => {
                self.pos = p;
                self.skip_comment();
                if self.pos < self.bytes.len() {
                    self.pos += 1;
                }
                return Ok(true);
            }
            _ => {}
        }
        let current = *self.indents.last().expect("indent stack never empty");
        if col > current {
            self.indents.push(col);
            self.push(TokenKind::Indent, p, p);
        } else if col < current {
            while *self.indents.last().expect("indent stack never empty") > col {
                self.indents.pop();
                self.push(TokenKind::Dedent, p, p);
            }
            if *self.indents.last().expect("indent stack never empty") != col {
                return Err(LexError::new(p, "unindent does not match any outer indentation level"));
            }
        }
        self.pos = p;
        Ok(false)
    }

    fn skip_comment(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
    }

    fn lex_word(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'_' || c.is_ascii_alphanumeric() || c >= 0x80 {
                self.pos += 1;
            } else {
                break;
            }
        }
        // string prefixes: r"", b'', f"", rb"" ...
        let word = &self.src[start..self.pos];
        if word.len() <= 2
            && word.chars().all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
            && matches!(self.peek(0), Some(b'"') | Some(b'\''))
        {
            return self.lex_string(start);
        }
        // keep char boundaries valid for non-ASCII identifiers
        while !self.src.is_char_boundary(self.pos) {
            self.pos += 1;
        }
        let word = &self.src[start..self.pos];
        let kind = if is_keyword(word) { TokenKind::Keyword } else { TokenKind::Identifier };
        self.push(kind, start, self.pos);
        Ok(())
    }

    fn lex_number(&mut self) {
        let start = self.pos;
        let b = self.bytes;
        if b[self.pos] == b'0' && matches!(self.peek(1), Some(b'x' | b'X' | b'o' | b'O' | b'b' | b'B')) {
            self.pos += 2;
            while self.pos < b.len() && (b[self.pos].is_ascii_hexdigit() || b[self.pos] == b'_') {
                self.pos += 1;
            }
        } else {
            let digits = |lx: &mut Self| {
                while lx.pos < b.len() && (b[lx.pos].is_ascii_digit() || b[lx.pos] == b'_') {
                    lx.pos += 1;
                }
            };
            digits(self);
            if self.pos < b.len() && b[self.pos] == b'.' {
                self.pos += 1;
                digits(self);
            }
            if self.pos < b.len() && matches!(b[self.pos], b'e' | b'E') {
                let mut p = self.pos + 1;
                if p < b.len() && matches!(b[p], b'+' | b'-') {
                    p += 1;
                }
                if p < b.len() && b[p].is_ascii_digit() {
                    self.pos = p;
                    digits(self);
                }
            }
            if self.pos < b.len() && matches!(b[self.pos], b'j' | b'J') {
                self.pos += 1;
            }
        }
        self.push(TokenKind::NumberLiteral, start, self.pos);
    }

    fn lex_string(&mut self, start: usize) -> Result<(), LexError> {
        let quote = self.bytes[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek(0) else {
                return Err(LexError::new(start, "unterminated string literal"));
            };
            match c {
                b'\\' => self.pos += 2,
                b'\n' if !triple => {
                    return Err(LexError::new(start, "unterminated string literal"));
                }
                c if c == quote => {
                    if !triple {
                        self.pos += 1;
                        break;
                    }
                    if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                        self.pos += 3;
                        break;
                    }
                    self.pos += 1;
                }
                _ => self.pos += 1,
            }
        }
        if self.pos > self.bytes.len() {
            return Err(LexError::new(start, "unterminated string literal"));
        }
        self.push(TokenKind::StringLiteral, start, self.pos);
        Ok(())
    }

    fn lex_symbol(&mut self) -> Result<(), LexError> {
        let start = self.pos;
        let rest = &self.src[start..];
        for op in OPERATORS {
            if rest.starts_with(op) {
                self.pos += op.len();
                let kind = if *op == "..." { TokenKind::Punctuation } else { TokenKind::Operator };
                self.push(kind, start, self.pos);
                return Ok(());
            }
        }
        let c = rest.chars().next().expect("non-empty remainder");
        if PUNCTUATION.contains(&c) {
            match c {
                '(' | '[' | '{' => self.bracket_depth += 1,
                ')' | ']' | '}' => self.bracket_depth = self.bracket_depth.saturating_sub(1),
                _ => {}
            }
            self.pos += 1;
            self.push(TokenKind::Punctuation, start, self.pos);
            return Ok(());
        }
        Err(LexError::new(start, format!("unexpected character {c:?}")))
    }
}

/// Merges `is not` and `not in` into single operator tokens.
fn fuse_two_word_operators(tokens: Vec<Token>) -> Vec<Token> {
    let mut out: Vec<Token> = Vec::with_capacity(tokens.len());
    let mut iter = tokens.into_iter().peekable();
    while let Some(tok) = iter.next() {
        let fused = match iter.peek() {
            Some(next) if tok.is_keyword("is") && next.is_keyword("not") => Some("is not"),
            Some(next) if tok.is_keyword("not") && next.is_keyword("in") => Some("not in"),
            _ => None,
        };
        match fused {
            Some(text) => {
                let next = iter.next().expect("peeked");
                out.push(Token {
                    text: text.to_string(),
                    kind: TokenKind::Operator,
                    index: 0,
                    span: Span::new(tok.span.start, next.span.end),
                });
            }
            None => out.push(tok),
        }
    }
    out
}
