//! Token-level structural analysis: variable definitions and uses per function
//! scope, binary operator occurrences with operand extents, and call sites with
//! argument extents.
//!
//! This is deliberately not a parser. Statements are recognised by their
//! leading keyword and by depth-0 `=` / `:` / `,` positions, which is enough
//! for the supported subset.

use std::ops::Range;

use super::lexer::{Token, TokenKind};
use super::AnalyzeError;

pub type ScopeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDef {
    pub name: String,
    pub index: usize,
    pub scope: ScopeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarUse {
    pub name: String,
    pub index: usize,
    pub scope: ScopeId,
    pub in_function_signature: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinOp {
    pub index: usize,
    pub op: String,
    /// Token-index range of the left operand's primary expression.
    pub left: Range<usize>,
    pub right: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallArg {
    pub range: Range<usize>,
    /// Keyworded (`k=v`) and variable-length (`*a`, `**kw`) arguments.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Call {
    pub callee: Range<usize>,
    pub open_paren: usize,
    pub args: Vec<CallArg>,
}

impl Call {
    pub fn handled_args(&self) -> impl Iterator<Item = &CallArg> {
        self.args.iter().filter(|a| !a.excluded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scope {
    pub parent: Option<ScopeId>,
    /// Index of the `def` keyword that opened the scope; `None` for the module.
    pub def_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SyntacticFacts {
    pub var_defs: Vec<VarDef>,
    pub var_uses: Vec<VarUse>,
    pub binops: Vec<BinOp>,
    pub calls: Vec<Call>,
    pub scopes: Vec<Scope>,
}

impl SyntacticFacts {
    pub fn defs_in_scope(&self, scope: ScopeId) -> impl Iterator<Item = &VarDef> {
        self.var_defs.iter().filter(move |d| d.scope == scope)
    }
}

/// Binary operators recorded by `analyze` (a superset of the wrong-binop
/// vocabulary).
const BINARY_OPERATORS: &[&str] = &[
    "+", "-", "*", "/", "%", "**", "//", "@", "<<", ">>", "&", "|", "^", "==", "!=", "<", "<=",
    ">", ">=", "is", "is not", "in", "not in", "and", "or",
];

const AUGMENTED: &[&str] = &["+=", "-=", "*=", "/=", "%=", "**=", "//=", "&=", "|=", "^=", "<<=", ">>=", "@="];

pub fn analyze(tokens: &[Token]) -> Result<SyntacticFacts, AnalyzeError> {
    let mut an = Analyzer::new(tokens)?;
    an.check_supported()?;
    an.walk_lines()?;
    an.collect_binops();
    an.collect_calls();
    let mut facts = an.facts;
    facts.var_defs.sort_by_key(|d| d.index);
    facts.var_uses.sort_by_key(|u| u.index);
    facts.var_defs.dedup_by_key(|d| d.index);
    facts.var_uses.dedup_by_key(|u| u.index);
    Ok(facts)
}

struct Analyzer<'a> {
    t: &'a [Token],
    /// For each bracket token, the index of its partner.
    partner: Vec<Option<usize>>,
    /// Bracket nesting depth *before* each token.
    depth: Vec<usize>,
    for_header_in: Vec<bool>,
    facts: SyntacticFacts,
}

fn is_open(t: &Token) -> bool {
    t.kind == TokenKind::Punctuation && matches!(t.text.as_str(), "(" | "[" | "{")
}

fn is_close(t: &Token) -> bool {
    t.kind == TokenKind::Punctuation && matches!(t.text.as_str(), ")" | "]" | "}")
}

fn closer_of(open: &str) -> &'static str {
    match open {
        "(" => ")",
        "[" => "]",
        _ => "}",
    }
}

impl<'a> Analyzer<'a> {
    fn new(t: &'a [Token]) -> Result<Self, AnalyzeError> {
        let mut partner = vec![None; t.len()];
        let mut depth = vec![0; t.len()];
        let mut stack: Vec<usize> = Vec::new();
        for (i, tok) in t.iter().enumerate() {
            depth[i] = stack.len();
            if is_open(tok) {
                stack.push(i);
            } else if is_close(tok) {
                let Some(o) = stack.pop() else {
                    return Err(AnalyzeError::Unbalanced { index: i });
                };
                if closer_of(&t[o].text) != tok.text {
                    return Err(AnalyzeError::Unbalanced { index: i });
                }
                partner[o] = Some(i);
                partner[i] = Some(o);
            } else if tok.kind == TokenKind::Newline && !stack.is_empty() {
                return Err(AnalyzeError::Unbalanced { index: stack[stack.len() - 1] });
            }
        }
        if let Some(&o) = stack.last() {
            return Err(AnalyzeError::Unbalanced { index: o });
        }
        Ok(Analyzer {
            t,
            partner,
            depth,
            for_header_in: vec![false; t.len()],
            facts: SyntacticFacts {
                scopes: vec![Scope { parent: None, def_index: None }],
                ..Default::default()
            },
        })
    }

    fn check_supported(&self) -> Result<(), AnalyzeError> {
        for (i, tok) in self.t.iter().enumerate() {
            let construct = match tok.kind {
                TokenKind::Keyword => match tok.text.as_str() {
                    "lambda" => Some("lambda"),
                    "global" | "nonlocal" => Some("global/nonlocal declaration"),
                    "async" | "await" => Some("async code"),
                    "class" => Some("nested class"),
                    "for" if self.depth[i] > 0 => Some("comprehension"),
                    _ => None,
                },
                TokenKind::Operator if tok.text == ":=" => Some("assignment expression"),
                _ => None,
            };
            if let Some(construct) = construct {
                return Err(AnalyzeError::Unsupported { index: i, construct });
            }
        }
        Ok(())
    }

    fn walk_lines(&mut self) -> Result<(), AnalyzeError> {
        let n = self.t.len();
        let mut indent = 0usize;
        // (scope, indentation level of its body)
        let mut stack: Vec<(ScopeId, usize)> = vec![(0, 0)];
        let mut i = 0;
        while i < n {
            match self.t[i].kind {
                TokenKind::Indent => {
                    indent += 1;
                    i += 1;
                    continue;
                }
                TokenKind::Dedent => {
                    indent = indent.saturating_sub(1);
                    while stack.len() > 1 && stack[stack.len() - 1].1 > indent {
                        stack.pop();
                    }
                    i += 1;
                    continue;
                }
                TokenKind::Newline => {
                    i += 1;
                    continue;
                }
                _ => {}
            }
            let end = (i..n).find(|&j| self.t[j].kind == TokenKind::Newline).unwrap_or(n);
            let scope = stack[stack.len() - 1].0;
            if let Some(body_scope) = self.line(i, end, scope)? {
                stack.push((body_scope, indent + 1));
            }
            i = end;
        }
        Ok(())
    }

    /// Processes one logical line. Returns the new scope if the line opens a
    /// function whose body is an indented block.
    fn line(&mut self, s: usize, e: usize, scope: ScopeId) -> Result<Option<ScopeId>, AnalyzeError> {
        let first = &self.t[s];
        if first.is(TokenKind::Operator, "@") {
            if (s..e).any(|j| self.t[j].is_punct("(")) {
                return Err(AnalyzeError::Unsupported { index: s, construct: "decorator with arguments" });
            }
            return Ok(None);
        }
        if first.kind != TokenKind::Keyword {
            self.simple_statements(s, e, scope);
            return Ok(None);
        }
        match first.text.as_str() {
            "def" => return self.def_line(s, e, scope),
            "if" | "elif" | "while" => {
                let colon = self.header_colon(s, e);
                self.expression(s + 1, colon, scope);
                self.simple_statements(colon + 1, e, scope);
            }
            "else" | "try" | "finally" => {
                let colon = self.header_colon(s, e);
                self.simple_statements(colon + 1, e, scope);
            }
            "for" => {
                let colon = self.header_colon(s, e);
                let in_pos = (s + 1..colon)
                    .find(|&j| self.depth[j] == self.depth[s] && self.t[j].is_keyword("in"))
                    .unwrap_or(colon);
                if in_pos < colon {
                    self.for_header_in[in_pos] = true;
                }
                self.target(s + 1, in_pos, scope);
                self.expression((in_pos + 1).min(colon), colon, scope);
                self.simple_statements(colon + 1, e, scope);
            }
            "with" => {
                let colon = self.header_colon(s, e);
                for (a, b) in self.split_depth0(s + 1, colon, ",") {
                    match (a..b).find(|&j| self.t[j].is_keyword("as") && self.depth[j] == self.depth[s]) {
                        Some(as_pos) => {
                            self.expression(a, as_pos, scope);
                            self.target(as_pos + 1, b, scope);
                        }
                        None => self.expression(a, b, scope),
                    }
                }
                self.simple_statements(colon + 1, e, scope);
            }
            "except" => {
                let colon = self.header_colon(s, e);
                match (s + 1..colon).find(|&j| self.t[j].is_keyword("as")) {
                    Some(as_pos) => {
                        self.expression(s + 1, as_pos, scope);
                        self.target(as_pos + 1, colon, scope);
                    }
                    None => self.expression(s + 1, colon, scope),
                }
                self.simple_statements(colon + 1, e, scope);
            }
            _ => self.simple_statements(s, e, scope),
        }
        Ok(None)
    }

    /// First depth-0 `:` of a block header, or `e` if absent.
    fn header_colon(&self, s: usize, e: usize) -> usize {
        let d = self.depth[s];
        (s..e).find(|&j| self.depth[j] == d && self.t[j].is_punct(":")).unwrap_or(e)
    }

    fn split_depth0(&self, s: usize, e: usize, sep: &str) -> Vec<(usize, usize)> {
        if s >= e {
            return Vec::new();
        }
        let d = self.depth[s];
        let mut parts = Vec::new();
        let mut a = s;
        for j in s..e {
            if self.depth[j] == d && self.t[j].is_punct(sep) {
                parts.push((a, j));
                a = j + 1;
            }
        }
        parts.push((a, e));
        parts.retain(|(a, b)| a < b);
        parts
    }

    fn def_line(&mut self, s: usize, e: usize, scope: ScopeId) -> Result<Option<ScopeId>, AnalyzeError> {
        let name_idx = s + 1;
        let open = s + 2;
        let ok = name_idx < e
            && self.t[name_idx].kind == TokenKind::Identifier
            && open < e
            && self.t[open].is_punct("(");
        if !ok {
            return Err(AnalyzeError::Unsupported { index: s, construct: "malformed function header" });
        }
        let close = self.partner[open].expect("balanced");
        self.facts.var_defs.push(VarDef { name: self.t[name_idx].text.clone(), index: name_idx, scope });
        let new_scope = self.facts.scopes.len();
        self.facts.scopes.push(Scope { parent: Some(scope), def_index: Some(s) });

        for (a, b) in self.split_depth0(open + 1, close, ",") {
            let mut j = a;
            while j < b && self.t[j].kind == TokenKind::Operator && matches!(self.t[j].text.as_str(), "*" | "**" | "/") {
                j += 1;
            }
            if j < b && self.t[j].kind == TokenKind::Identifier {
                self.facts.var_defs.push(VarDef { name: self.t[j].text.clone(), index: j, scope: new_scope });
                j += 1;
            }
            // annotation and default value belong to the enclosing scope
            self.signature_uses(j, b, scope);
        }
        let colon = (close + 1..e).find(|&j| self.depth[j] == self.depth[s] && self.t[j].is_punct(":")).unwrap_or(e);
        self.signature_uses(close + 1, colon, scope);
        if colon + 1 < e {
            self.simple_statements(colon + 1, e, new_scope);
            Ok(None)
        } else {
            Ok(Some(new_scope))
        }
    }

    fn signature_uses(&mut self, s: usize, e: usize, scope: ScopeId) {
        for j in s..e {
            if self.is_reference(j, e) {
                self.facts.var_uses.push(VarUse {
                    name: self.t[j].text.clone(),
                    index: j,
                    scope,
                    in_function_signature: true,
                });
            }
        }
    }

    fn simple_statements(&mut self, s: usize, e: usize, scope: ScopeId) {
        for (a, b) in self.split_depth0(s, e, ";") {
            self.simple_statement(a, b, scope);
        }
    }

    fn simple_statement(&mut self, s: usize, e: usize, scope: ScopeId) {
        let first = &self.t[s];
        if first.kind == TokenKind::Keyword {
            match first.text.as_str() {
                "pass" | "break" | "continue" | "import" | "from" => return,
                "return" | "del" | "assert" | "raise" | "yield" => {
                    self.expression(s + 1, e, scope);
                    return;
                }
                _ => {}
            }
        }
        let d = self.depth[s];
        if let Some(p) = (s..e).find(|&j| {
            self.depth[j] == d && self.t[j].kind == TokenKind::Operator && AUGMENTED.contains(&self.t[j].text.as_str())
        }) {
            self.expression(s, p, scope);
            self.expression(p + 1, e, scope);
            return;
        }
        let eqs: Vec<usize> = (s..e).filter(|&j| self.depth[j] == d && self.t[j].is_punct("=")).collect();
        let mut a = s;
        for &q in &eqs {
            let colon = (a..q).find(|&j| self.depth[j] == d && self.t[j].is_punct(":"));
            match colon {
                Some(c) => {
                    self.target(a, c, scope);
                    self.expression(c + 1, q, scope);
                }
                None => self.target(a, q, scope),
            }
            a = q + 1;
        }
        self.expression(a, e, scope);
    }

    /// Identifier at `j` that names a variable: not an attribute after `.`,
    /// not a keyword argument name.
    fn is_reference(&self, j: usize, e: usize) -> bool {
        let tok = &self.t[j];
        if tok.kind != TokenKind::Identifier {
            return false;
        }
        if j > 0 && self.t[j - 1].is_punct(".") {
            return false;
        }
        if j + 1 < e && self.t[j + 1].is_punct("=") && self.depth[j] > 0 {
            return false;
        }
        true
    }

    fn expression(&mut self, s: usize, e: usize, scope: ScopeId) {
        for j in s..e {
            if self.is_reference(j, e) {
                self.facts.var_uses.push(VarUse {
                    name: self.t[j].text.clone(),
                    index: j,
                    scope,
                    in_function_signature: false,
                });
            }
        }
    }

    fn target(&mut self, s: usize, e: usize, scope: ScopeId) {
        // `grouping[k]` is true if the k-th open bracket is a tuple/list
        // display (binds names) rather than a subscript or call.
        let mut grouping: Vec<bool> = Vec::new();
        for j in s..e {
            let tok = &self.t[j];
            if is_open(tok) {
                let after_operand = j > s && self.t[j - 1].ends_operand();
                let parent = grouping.last().copied().unwrap_or(true);
                grouping.push(parent && !after_operand);
                continue;
            }
            if is_close(tok) {
                grouping.pop();
                continue;
            }
            if !self.is_reference(j, e) {
                continue;
            }
            let binds = grouping.last().copied().unwrap_or(true)
                && (j + 1 == e || {
                    let next = &self.t[j + 1];
                    next.is_punct(",") || next.is_punct(")") || next.is_punct("]")
                });
            if binds {
                self.facts.var_defs.push(VarDef { name: tok.text.clone(), index: j, scope });
            } else {
                self.facts.var_uses.push(VarUse {
                    name: tok.text.clone(),
                    index: j,
                    scope,
                    in_function_signature: false,
                });
            }
        }
    }

    /// Start of the primary expression (atom plus trailers) ending at `end`.
    fn primary_start(&self, end: usize) -> usize {
        let mut j = end;
        loop {
            if is_close(&self.t[j]) {
                j = self.partner[j].expect("balanced");
            }
            if j == 0 {
                return 0;
            }
            let prev = &self.t[j - 1];
            if is_open(&self.t[j]) && !self.t[j].is_punct("{") && prev.ends_operand() {
                j -= 1;
                continue;
            }
            if self.t[j].kind == TokenKind::Identifier && prev.is_punct(".") && j >= 2 {
                j -= 2;
                continue;
            }
            return j;
        }
    }

    /// End (exclusive) of the unary-prefixed primary expression starting at `start`.
    fn primary_end(&self, start: usize) -> usize {
        let n = self.t.len();
        let mut j = start;
        while j < n
            && ((self.t[j].kind == TokenKind::Operator && matches!(self.t[j].text.as_str(), "-" | "+" | "~"))
                || self.t[j].is_keyword("not"))
        {
            j += 1;
        }
        if j >= n {
            return n;
        }
        j = if is_open(&self.t[j]) { self.partner[j].expect("balanced") + 1 } else { j + 1 };
        while j < n {
            if self.t[j].is_punct("(") || self.t[j].is_punct("[") {
                j = self.partner[j].expect("balanced") + 1;
            } else if self.t[j].is_punct(".") && j + 1 < n && self.t[j + 1].kind == TokenKind::Identifier {
                j += 2;
            } else {
                break;
            }
        }
        j
    }

    fn collect_binops(&mut self) {
        for i in 1..self.t.len() {
            let tok = &self.t[i];
            if !matches!(tok.kind, TokenKind::Operator | TokenKind::Keyword) {
                continue;
            }
            if !BINARY_OPERATORS.contains(&tok.text.as_str()) || self.for_header_in[i] {
                continue;
            }
            if !self.t[i - 1].ends_operand() || i + 1 >= self.t.len() || self.t[i + 1].kind.is_structural() {
                continue;
            }
            let left = self.primary_start(i - 1)..i;
            let right = i + 1..self.primary_end(i + 1);
            self.facts.binops.push(BinOp { index: i, op: tok.text.clone(), left, right });
        }
    }

    fn collect_calls(&mut self) {
        for i in 1..self.t.len() {
            if !self.t[i].is_punct("(") {
                continue;
            }
            let prev = &self.t[i - 1];
            if !prev.ends_operand() || prev.kind == TokenKind::Keyword {
                continue;
            }
            if i >= 2 && (self.t[i - 2].is_keyword("def") || self.t[i - 2].is_keyword("class")) {
                continue;
            }
            let close = self.partner[i].expect("balanced");
            let callee = self.primary_start(i - 1)..i;
            let args = self
                .split_depth0(i + 1, close, ",")
                .into_iter()
                .map(|(a, b)| {
                    let head = &self.t[a];
                    let starred = head.kind == TokenKind::Operator && matches!(head.text.as_str(), "*" | "**");
                    let keyword = head.kind == TokenKind::Identifier && a + 1 < b && self.t[a + 1].is_punct("=");
                    CallArg { range: a..b, excluded: starred || keyword }
                })
                .collect();
            self.facts.calls.push(Call { callee, open_paren: i, args });
        }
    }
}
