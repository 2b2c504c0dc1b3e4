//! Splits a file's token stream into function units.
//!
//! Only outermost functions become units; functions nested in other functions
//! stay inside their parent's unit. Functions defined in class bodies are
//! units qualified by the class name.

use super::lexer::{Token, TokenKind, TokenStream};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionUnit {
    pub name: String,
    /// Dotted path of enclosing classes plus the function name.
    pub qualname: String,
    /// Tokens from `def` through the end of the body, indices renumbered from
    /// zero. Spans still refer to the original file.
    pub tokens: TokenStream,
    /// Set when a decorator with arguments precedes the definition.
    pub decorated_with_args: bool,
}

pub fn function_units(file: &TokenStream) -> Vec<FunctionUnit> {
    let t: &[Token] = file;
    let mut units = Vec::new();
    // (class name, body indentation level)
    let mut classes: Vec<(String, usize)> = Vec::new();
    let mut indent = 0usize;
    let mut i = 0;
    while i < t.len() {
        match t[i].kind {
            TokenKind::Indent => {
                indent += 1;
                i += 1;
                continue;
            }
            TokenKind::Dedent => {
                indent = indent.saturating_sub(1);
                while classes.last().is_some_and(|c| c.1 > indent) {
                    classes.pop();
                }
                i += 1;
                continue;
            }
            _ => {}
        }
        let line_start = i == 0 || t[i - 1].kind.is_structural();
        if line_start && t[i].is_keyword("class") && i + 1 < t.len() {
            classes.push((t[i + 1].text.clone(), indent + 1));
        }
        if line_start && t[i].is_keyword("def") && i + 1 < t.len() && t[i + 1].kind == TokenKind::Identifier {
            let end = unit_end(t, i);
            let name = t[i + 1].text.clone();
            let mut qual: Vec<&str> = classes.iter().map(|c| c.0.as_str()).collect();
            qual.push(&name);
            let qualname = qual.join(".");
            units.push(FunctionUnit {
                qualname,
                decorated_with_args: decorator_args(t, i),
                name,
                tokens: file.slice(i..end),
            });
            // the body's Indent/Dedent pair is inside the unit, so skipping
            // it leaves `indent` unchanged
            i = end;
            continue;
        }
        i += 1;
    }
    units
}

/// Exclusive end of the function starting at the `def` token `start`.
fn unit_end(t: &[Token], start: usize) -> usize {
    let Some(nl) = (start..t.len()).find(|&j| t[j].kind == TokenKind::Newline) else {
        return t.len();
    };
    if nl + 1 >= t.len() || t[nl + 1].kind != TokenKind::Indent {
        return nl + 1;
    }
    let mut depth = 0isize;
    for (j, tok) in t.iter().enumerate().skip(nl + 1) {
        match tok.kind {
            TokenKind::Indent => depth += 1,
            TokenKind::Dedent => {
                depth -= 1;
                if depth == 0 {
                    return j + 1;
                }
            }
            _ => {}
        }
    }
    t.len()
}

fn decorator_args(t: &[Token], def_idx: usize) -> bool {
    // walk back over preceding decorator lines
    let mut j = def_idx;
    let mut found = false;
    while j > 0 && t[j - 1].kind == TokenKind::Newline {
        let line_end = j - 1;
        let mut s = line_end;
        while s > 0 && !t[s - 1].kind.is_structural() {
            s -= 1;
        }
        if !t[s].is(TokenKind::Operator, "@") {
            break;
        }
        if t[s..line_end].iter().any(|x| x.is_punct("(")) {
            found = true;
        }
        j = s;
    }
    found
}
