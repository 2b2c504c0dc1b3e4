//! Lexing, structural analysis and candidate extraction for the supported
//! Python subset.

mod analyze;
mod candidates;
mod lexer;
mod units;

use thiserror::Error;

pub use analyze::{analyze, BinOp, Call, CallArg, Scope, ScopeId, SyntacticFacts, VarDef, VarUse};
pub use candidates::{
    extract_candidates, is_eligible, operator_set, vocab_index, BugKind, CandidateMap, OperatorSet,
    BINOP_VOCAB,
};
pub use lexer::{
    is_keyword, lex, operator_kind, Span, Token, TokenKind, TokenStream, DEDENT_TEXT, INDENT_TEXT,
    NEWLINE_TEXT,
};
pub use units::{function_units, FunctionUnit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lex error at byte {offset}: {message}")]
pub struct LexError {
    pub offset: usize,
    pub message: String,
}

impl LexError {
    pub fn new(offset: usize, message: impl Into<String>) -> Self {
        LexError { offset, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzeError {
    #[error("unbalanced bracket at token {index}")]
    Unbalanced { index: usize },
    #[error("unsupported construct ({construct}) at token {index}")]
    Unsupported { index: usize, construct: &'static str },
}

/// Lexes, analyzes and extracts candidates in one go.
pub fn candidates_for(tokens: &TokenStream, kind: BugKind) -> Result<CandidateMap, AnalyzeError> {
    let facts = analyze(tokens)?;
    Ok(extract_candidates(&facts, tokens, kind))
}
