//! Structured text prompts: parameterized-trajectory and spatial-constraint
//! templates, plus the character-level tokenizer feeding the text encoder.
//!
//! Grammar (whitespace is allowed between any two tokens):
//!
//! ```text
//! trajectory := "{" "type" ":" TAG "," "params" ":" "{" [entry ("," entry)*] "}" "}"
//! entry      := KEY ":" value
//! value      := NUMBER | "[" NUMBER "," NUMBER "]" | "[" NUMBER "]" | WORD
//! NUMBER     := ["-" | "+"] DIGIT+ ["." DIGIT+]
//!
//! spatial    := "A person walks from" pair "to" pair "." [avoid]
//! avoid      := "Avoiding" INT ("obstacles" | "obstacle") "at" triple ("," triple)*
//!               "," "where r is the safety radius in meters."
//! pair       := "(" NUMBER "," NUMBER ")"
//! triple     := "(" NUMBER "," NUMBER "," NUMBER ")"
//! ```
//!
//! Template `(x, y)` coordinates are ground-plane `(x, z)`.

mod cursor;
mod spatial;
mod tokenizer;
mod trajectory;

pub use spatial::{parse_spatial, serialize_spatial, SpatialAst};
pub use tokenizer::{detokenize, tokenize, TokenId, TokenStream, Vocab, MAX_TOKENS};
pub use trajectory::{parse_trajectory, serialize_trajectory, ParamValue, TemplateMode, TrajectoryAst};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown curve type `{0}`")]
    UnknownCurveType(String),
    #[error("parameter schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("malformed number `{text}` at byte {pos}")]
    Number { pos: usize, text: String },
    #[error("declared {declared} obstacles but listed {listed}")]
    CountMismatch { declared: usize, listed: usize },
    #[error("character {ch:?} at byte {pos} is not in the vocabulary")]
    UnknownCharacter { pos: usize, ch: char },
    #[error("prompt needs {0} tokens (max {MAX_TOKENS})")]
    TooLong(usize),
    #[error("token id {0} is outside the vocabulary")]
    BadTokenId(TokenId),
    #[error("parsed parameters do not describe a valid curve: {0}")]
    InvalidCurve(String),
}

/// A parsed prompt of any of the four categories.
#[derive(Debug, Clone, PartialEq)]
pub enum PromptAst {
    Description(String),
    EditInstruction(String),
    ParamTrajectory(TrajectoryAst),
    SpatialConstraint(SpatialAst),
}

impl std::fmt::Display for PromptAst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PromptAst::Description(s) | PromptAst::EditInstruction(s) => f.write_str(s),
            PromptAst::ParamTrajectory(t) => t.fmt(f),
            PromptAst::SpatialConstraint(s) => s.fmt(f),
        }
    }
}

/// Formats with exactly two decimals; negative zero prints as `0.00`.
pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Rounds to the value a two-decimal print would show.
pub fn round2(v: f64) -> f64 {
    fmt2(v).parse().expect("formatted float")
}
