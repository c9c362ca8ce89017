//! Tokenization, span algebra, the BIO codec and the on-disk dataset formats
//! (CoNLL NER, SQuAD-style MRC JSON, calibration-record JSONL).

mod bio;
mod conll;
mod mrc;
mod pbr;
mod span;
mod tokenize;

pub use bio::{emit_bio, repair_bio, spans_from_bio, BioTag};
pub use conll::{emit_conll, parse_conll, LabeledSentence};
pub use mrc::{emit_mrc_json, parse_mrc_json, MrcAnswer, MrcRecord};
pub use pbr::{pbr_line, read_pbr_jsonl, write_pbr_jsonl, CalibrationExample, PAD_TOKEN};
pub use span::Span;
pub use tokenize::{tokenize, TokenSeq};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("token {index} is empty")]
    EmptyToken { index: usize },
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("line {line}: unknown tag `{tag}`")]
    UnknownTagAt { line: usize, tag: String },
    #[error("line {line}: expected `token tag`, got `{content}`")]
    MalformedLine { line: usize, content: String },
    #[error("{tokens} tokens but {labels} labels")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("span [{start},{end}) outside sequence of length {len}")]
    SpanOutOfRange { start: usize, end: usize, len: usize },
    #[error("overlapping spans {first} and {second}")]
    OverlappingSpans { first: String, second: String },
    #[error("record {id}: answer_start {answer_start} is not aligned to a token boundary")]
    MisalignedAnswer { id: String, answer_start: usize },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}
