//! Text side of the pipeline: vocabulary and subword tokenizer, entity span
//! alignment, fixed-length context windows, and the JSONL corpus format.

mod corpus;
mod encode;
mod error;
mod task;
mod tokenize;
mod vocab;

pub use corpus::{class_counts, ingest_jsonl, parse_jsonl, write_jsonl, AnnotationDocument, EntityMention, IngestReport};
pub use encode::{
    context_window, encode, encode_corpus, encode_tokens, EncodeConfig, EncodeStats, EncodedExample, Provenance,
    Validation, DEFAULT_MAX_LEN,
};
pub use error::{Error, Result};
pub use task::{TaskName, TaskSpec};
pub use tokenize::{align_span, decode, tokenize, TokenizedText, MAX_WORD_CHARS};
pub use vocab::{Vocabulary, CLS, PAD, SEP, UNK};
