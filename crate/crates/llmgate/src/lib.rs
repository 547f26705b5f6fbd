//! Client for chat-completion services: in-context classification prompts,
//! synthetic example generation and the human review step that gates it.

pub mod classify;
pub mod endpoint;
pub mod error;
pub mod generate;
pub mod prompt;
pub mod review;

#[cfg(feature = "mock")]
pub mod mock;

pub use classify::{classify_remote, resolve_labels, Classified, ResolvedLabels};
pub use endpoint::{
    extract_content, ChatClient, Completion, LlmEndpoint, RetryPolicy, CLASSIFY_TEMPERATURE, GENERATE_TEMPERATURE,
};
pub use error::{Error, Result};
pub use generate::{
    build_generation_prompt, dedup_candidates, parse_generated, read_candidates, render_generated_line, sha256_hex,
    write_candidates, GeneratorProvenance, ParsedBatch, SyntheticCandidate, GEN_MAJORITY, GEN_MINORITY_PER_CLASS,
};
pub use prompt::{
    build_classification_prompt, exemplars_from_corpus, parse_label, select_exemplars, Exemplar, LegendEntry,
    PromptMode, PromptTemplate, FEW_SHOT_PER_CLASS, ROLE_PREAMBLE,
};
pub use review::{apply_review, parse_review, read_review_file, review_stub, Decision, ReviewOutcome, ReviewRecord};
