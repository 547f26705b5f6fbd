use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationDocument, EntityMention};
use crate::error::{Error, Result};
use crate::task::{TaskName, TaskSpec};
use crate::tokenize::{align_span, tokenize, TokenizedText};
use crate::vocab::Vocabulary;

pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validation {
    Pending,
    Accepted,
    Rejected,
}

/// Where an example came from. Generated examples carry their review state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Corpus { doc_id: String, mention: usize },
    Synthetic { candidate_id: String, validation: Validation },
}

impl Provenance {
    pub fn is_synthetic(&self) -> bool {
        matches!(self, Provenance::Synthetic { .. })
    }
}

/// A fixed-length model input. Position 0 is CLS; `entity_span` indexes
/// positions in `ids`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub ids: Vec<usize>,
    pub entity_span: (usize, usize),
    pub attention_len: usize,
    pub task: TaskName,
    pub label: usize,
    pub provenance: Provenance,
    /// Token range of the source text kept in the window.
    pub window: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeConfig {
    /// Total sequence length including CLS and SEP.
    pub max_len: usize,
    /// Maximum number of source tokens kept; capped at `max_len - 2`.
    pub window_budget: usize,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig::with_max_len(DEFAULT_MAX_LEN)
    }
}

impl EncodeConfig {
    pub fn with_max_len(max_len: usize) -> Self {
        EncodeConfig {
            max_len,
            window_budget: max_len.saturating_sub(2),
        }
    }
}

/// Picks the source tokens kept around `[s, e)`: grow one token at a time,
/// alternating left then right, falling back to whichever side has room.
pub fn context_window(n: usize, s: usize, e: usize, budget: usize) -> (usize, usize) {
    let (mut lo, mut hi) = (s, e);
    let mut left_turn = true;
    while hi - lo < budget && (lo > 0 || hi < n) {
        if (left_turn && lo > 0) || hi == n {
            lo -= 1;
        } else {
            hi += 1;
        }
        left_turn = !left_turn;
    }
    (lo, hi)
}

/// Encodes an entity given the tokenized document and the entity's token span.
pub fn encode_tokens(
    tok: &TokenizedText,
    span: (usize, usize),
    task: TaskName,
    label: usize,
    provenance: Provenance,
    vocab: &Vocabulary,
    config: EncodeConfig,
) -> Result<EncodedExample> {
    let (s, e) = span;
    let len = config.max_len;
    if len < 3 {
        return Err(Error::Encode(format!("sequence length {len} leaves no room for tokens")));
    }
    if e - s > len - 2 {
        return Err(Error::Encode(format!(
            "entity spans {} tokens but at most {} fit in length {len}",
            e - s,
            len - 2
        )));
    }
    let budget = config.window_budget.min(len - 2).max(e - s);
    let (lo, hi) = context_window(tok.len(), s, e, budget);
    let mut ids = Vec::with_capacity(len);
    ids.push(vocab.cls);
    ids.extend_from_slice(&tok.ids[lo..hi]);
    ids.push(vocab.sep);
    let attention_len = ids.len();
    ids.resize(len, vocab.pad);
    Ok(EncodedExample {
        ids,
        entity_span: (s - lo + 1, e - lo + 1),
        attention_len,
        task,
        label,
        provenance,
        window: (lo, hi),
    })
}

/// Encodes one labelled mention. `mention_index` identifies it in provenance.
pub fn encode(
    doc: &AnnotationDocument,
    mention_index: usize,
    task: &TaskSpec,
    vocab: &Vocabulary,
    config: EncodeConfig,
) -> Result<EncodedExample> {
    let tok = tokenize(&doc.text, vocab);
    encode_mention(doc, &tok, mention_index, task, vocab, config)
}

fn encode_mention(
    doc: &AnnotationDocument,
    tok: &TokenizedText,
    mention_index: usize,
    task: &TaskSpec,
    vocab: &Vocabulary,
    config: EncodeConfig,
) -> Result<EncodedExample> {
    let mention: &EntityMention = doc
        .mentions
        .get(mention_index)
        .ok_or_else(|| Error::Encode(format!("doc {} has no mention {mention_index}", doc.doc_id)))?;
    let class = mention
        .label(task.name)
        .ok_or_else(|| Error::Encode(format!("doc {} mention {mention_index} has no {} label", doc.doc_id, task.name)))?;
    let label = task
        .class_id(class)
        .ok_or_else(|| Error::Validation(format!("unknown {} class {class:?}", task.name)))?;
    let span = align_span(tok, mention.char_start, mention.char_end)?;
    let provenance = Provenance::Corpus {
        doc_id: doc.doc_id.clone(),
        mention: mention_index,
    };
    encode_tokens(tok, span, task.name, label, provenance, vocab, config)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EncodeStats {
    pub encoded: usize,
    pub skipped_unlabeled: usize,
}

/// Encodes every mention labelled for `task`, in document then mention order.
pub fn encode_corpus(
    docs: &[AnnotationDocument],
    task: &TaskSpec,
    vocab: &Vocabulary,
    config: EncodeConfig,
) -> Result<(Vec<EncodedExample>, EncodeStats)> {
    let mut out = Vec::new();
    let mut stats = EncodeStats::default();
    for doc in docs {
        let tok = tokenize(&doc.text, vocab);
        for (i, m) in doc.mentions.iter().enumerate() {
            if m.label(task.name).is_none() {
                stats.skipped_unlabeled += 1;
                continue;
            }
            out.push(encode_mention(doc, &tok, i, task, vocab, config)?);
        }
    }
    stats.encoded = out.len();
    if stats.skipped_unlabeled > 0 {
        log::warn!(
            "skipped {} mentions without a {} label",
            stats.skipped_unlabeled,
            task.name
        );
    }
    Ok((out, stats))
}
