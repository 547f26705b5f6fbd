use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

/// Words longer than this (in characters) become a single UNK.
pub const MAX_WORD_CHARS: usize = 100;

/// Token ids with character offsets `[start, end)` into the source text.
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub ids: Vec<usize>,
    pub offsets: Vec<(usize, usize)>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on whitespace and isolates each punctuation character.
/// Returns char ranges of the words.
fn pre_split(chars: &[char]) -> Vec<(usize, usize)> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_whitespace() || is_punct(c) {
            if let Some(s) = start.take() {
                words.push((s, i));
            }
            if is_punct(c) {
                words.push((i, i + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        words.push((s, chars.len()));
    }
    words
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenizedText {
    let chars: Vec<char> = text.chars().collect();
    let mut out = TokenizedText {
        ids: Vec::new(),
        offsets: Vec::new(),
    };
    for (ws, we) in pre_split(&chars) {
        segment_word(&chars[ws..we], ws, vocab, &mut out);
    }
    out
}

/// Greedy longest-match segmentation of one pre-split word. If any suffix
/// cannot be matched the whole word maps to one UNK.
fn segment_word(word: &[char], base: usize, vocab: &Vocabulary, out: &mut TokenizedText) {
    if word.len() > MAX_WORD_CHARS {
        out.ids.push(vocab.unk);
        out.offsets.push((base, base + word.len()));
        return;
    }
    // Normalized characters, each tagged with the source character it came from.
    let mut norm: Vec<(char, usize)> = Vec::with_capacity(word.len());
    for (i, &c) in word.iter().enumerate() {
        if vocab.lowercase {
            norm.extend(c.to_lowercase().map(|l| (l, i)));
        } else {
            norm.push((c, i));
        }
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut buf = String::new();
    while start < norm.len() {
        let mut found = None;
        let mut end = norm.len();
        while end > start {
            // A piece may not end inside the expansion of one source character.
            if end == norm.len() || norm[end].1 != norm[end - 1].1 {
                buf.clear();
                if start > 0 {
                    buf.push_str(&vocab.continuation_prefix);
                }
                buf.extend(norm[start..end].iter().map(|&(c, _)| c));
                if let Some(id) = vocab.id(&buf) {
                    found = Some((id, end));
                    break;
                }
            }
            end -= 1;
        }
        let Some((id, end)) = found else {
            out.ids.push(vocab.unk);
            out.offsets.push((base, base + word.len()));
            return;
        };
        pieces.push((id, norm[start].1, norm[end - 1].1 + 1));
        start = end;
    }
    for (id, s, e) in pieces {
        out.ids.push(id);
        out.offsets.push((base + s, base + e));
    }
}

/// Smallest token span whose offsets jointly cover the char span `[a, b)`.
pub fn align_span(tok: &TokenizedText, a: usize, b: usize) -> Result<(usize, usize)> {
    let err = || Error::Alignment { start: a, end: b };
    if a >= b {
        return Err(err());
    }
    let s = tok.offsets.iter().position(|&(_, e)| e > a).ok_or_else(err)?;
    let e = tok.offsets.iter().rposition(|&(st, _)| st < b).ok_or_else(err)?;
    if e < s {
        return Err(err());
    }
    Ok((s, e + 1))
}

/// Readable rendering of token ids: continuation pieces are glued to the
/// previous piece, other tokens are space separated.
pub fn decode(ids: &[usize], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for &id in ids {
        let tok = vocab.token(id).unwrap_or(crate::vocab::UNK);
        match tok.strip_prefix(vocab.continuation_prefix.as_str()) {
            Some(rest) if !rest.is_empty() => out.push_str(rest),
            _ => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Vocabulary {
        Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "pain", "dia", "##bet", "##es", "mellitus", "."])
            .unwrap()
    }

    #[test]
    fn greedy_longest_match() {
        let v = tiny();
        let t = tokenize("Diabetes mellitus.", &v);
        let toks: Vec<_> = t.ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, ["dia", "##bet", "##es", "mellitus", "."]);
        assert_eq!(t.offsets, [(0, 3), (3, 6), (6, 8), (9, 17), (17, 18)]);
    }

    #[test]
    fn unsegmentable_word_is_one_unk() {
        let v = tiny();
        let t = tokenize("diax pain", &v);
        assert_eq!(t.ids, [v.unk, v.id("pain").unwrap()]);
        assert_eq!(t.offsets, [(0, 4), (5, 9)]);
        let long = "a".repeat(MAX_WORD_CHARS + 1);
        assert_eq!(tokenize(&long, &v).offsets, [(0, MAX_WORD_CHARS + 1)]);
    }

    #[test]
    fn offsets_count_chars_not_bytes() {
        let v = tiny();
        let t = tokenize("é pain", &v);
        assert_eq!(t.offsets, [(0, 1), (2, 6)]);
    }

    #[test]
    fn align_inside_whitespace_fails() {
        let v = tiny();
        let t = tokenize("pain   pain", &v);
        assert!(align_span(&t, 5, 6).is_err());
        assert_eq!(align_span(&t, 3, 8).unwrap(), (0, 2));
    }
}
