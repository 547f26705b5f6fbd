use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

const BUNDLED: &str = include_str!("../data/vocab.txt");

/// Token table with dense ids. Line number in the source file is the id.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    pub pad: usize,
    pub unk: usize,
    pub cls: usize,
    pub sep: usize,
    pub continuation_prefix: String,
    pub lowercase: bool,
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut token_to_id = HashMap::new();
        let mut id_to_token = Vec::new();
        for tok in tokens {
            let tok: String = tok.into();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Vocab(format!("invalid token {tok:?} at id {}", id_to_token.len())));
            }
            if token_to_id.insert(tok.clone(), id_to_token.len()).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?}")));
            }
            id_to_token.push(tok);
        }
        let special = |name: &str| {
            token_to_id
                .get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("missing special token {name}")))
        };
        Ok(Vocabulary {
            pad: special(PAD)?,
            unk: special(UNK)?,
            cls: special(CLS)?,
            sep: special(SEP)?,
            token_to_id,
            id_to_token,
            continuation_prefix: "##".to_string(),
            lowercase: true,
        })
    }

    /// One token per line; a trailing newline is allowed.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.is_empty()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    /// The small vocabulary shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_text(BUNDLED).expect("bundled vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn is_special(&self, id: usize) -> bool {
        id == self.pad || id == self.unk || id == self.cls || id == self.sep
    }
}
