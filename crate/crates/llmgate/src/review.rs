use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use textprep::Validation;

use crate::error::{Error, Result};
use crate::generate::SyntheticCandidate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    /// Not yet reviewed; written into stub files.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub candidate_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub note: String,
}

pub fn parse_review(text: &str) -> Result<Vec<ReviewRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Review(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn read_review_file(path: impl AsRef<Path>) -> Result<Vec<ReviewRecord>> {
    parse_review(&fs::read_to_string(path)?)
}

/// One pending record per candidate, with the text as the note so the file
/// can be reviewed on its own.
pub fn review_stub(candidates: &[SyntheticCandidate]) -> String {
    let mut out = String::new();
    for c in candidates {
        let rec = ReviewRecord {
            candidate_id: c.candidate_id.clone(),
            decision: Decision::Pending,
            note: format!("{} [{}] -> {}", c.text, c.entity_surface, c.class_name),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReviewOutcome {
    pub accepted: Vec<SyntheticCandidate>,
    pub rejected: Vec<SyntheticCandidate>,
    pub pending: Vec<SyntheticCandidate>,
}

/// Applies decisions; candidates without one stay pending. A later record for
/// the same id overrides an earlier one.
pub fn apply_review(candidates: &[SyntheticCandidate], decisions: &[ReviewRecord]) -> Result<ReviewOutcome> {
    let mut by_id: BTreeMap<&str, Decision> = BTreeMap::new();
    for d in decisions {
        if !candidates.iter().any(|c| c.candidate_id == d.candidate_id) {
            return Err(Error::Review(format!("decision for unknown candidate {}", d.candidate_id)));
        }
        by_id.insert(&d.candidate_id, d.decision);
    }
    let mut out = ReviewOutcome::default();
    for c in candidates {
        let mut c = c.clone();
        match by_id.get(c.candidate_id.as_str()).copied().unwrap_or(Decision::Pending) {
            Decision::Accept => {
                c.validation = Validation::Accepted;
                out.accepted.push(c);
            }
            Decision::Reject => {
                c.validation = Validation::Rejected;
                out.rejected.push(c);
            }
            Decision::Pending => {
                c.validation = Validation::Pending;
                out.pending.push(c);
            }
        }
    }
    Ok(out)
}
