use textprep::{EncodedExample, Provenance, Validation};

use crate::error::{Error, Result};

/// Synthetic share limit, as a fraction of the merged dataset.
pub const DEFAULT_CAP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub dataset: Vec<EncodedExample>,
    pub merged: usize,
    /// Synthetic examples left out because they are pending or rejected.
    pub not_accepted: usize,
}

/// Largest synthetic count `s` with `s <= cap·(base + s)`.
pub fn max_synthetic(base: usize, cap_fraction: f64) -> usize {
    (cap_fraction * base as f64 / (1.0 - cap_fraction) + 1e-9).floor() as usize
}

/// Appends the accepted synthetic examples after `base`, which is left
/// untouched. Fails if they would make up more than `cap_fraction` of the result.
pub fn merge_synthetic(
    base: Vec<EncodedExample>,
    synthetic: &[EncodedExample],
    cap_fraction: f64,
) -> Result<MergeOutcome> {
    if !(cap_fraction > 0.0 && cap_fraction < 1.0) {
        return Err(Error::Augmentation(format!("cap fraction {cap_fraction} outside (0, 1)")));
    }
    let mut accepted = Vec::new();
    let mut not_accepted = 0;
    for ex in synthetic {
        match &ex.provenance {
            Provenance::Synthetic {
                validation: Validation::Accepted,
                ..
            } => accepted.push(ex.clone()),
            Provenance::Synthetic { .. } => not_accepted += 1,
            Provenance::Corpus { doc_id, .. } => {
                return Err(Error::Augmentation(format!(
                    "example from corpus document {doc_id:?} passed as synthetic"
                )))
            }
        }
    }
    if let Some(ex) = base.first() {
        if let Some(bad) = accepted.iter().find(|s| s.task != ex.task) {
            return Err(Error::Augmentation(format!(
                "synthetic example for {} merged into a {} dataset",
                bad.task, ex.task
            )));
        }
    }
    let n = accepted.len();
    if n as f64 > cap_fraction * (base.len() + n) as f64 {
        return Err(Error::CapExceeded {
            requested: n,
            allowed: max_synthetic(base.len(), cap_fraction),
            base: base.len(),
        });
    }
    let mut dataset = base;
    dataset.extend(accepted);
    Ok(MergeOutcome {
        dataset,
        merged: n,
        not_accepted,
    })
}
