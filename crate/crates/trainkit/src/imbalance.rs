use serde::{Deserialize, Serialize};

use textprep::EncodedExample;

use crate::error::{Error, Result};
use numcore::Rng;

/// Per-class loss multipliers, all positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn uniform(k: usize) -> Self {
        ClassWeights(vec![1.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() || self.0.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("class weights must be positive and finite: {:?}", self.0)));
        }
        Ok(())
    }
}

/// Inverse-frequency weights `w_k = T / (K·c_k)`, so that `Σ w_k·c_k = T`.
pub fn compute_class_weights(counts: &[usize]) -> Result<ClassWeights> {
    if counts.is_empty() {
        return Err(Error::Config("no classes".into()));
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!(
            "class {k} has no examples; merge it into another class or drop it before weighting"
        )));
    }
    let total: usize = counts.iter().sum();
    let k = counts.len() as f64;
    Ok(ClassWeights(
        counts.iter().map(|&c| total as f64 / (k * c as f64)).collect(),
    ))
}

pub fn label_counts(data: &[EncodedExample], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for ex in data {
        counts[ex.label] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitPlan {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// `round_half_up(c·f)`, kept within `[1, c−1]` so both sides get an example.
pub fn test_count(count: usize, fraction: f64) -> usize {
    let raw = (count as f64 * fraction + 0.5 + 1e-9).floor() as usize;
    raw.clamp(1, count - 1)
}

/// Per-class seeded split. Both outputs keep the input order.
pub fn stratified_split<T: Clone>(
    items: &[T],
    label: impl Fn(&T) -> usize,
    k: usize,
    plan: SplitPlan,
) -> Result<(Vec<T>, Vec<T>)> {
    if !(plan.test_fraction > 0.0 && plan.test_fraction < 1.0) {
        return Err(Error::Split(format!("test_fraction {} outside (0, 1)", plan.test_fraction)));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, item) in items.iter().enumerate() {
        let y = label(item);
        if y >= k {
            return Err(Error::Split(format!("label {y} out of range for {k} classes")));
        }
        by_class[y].push(i);
    }
    let rng = Rng::new(plan.seed);
    let mut is_test = vec![false; items.len()];
    for (y, idx) in by_class.iter_mut().enumerate() {
        if idx.len() < 2 {
            return Err(Error::Split(format!(
                "class {y} has {} examples; at least 2 are needed to split",
                idx.len()
            )));
        }
        let n_test = test_count(idx.len(), plan.test_fraction);
        rng.fork(y as u64).shuffle(idx);
        for &i in &idx[..n_test] {
            is_test[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (item, t) in items.iter().zip(is_test) {
        if t {
            test.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, test))
}

/// Keeps `min(n, c_k)` examples of each class, chosen by seeded shuffle,
/// in input order.
pub fn downsample<T: Clone>(items: &[T], label: impl Fn(&T) -> usize, k: usize, n: usize, seed: u64) -> Vec<T> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, item) in items.iter().enumerate() {
        by_class[label(item)].push(i);
    }
    let rng = Rng::new(seed);
    let mut keep = vec![false; items.len()];
    for (y, idx) in by_class.iter_mut().enumerate() {
        if idx.len() > n {
            rng.fork(y as u64).shuffle(idx);
        }
        for &i in idx.iter().take(n) {
            keep[i] = true;
        }
    }
    items
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(item, _)| item.clone())
        .collect()
}

/// Settings of the two-phase recipe: a balanced, strongly weighted phase on a
/// downsample, then the full data with softened weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPhasePlan {
    /// Per-class cap for phase 1.
    pub n: usize,
    pub phase1_weights: ClassWeights,
    pub phase2_weights: ClassWeights,
    pub epochs1: usize,
    pub epochs2: usize,
    pub lambda: f64,
}

pub const DEFAULT_LAMBDA: f64 = 0.5;

impl TwoPhasePlan {
    /// Phase-1 weights are inverse-frequency on the full `counts`; phase-2
    /// weights interpolate them toward the per-example mean weight (exactly 1
    /// for inverse-frequency weights). `n` defaults to the smallest count.
    pub fn from_counts(counts: &[usize], n: Option<usize>, lambda: f64, epochs1: usize, epochs2: usize) -> Result<Self> {
        let w1 = compute_class_weights(counts)?;
        let total: usize = counts.iter().sum();
        let mean = w1.0.iter().zip(counts).map(|(w, &c)| w * c as f64).sum::<f64>() / total as f64;
        let w2 = ClassWeights(w1.0.iter().map(|w| lambda * w + (1.0 - lambda) * mean).collect());
        let plan = TwoPhasePlan {
            n: n.unwrap_or_else(|| *counts.iter().min().expect("non-empty counts")),
            phase1_weights: w1,
            phase2_weights: w2,
            epochs1,
            epochs2,
            lambda,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.epochs1 == 0 || self.epochs2 == 0 {
            return Err(Error::Config(format!(
                "two-phase plan needs positive N and epochs: N={}, epochs {}+{}",
                self.n, self.epochs1, self.epochs2
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        self.phase1_weights.validate()?;
        self.phase2_weights.validate()?;
        if self.phase1_weights.0.len() != self.phase2_weights.0.len() {
            return Err(Error::Config("phase weight vectors differ in length".into()));
        }
        Ok(())
    }
}
