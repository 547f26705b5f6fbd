use serde::{Deserialize, Serialize};

use models::{EntityClassifier, ModelInput};
use numcore::{AdamW, AdamWConfig, Graph, LrSchedule, ParamGrads, Rng};
use textprep::{EncodedExample, TaskSpec};

use crate::error::{Error, Result};
use crate::imbalance::{downsample, TwoPhasePlan};
use crate::metrics::{evaluate, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    /// Examples per autodiff graph; gradients of a batch are summed chunk by
    /// chunk in a fixed order.
    pub chunk_size: usize,
    pub seed: u64,
    /// Stop once training accuracy reaches this value (checked after each epoch).
    #[serde(default)]
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            peak_lr: 5e-4,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            chunk_size: 16,
            seed: 0,
            target_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.chunk_size == 0 {
            return Err(Error::Config(format!("epochs, batch_size and chunk_size must be positive: {self:?}")));
        }
        if !(self.peak_lr > 0.0) || !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("invalid learning-rate settings: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub steps: u64,
    /// Mean weighted loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Training accuracy after each epoch, when early stopping is enabled.
    pub train_accuracy: Vec<f64>,
}

/// Gradient of the batch-mean weighted loss, accumulated chunk by chunk.
fn batch_gradients(
    model: &EntityClassifier,
    batch: &[&EncodedExample],
    weights: &[f64],
    chunk_size: usize,
    rng: &Rng,
) -> Result<(ParamGrads, f64)> {
    let mut acc = ParamGrads::zeros(&model.params);
    let mut loss_sum = 0.0;
    let b = batch.len() as f64;
    for (c, chunk) in batch.chunks(chunk_size).enumerate() {
        let mut drop_rng = rng.fork(c as u64);
        let mut g = Graph::with_params(&model.params);
        let mut logits = Vec::with_capacity(chunk.len());
        for ex in chunk {
            logits.push(model.forward(&mut g, ModelInput::trimmed(ex), true, &mut drop_rng)?);
        }
        let stacked = g.concat_rows(&logits)?;
        let labels: Vec<usize> = chunk.iter().map(|e| e.label).collect();
        let loss = g.softmax_cross_entropy(stacked, &labels, weights)?;
        let share = chunk.len() as f64 / b;
        loss_sum += g.value(loss).data()[0] * share;
        let grads = g.backward(loss)?.into_param_grads(&model.params);
        acc.add_scaled(&grads, share);
    }
    Ok((acc, loss_sum))
}

pub fn accuracy(model: &EntityClassifier, data: &[EncodedExample]) -> Result<f64> {
    let mut hits = 0;
    for ex in data {
        if model.predict(ex)? == ex.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}

/// Weighted cross-entropy training with AdamW and a linear warmup/decay
/// schedule. Fully determined by `config.seed`.
pub fn train(
    model: &mut EntityClassifier,
    data: &[EncodedExample],
    weights: &[f64],
    config: &TrainConfig,
) -> Result<TrainSummary> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if weights.len() != model.config.num_classes {
        return Err(Error::Config(format!(
            "{} class weights for {} classes",
            weights.len(),
            model.config.num_classes
        )));
    }
    let batches_per_epoch = data.len().div_ceil(config.batch_size);
    let total = (batches_per_epoch * config.epochs) as u64;
    let schedule = LrSchedule::with_warmup_fraction(config.peak_lr, config.warmup_fraction, total)?;
    let adam = AdamWConfig {
        lr: config.peak_lr,
        weight_decay: config.weight_decay,
        ..AdamWConfig::default()
    };
    let mut opt = AdamW::new(adam, &model.params)?;
    let root = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut summary = TrainSummary {
        epochs_run: 0,
        steps: 0,
        epoch_loss: Vec::new(),
        train_accuracy: Vec::new(),
    };
    for epoch in 0..config.epochs {
        root.named("shuffle").fork(epoch as u64).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&EncodedExample> = idx.iter().map(|&i| &data[i]).collect();
            let step_rng = root.named("dropout").fork(summary.steps);
            let (grads, loss) = batch_gradients(model, &batch, weights, config.chunk_size, &step_rng)?;
            epoch_loss += loss * batch.len() as f64;
            let lr = schedule.lr_at(summary.steps + 1);
            opt.step_with_lr(&mut model.params, &grads, lr)?;
            summary.steps += 1;
        }
        summary.epoch_loss.push(epoch_loss / data.len() as f64);
        summary.epochs_run += 1;
        if let Some(target) = config.target_train_accuracy {
            let acc = accuracy(model, data)?;
            summary.train_accuracy.push(acc);
            log::info!("epoch {epoch}: loss {:.4}, train accuracy {acc:.4}", epoch_loss / data.len() as f64);
            if acc >= target {
                break;
            }
        } else {
            log::debug!("epoch {epoch}: loss {:.4}", epoch_loss / data.len() as f64);
        }
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub train: TrainSummary,
    pub examples: usize,
    pub weights: Vec<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseOutcome {
    pub phase1: PhaseOutcome,
    pub phase2: PhaseOutcome,
}

/// Phase 1: `plan.epochs1` epochs on a per-class downsample to `plan.n` with
/// `phase1_weights`. Phase 2: fresh optimizer and schedule at half the peak
/// rate, `plan.epochs2` epochs on all of `data` with `phase2_weights`.
/// Each phase is scored on `eval_data`, or on `data` if none is given.
pub fn two_phase_train(
    model: &mut EntityClassifier,
    task: &TaskSpec,
    data: &[EncodedExample],
    eval_data: Option<&[EncodedExample]>,
    plan: &TwoPhasePlan,
    config: &TrainConfig,
) -> Result<TwoPhaseOutcome> {
    plan.validate()?;
    let k = task.num_classes();
    let score_on = eval_data.unwrap_or(data);

    let small = downsample(data, |e| e.label, k, plan.n, config.seed);
    let cfg1 = TrainConfig {
        epochs: plan.epochs1,
        target_train_accuracy: None,
        ..config.clone()
    };
    let t1 = train(model, &small, &plan.phase1_weights.0, &cfg1)?;
    let phase1 = PhaseOutcome {
        train: t1,
        examples: small.len(),
        weights: plan.phase1_weights.0.clone(),
        report: evaluate(model, task, score_on)?,
    };

    let cfg2 = TrainConfig {
        epochs: plan.epochs2,
        peak_lr: config.peak_lr * 0.5,
        seed: Rng::new(config.seed).named("phase2").next_u64(),
        target_train_accuracy: None,
        ..config.clone()
    };
    let t2 = train(model, data, &plan.phase2_weights.0, &cfg2)?;
    let phase2 = PhaseOutcome {
        train: t2,
        examples: data.len(),
        weights: plan.phase2_weights.0.clone(),
        report: evaluate(model, task, score_on)?,
    };
    Ok(TwoPhaseOutcome { phase1, phase2 })
}
