//! Dense `f64` tensors, a reverse-mode autodiff tape, AdamW with a linear
//! warmup/decay schedule, dropout, and a finite-difference gradient oracle.
//!
//! Everything is stored and accumulated in 64-bit floats.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{sigmoid, Gradients, Graph, ParamGrads, Var};
pub use optim::{AdamW, AdamWConfig, LrSchedule};
pub use params::{Checkpoint, CheckpointEntry, Param, ParamId, ParamStore, CHECKPOINT_FORMAT};
pub use rng::Rng;
pub use tensor::Tensor;

/// Eager inverted dropout on a plain tensor (no graph).
pub fn dropout(x: &Tensor, p: f64, training: bool, rng: &mut Rng) -> Result<Tensor> {
    graph::check_dropout_rate(p)?;
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let data = x
        .data()
        .iter()
        .map(|&v| if rng.uniform() < p { 0.0 } else { v * keep })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}
