//! Entity classifiers: a small pre-norm transformer encoder or a Bi-LSTM,
//! followed by a head over the max-pooled entity states and a sequence vector.
//! The transformer's attention projections can carry LoRA adapters.

mod bilstm;
mod classifier;
mod config;
mod error;
mod head;
mod layers;
mod transformer;

pub use bilstm::{BiLstm, LstmCell};
pub use classifier::{predict, Backbone, EntityClassifier, ModelInput};
pub use config::{
    BackboneConfig, BiLstmConfig, EncoderConfig, HeadConfig, LoraConfig, LoraTarget, ModelConfig, SequenceRepr,
};
pub use error::{Error, Result};
pub use head::ClassifierHead;
pub use layers::{LayerNormParams, Linear, LoraParams};
pub use transformer::{Encoder, EncoderLayer};
