use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_p: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            heads: 4,
            d_model: 64,
            d_ff: 256,
            max_len: 128,
            dropout_p: 0.2,
        }
    }
}

fn check_rate(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout rate {p} outside [0, 1)")))
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.layers, self.heads, self.d_model, self.d_ff, self.max_len];
        if dims.contains(&0) {
            return Err(Error::Config(format!("encoder sizes must be positive: {self:?}")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        check_rate(self.dropout_p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiLstmConfig {
    pub embed_dim: usize,
    /// Per direction; outputs are `2 * hidden_size` wide.
    pub hidden_size: usize,
    pub layers: usize,
    pub max_len: usize,
    pub dropout_p: f64,
}

impl Default for BiLstmConfig {
    fn default() -> Self {
        BiLstmConfig {
            embed_dim: 64,
            hidden_size: 32,
            layers: 1,
            max_len: 128,
            dropout_p: 0.2,
        }
    }
}

impl BiLstmConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.embed_dim, self.hidden_size, self.layers, self.max_len].contains(&0) {
            return Err(Error::Config(format!("Bi-LSTM sizes must be positive: {self:?}")));
        }
        check_rate(self.dropout_p)
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BackboneConfig {
    Transformer(EncoderConfig),
    BiLstm(BiLstmConfig),
}

impl BackboneConfig {
    pub fn output_dim(&self) -> usize {
        match self {
            BackboneConfig::Transformer(c) => c.d_model,
            BackboneConfig::BiLstm(c) => c.output_dim(),
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            BackboneConfig::Transformer(c) => c.max_len,
            BackboneConfig::BiLstm(c) => c.max_len,
        }
    }

    pub fn dropout_p(&self) -> f64 {
        match self {
            BackboneConfig::Transformer(c) => c.dropout_p,
            BackboneConfig::BiLstm(c) => c.dropout_p,
        }
    }
}

/// How the whole-sequence vector fed to the head is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceRepr {
    /// Hidden state at position 0.
    Cls,
    /// Mean of hidden states over all non-PAD positions.
    MeanReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Width of the first fully connected layer; the backbone width if unset.
    pub hidden_dim: Option<usize>,
    pub sequence_repr: SequenceRepr,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden_dim: None,
            sequence_repr: SequenceRepr::Cls,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LoraTarget {
    Query,
    Key,
    Value,
    Output,
}

impl LoraTarget {
    pub fn short(self) -> &'static str {
        match self {
            LoraTarget::Query => "q",
            LoraTarget::Key => "k",
            LoraTarget::Value => "v",
            LoraTarget::Output => "o",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub targets: Vec<LoraTarget>,
    pub base_frozen: bool,
    /// Keep token and position embeddings trainable when the base is frozen.
    pub train_embeddings: bool,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            alpha: 16.0,
            targets: vec![LoraTarget::Query, LoraTarget::Value],
            base_frozen: true,
            train_embeddings: false,
        }
    }
}

impl LoraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || !(self.alpha > 0.0) || self.targets.is_empty() {
            return Err(Error::Config(format!("invalid LoRA settings {self:?}")));
        }
        Ok(())
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub num_classes: usize,
    pub backbone: BackboneConfig,
    #[serde(default)]
    pub head: HeadConfig,
    #[serde(default)]
    pub lora: Option<LoraConfig>,
}

impl ModelConfig {
    pub fn transformer(vocab_size: usize, num_classes: usize, encoder: EncoderConfig) -> Self {
        ModelConfig {
            vocab_size,
            num_classes,
            backbone: BackboneConfig::Transformer(encoder),
            head: HeadConfig::default(),
            lora: None,
        }
    }

    pub fn bilstm(vocab_size: usize, num_classes: usize, lstm: BiLstmConfig) -> Self {
        ModelConfig {
            vocab_size,
            num_classes,
            backbone: BackboneConfig::BiLstm(lstm),
            head: HeadConfig::default(),
            lora: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.num_classes == 0 {
            return Err(Error::Config("vocab_size and num_classes must be positive".into()));
        }
        match &self.backbone {
            BackboneConfig::Transformer(c) => c.validate()?,
            BackboneConfig::BiLstm(c) => c.validate()?,
        }
        if self.head.hidden_dim == Some(0) {
            return Err(Error::Config("head hidden_dim must be positive".into()));
        }
        if let Some(lora) = &self.lora {
            lora.validate()?;
            if matches!(self.backbone, BackboneConfig::BiLstm(_)) {
                return Err(Error::Config("LoRA adapters apply to the transformer backbone only".into()));
            }
        }
        Ok(())
    }

    pub fn head_hidden_dim(&self) -> usize {
        self.head.hidden_dim.unwrap_or_else(|| self.backbone.output_dim())
    }
}
