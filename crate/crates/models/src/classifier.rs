use std::collections::BTreeMap;
use std::path::Path;

use numcore::{Checkpoint, Graph, ParamId, ParamStore, Rng, Tensor, Var};
use textprep::EncodedExample;

use crate::bilstm::BiLstm;
use crate::config::{BackboneConfig, LoraConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::head::ClassifierHead;
use crate::layers::{uniform, LoraParams};
use crate::transformer::Encoder;

const CONFIG_KEY: &str = "model_config";
const LORA_A_BOUND: f64 = 0.01;

/// Token ids (possibly padded), entity span and real length.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub ids: &'a [usize],
    pub entity_span: (usize, usize),
    pub attention_len: usize,
}

impl<'a> ModelInput<'a> {
    /// All `L` positions, PAD included.
    pub fn padded(ex: &'a EncodedExample) -> Self {
        ModelInput {
            ids: &ex.ids,
            entity_span: ex.entity_span,
            attention_len: ex.attention_len,
        }
    }

    /// Real positions only. Gives the same logits as [`ModelInput::padded`]
    /// since PAD keys are masked out, at a fraction of the cost.
    pub fn trimmed(ex: &'a EncodedExample) -> Self {
        ModelInput {
            ids: &ex.ids[..ex.attention_len.min(ex.ids.len())],
            entity_span: ex.entity_span,
            attention_len: ex.attention_len,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backbone {
    Transformer(Encoder),
    BiLstm(BiLstm),
}

/// Backbone + entity head, with all parameters in one store.
#[derive(Debug, Clone)]
pub struct EntityClassifier {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub head: ClassifierHead,
}

impl EntityClassifier {
    /// Builds and initializes a model. Same config and seed give identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let rng = Rng::new(seed);
        let mut params = ParamStore::new();
        let backbone = match &config.backbone {
            BackboneConfig::Transformer(c) => {
                Backbone::Transformer(Encoder::new(&mut params, &rng, c, config.vocab_size)?)
            }
            BackboneConfig::BiLstm(c) => Backbone::BiLstm(BiLstm::new(&mut params, &rng, c, config.vocab_size)?),
        };
        let head = ClassifierHead::new(
            &mut params,
            &rng,
            config.backbone.output_dim(),
            config.head_hidden_dim(),
            config.num_classes,
            config.head.sequence_repr,
            config.backbone.dropout_p(),
        )?;
        let mut model = EntityClassifier {
            config: ModelConfig { lora: None, ..config.clone() },
            params,
            backbone,
            head,
        };
        if let Some(lora) = &config.lora {
            model.lora_wrap(lora, &rng.named("lora"))?;
        }
        Ok(model)
    }

    /// Hidden states of the backbone, one row per input position.
    pub fn hidden(&self, g: &mut Graph<'_>, input: ModelInput<'_>, training: bool, rng: &mut Rng) -> Result<Var> {
        match &self.backbone {
            Backbone::Transformer(enc) => enc.forward(g, input.ids, input.attention_len, training, rng),
            Backbone::BiLstm(lstm) => lstm.forward(g, input.ids, input.attention_len, training, rng),
        }
    }

    /// Logits (length K) as a graph node. `g` must be built over `self.params`.
    pub fn forward(&self, g: &mut Graph<'_>, input: ModelInput<'_>, training: bool, rng: &mut Rng) -> Result<Var> {
        if input.attention_len == 0 || input.attention_len > input.ids.len() {
            return Err(Error::Input(format!(
                "attention_len {} for {} ids",
                input.attention_len,
                input.ids.len()
            )));
        }
        let h = self.hidden(g, input, training, rng)?;
        self.head
            .forward(g, h, input.entity_span, input.attention_len, training, rng)
    }

    /// Inference-mode logits.
    pub fn logits(&self, input: ModelInput<'_>) -> Result<Vec<f64>> {
        let mut g = Graph::with_params(&self.params);
        let mut rng = Rng::new(0);
        let out = self.forward(&mut g, input, false, &mut rng)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn predict(&self, ex: &EncodedExample) -> Result<usize> {
        Ok(predict(&self.logits(ModelInput::trimmed(ex))?))
    }

    /// Wraps the attention projections named in `cfg` with zero-initialized
    /// low-rank adapters. With `base_frozen`, everything except adapters and
    /// head (and embeddings, if requested) stops receiving gradients.
    pub fn lora_wrap(&mut self, cfg: &LoraConfig, rng: &Rng) -> Result<()> {
        cfg.validate()?;
        let Backbone::Transformer(enc) = &mut self.backbone else {
            return Err(Error::Config("LoRA adapters apply to the transformer backbone only".into()));
        };
        if self.config.lora.is_some() {
            return Err(Error::Config("model already carries LoRA adapters".into()));
        }
        for (l, layer) in enc.layers.iter().enumerate() {
            for &t in &cfg.targets {
                let lin = layer.projection(t);
                if cfg.rank > lin.d_in.min(lin.d_out) {
                    return Err(Error::Config(format!(
                        "LoRA rank {} exceeds min dimension of enc.{l}.attn.{} ({}×{})",
                        cfg.rank,
                        t.short(),
                        lin.d_in,
                        lin.d_out
                    )));
                }
            }
        }
        let mut adapters: Vec<ParamId> = Vec::new();
        for (l, layer) in enc.layers.iter_mut().enumerate() {
            for &t in &cfg.targets {
                let name = format!("enc.{l}.attn.{}.lora", t.short());
                let lin = layer.projection_mut(t);
                let a = uniform(&mut rng.named(&format!("{name}_a")), &[cfg.rank, lin.d_in], LORA_A_BOUND);
                let a = self.params.add(format!("{name}_a"), a)?;
                let b = self.params.add(format!("{name}_b"), Tensor::zeros(&[lin.d_out, cfg.rank]))?;
                lin.lora = Some(LoraParams {
                    a,
                    b,
                    scaling: cfg.scaling(),
                });
                adapters.extend([a, b]);
            }
        }
        if cfg.base_frozen {
            let embeddings = [enc.tok_emb, enc.pos_emb];
            let ids: Vec<ParamId> = self.params.ids().collect();
            for id in ids {
                let is_head = self.params.get(id).name.starts_with("head.");
                let keep = is_head || adapters.contains(&id) || (cfg.train_embeddings && embeddings.contains(&id));
                self.params.set_trainable(id, keep);
            }
        }
        self.config.lora = Some(cfg.clone());
        Ok(())
    }

    pub fn num_trainable(&self) -> usize {
        self.params
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(_, p)| p.value.len())
            .sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let config = serde_json::to_string(&self.config).expect("config serializes");
        self.params.to_checkpoint(BTreeMap::from([(CONFIG_KEY.to_string(), config)]))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let text = ckpt
            .metadata
            .get(CONFIG_KEY)
            .ok_or_else(|| Error::Checkpoint(format!("missing {CONFIG_KEY} metadata")))?;
        let config: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("bad model config: {e}")))?;
        let mut model = EntityClassifier::new(config, 0)?;
        model.params.load_checkpoint(ckpt)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
