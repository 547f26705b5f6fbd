use numcore::{Graph, ParamId, ParamStore, Rng, Var};

use crate::config::{EncoderConfig, LoraTarget};
use crate::error::{Error, Result};
use crate::layers::{normal, LayerNormParams, Linear};

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub ln1: LayerNormParams,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNormParams,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl EncoderLayer {
    pub fn projection(&self, target: LoraTarget) -> &Linear {
        match target {
            LoraTarget::Query => &self.q,
            LoraTarget::Key => &self.k,
            LoraTarget::Value => &self.v,
            LoraTarget::Output => &self.o,
        }
    }

    pub fn projection_mut(&mut self, target: LoraTarget) -> &mut Linear {
        match target {
            LoraTarget::Query => &mut self.q,
            LoraTarget::Key => &mut self.k,
            LoraTarget::Value => &mut self.v,
            LoraTarget::Output => &mut self.o,
        }
    }
}

/// Pre-norm transformer encoder with learned token and position embeddings.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub tok_emb: ParamId,
    pub pos_emb: ParamId,
    pub layers: Vec<EncoderLayer>,
    pub ln_f: LayerNormParams,
}

const EMB_STD: f64 = 0.1;

impl Encoder {
    pub(crate) fn new(store: &mut ParamStore, rng: &Rng, config: &EncoderConfig, vocab_size: usize) -> Result<Self> {
        let d = config.d_model;
        let tok_emb = store.add("tok_emb", normal(&mut rng.named("tok_emb"), &[vocab_size, d], EMB_STD))?;
        let pos_emb = store.add("pos_emb", normal(&mut rng.named("pos_emb"), &[config.max_len, d], EMB_STD))?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("enc.{l}");
            layers.push(EncoderLayer {
                ln1: LayerNormParams::new(store, &format!("{p}.ln1"), d)?,
                q: Linear::new(store, rng, &format!("{p}.attn.q"), d, d)?,
                k: Linear::new(store, rng, &format!("{p}.attn.k"), d, d)?,
                v: Linear::new(store, rng, &format!("{p}.attn.v"), d, d)?,
                o: Linear::new(store, rng, &format!("{p}.attn.o"), d, d)?,
                ln2: LayerNormParams::new(store, &format!("{p}.ln2"), d)?,
                ff1: Linear::new(store, rng, &format!("{p}.ff1"), d, config.d_ff)?,
                ff2: Linear::new(store, rng, &format!("{p}.ff2"), config.d_ff, d)?,
            });
        }
        let ln_f = LayerNormParams::new(store, "enc.ln_f", d)?;
        Ok(Encoder {
            config: config.clone(),
            tok_emb,
            pos_emb,
            layers,
            ln_f,
        })
    }

    /// Hidden states `T×d_model` for `ids` (length T). Keys at positions
    /// `>= attention_len` get zero attention weight.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        ids: &[usize],
        attention_len: usize,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let cfg = &self.config;
        let t = ids.len();
        if t > cfg.max_len {
            return Err(Error::Length { len: t, max: cfg.max_len });
        }
        let tok = g.param(self.tok_emb);
        let pos = g.param(self.pos_emb);
        let e = g.embedding(tok, ids)?;
        let positions: Vec<usize> = (0..t).collect();
        let p = g.embedding(pos, &positions)?;
        let x = g.add(e, p)?;
        let mut x = g.dropout(x, cfg.dropout_p, training, rng)?;
        for layer in &self.layers {
            let a = layer.ln1.forward(g, x)?;
            let attn = self.attention(g, layer, a, attention_len)?;
            let attn = g.dropout(attn, cfg.dropout_p, training, rng)?;
            x = g.add(x, attn)?;
            let b = layer.ln2.forward(g, x)?;
            let f = layer.ff1.forward(g, b)?;
            let f = g.gelu(f);
            let f = layer.ff2.forward(g, f)?;
            let f = g.dropout(f, cfg.dropout_p, training, rng)?;
            x = g.add(x, f)?;
        }
        self.ln_f.forward(g, x)
    }

    fn attention(&self, g: &mut Graph<'_>, layer: &EncoderLayer, x: Var, valid: usize) -> Result<Var> {
        let heads = self.config.heads;
        let dh = self.config.d_model / heads;
        let q = layer.q.forward(g, x)?;
        let k = layer.k.forward(g, x)?;
        let v = layer.v.forward(g, x)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = g.slice_cols(q, lo, hi)?;
            let kh = g.slice_cols(k, lo, hi)?;
            let vh = g.slice_cols(v, lo, hi)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, scale);
            let probs = g.masked_softmax_rows(scores, valid)?;
            outs.push(g.matmul(probs, vh)?);
        }
        let o = if heads == 1 { outs[0] } else { g.concat(&outs)? };
        layer.o.forward(g, o)
    }
}
