use numcore::{Graph, ParamId, ParamStore, Rng, Tensor, Var};

use crate::config::BiLstmConfig;
use crate::error::{Error, Result};
use crate::layers::{normal, uniform};

/// One direction of one layer. Gate columns are ordered `[i, f, g, o]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
pub struct BiLstm {
    pub config: BiLstmConfig,
    pub emb: ParamId,
    /// `(forward, backward)` per layer.
    pub layers: Vec<(LstmCell, LstmCell)>,
}

impl LstmCell {
    fn new(store: &mut ParamStore, rng: &Rng, name: &str, d_in: usize, h: usize) -> Result<Self> {
        let bound = 1.0 / (h as f64).sqrt();
        let r = |n: &str, shape: &[usize]| uniform(&mut rng.named(&format!("{name}.{n}")), shape, bound);
        let w_ih = r("w_ih", &[d_in, 4 * h]);
        let w_hh = r("w_hh", &[h, 4 * h]);
        let b = r("b", &[4 * h]);
        Ok(LstmCell {
            w_ih: store.add(format!("{name}.w_ih"), w_ih)?,
            w_hh: store.add(format!("{name}.w_hh"), w_hh)?,
            b: store.add(format!("{name}.b"), b)?,
        })
    }

    /// Runs the recurrence over the rows of `x` in `order`; returns the
    /// hidden state (1×h) for each visited row, in visiting order.
    fn run(&self, g: &mut Graph<'_>, x: Var, order: &[usize], h_size: usize) -> Result<Vec<Var>> {
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let b = g.param(self.b);
        let xw = g.matmul(x, w_ih)?;
        let xw = g.add_bias(xw, b)?;
        let mut h = g.constant(Tensor::zeros(&[1, h_size]));
        let mut c = g.constant(Tensor::zeros(&[1, h_size]));
        let mut out = Vec::with_capacity(order.len());
        for &t in order {
            let xt = g.slice_rows(xw, t, t + 1)?;
            let hw = g.matmul(h, w_hh)?;
            let z = g.add(xt, hw)?;
            let zi = g.slice_cols(z, 0, h_size)?;
            let zf = g.slice_cols(z, h_size, 2 * h_size)?;
            let zg = g.slice_cols(z, 2 * h_size, 3 * h_size)?;
            let zo = g.slice_cols(z, 3 * h_size, 4 * h_size)?;
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let gg = g.tanh(zg);
            let o = g.sigmoid(zo);
            let fc = g.mul(f, c)?;
            let ig = g.mul(i, gg)?;
            c = g.add(fc, ig)?;
            let tc = g.tanh(c);
            h = g.mul(o, tc)?;
            out.push(h);
        }
        Ok(out)
    }
}

impl BiLstm {
    pub(crate) fn new(store: &mut ParamStore, rng: &Rng, config: &BiLstmConfig, vocab_size: usize) -> Result<Self> {
        let emb = store.add("lstm.emb", normal(&mut rng.named("lstm.emb"), &[vocab_size, config.embed_dim], 0.1))?;
        let mut layers = Vec::with_capacity(config.layers);
        let h = config.hidden_size;
        for l in 0..config.layers {
            let d_in = if l == 0 { config.embed_dim } else { 2 * h };
            let fwd = LstmCell::new(store, rng, &format!("lstm.{l}.fwd"), d_in, h)?;
            let bwd = LstmCell::new(store, rng, &format!("lstm.{l}.bwd"), d_in, h)?;
            layers.push((fwd, bwd));
        }
        Ok(BiLstm {
            config: config.clone(),
            emb,
            layers,
        })
    }

    /// Hidden states `T×2h`. Both directions run over the first
    /// `attention_len` positions only; rows past it are zero.
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
        if attention_len == 0 || attention_len > t {
            return Err(Error::Input(format!("attention_len {attention_len} for {t} tokens")));
        }
        let n = attention_len;
        let h = cfg.hidden_size;
        let emb = g.param(self.emb);
        let mut x = g.embedding(emb, &ids[..n])?;
        x = g.dropout(x, cfg.dropout_p, training, rng)?;
        let forward_order: Vec<usize> = (0..n).collect();
        let backward_order: Vec<usize> = (0..n).rev().collect();
        for (l, (fwd, bwd)) in self.layers.iter().enumerate() {
            if l > 0 {
                x = g.dropout(x, cfg.dropout_p, training, rng)?;
            }
            let hf = fwd.run(g, x, &forward_order, h)?;
            let mut hb = bwd.run(g, x, &backward_order, h)?;
            hb.reverse();
            let hf = g.concat_rows(&hf)?;
            let hb = g.concat_rows(&hb)?;
            x = g.concat(&[hf, hb])?;
        }
        if n < t {
            let pad = g.constant(Tensor::zeros(&[t - n, 2 * h]));
            x = g.concat_rows(&[x, pad])?;
        }
        Ok(x)
    }
}
