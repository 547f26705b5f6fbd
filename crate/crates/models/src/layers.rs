use numcore::{Graph, ParamId, ParamStore, Rng, Tensor, Var};

use crate::error::Result;

/// Xavier-uniform `fan_in × fan_out` matrix.
pub(crate) fn xavier(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.uniform_range(-a, a)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("positive dims")
}

pub(crate) fn normal(rng: &mut Rng, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| std * rng.normal()).collect();
    Tensor::new(shape.to_vec(), data).expect("positive dims")
}

pub(crate) fn uniform(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive dims")
}

/// Low-rank update `scaling · x·Aᵀ·Bᵀ` with `A: r×d_in`, `B: d_out×r`.
#[derive(Debug, Clone, Copy)]
pub struct LoraParams {
    pub a: ParamId,
    pub b: ParamId,
    pub scaling: f64,
}

/// `y = x·W + b`, `W: d_in×d_out`, plus an optional LoRA update.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
    pub lora: Option<LoraParams>,
}

impl Linear {
    pub(crate) fn new(store: &mut ParamStore, rng: &Rng, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        let w = store.add(format!("{name}.w"), xavier(&mut rng.named(&format!("{name}.w")), d_in, d_out))?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[d_out]))?;
        Ok(Linear {
            w,
            b,
            d_in,
            d_out,
            lora: None,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.affine(x, w, b)?;
        let Some(lora) = self.lora else { return Ok(y) };
        let a = g.param(lora.a);
        let bm = g.param(lora.b);
        let at = g.transpose(a)?;
        let bt = g.transpose(bm)?;
        let xa = g.matmul(x, at)?;
        let delta = g.matmul(xa, bt)?;
        let delta = g.scale(delta, lora.scaling);
        Ok(g.add(y, delta)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    pub(crate) fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(LayerNormParams {
            gamma: store.add(format!("{name}.g"), Tensor::filled(&[d], 1.0))?,
            beta: store.add(format!("{name}.b"), Tensor::zeros(&[d]))?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        Ok(g.layer_norm(x, gamma, beta)?)
    }
}
