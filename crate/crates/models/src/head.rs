use numcore::{Graph, ParamStore, Rng, Var};

use crate::config::SequenceRepr;
use crate::error::{Error, Result};
use crate::layers::Linear;

/// `concat(max_pool(H[span]), seq(H)) → fc1 → tanh → dropout → fc2`.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub fc1: Linear,
    pub fc2: Linear,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub sequence_repr: SequenceRepr,
    pub dropout_p: f64,
}

impl ClassifierHead {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &Rng,
        d: usize,
        hidden_dim: usize,
        num_classes: usize,
        sequence_repr: SequenceRepr,
        dropout_p: f64,
    ) -> Result<Self> {
        Ok(ClassifierHead {
            fc1: Linear::new(store, rng, "head.fc1", 2 * d, hidden_dim)?,
            fc2: Linear::new(store, rng, "head.fc2", hidden_dim, num_classes)?,
            hidden_dim,
            num_classes,
            sequence_repr,
            dropout_p,
        })
    }

    /// Logits of length K from hidden states `h (T×d)`.
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        h: Var,
        entity_span: (usize, usize),
        attention_len: usize,
        training: bool,
        rng: &mut Rng,
    ) -> Result<Var> {
        let (s, e) = entity_span;
        let t = g.value(h).rows();
        if !(1 <= s && s < e && e <= attention_len && attention_len <= t) {
            return Err(Error::Input(format!(
                "entity span [{s}, {e}) invalid for attention_len {attention_len} and {t} rows"
            )));
        }
        let pooled = g.max_pool_rows(h, s, e)?;
        let seq = match self.sequence_repr {
            SequenceRepr::Cls => g.row(h, 0)?,
            SequenceRepr::MeanReal => g.mean_rows(h, 0, attention_len)?,
        };
        let z = g.concat(&[pooled, seq])?;
        let z = g.reshape(z, vec![1, g.value(z).len()])?;
        let z = self.fc1.forward(g, z)?;
        let z = g.tanh(z);
        let z = g.dropout(z, self.dropout_p, training, rng)?;
        let logits = self.fc2.forward(g, z)?;
        Ok(g.reshape(logits, vec![self.num_classes])?)
    }
}
