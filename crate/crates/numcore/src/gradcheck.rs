//! Central finite-difference oracle for analytic gradients.
//!
//! The oracle only ever evaluates forward values, so it stays independent of
//! every backward rule it is used to check.

use crate::error::Result;
use crate::graph::{Graph, ParamGrads, Var};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for [`relative_error`]; below it the comparison is
/// effectively absolute.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Location of the worst entry: (tensor name or index, flat element index).
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let err = relative_error(analytic, numeric);
        if self.worst.is_none() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some((name.to_string(), index));
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

/// Compares `analytic` against central differences of `loss` for every
/// trainable parameter value in `store`. `store` is restored on return.
pub fn check_params<F>(
    store: &mut ParamStore,
    analytic: &ParamGrads,
    step: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let Some(grad) = analytic.get(id).cloned() else { continue };
        let name = store.get(id).name.clone();
        for i in 0..grad.len() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + step;
            let plus = loss(store)?;
            store.value_mut(id).data_mut()[i] = orig - step;
            let minus = loss(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            report.record(&name, i, grad.data()[i], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}

/// Builds the scalar function `build(inputs)` on a fresh graph, backpropagates,
/// and compares every input gradient against central differences.
pub fn check_inputs<F>(inputs: &[Tensor], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'static>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut report = GradCheckReport::default();
    let mut xs = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..analytic.len() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + step;
            let plus = eval(&xs)?;
            xs[k].data_mut()[i] = orig - step;
            let minus = eval(&xs)?;
            xs[k].data_mut()[i] = orig;
            report.record(&format!("input{k}"), i, analytic.data()[i], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}
