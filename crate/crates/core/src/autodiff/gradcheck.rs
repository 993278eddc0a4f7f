use crate::error::Result;

use super::{Graph, NodeId, ParamStore};

/// Gradients smaller than this are compared on an absolute scale.
const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub coordinates: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares the gradients produced by [`Graph::backward`] against central
/// differences `(f(x+eps) - f(x-eps)) / 2eps` for every coordinate of every
/// parameter in `store`. Frozen rows are skipped.
///
/// The loss closure must be deterministic. Gradients in `store` are left
/// holding the analytic values.
pub fn grad_check<L>(
    store: &mut ParamStore<f64>,
    mut loss_fn: L,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    L: FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    store.zero_grad();
    {
        let mut g = Graph::with_finite_checks();
        let loss = loss_fn(&mut g, store)?;
        g.backward(loss, store)?;
    }
    let mut eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::with_finite_checks();
        let loss = loss_fn(&mut g, store)?;
        Ok(g.value(loss).item())
    };

    let mut params = Vec::with_capacity(store.len());
    for id in store.ids().collect::<Vec<_>>() {
        let cols = store.get(id).value.dims2().1;
        let frozen = store.get(id).frozen_rows.clone();
        let numel = store.get(id).value.numel();
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            coordinates: 0,
        };
        for i in 0..numel {
            if frozen.contains(&(i / cols)) {
                continue;
            }
            let original = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = original + eps;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = original - eps;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = store.get(id).grad.data()[i];
            check.max_abs_err = check.max_abs_err.max((analytic - numeric).abs());
            check.max_rel_err = check.max_rel_err.max(relative_error(analytic, numeric));
            check.coordinates += 1;
        }
        params.push(check);
    }
    Ok(GradCheckReport { params, tol })
}
