use crate::autodiff::{ParamStore, Real};
use crate::error::{Error, Result};

use super::AdamConfig;

/// First/second moment buffers, one pair per parameter.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(store: &ParamStore<F>) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| vec![F::zero(); p.value.numel()])
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected Adam update of every parameter in `store`, followed by
/// zeroing the gradients. A non-finite gradient aborts before any
/// parameter changes.
pub fn adam_step<F: Real>(
    store: &mut ParamStore<F>,
    state: &mut AdamState<F>,
    lr: F,
    config: &AdamConfig,
) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Argument(format!(
            "optimizer state tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    if let Some(p) = store.iter().find(|p| !p.grad.is_finite()) {
        return Err(Error::Numeric(format!("gradient of {} is not finite", p.name)));
    }
    state.t += 1;
    let beta1 = F::from_f64_lossy(config.beta1);
    let beta2 = F::from_f64_lossy(config.beta2);
    let eps = F::from_f64_lossy(config.eps);
    let step = i32::try_from(state.t).unwrap_or(i32::MAX);
    let correction1 = F::one() - beta1.powi(step);
    let correction2 = F::one() - beta2.powi(step);

    for ((param, m), v) in store.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let grads = param.grad.data();
        let values = param.value.data_mut();
        for i in 0..values.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (F::one() - beta1) * g;
            v[i] = beta2 * v[i] + (F::one() - beta2) * g * g;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        param.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn single(value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::row(vec![value, -value, 0.5])).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = single(1.0);
        let mut state = AdamState::new(&store);
        let id = store.id("p").unwrap();
        store.get_mut(id).grad.data_mut().copy_from_slice(&[3.0, -0.5, 0.0]);
        let lr = 1e-3;
        adam_step(&mut store, &mut state, lr, &AdamConfig::default()).unwrap();
        let v = store.get(id).value.data();
        let d0 = (1.0 - v[0]).abs();
        let d1 = (-1.0 - v[1]).abs();
        for d in [d0, d1] {
            assert!(d <= lr && d >= lr * (1.0 - 1e-6), "{d}");
        }
        // untouched coordinate stays put
        assert_eq!(v[2], 0.5);
        assert_eq!(store.get(id).grad.data(), &[0.0; 3]);
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = single(1.0);
        let mut state = AdamState::new(&store);
        let id = store.id("p").unwrap();
        store.get_mut(id).grad.data_mut()[1] = f64::NAN;
        let err = adam_step(&mut store, &mut state, 0.1, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains('p'));
        assert_eq!(store.get(id).value.data()[0], 1.0);
        assert_eq!(state.steps(), 0);
    }
}
