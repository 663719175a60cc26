use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `θ ← θ − lr · g`
pub fn sgd_step(store: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
    if grads.len() != store.len() {
        return Err(Error::extent("sgd_step", format!("{} gradients for {} parameters", grads.len(), store.len())));
    }
    let ids: Vec<_> = store.ids().collect();
    for (id, g) in ids.into_iter().zip(grads) {
        let theta = store.value_mut(id);
        if theta.shape() != g.shape() {
            return Err(Error::shape("sgd_step", theta.shape(), g.shape()));
        }
        for (t, d) in theta.data_mut().iter_mut().zip(g.data()) {
            *t -= lr * d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Init;

    #[test]
    fn hand_values() {
        let mut s = ParamStore::new();
        let id = s.insert("theta", Tensor::scalar(1.0), Init::Zeros);
        sgd_step(&mut s, &[Tensor::scalar(0.0)], 0.001).unwrap();
        assert_eq!(s.value(id).item(), 1.0);
        sgd_step(&mut s, &[Tensor::scalar(2.0)], 0.001).unwrap();
        assert_eq!(s.value(id).item(), 0.998);
        assert!(sgd_step(&mut s, &[Tensor::zeros(&[3])], 0.1).is_err());
    }
}
