//! Central finite-difference verification of analytic gradients.

use crate::autodiff::graph::{Graph, Var};
use crate::autodiff::params::{ParamId, ParamStore};
use crate::error::Result;
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at `worst`.
    pub worst_values: (f64, f64),
    pub coords: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the gradient of the scalar built by `f` against
/// `(f(θ + h) - f(θ - h)) / 2h` for every coordinate of `params`.
///
/// `store` is restored to its original values before returning.
pub fn grad_check<F>(store: &mut ParamStore, params: &[ParamId], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let coords: Vec<(ParamId, usize)> =
        params.iter().flat_map(|&id| (0..store.value(id).numel()).map(move |i| (id, i))).collect();
    grad_check_coords(store, &coords, h, f)
}

/// Up to `n` distinct coordinates of `params`, drawn uniformly.
pub fn sample_coords(store: &ParamStore, params: &[ParamId], n: usize, rng: &mut Rng) -> Vec<(ParamId, usize)> {
    let all: Vec<(ParamId, usize)> =
        params.iter().flat_map(|&id| (0..store.value(id).numel()).map(move |i| (id, i))).collect();
    let n = n.min(all.len());
    rand::seq::index::sample(rng, all.len(), n).into_iter().map(|k| all[k]).collect()
}

/// [`grad_check`] restricted to the listed `(parameter, flat index)` pairs.
pub fn grad_check_coords<F>(store: &mut ParamStore, coords: &[(ParamId, usize)], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss)?.into_params()
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        Ok(g.value(loss).item())
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        coords: 0,
    };
    for &(id, i) in coords {
        let orig = store.value(id).data()[i];
        store.value_mut(id).data_mut()[i] = orig + h;
        let plus = eval(store);
        store.value_mut(id).data_mut()[i] = orig - h;
        let minus = eval(store);
        store.value_mut(id).data_mut()[i] = orig;

        let numeric = (plus? - minus?) / (2.0 * h);
        let a = analytic[id.index()].data()[i];
        let err = relative_error(a, numeric);
        report.coords += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((store.get(id).name.clone(), i));
            report.worst_values = (a, numeric);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{rng, Init, Tensor};

    #[test]
    fn quadratic_is_exact() {
        let mut rng = rng::seeded(5);
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::randn(&[6], &mut rng), Init::Zeros);
        let report = grad_check(&mut store, &[w], 1e-5, |g| {
            let v = g.param(w);
            let sq = g.mul(v, v)?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.coords, 6);
    }
}
