//! Constructive IO factorization: for fixed `W`, `x` and any target `G` of
//! the same extent as `W`, find diagonals with `G x = diag(d²) W diag(d¹) x`.
//!
//! Pick a pivot column `k` with `x_k ≠ 0`, put all of `d¹` on it
//! (`d¹_k = 1/x_k`) and read `d²` off the pivot column:
//! `d²_j = (G x)_j / W_jk`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct IoFactorization {
    pub input_diag: Tensor,
    pub output_diag: Tensor,
    pub pivot: usize,
}

impl IoFactorization {
    /// The equally valid solution `(c·d¹, d²/c)`.
    pub fn rescaled(&self, c: f64) -> IoFactorization {
        assert!(c != 0.0, "rescaling factor must be nonzero");
        IoFactorization {
            input_diag: self.input_diag.scale(c),
            output_diag: self.output_diag.scale(1.0 / c),
            pivot: self.pivot,
        }
    }

    /// `diag(d²) W diag(d¹) x`.
    pub fn apply(&self, w: &Tensor, x: &Tensor) -> Tensor {
        let (m, n) = (w.rows(), w.cols());
        let scaled: Vec<f64> = (0..n).map(|i| self.input_diag.data()[i] * x.data()[i]).collect();
        let out = (0..m)
            .map(|j| {
                let s: f64 = (0..n).map(|i| w.get(j, i) * scaled[i]).sum();
                self.output_diag.data()[j] * s
            })
            .collect::<Vec<_>>();
        Tensor::vector(&out)
    }

    /// `‖G x − diag(d²) W diag(d¹) x‖∞`.
    pub fn residual(&self, w: &Tensor, x: &Tensor, g: &Tensor) -> f64 {
        let gx = mat_vec(g, x);
        gx.max_abs_diff(&self.apply(w, x))
    }
}

fn mat_vec(a: &Tensor, x: &Tensor) -> Tensor {
    let out: Vec<f64> = (0..a.rows()).map(|j| a.row(j).iter().zip(x.data()).map(|(p, q)| p * q).sum()).collect();
    Tensor::vector(&out)
}

/// Solves for `(d¹, d²)`, pivoting on the admissible column with the largest
/// `|x_k|`. A column is admissible when `x_k ≠ 0` and it has no zero entry in
/// a row where `(G x)_j ≠ 0`.
pub fn solve_io_factorization(w: &Tensor, x: &Tensor, g: &Tensor) -> Result<IoFactorization> {
    let (m, n) = (w.rows(), w.cols());
    if w.shape().len() != 2 || g.shape() != w.shape() {
        return Err(Error::shape("solve_io_factorization", w.shape(), g.shape()));
    }
    if x.numel() != n {
        return Err(Error::shape("solve_io_factorization", w.shape(), x.shape()));
    }
    if x.data().iter().all(|&v| v == 0.0) {
        return Err(Error::NoFactorization);
    }
    let gx = mat_vec(g, x);
    let admissible = |k: usize| x.data()[k] != 0.0 && (0..m).all(|j| w.get(j, k) != 0.0 || gx.data()[j] == 0.0);
    let pivot = (0..n)
        .filter(|&k| admissible(k))
        .max_by(|&a, &b| x.data()[a].abs().total_cmp(&x.data()[b].abs()).then(b.cmp(&a)))
        .ok_or(Error::DegenerateWeights)?;

    let mut d1 = vec![0.0; n];
    d1[pivot] = 1.0 / x.data()[pivot];
    let d2: Vec<f64> = (0..m)
        .map(|j| {
            let wjk = w.get(j, pivot);
            if wjk == 0.0 {
                0.0
            } else {
                gx.data()[j] / wjk
            }
        })
        .collect();
    Ok(IoFactorization {
        input_diag: Tensor::vector(&d1),
        output_diag: Tensor::vector(&d2),
        pivot,
    })
}
