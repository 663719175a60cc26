//! Synthetic regression with a heavy negative tail.

use crate::rng::{self, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionSample {
    pub x: [f64; 2],
    pub noise: f64,
    pub y: f64,
}

/// `y = (2 x₁)² − (3 x₂)⁴ + ε`
pub fn tail_target(x: [f64; 2], noise: f64) -> f64 {
    (2.0 * x[0]).powi(2) - (3.0 * x[1]).powi(4) + noise
}

/// Draws `n` samples with `x ~ N(0, I₂)` and `ε ~ N(0, 1)`.
pub fn gen_extreme_tail(n: usize, seed: u64) -> Vec<RegressionSample> {
    let mut r = rng::seeded(seed);
    sample_tail(n, &mut r)
}

pub fn sample_tail(n: usize, r: &mut Rng) -> Vec<RegressionSample> {
    (0..n)
        .map(|_| {
            let x = [rng::normal(r), rng::normal(r)];
            let noise = rng::normal(r);
            RegressionSample {
                x,
                noise,
                y: tail_target(x, noise),
            }
        })
        .collect()
}

/// Stacks samples into `X: [n × 2]` and `Y: [n × 1]`.
pub fn to_tensors(samples: &[RegressionSample]) -> (Tensor, Tensor) {
    let xs: Vec<f64> = samples.iter().flat_map(|s| s.x).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let n = samples.len();
    (
        Tensor::new(&[n, 2], xs).expect("nonempty sample set"),
        Tensor::new(&[n, 1], ys).expect("nonempty sample set"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula() {
        assert_eq!(tail_target([1.0, 1.0], 0.0), -77.0);
        assert_eq!(tail_target([0.0, 0.0], 0.0), 0.0);
    }

    #[test]
    fn reproducible_and_consistent() {
        let a = gen_extreme_tail(100, 3);
        assert_eq!(a, gen_extreme_tail(100, 3));
        assert_ne!(a, gen_extreme_tail(100, 4));
        for s in &a {
            assert_eq!(s.y, tail_target(s.x, s.noise));
        }
        let (x, y) = to_tensors(&a[..3]);
        assert_eq!(x.shape(), &[3, 2]);
        assert_eq!(y.get(2, 0), a[2].y);
    }
}
