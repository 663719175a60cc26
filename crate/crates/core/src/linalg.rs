//! Dense kernels shared by tensors, the graph and initializers.

use crate::rng::{self, Rng};

/// `c = op(a) · op(b) + beta · c` with `op(a)` of extent `m×k` and `op(b)` of
/// extent `k×n`. A transposed operand is stored in its untransposed layout.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the strided extents described above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major `rows×cols` matrix whose smaller-side Gram matrix is the
/// identity, obtained by orthonormalizing a Gaussian matrix.
pub fn semi_orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    // Orthonormalize the columns of a tall (long × short) Gaussian matrix, then
    // transpose when the requested matrix is wide.
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut q: Vec<Vec<f64>> = (0..short).map(|_| (0..long).map(|_| rng::normal(rng)).collect()).collect();
    for j in 0..short {
        // Two passes of modified Gram-Schmidt keep the basis orthogonal to
        // working precision.
        for _ in 0..2 {
            for p in 0..j {
                let (head, tail) = q.split_at_mut(j);
                let dot: f64 = head[p].iter().zip(tail[0].iter()).map(|(a, b)| a * b).sum();
                for (t, h) in tail[0].iter_mut().zip(head[p].iter()) {
                    *t -= dot * h;
                }
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (j, col) in q.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            if rows >= cols {
                out[i * cols + j] = gain * v;
            } else {
                out[j * cols + i] = gain * v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(r: usize, c: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    #[test]
    fn gemm_transposes_match_naive() {
        let mut rng = rng::seeded(3);
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|_| rng::normal(&mut rng)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng::normal(&mut rng)).collect();
        let want = naive(m, k, n, &a, &b);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let aa = if ta { transpose(m, k, &a) } else { a.clone() };
            let bb = if tb { transpose(k, n, &b) } else { b.clone() };
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, &aa, ta, &bb, tb, &mut c, 0.0);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semi_orthogonal_gram_is_identity() {
        let mut rng = rng::seeded(11);
        for &(r, c) in &[(8, 8), (10, 3), (3, 10), (400, 20), (1, 5), (5, 1)] {
            let w = semi_orthogonal(r, c, 1.0, &mut rng);
            let (short, tall) = if r >= c { (c, true) } else { (r, false) };
            for i in 0..short {
                for j in 0..short {
                    let dot: f64 = if tall {
                        (0..r).map(|p| w[p * c + i] * w[p * c + j]).sum()
                    } else {
                        (0..c).map(|p| w[i * c + p] * w[j * c + p]).sum()
                    };
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "{r}x{c}: {dot}");
                }
            }
        }
    }
}
