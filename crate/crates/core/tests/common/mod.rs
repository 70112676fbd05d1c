//! Shared test oracles, kept independent of the implementation paths they
//! check: the greedy ordering uses explicit Gram-Schmidt projections (the
//! library uses Householder reflections) and the least-squares oracle uses
//! Gaussian elimination on the normal equations (the library uses an SVD
//! pseudo-inverse).

#![allow(dead_code)]
// Textbook-style index loops are clearer for the elimination oracle.
#![allow(clippy::needless_range_loop)]

use dss::rng::{KeyedRng, StreamKind};
use ndarray::Array2;

/// Relative window treated as a tie, mirroring the documented pivot rule.
const TIE_REL_TOL: f64 = 1e-12;

/// Brute-force greedy max-residual-norm ordering of the columns of a
/// rows-by-cols matrix. At each of min(rows, cols) steps the pivot is the
/// remaining column with the largest residual after orthogonalization
/// against the already-chosen columns (lowest index inside the tie window);
/// leftover columns follow in ascending index order.
pub fn greedy_residual_order(matrix: &Array2<f64>) -> Vec<usize> {
    let (rows, cols) = matrix.dim();
    let columns: Vec<Vec<f64>> = (0..cols).map(|j| matrix.column(j).to_vec()).collect();

    let mut order = Vec::with_capacity(cols);
    let mut remaining: Vec<usize> = (0..cols).collect();
    let mut ortho: Vec<Vec<f64>> = Vec::new();

    for _ in 0..rows.min(cols) {
        let mut best_norm = 0.0f64;
        let mut residuals: Vec<(usize, f64, Vec<f64>)> = Vec::with_capacity(remaining.len());
        for &j in &remaining {
            let mut res = columns[j].clone();
            for q in &ortho {
                let proj: f64 = res.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
                for (r, &qv) in res.iter_mut().zip(q.iter()) {
                    *r -= proj * qv;
                }
            }
            let norm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > best_norm {
                best_norm = norm;
            }
            residuals.push((j, norm, res));
        }
        if best_norm == 0.0 {
            break;
        }
        let threshold = best_norm * (1.0 - TIE_REL_TOL);
        let (chosen, _, res) = residuals
            .into_iter()
            .find(|&(_, norm, _)| norm >= threshold)
            .expect("some column reaches the threshold");
        order.push(chosen);
        remaining.retain(|&j| j != chosen);
        let norm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
        ortho.push(res.into_iter().map(|v| v / norm).collect());
    }

    order.extend(remaining);
    order
}

/// Gaussian elimination with partial pivoting; `a` must be square and
/// nonsingular.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
            .unwrap();
        a.swap(k, pivot);
        b.swap(k, pivot);
        assert!(a[k][k] != 0.0, "oracle system is singular");
        for i in (k + 1)..n {
            let factor = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= factor * a[k][j];
            }
            b[i] -= factor * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in (k + 1)..n {
            acc -= a[k][j] * x[j];
        }
        x[k] = acc / a[k][k];
    }
    x
}

/// Normal-equations least-squares oracle for a full-rank m-by-n system.
/// Overdetermined: solve (A^T A) x = A^T y. Underdetermined: the minimum-norm
/// solution x = A^T (A A^T)^{-1} y.
pub fn least_squares_oracle(a: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let (m, n) = a.dim();
    assert_eq!(y.len(), m);
    if m >= n {
        let mut gram = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                gram[i][j] = (0..m).map(|k| a[(k, i)] * a[(k, j)]).sum();
            }
            rhs[i] = (0..m).map(|k| a[(k, i)] * y[k]).sum();
        }
        solve_linear(gram, rhs)
    } else {
        let mut gram = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                gram[i][j] = (0..n).map(|k| a[(i, k)] * a[(j, k)]).sum();
            }
        }
        let w = solve_linear(gram, y.to_vec());
        (0..n)
            .map(|j| (0..m).map(|i| a[(i, j)] * w[i]).sum())
            .collect()
    }
}

/// Deterministic standard-normal matrix for test fixtures.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = KeyedRng::new(seed, StreamKind::Generic, &[rows as u64, cols as u64]);
    Array2::from_shape_fn((rows, cols), |_| rng.standard_normal())
}
