//! Householder QR factorization with greedy column pivoting.
//!
//! At each step the pivot is the column with the largest residual norm after
//! orthogonalization against the columns already chosen. Residual norms are
//! recomputed from the transformed matrix (no downdating drift), and ties
//! within relative 1e-12 resolve to the lowest column index so the pivot
//! order is reproducible across runs and platforms.

use ndarray::{Array2, ArrayView2};

use crate::scalar::Real;

/// Relative window inside which residual norms count as tied.
const TIE_REL_TOL: f64 = 1e-12;

/// Factors of `a * P = q * r_factor` where P permutes columns by `pivots`.
#[derive(Debug, Clone)]
pub struct PivotedQrFactors<T> {
    /// Square orthogonal factor, rows-by-rows.
    pub q: Array2<T>,
    /// Upper-triangular factor with |diagonal| non-increasing.
    pub r_factor: Array2<T>,
    /// Full permutation of column indices, most informative first.
    pub pivots: Vec<usize>,
}

pub fn pivoted_qr<T: Real>(a: ArrayView2<'_, T>) -> PivotedQrFactors<T> {
    let (rows, cols) = a.dim();
    let mut work = a.to_owned();
    let mut q = Array2::<T>::eye(rows);
    let mut pivots: Vec<usize> = (0..cols).collect();

    let tie = T::from_f64_lossy(TIE_REL_TOL);
    let steps = rows.min(cols);
    let mut completed = 0usize;
    for k in 0..steps {
        // Residual norm of each remaining column over rows k.. .
        let mut best = T::zero();
        for j in k..cols {
            let norm = column_tail_norm(&work, j, k);
            if norm > best {
                best = norm;
            }
        }
        if best == T::zero() {
            break;
        }
        let threshold = best * (T::one() - tie);
        let mut chosen = k;
        for j in k..cols {
            if column_tail_norm(&work, j, k) >= threshold {
                chosen = j;
                break;
            }
        }

        if chosen != k {
            pivots.swap(k, chosen);
            swap_columns(&mut work, k, chosen);
        }

        apply_householder(&mut work, &mut q, k);
        completed = k + 1;
    }

    // Columns never pivoted have zero residual; order them by ascending
    // original index (the tie rule applied to all-equal norms), moving the
    // matching r_factor columns along.
    if completed < cols {
        let mut order: Vec<usize> = (completed..cols).collect();
        order.sort_by_key(|&pos| pivots[pos]);
        let tail_pivots: Vec<usize> = order.iter().map(|&pos| pivots[pos]).collect();
        let tail_cols: Vec<Vec<T>> = order.iter().map(|&pos| work.column(pos).to_vec()).collect();
        for (offset, (&pivot, col)) in tail_pivots.iter().zip(tail_cols.iter()).enumerate() {
            pivots[completed + offset] = pivot;
            for (i, &x) in col.iter().enumerate() {
                work[(i, completed + offset)] = x;
            }
        }
    }

    PivotedQrFactors {
        q,
        r_factor: work,
        pivots,
    }
}

fn column_tail_norm<T: Real>(work: &Array2<T>, col: usize, from_row: usize) -> T {
    let mut acc = T::zero();
    for i in from_row..work.nrows() {
        let x = work[(i, col)];
        acc += x * x;
    }
    acc.sqrt()
}

fn swap_columns<T: Real>(work: &mut Array2<T>, a: usize, b: usize) {
    for i in 0..work.nrows() {
        let tmp = work[(i, a)];
        work[(i, a)] = work[(i, b)];
        work[(i, b)] = tmp;
    }
}

/// Reflect rows k.. so column k becomes (r_kk, 0, ..., 0); accumulate the
/// reflection into q from the right.
fn apply_householder<T: Real>(work: &mut Array2<T>, q: &mut Array2<T>, k: usize) {
    let rows = work.nrows();
    let cols = work.ncols();

    let norm = column_tail_norm(work, k, k);
    if norm == T::zero() {
        return;
    }
    let mut v: Vec<T> = (k..rows).map(|i| work[(i, k)]).collect();
    let sign = if v[0] >= T::zero() {
        T::one()
    } else {
        -T::one()
    };
    v[0] += sign * norm;
    let vtv = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
    if vtv == T::zero() {
        return;
    }
    let two_over = T::from_f64_lossy(2.0) / vtv;

    for j in k..cols {
        let mut proj = T::zero();
        for (offset, &vi) in v.iter().enumerate() {
            proj += vi * work[(k + offset, j)];
        }
        let scale = proj * two_over;
        for (offset, &vi) in v.iter().enumerate() {
            work[(k + offset, j)] -= scale * vi;
        }
    }
    // Exact triangularity below the diagonal.
    work[(k, k)] = -sign * norm;
    for i in (k + 1)..rows {
        work[(i, k)] = T::zero();
    }

    for row in 0..rows {
        let mut proj = T::zero();
        for (offset, &vi) in v.iter().enumerate() {
            proj += vi * q[(row, k + offset)];
        }
        let scale = proj * two_over;
        for (offset, &vi) in v.iter().enumerate() {
            q[(row, k + offset)] -= scale * vi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn factor_error(a: &Array2<f64>, f: &PivotedQrFactors<f64>) -> f64 {
        let permuted = {
            let mut p = Array2::zeros(a.dim());
            for (dst, &src) in f.pivots.iter().enumerate() {
                for i in 0..a.nrows() {
                    p[(i, dst)] = a[(i, src)];
                }
            }
            p
        };
        let qr = f.q.dot(&f.r_factor);
        let mut acc = 0.0;
        for (x, y) in permuted.iter().zip(qr.iter()) {
            acc += (x - y).powi(2);
        }
        acc.sqrt()
    }

    #[test]
    fn picks_larger_column_first() {
        let a: Array2<f64> = array![[1.0, 0.0, 0.0], [0.0, 0.5, 0.0]];
        let f = pivoted_qr(a.view());
        assert_eq!(f.pivots, vec![0, 1, 2]);
        assert!(factor_error(&a, &f) < 1e-14);
    }

    #[test]
    fn identity_ties_break_to_lowest_index() {
        let a = Array2::<f64>::eye(3);
        let f = pivoted_qr(a.view());
        assert_eq!(f.pivots, vec![0, 1, 2]);
    }

    #[test]
    fn factorization_holds_and_diagonal_decays() {
        let a: Array2<f64> = array![
            [0.3, -1.4, 0.8, 2.1, -0.2, 0.9],
            [1.7, 0.5, -0.6, 0.4, 1.2, -1.1],
            [-0.9, 0.7, 1.9, -0.3, 0.6, 0.2],
        ];
        let f = pivoted_qr(a.view());
        assert!(factor_error(&a, &f) < 1e-13);
        let mut sorted = f.pivots.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        for k in 1..3 {
            assert!(f.r_factor[(k, k)].abs() <= f.r_factor[(k - 1, k - 1)].abs() * (1.0 + 1e-12));
        }
        // Strictly upper triangular below the diagonal.
        for i in 1..3 {
            for j in 0..i {
                assert_eq!(f.r_factor[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn zero_columns_trail_in_index_order() {
        let a: Array2<f64> = array![[0.0, 2.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0]];
        let f = pivoted_qr(a.view());
        assert_eq!(f.pivots[0], 1);
        assert_eq!(f.pivots[1], 3);
        assert_eq!(&f.pivots[2..], &[0, 2]);
        assert!(factor_error(&a, &f) < 1e-14);
    }
}
