//! Thin singular value decomposition via one-sided Jacobi rotations.
//!
//! Jacobi is chosen over bidiagonalization because it is short, accurate to
//! high relative precision, and has no platform-dependent branches; the
//! matrices in this domain (at most a few thousand rows or columns) are far
//! below the scale where its extra flops matter.

use ndarray::{Array1, Array2, ArrayView2};

use super::{dot, norm2};
use crate::error::{DssError, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 64;

/// Thin SVD `a = u * diag(singular_values) * vt` with `k = min(m, n)`.
///
/// `u` is m-by-k with orthonormal columns, `vt` is k-by-n with orthonormal
/// rows, and the singular values are sorted non-increasing. Columns of `u`
/// paired with numerically zero singular values are completed to an
/// orthonormal set deterministically (they carry no data).
#[derive(Debug, Clone)]
pub struct ThinSvd<T> {
    pub u: Array2<T>,
    pub singular_values: Array1<T>,
    pub vt: Array2<T>,
}

pub fn thin_svd<T: Real>(a: ArrayView2<'_, T>) -> Result<ThinSvd<T>> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(DssError::Numerical("svd of an empty matrix".into()));
    }
    if m >= n {
        let (u, s, v) = jacobi_tall(a)?;
        Ok(ThinSvd {
            u: columns_to_matrix(&u, m),
            singular_values: Array1::from(s),
            vt: columns_to_matrix(&v, n)
                .reversed_axes()
                .as_standard_layout()
                .to_owned(),
        })
    } else {
        // Wide matrix: factor the transpose, then swap the roles of u and v.
        let at = a.t().as_standard_layout().to_owned();
        let (u_t, s, v_t) = jacobi_tall(at.view())?;
        Ok(ThinSvd {
            u: columns_to_matrix(&v_t, m),
            singular_values: Array1::from(s),
            vt: columns_to_matrix(&u_t, n)
                .reversed_axes()
                .as_standard_layout()
                .to_owned(),
        })
    }
}

/// One-sided Jacobi on a tall matrix (rows >= cols). Returns the columns of
/// u (each of length m), the singular values, and the columns of v.
#[allow(clippy::type_complexity)]
fn jacobi_tall<T: Real>(a: ArrayView2<'_, T>) -> Result<(Vec<Vec<T>>, Vec<T>, Vec<Vec<T>>)> {
    let (m, n) = a.dim();
    debug_assert!(m >= n);

    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j).to_vec()).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();

    let eps = T::epsilon();
    // A pair counts as orthogonal once |gamma| is at the roundoff floor of
    // the dot product itself, which grows with the column length.
    let tol = eps * T::from_f64_lossy(16.0 * (m as f64).sqrt());
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::from_f64_lossy(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(DssError::Numerical(format!(
            "jacobi svd did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    // Sort by singular value, largest first; equal values keep column order.
    let mut sigma: Vec<T> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        sigma[j]
            .partial_cmp(&sigma[i])
            .expect("finite singular values")
    });
    cols = order.iter().map(|&i| cols[i].clone()).collect();
    v = order.iter().map(|&i| v[i].clone()).collect();
    sigma = order.iter().map(|&i| sigma[i]).collect();

    // Normalize data columns; complete the numerically-zero tail so u stays
    // orthonormal even when the matrix is rank deficient.
    let sigma_max = sigma[0];
    let zero_tol = sigma_max * eps * T::from_f64_lossy(m.max(n) as f64);
    let mut u: Vec<Vec<T>> = Vec::with_capacity(n);
    for (j, col) in cols.into_iter().enumerate() {
        if sigma[j] > zero_tol && sigma[j] > T::zero() {
            let inv = T::one() / sigma[j];
            u.push(col.into_iter().map(|x| x * inv).collect());
        } else {
            u.push(complete_column(&u, m));
        }
    }
    Ok((u, sigma, v))
}

fn rotate_pair<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let new_p = c * *xp - s * *xq;
        let new_q = s * *xp + c * *xq;
        *xp = new_p;
        *xq = new_q;
    }
}

/// Deterministic basis completion: take the standard basis vector with the
/// largest residual against the columns built so far (lowest index on ties)
/// and orthonormalize it.
fn complete_column<T: Real>(existing: &[Vec<T>], m: usize) -> Vec<T> {
    let mut best_idx = 0usize;
    let mut best_res = T::neg_infinity();
    for i in 0..m {
        let mut res = T::one();
        for col in existing {
            res -= col[i] * col[i];
        }
        if res > best_res {
            best_res = res;
            best_idx = i;
        }
    }
    let mut candidate = vec![T::zero(); m];
    candidate[best_idx] = T::one();
    // Two Gram-Schmidt passes keep the result orthogonal to working precision.
    for _ in 0..2 {
        for col in existing {
            let proj = dot(&candidate, col);
            for (c, &u) in candidate.iter_mut().zip(col.iter()) {
                *c -= proj * u;
            }
        }
    }
    let norm = norm2(&candidate);
    debug_assert!(norm > T::zero(), "basis completion degenerated");
    let inv = T::one() / norm;
    candidate.into_iter().map(|x| x * inv).collect()
}

fn columns_to_matrix<T: Real>(cols: &[Vec<T>], rows: usize) -> Array2<T> {
    let mut out = Array2::zeros((rows, cols.len()));
    for (j, col) in cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    out
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
///
/// Singular values below `rel_tol * sigma_max` are treated as zero; the
/// matrix is flagged rank-deficient when that truncates anything. The
/// condition number is taken over the retained spectrum.
#[derive(Debug, Clone)]
pub struct PseudoInverse<T> {
    /// n-by-m matrix mapping measurements back to coefficients.
    pub matrix: Array2<T>,
    pub retained: usize,
    pub zeroed: usize,
    /// sigma_max / sigma_min over retained values; +inf when nothing survives.
    pub condition_number: T,
}

impl<T: Real> PseudoInverse<T> {
    pub fn compute(a: ArrayView2<'_, T>, rel_tol: T) -> Result<Self> {
        let (m, n) = a.dim();
        let svd = thin_svd(a)?;
        let k = svd.singular_values.len();
        let sigma_max = svd.singular_values[0];
        let cutoff = rel_tol * sigma_max;

        let mut matrix = Array2::zeros((n, m));
        let mut retained = 0usize;
        let mut sigma_min = T::infinity();
        for i in 0..k {
            let s = svd.singular_values[i];
            if s <= T::zero() || s < cutoff {
                continue;
            }
            retained += 1;
            sigma_min = sigma_min.min(s);
            let inv = T::one() / s;
            for row in 0..n {
                let vri = svd.vt[(i, row)] * inv;
                for col in 0..m {
                    matrix[(row, col)] += vri * svd.u[(col, i)];
                }
            }
        }
        let condition_number = if retained == 0 {
            T::infinity()
        } else {
            sigma_max / sigma_min
        };
        Ok(PseudoInverse {
            matrix,
            retained,
            zeroed: k - retained,
            condition_number,
        })
    }

    pub fn rank_deficient(&self) -> bool {
        self.zeroed > 0
    }
}
