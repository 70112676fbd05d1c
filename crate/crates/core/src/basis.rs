//! Tailored orthonormal basis from the training snapshot matrix.
//!
//! The basis is the set of left singular vectors of the raw (uncentered)
//! training matrix, truncated to rank r. Column signs are canonicalized --
//! largest-magnitude entry positive -- so repeated fits of the same input
//! are bit-identical and downstream pivot orders are reproducible.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{DssError, Result};
use crate::linalg::{thin_svd, ThinSvd};
use crate::scalar::Real;
use crate::snapshot::{NodeRegistry, SnapshotMatrix};

/// How the truncation rank r is chosen. The default pairs the rank with the
/// sensor count, matching the square case of pivoted-QR placement.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankPolicy {
    Fixed(usize),
    #[default]
    MatchSensorCount,
    EnergyFraction(f64),
}

impl std::fmt::Display for RankPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RankPolicy::Fixed(r) => write!(f, "fixed:{r}"),
            RankPolicy::MatchSensorCount => write!(f, "match_sensor_count"),
            RankPolicy::EnergyFraction(frac) => write!(f, "energy:{frac}"),
        }
    }
}

/// Full (untruncated) factorization of a training matrix, sign-canonicalized.
/// Kept separate from [`TailoredBasis`] so sweeps over many ranks factor once.
#[derive(Debug, Clone)]
pub struct BasisFactors<T> {
    u: Array2<T>,
    singular_values: Array1<T>,
    vt: Array2<T>,
}

impl<T: Real> BasisFactors<T> {
    pub fn factorize(train: &SnapshotMatrix<T>) -> Result<Self> {
        if train.values().iter().all(|&v| v == T::zero()) {
            return Err(DssError::Numerical(
                "training matrix is all zeros; no basis exists".into(),
            ));
        }
        let ThinSvd {
            mut u,
            singular_values,
            mut vt,
        } = thin_svd(train.values().view())?;
        canonicalize_signs(&mut u, &mut vt);
        Ok(BasisFactors {
            u,
            singular_values,
            vt,
        })
    }

    pub fn max_rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn singular_values(&self) -> &Array1<T> {
        &self.singular_values
    }

    /// Resolve the policy to a concrete rank.
    pub fn resolve_rank(&self, policy: RankPolicy, sensor_count: Option<usize>) -> Result<usize> {
        let k = self.max_rank();
        let r = match policy {
            RankPolicy::Fixed(r) => r,
            RankPolicy::MatchSensorCount => sensor_count.ok_or_else(|| {
                DssError::Config("rank policy match_sensor_count needs a sensor count".into())
            })?,
            RankPolicy::EnergyFraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(DssError::Config(format!(
                        "energy fraction must lie in (0, 1], got {f}"
                    )));
                }
                let target = T::from_f64_lossy(f);
                let spectrum = cumulative_energy(&self.singular_values);
                spectrum
                    .iter()
                    .position(|&c| c >= target)
                    .map(|i| i + 1)
                    .unwrap_or(k)
            }
        };
        if r < 1 || r > k {
            return Err(DssError::Numerical(format!(
                "resolved rank {r} outside 1..={k} (min of locations and training snapshots)"
            )));
        }
        Ok(r)
    }

    pub fn truncate(&self, r: usize) -> Result<TailoredBasis<T>> {
        if r < 1 || r > self.max_rank() {
            return Err(DssError::Numerical(format!(
                "rank {r} outside 1..={}",
                self.max_rank()
            )));
        }
        let psi_r = self.u.slice(ndarray::s![.., ..r]).to_owned();
        let right_vectors_t = self.vt.slice(ndarray::s![..r, ..]).to_owned();
        let basis = TailoredBasis {
            psi_r,
            singular_values: self.singular_values.clone(),
            r,
            right_vectors_t,
        };
        debug_assert!(basis.orthonormality_error() < T::from_f64_lossy(1e-10));
        Ok(basis)
    }
}

/// The reduced coordinate system: first r left singular vectors plus the
/// full singular spectrum and the matching right-vector rows (diagnostics).
#[derive(Debug, Clone)]
pub struct TailoredBasis<T> {
    pub psi_r: Array2<T>,
    pub singular_values: Array1<T>,
    pub r: usize,
    pub right_vectors_t: Array2<T>,
}

impl<T: Real> TailoredBasis<T> {
    pub fn n_locations(&self) -> usize {
        self.psi_r.nrows()
    }

    /// Frobenius norm of psi_r' * psi_r - I.
    pub fn orthonormality_error(&self) -> T {
        let g = self.psi_r.t().dot(&self.psi_r);
        let mut acc = T::zero();
        for i in 0..self.r {
            for j in 0..self.r {
                let target = if i == j { T::one() } else { T::zero() };
                let d = g[(i, j)] - target;
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// True when sigma_r and sigma_{r+1} coincide within relative 1e-10, in
    /// which case the truncation is ill-defined and reports should warn.
    pub fn truncation_is_ambiguous(&self) -> bool {
        if self.r >= self.singular_values.len() {
            return false;
        }
        let s1 = self.singular_values[0];
        let gap = self.singular_values[self.r - 1] - self.singular_values[self.r];
        gap.abs() <= T::from_f64_lossy(1e-10) * s1
    }
}

/// Fit the basis in one call: factorize, resolve the rank, truncate.
pub fn fit_basis<T: Real>(
    train: &SnapshotMatrix<T>,
    policy: RankPolicy,
    sensor_count: Option<usize>,
) -> Result<TailoredBasis<T>> {
    let factors = BasisFactors::factorize(train)?;
    let r = factors.resolve_rank(policy, sensor_count)?;
    factors.truncate(r)
}

/// Cumulative energy fractions: entry k is sum of the first k+1 squared
/// singular values over the total. Non-decreasing, last entry 1.
pub fn energy_spectrum<T: Real>(basis: &TailoredBasis<T>) -> Vec<T> {
    cumulative_energy(&basis.singular_values)
}

fn cumulative_energy<T: Real>(sigma: &Array1<T>) -> Vec<T> {
    let total: T = sigma.iter().map(|&s| s * s).sum();
    let mut acc = T::zero();
    sigma
        .iter()
        .map(|&s| {
            acc += s * s;
            acc / total
        })
        .collect()
}

fn canonicalize_signs<T: Real>(u: &mut Array2<T>, vt: &mut Array2<T>) {
    let (rows, cols) = u.dim();
    for j in 0..cols {
        let mut max_abs = T::neg_infinity();
        let mut max_idx = 0usize;
        for i in 0..rows {
            let a = u[(i, j)].abs();
            if a > max_abs {
                max_abs = a;
                max_idx = i;
            }
        }
        if u[(max_idx, j)] < T::zero() {
            for i in 0..rows {
                u[(i, j)] = -u[(i, j)];
            }
            if j < vt.nrows() {
                for c in 0..vt.ncols() {
                    vt[(j, c)] = -vt[(j, c)];
                }
            }
        }
    }
}

/// Diagnostic export: node_id column followed by the r mode columns.
pub fn write_basis_csv<T: Real>(
    registry: &NodeRegistry,
    basis: &TailoredBasis<T>,
    path: &Path,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| DssError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let mut header = vec!["node_id".to_string()];
    header.extend((1..=basis.r).map(|k| format!("mode_{k}")));
    writer
        .write_record(&header)
        .and_then(|_| {
            for (row, entry) in registry.entries().iter().enumerate() {
                let mut fields = vec![entry.node_id.clone()];
                for k in 0..basis.r {
                    fields.push(crate::snapshot::format_value(
                        basis.psi_r[(row, k)].to_f64_lossy(),
                    ));
                }
                writer.write_record(&fields)?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| DssError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })
}

/// Sidecar export of the full singular spectrum and energy fractions.
pub fn write_singular_values_csv<T: Real>(basis: &TailoredBasis<T>, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| DssError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let energy = energy_spectrum(basis);
    writer
        .write_record(["index", "singular_value", "cumulative_energy"])
        .and_then(|_| {
            for (i, (&s, &c)) in basis.singular_values.iter().zip(energy.iter()).enumerate() {
                writer.write_record([
                    (i + 1).to_string(),
                    crate::snapshot::format_value(s.to_f64_lossy()),
                    crate::snapshot::format_value(c.to_f64_lossy()),
                ])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| DssError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::{SnapshotMeta, SplitTag};
    use ndarray::array;

    fn matrix_from(values: Array2<f64>) -> SnapshotMatrix<f64> {
        let meta = (0..values.ncols())
            .map(|j| SnapshotMeta {
                column_index: j,
                scenario_id: format!("s{j}"),
                event_id: "e".into(),
                target_node_id: String::new(),
                split_tag: SplitTag::Train,
            })
            .collect();
        SnapshotMatrix::new(values, meta).unwrap()
    }

    #[test]
    fn diagonal_training_matrix() {
        let train = matrix_from(array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let basis = fit_basis(&train, RankPolicy::Fixed(2), None).unwrap();
        assert_eq!(basis.r, 2);
        let s = &basis.singular_values;
        assert!(
            (s[0] - 3.0).abs() < 1e-14 && (s[1] - 2.0).abs() < 1e-14 && (s[2] - 1.0).abs() < 1e-14
        );
        // Canonical signs: exactly the first two standard basis vectors.
        assert!((basis.psi_r[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((basis.psi_r[(1, 1)] - 1.0).abs() < 1e-14);
        assert!(basis.orthonormality_error() < 1e-12);
    }

    #[test]
    fn rank_one_outer_product_recovers_the_direction() {
        let u = [2.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0];
        let w = [0.6, 0.8];
        let values = Array2::from_shape_fn((3, 2), |(i, j)| u[i] * w[j]);
        let train = matrix_from(values);
        let basis = fit_basis(&train, RankPolicy::Fixed(1), None).unwrap();
        assert!((basis.singular_values[0] - 1.0).abs() < 1e-12);
        assert!(basis.singular_values[1].abs() < 1e-12);
        // Largest-magnitude entry of u is entry 0 (positive), so no flip.
        for (i, &ui) in u.iter().enumerate() {
            assert!((basis.psi_r[(i, 0)] - ui).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_singular_values_for_two_by_two() {
        let train = matrix_from(array![[1.0, 2.0], [3.0, 4.0]]);
        let basis = fit_basis(&train, RankPolicy::Fixed(1), None).unwrap();
        assert!((basis.singular_values[0] - 5.464_985_7).abs() < 1e-6);
        assert!((basis.singular_values[1] - 0.365_966_2).abs() < 1e-6);
    }

    #[test]
    fn energy_spectrum_values() {
        let train = matrix_from(array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let basis = fit_basis(&train, RankPolicy::Fixed(3), None).unwrap();
        let e = energy_spectrum(&basis);
        assert!((e[0] - 9.0 / 14.0).abs() < 1e-12);
        assert!((e[1] - 13.0 / 14.0).abs() < 1e-12);
        assert!((e[2] - 1.0).abs() < 1e-12);

        let rank1 = matrix_from(array![[5.0, 5.0], [0.0, 0.0]]);
        let b = fit_basis(&rank1, RankPolicy::Fixed(1), None).unwrap();
        let e = energy_spectrum(&b);
        assert!(e.iter().all(|&c| (c - 1.0).abs() < 1e-12));

        let even = matrix_from(array![[1.0, 0.0], [0.0, 1.0]]);
        let b = fit_basis(&even, RankPolicy::Fixed(2), None).unwrap();
        let e = energy_spectrum(&b);
        assert!((e[0] - 0.5).abs() < 1e-12);
        assert!((e[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_fraction_policy_picks_smallest_rank() {
        let train = matrix_from(array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        // 9/14 = 0.642..., 13/14 = 0.928...
        let b = fit_basis(&train, RankPolicy::EnergyFraction(0.6), None).unwrap();
        assert_eq!(b.r, 1);
        let b = fit_basis(&train, RankPolicy::EnergyFraction(0.9), None).unwrap();
        assert_eq!(b.r, 2);
        let b = fit_basis(&train, RankPolicy::EnergyFraction(1.0), None).unwrap();
        assert_eq!(b.r, 3);
    }

    #[test]
    fn match_sensor_count_resolves_to_p() {
        let train = matrix_from(array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]);
        let b = fit_basis(&train, RankPolicy::MatchSensorCount, Some(2)).unwrap();
        assert_eq!(b.r, 2);
        assert!(fit_basis(&train, RankPolicy::MatchSensorCount, None).is_err());
    }

    #[test]
    fn out_of_range_rank_and_zero_matrix_are_errors() {
        let train = matrix_from(array![[3.0, 0.0], [0.0, 2.0]]);
        assert!(fit_basis(&train, RankPolicy::Fixed(0), None).is_err());
        assert!(fit_basis(&train, RankPolicy::Fixed(3), None).is_err());

        let zeros = matrix_from(Array2::zeros((2, 2)));
        let err = fit_basis(&zeros, RankPolicy::Fixed(1), None).unwrap_err();
        assert!(err.to_string().contains("all zeros"));
    }

    #[test]
    fn eckart_young_on_a_fixed_random_matrix() {
        use crate::rng::{KeyedRng, StreamKind};
        let mut rng = KeyedRng::new(11, StreamKind::Generic, &[0]);
        let values = Array2::from_shape_fn((8, 6), |_| rng.standard_normal());
        let train = matrix_from(values.clone());
        let factors = BasisFactors::factorize(&train).unwrap();
        let total: f64 = factors.singular_values().iter().map(|s| s * s).sum();
        for k in 1..=4usize {
            let basis = factors.truncate(k).unwrap();
            let projected = basis.psi_r.dot(&basis.psi_r.t()).dot(&values);
            let residual: f64 = values
                .iter()
                .zip(projected.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            let tail: f64 = factors
                .singular_values()
                .iter()
                .skip(k)
                .map(|s| s * s)
                .sum();
            assert!(
                (residual - tail).abs() <= 1e-8 * total,
                "k={k}: residual {residual} vs tail {tail}"
            );
        }
    }

    #[test]
    fn repeated_fits_are_bit_identical() {
        use crate::rng::{KeyedRng, StreamKind};
        let mut rng = KeyedRng::new(3, StreamKind::Generic, &[1]);
        let values = Array2::from_shape_fn((6, 5), |_| rng.standard_normal());
        let train = matrix_from(values);
        let a = fit_basis(&train, RankPolicy::Fixed(3), None).unwrap();
        let b = fit_basis(&train, RankPolicy::Fixed(3), None).unwrap();
        for (x, y) in a.psi_r.iter().zip(b.psi_r.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn tie_warning_fires_on_equal_singular_values() {
        let train = matrix_from(array![[1.0, 0.0], [0.0, 1.0]]);
        let b = fit_basis(&train, RankPolicy::Fixed(1), None).unwrap();
        assert!(b.truncation_is_ambiguous());
        let spread = matrix_from(array![[2.0, 0.0], [0.0, 1.0]]);
        let b = fit_basis(&spread, RankPolicy::Fixed(1), None).unwrap();
        assert!(!b.truncation_is_ambiguous());
    }
}
