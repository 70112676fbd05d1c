//! Full-state reconstruction from sparse measurements.
//!
//! Coefficients are the minimum-norm least-squares solution of
//! (C psi_r) a = y, realized through an SVD pseudo-inverse with a relative
//! singular-value cutoff. Rank-deficient systems are first-class: the
//! sensor-failure experiments depend on degraded regimes reconstructing
//! rather than erroring.

use ndarray::{Array1, Array2, ArrayView1};

use crate::basis::TailoredBasis;
use crate::error::{DssError, Result};
use crate::evaluate::NoiseSpec;
use crate::linalg::PseudoInverse;
use crate::placement::SensorPlacement;
use crate::scalar::Real;
use crate::snapshot::SnapshotMatrix;

/// Default relative singular-value cutoff for the pseudo-inverse.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Values read at the placement's sensors, in pivot order.
#[derive(Debug, Clone)]
pub struct MeasurementVector<T> {
    pub values: Vec<T>,
    pub placement: SensorPlacement,
    /// Source column index of the snapshot this was sampled from, if any.
    pub snapshot_id: Option<usize>,
}

/// Sample the full state at the placement's sensors: values[k] = x[nodes[k]].
pub fn measure<T: Real>(
    x: ArrayView1<'_, T>,
    placement: &SensorPlacement,
) -> Result<MeasurementVector<T>> {
    let mut values = Vec::with_capacity(placement.p());
    for &idx in &placement.ordered_nodes {
        let v = x.get(idx).copied().ok_or_else(|| {
            DssError::Consistency(format!(
                "placement index {idx} outside state vector of length {}",
                x.len()
            ))
        })?;
        values.push(v);
    }
    Ok(MeasurementVector {
        values,
        placement: placement.clone(),
        snapshot_id: None,
    })
}

/// Estimated coefficients and full state for one snapshot.
#[derive(Debug, Clone)]
pub struct ReconstructionResult<T> {
    pub a_hat: Array1<T>,
    pub x_hat: Array1<T>,
    /// Condition number of C psi_r over retained singular values; +inf when
    /// the measurement matrix is identically zero.
    pub condition_number: T,
    pub rank_deficient: bool,
    pub snapshot_id: Option<usize>,
}

/// Reusable reconstruction operator for one (basis, placement) pair. Builds
/// the pseudo-inverse once; each snapshot is then two small mat-vecs.
#[derive(Debug)]
pub struct SparseReconstructor<'a, T> {
    basis: &'a TailoredBasis<T>,
    placement: &'a SensorPlacement,
    pinv: Array2<T>,
    condition_number: T,
    rank_deficient: bool,
}

impl<'a, T: Real> SparseReconstructor<'a, T> {
    pub fn new(
        basis: &'a TailoredBasis<T>,
        placement: &'a SensorPlacement,
        rank_tol: T,
    ) -> Result<Self> {
        let p = placement.p();
        if p == 0 {
            return Err(DssError::Config(
                "cannot reconstruct from zero sensors".into(),
            ));
        }
        let n = basis.n_locations();
        let mut sampled = Array2::zeros((p, basis.r));
        for (k, &idx) in placement.ordered_nodes.iter().enumerate() {
            if idx >= n {
                return Err(DssError::Consistency(format!(
                    "placement index {idx} outside basis with {n} locations"
                )));
            }
            for j in 0..basis.r {
                sampled[(k, j)] = basis.psi_r[(idx, j)];
            }
        }
        let pinv = PseudoInverse::compute(sampled.view(), rank_tol)?;
        Ok(SparseReconstructor {
            basis,
            placement,
            condition_number: pinv.condition_number,
            rank_deficient: pinv.rank_deficient(),
            pinv: pinv.matrix,
        })
    }

    pub fn condition_number(&self) -> T {
        self.condition_number
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// Allocation-free inner kernel: a_hat = pinv * y, x_hat = psi_r * a_hat.
    pub fn reconstruct_into(&self, measured: &[T], a_hat: &mut [T], x_hat: &mut [T]) {
        debug_assert_eq!(measured.len(), self.placement.p());
        let r = self.basis.r;
        debug_assert_eq!(a_hat.len(), r);
        debug_assert_eq!(x_hat.len(), self.basis.n_locations());
        for (i, slot) in a_hat.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (k, &y) in measured.iter().enumerate() {
                acc += self.pinv[(i, k)] * y;
            }
            *slot = acc;
        }
        for (row, slot) in x_hat.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, &a) in a_hat.iter().enumerate() {
                acc += self.basis.psi_r[(row, j)] * a;
            }
            *slot = acc;
        }
    }

    pub fn reconstruct(
        &self,
        measured: &[T],
        snapshot_id: Option<usize>,
    ) -> ReconstructionResult<T> {
        let mut a_hat = vec![T::zero(); self.basis.r];
        let mut x_hat = vec![T::zero(); self.basis.n_locations()];
        self.reconstruct_into(measured, &mut a_hat, &mut x_hat);
        ReconstructionResult {
            a_hat: Array1::from(a_hat),
            x_hat: Array1::from(x_hat),
            condition_number: self.condition_number,
            rank_deficient: self.rank_deficient,
            snapshot_id,
        }
    }
}

/// One-shot reconstruction of a single measurement vector.
pub fn reconstruct<T: Real>(
    y: &MeasurementVector<T>,
    basis: &TailoredBasis<T>,
    rank_tol: T,
) -> Result<ReconstructionResult<T>> {
    let op = SparseReconstructor::new(basis, &y.placement, rank_tol)?;
    Ok(op.reconstruct(&y.values, y.snapshot_id))
}

/// Reconstruct every validation column, optionally perturbing measurements
/// per the noise spec. Results align with the validation column order; the
/// noise stream is keyed by each column's source index so evaluation order
/// does not matter.
pub fn reconstruct_batch<T: Real>(
    validate: &SnapshotMatrix<T>,
    basis: &TailoredBasis<T>,
    placement: &SensorPlacement,
    noise: Option<&NoiseSpec>,
    rank_tol: T,
) -> Result<Vec<ReconstructionResult<T>>> {
    let op = SparseReconstructor::new(basis, placement, rank_tol)?;
    let mut results = Vec::with_capacity(validate.n_snapshots());
    for j in 0..validate.n_snapshots() {
        let source_col = validate.meta()[j].column_index;
        let mut measured = measure(validate.column(j), placement)?;
        if let Some(spec) = noise {
            measured = crate::evaluate::apply_noise(&measured, spec, source_col);
        }
        results.push(op.reconstruct(&measured.values, Some(source_col)));
    }
    Ok(results)
}
