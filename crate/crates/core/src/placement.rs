//! Sensor location selection.
//!
//! Optimal placement ranks candidate rows by QR factorization with column
//! pivoting applied to psi_r transposed; the pivot order is the sensor
//! ranking. The random baseline draws placements from counter-based keyed
//! streams so huge trial counts can run in parallel and still reproduce.

use crate::basis::TailoredBasis;
use crate::error::{DssError, Result};
use crate::linalg::{pivoted_qr, PivotedQrFactors};
use crate::rng::{KeyedRng, StreamKind};
use crate::scalar::Real;

/// Where a placement came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementSource {
    Optimal,
    Random { seed: u64, trial_index: u64 },
}

/// An ordered choice of p distinct row indices, most informative first.
/// This is the sampling operator: measuring means reading these rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorPlacement {
    pub ordered_nodes: Vec<usize>,
    pub source: PlacementSource,
}

impl SensorPlacement {
    pub fn p(&self) -> usize {
        self.ordered_nodes.len()
    }

    fn validate(ordered_nodes: &[usize], n_locations: usize) -> Result<()> {
        if ordered_nodes.is_empty() {
            return Err(DssError::Config(
                "placement needs at least one sensor".into(),
            ));
        }
        let mut seen = vec![false; n_locations];
        for &idx in ordered_nodes {
            if idx >= n_locations {
                return Err(DssError::Consistency(format!(
                    "placement index {idx} outside 0..{n_locations}"
                )));
            }
            if seen[idx] {
                return Err(DssError::Consistency(format!(
                    "placement repeats index {idx}"
                )));
            }
            seen[idx] = true;
        }
        Ok(())
    }
}

/// Optimal placement: pivoted QR on the r-by-n matrix psi_r^T; the first p
/// pivots are the sensors. When p exceeds the basis rank the trailing picks
/// are weakly determined (callers should flag this in reports).
pub fn select_sensors<T: Real>(
    basis: &TailoredBasis<T>,
    p: usize,
) -> Result<(SensorPlacement, PivotedQrFactors<T>)> {
    let n = basis.n_locations();
    if p < 1 || p > n {
        return Err(DssError::Config(format!(
            "sensor count {p} outside 1..={n} candidate locations"
        )));
    }
    let psi_t = basis.psi_r.t().as_standard_layout().to_owned();
    let factors = pivoted_qr(psi_t.view());
    let ordered_nodes = factors.pivots[..p].to_vec();
    SensorPlacement::validate(&ordered_nodes, n)?;
    Ok((
        SensorPlacement {
            ordered_nodes,
            source: PlacementSource::Optimal,
        },
        factors,
    ))
}

/// Random baseline: p distinct indices drawn uniformly without replacement
/// from the stream keyed by (seed, trial_index).
pub fn random_placement(
    n_locations: usize,
    p: usize,
    seed: u64,
    trial_index: u64,
) -> Result<SensorPlacement> {
    if p < 1 || p > n_locations {
        return Err(DssError::Config(format!(
            "sensor count {p} outside 1..={n_locations} candidate locations"
        )));
    }
    let mut rng = KeyedRng::new(seed, StreamKind::Placement, &[trial_index]);
    let ordered_nodes = rng.sample_distinct(n_locations, p);
    SensorPlacement::validate(&ordered_nodes, n_locations)?;
    Ok(SensorPlacement {
        ordered_nodes,
        source: PlacementSource::Random { seed, trial_index },
    })
}
