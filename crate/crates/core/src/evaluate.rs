//! Reconstruction scoring and failure diagnostics.
//!
//! Nash-Sutcliffe efficiency is the headline metric: one spatial score per
//! snapshot, computed across all nodes. Undefined scores (constant truth)
//! are carried as explicit flags, never as NaN, so percentile summaries
//! stay meaningful. The relative projection residual quantifies how much of
//! a lost sensor's basis row the surviving sensors cannot represent.

use crate::basis::TailoredBasis;
use crate::error::{DssError, Result};
use crate::linalg::thin_svd;
use crate::placement::SensorPlacement;
use crate::reconstruct::{MeasurementVector, ReconstructionResult};
use crate::rng::{KeyedRng, StreamKind};
use crate::scalar::Real;
use crate::snapshot::SnapshotMatrix;

/// Nash-Sutcliffe efficiency of `estimate` against `truth`.
///
/// Returns `Ok(None)` when the truth series is constant (the score is
/// undefined, not a division by zero). Values are <= 1; 0 matches the mean
/// predictor; negative is worse than the mean.
pub fn nse<T: Real>(truth: &[T], estimate: &[T]) -> Result<Option<T>> {
    if truth.len() != estimate.len() {
        return Err(DssError::Consistency(format!(
            "nse length mismatch: truth {} vs estimate {}",
            truth.len(),
            estimate.len()
        )));
    }
    if truth.len() < 2 {
        return Err(DssError::Consistency("nse needs at least 2 entries".into()));
    }
    let n = T::from_f64_lossy(truth.len() as f64);
    let mean = truth.iter().copied().sum::<T>() / n;
    let mut ss_res = T::zero();
    let mut ss_tot = T::zero();
    for (&t, &e) in truth.iter().zip(estimate.iter()) {
        let r = t - e;
        ss_res += r * r;
        let d = t - mean;
        ss_tot += d * d;
    }
    if ss_tot == T::zero() {
        return Ok(None);
    }
    Ok(Some(T::one() - ss_res / ss_tot))
}

/// Multiplicative measurement-noise model: each reading is scaled by
/// (1 + u) with u drawn from the chosen distribution over [-epsilon, +epsilon].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Relative half-width, e.g. 0.05 for +-5%.
    pub epsilon: f64,
    pub distribution: NoiseDistribution,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDistribution {
    /// Uniform on [-epsilon, +epsilon] (the default reading of "+-5%").
    UniformMultiplicative,
    /// Gaussian with sigma = epsilon/2, rejected outside [-epsilon, +epsilon].
    TruncatedGaussianMultiplicative,
}

impl NoiseDistribution {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "uniform" => Some(NoiseDistribution::UniformMultiplicative),
            "gaussian" => Some(NoiseDistribution::TruncatedGaussianMultiplicative),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseDistribution::UniformMultiplicative => "uniform",
            NoiseDistribution::TruncatedGaussianMultiplicative => "gaussian",
        }
    }
}

/// Multiplicative factor (1 + u) applied to entry k of snapshot j. The
/// stream is keyed by (seed, j, k), so the same triple yields the same
/// perturbation no matter which worker evaluates it. The underlying draw is
/// independent of epsilon, so noise levels scale the same realizations.
pub fn noise_factor(spec: &NoiseSpec, snapshot_index: usize, k: usize) -> f64 {
    let mut rng = KeyedRng::new(
        spec.seed,
        StreamKind::MeasurementNoise,
        &[snapshot_index as u64, k as u64],
    );
    let u = match spec.distribution {
        NoiseDistribution::UniformMultiplicative => rng.uniform_symmetric(spec.epsilon),
        NoiseDistribution::TruncatedGaussianMultiplicative => loop {
            let draw = rng.standard_normal() * spec.epsilon / 2.0;
            if draw.abs() <= spec.epsilon {
                break draw;
            }
        },
    };
    1.0 + u
}

/// Perturb a measurement vector per the noise spec. Zero epsilon returns the
/// input bit-exactly.
pub fn apply_noise<T: Real>(
    y: &MeasurementVector<T>,
    spec: &NoiseSpec,
    snapshot_index: usize,
) -> MeasurementVector<T> {
    if spec.epsilon == 0.0 {
        return y.clone();
    }
    let mut out = y.clone();
    for (k, value) in out.values.iter_mut().enumerate() {
        *value *= T::from_f64_lossy(noise_factor(spec, snapshot_index, k));
    }
    out
}

/// Projection-residual diagnostics for one lost sensor.
#[derive(Debug, Clone)]
pub struct RprRow<T> {
    /// Row index of the lost sensor.
    pub lost_row: usize,
    /// Norm of the component of the lost row outside the surviving span.
    pub pr: T,
    /// pr normalized by the lost row's norm; `None` when that norm is zero.
    pub rpr: Option<T>,
    pub placement_size: usize,
}

/// Relative projection residual of the lost sensor's basis row against the
/// row space of the remaining sensors' rows (pseudo-inverse realization, so
/// a singular Gram matrix is handled).
pub fn rpr<T: Real>(
    basis: &TailoredBasis<T>,
    placement: &SensorPlacement,
    lost_index: usize,
    rank_tol: T,
) -> Result<RprRow<T>> {
    let p = placement.p();
    if p < 2 {
        return Err(DssError::Config("rpr needs at least 2 sensors".into()));
    }
    if !placement.ordered_nodes.contains(&lost_index) {
        return Err(DssError::Consistency(format!(
            "lost sensor {lost_index} is not part of the placement"
        )));
    }
    let r = basis.r;
    let x: Vec<T> = (0..r).map(|j| basis.psi_r[(lost_index, j)]).collect();

    let remaining: Vec<usize> = placement
        .ordered_nodes
        .iter()
        .copied()
        .filter(|&idx| idx != lost_index)
        .collect();
    let mut phi = ndarray::Array2::zeros((remaining.len(), r));
    for (row, &idx) in remaining.iter().enumerate() {
        for j in 0..r {
            phi[(row, j)] = basis.psi_r[(idx, j)];
        }
    }

    // Orthogonal projection onto rowspace(phi) via the retained right
    // singular vectors.
    let svd = thin_svd(phi.view())?;
    let cutoff = rank_tol * svd.singular_values[0];
    let mut projected = vec![T::zero(); r];
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= T::zero() || s < cutoff {
            continue;
        }
        let mut coeff = T::zero();
        for (j, &xj) in x.iter().enumerate() {
            coeff += svd.vt[(i, j)] * xj;
        }
        for (j, slot) in projected.iter_mut().enumerate() {
            *slot += coeff * svd.vt[(i, j)];
        }
    }

    let mut pr_sq = T::zero();
    let mut x_sq = T::zero();
    for j in 0..r {
        let d = x[j] - projected[j];
        pr_sq += d * d;
        x_sq += x[j] * x[j];
    }
    let pr = pr_sq.sqrt();
    let rpr = if x_sq == T::zero() {
        None
    } else {
        Some(pr / x_sq.sqrt())
    };
    Ok(RprRow {
        lost_row: lost_index,
        pr,
        rpr,
        placement_size: p,
    })
}

/// Mean and 95% confidence half-width (normal approximation with sample
/// standard deviation) of truth and reconstruction at one node.
#[derive(Debug, Clone)]
pub struct NodeSummaryRow<T> {
    pub row: usize,
    pub truth_mean: T,
    pub truth_ci_half: T,
    pub recon_mean: T,
    pub recon_ci_half: T,
}

/// Per-node means with 95% CIs across a batch of reconstructed snapshots.
pub fn per_node_summary<T: Real>(
    validate: &SnapshotMatrix<T>,
    results: &[ReconstructionResult<T>],
) -> Result<Vec<NodeSummaryRow<T>>> {
    let m = validate.n_snapshots();
    if m < 2 {
        return Err(DssError::Consistency(
            "per-node summary needs at least 2 snapshots".into(),
        ));
    }
    if results.len() != m {
        return Err(DssError::Consistency(format!(
            "{} reconstructions for {m} validation snapshots",
            results.len()
        )));
    }
    let n = validate.n_locations();
    let mut rows = Vec::with_capacity(n);
    for node in 0..n {
        let truth: Vec<T> = (0..m).map(|j| validate.values()[(node, j)]).collect();
        let recon: Vec<T> = results.iter().map(|r| r.x_hat[node]).collect();
        let (truth_mean, truth_ci_half) = mean_ci(&truth);
        let (recon_mean, recon_ci_half) = mean_ci(&recon);
        rows.push(NodeSummaryRow {
            row: node,
            truth_mean,
            truth_ci_half,
            recon_mean,
            recon_ci_half,
        });
    }
    Ok(rows)
}

fn mean_ci<T: Real>(series: &[T]) -> (T, T) {
    let m = series.len();
    let mf = T::from_f64_lossy(m as f64);
    let mean = series.iter().copied().sum::<T>() / mf;
    let var = series
        .iter()
        .map(|&v| {
            let d = v - mean;
            d * d
        })
        .sum::<T>()
        / T::from_f64_lossy((m - 1) as f64);
    let half = T::from_f64_lossy(1.96) * var.sqrt() / mf.sqrt();
    (mean, half)
}

/// Ordinary least-squares line fit of y on x.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Returns `None` when the fit is degenerate (fewer than 2 points or all x
/// equal). A constant y over varying x fits exactly (r_squared = 1).
pub fn ols_line_fit(points: &[(f64, f64)]) -> Option<LineFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = points
            .iter()
            .map(|&(x, y)| {
                let e = y - (slope * x + intercept);
                e * e
            })
            .sum();
        1.0 - ss_res / syy
    };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Linear-interpolation percentile of pre-sorted values; q in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = h - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}
