//! Deterministic low-rank-plus-noise fixture generation.
//!
//! The generated matrix is psi* A + eta: a random orthonormal basis, mode
//! coefficients with geometrically decaying amplitudes, and optional
//! additive Gaussian noise scaled to the clean signal's RMS. Everything is
//! a pure function of the seed, and the files written are exactly the
//! formats the loader reads.

use ndarray::Array2;

use crate::error::{DssError, Result};
use crate::rng::{KeyedRng, StreamKind};
use crate::scalar::Real;
use crate::snapshot::{NodeEntry, NodeRegistry, SnapshotMatrix, SnapshotMeta, SplitTag};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_locations: usize,
    pub n_snapshots: usize,
    pub rank: usize,
    /// Additive noise level relative to the clean signal RMS (0 = exact low rank).
    pub noise: f64,
    /// Trailing columns tagged validate; the rest are train.
    pub validate_count: usize,
    pub seed: u64,
}

/// Amplitude of mode i: 10, 5, 2.5, ... keeps the singular spectrum well
/// separated so truncation is unambiguous.
fn mode_amplitude(i: usize) -> f64 {
    10.0 * 0.5f64.powi(i as i32)
}

pub fn generate<T: Real>(spec: &SynthSpec) -> Result<(NodeRegistry, SnapshotMatrix<T>)> {
    let n = spec.n_locations;
    let m = spec.n_snapshots;
    let r = spec.rank;
    if n == 0 || m == 0 {
        return Err(DssError::Config(
            "synthetic dataset needs n >= 1 and m >= 1".into(),
        ));
    }
    if r < 1 || r > n.min(m) {
        return Err(DssError::Config(format!(
            "synthetic rank {r} outside 1..={}",
            n.min(m)
        )));
    }
    if spec.validate_count == 0 || spec.validate_count >= m {
        return Err(DssError::Config(format!(
            "validate count {} must leave both splits non-empty (m = {m})",
            spec.validate_count
        )));
    }
    if spec.noise < 0.0 {
        return Err(DssError::Config("noise level must be >= 0".into()));
    }

    let psi = random_orthonormal(n, r, spec.seed);

    let mut coeff_rng = KeyedRng::new(spec.seed, StreamKind::SynthCoefficients, &[]);
    let mut coefficients = Array2::<f64>::zeros((r, m));
    for i in 0..r {
        let amp = mode_amplitude(i);
        for j in 0..m {
            coefficients[(i, j)] = amp * coeff_rng.standard_normal();
        }
    }

    let mut values = psi.dot(&coefficients);
    if spec.noise > 0.0 {
        let rms = (values.iter().map(|v| v * v).sum::<f64>() / (n * m) as f64).sqrt();
        let scale = spec.noise * rms;
        let mut noise_rng = KeyedRng::new(spec.seed, StreamKind::SynthNoise, &[]);
        for v in values.iter_mut() {
            *v += scale * noise_rng.standard_normal();
        }
    }

    let width = (n as f64).log10().floor() as usize + 1;
    let entries: Vec<NodeEntry> = (0..n)
        .map(|i| NodeEntry {
            node_id: format!("N{:0width$}", i + 1),
            row_index: i,
            x: None,
            y: None,
        })
        .collect();
    let registry = NodeRegistry::new(entries)?;

    let train_count = m - spec.validate_count;
    let meta: Vec<SnapshotMeta> = (0..m)
        .map(|j| {
            // Peak-node provenance: the row with the largest magnitude.
            let mut peak = 0usize;
            let mut peak_abs = f64::NEG_INFINITY;
            for i in 0..n {
                let a = values[(i, j)].abs();
                if a > peak_abs {
                    peak_abs = a;
                    peak = i;
                }
            }
            SnapshotMeta {
                column_index: j,
                scenario_id: format!("scn-{j:05}"),
                event_id: format!("event-{}", j % 5 + 1),
                target_node_id: registry.node_id(peak).to_string(),
                split_tag: if j < train_count {
                    SplitTag::Train
                } else {
                    SplitTag::Validate
                },
            }
        })
        .collect();

    let typed = Array2::from_shape_fn((n, m), |(i, j)| T::from_f64_lossy(values[(i, j)]));
    let matrix = SnapshotMatrix::new(typed, meta)?;
    Ok((registry, matrix))
}

/// Random n-by-r matrix with orthonormal columns: Gaussian entries followed
/// by two modified Gram-Schmidt passes.
fn random_orthonormal(n: usize, r: usize, seed: u64) -> Array2<f64> {
    let mut rng = KeyedRng::new(seed, StreamKind::SynthBasis, &[]);
    let mut cols: Vec<Vec<f64>> = (0..r)
        .map(|_| (0..n).map(|_| rng.standard_normal()).collect())
        .collect();
    for _ in 0..2 {
        for j in 0..r {
            for i in 0..j {
                let proj: f64 = cols[j].iter().zip(cols[i].iter()).map(|(a, b)| a * b).sum();
                let prev = cols[i].clone();
                for (x, &u) in cols[j].iter_mut().zip(prev.iter()) {
                    *x -= proj * u;
                }
            }
            let norm: f64 = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in cols[j].iter_mut() {
                *x /= norm;
            }
        }
    }
    Array2::from_shape_fn((n, r), |(i, j)| cols[j][i])
}
