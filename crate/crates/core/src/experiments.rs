//! The four validation experiments, run as deterministic seeded batches.
//!
//! 1. Optimal versus random placement, with the random baseline repeated
//!    over many keyed trials.
//! 2. and 3. Reconstruction accuracy swept over sensor counts and
//!    measurement noise levels (zero noise included; the same underlying
//!    draws scale with epsilon, so noise levels are directly comparable).
//! 4. Sensor failure: delete one sensor at a time from a fixed placement,
//!    keep basis and placement otherwise unchanged, and score what remains.
//!
//! All parallelism fans out over indexed trials and collects in index order,
//! so reports are byte-identical for a fixed config and seed regardless of
//! thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::basis::{BasisFactors, RankPolicy, TailoredBasis};
use crate::error::{DssError, Result};
use crate::evaluate::{
    noise_factor, ols_line_fit, per_node_summary, rpr, NoiseDistribution, NoiseSpec,
};
use crate::placement::{random_placement, select_sensors, SensorPlacement};
use crate::reconstruct::{reconstruct_batch, SparseReconstructor};
use crate::report::{
    ConfigEcho, DistributionSummary, EventCell, ExperimentReport, FailureConfig, FailureRow,
    FailureSection, Num, PerNodeRow, PerNodeSection, RandomVsOptimalSection, RprAssociationSection,
    RprNsePoint, SchemeComparisonRow, SensorSweepSection, SweepCell,
};
use crate::rng::{derive_seed, StreamKind};
use crate::scalar::Real;
use crate::snapshot::{DataSplit, NodeRegistry};

/// Experiment sub-stream tags under the run seed.
const EXP_RANDOM_BASELINE: u64 = 1;
const EXP_MEASUREMENT_NOISE: u64 = 2;

/// Fully resolved experiment parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub p_range: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    /// Nonzero noise half-widths; zero noise always runs as the baseline.
    pub noise_levels: Vec<f64>,
    pub noise_distribution: NoiseDistribution,
    pub rank_policy: RankPolicy,
    pub rank_tolerance: f64,
    /// Sensor count used for the per-node mean/CI table.
    pub per_node_p: usize,
    pub units: String,
}

impl ExperimentConfig {
    fn validate(&self, n_locations: usize) -> Result<()> {
        if self.p_range.is_empty() {
            return Err(DssError::Config("p_range is empty".into()));
        }
        for &p in &self.p_range {
            if p < 1 || p > n_locations {
                return Err(DssError::Config(format!(
                    "sensor count {p} outside 1..={n_locations}"
                )));
            }
        }
        if self.trials == 0 {
            return Err(DssError::Config("trials must be >= 1".into()));
        }
        if self.per_node_p < 1 || self.per_node_p > n_locations {
            return Err(DssError::Config(format!(
                "per_node_p {} outside 1..={n_locations}",
                self.per_node_p
            )));
        }
        for &e in &self.noise_levels {
            if e < 0.0 {
                return Err(DssError::Config("noise levels must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Validation truth with per-column NSE denominators precomputed.
struct TruthStats<T> {
    columns: Vec<Vec<T>>,
    source_cols: Vec<usize>,
    event_ids: Vec<String>,
    ss_tot: Vec<T>,
}

impl<T: Real> TruthStats<T> {
    fn build(split: &DataSplit<T>) -> Self {
        let validate = &split.validate;
        let n = validate.n_locations();
        let m = validate.n_snapshots();
        let mut columns = Vec::with_capacity(m);
        let mut ss_tot = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<T> = validate.column(j).to_vec();
            let mean = col.iter().copied().sum::<T>() / T::from_f64_lossy(n as f64);
            let tot = col
                .iter()
                .map(|&t| {
                    let d = t - mean;
                    d * d
                })
                .sum::<T>();
            columns.push(col);
            ss_tot.push(tot);
        }
        TruthStats {
            columns,
            source_cols: validate.meta().iter().map(|m| m.column_index).collect(),
            event_ids: validate.meta().iter().map(|m| m.event_id.clone()).collect(),
            ss_tot,
        }
    }

    fn n_snapshots(&self) -> usize {
        self.columns.len()
    }
}

/// Spatial NSE of every validation snapshot for one reconstruction
/// operator, plus the degraded-regime bookkeeping.
struct BatchScores {
    per_snapshot: Vec<Option<f64>>,
    negatives: u64,
    total_entries: u64,
}

impl BatchScores {
    fn defined(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_snapshot.iter().filter_map(|&s| s)
    }

    fn undefined(&self) -> usize {
        self.per_snapshot.iter().filter(|s| s.is_none()).count()
    }

    fn summary(&self) -> DistributionSummary {
        DistributionSummary::from_values(self.defined().collect(), self.undefined())
    }
}

fn score_batch<T: Real>(
    truth: &TruthStats<T>,
    op: &SparseReconstructor<'_, T>,
    nodes: &[usize],
    rank: usize,
    noise: Option<&NoiseSpec>,
) -> BatchScores {
    let n = truth.columns.first().map_or(0, Vec::len);
    let p = nodes.len();
    let mut y_buf = vec![T::zero(); p];
    let mut a_buf = vec![T::zero(); rank];
    let mut x_buf = vec![T::zero(); n];
    let mut per_snapshot = Vec::with_capacity(truth.n_snapshots());
    let mut negatives = 0u64;
    let mut total_entries = 0u64;

    for j in 0..truth.n_snapshots() {
        let col = &truth.columns[j];
        for (k, &idx) in nodes.iter().enumerate() {
            let mut v = col[idx];
            if let Some(spec) = noise {
                v *= T::from_f64_lossy(noise_factor(spec, truth.source_cols[j], k));
            }
            y_buf[k] = v;
        }
        op.reconstruct_into(&y_buf, &mut a_buf, &mut x_buf);

        total_entries += n as u64;
        let mut ss_res = T::zero();
        for (&t, &e) in col.iter().zip(x_buf.iter()) {
            if e < T::zero() {
                negatives += 1;
            }
            let d = t - e;
            ss_res += d * d;
        }
        if truth.ss_tot[j] == T::zero() {
            per_snapshot.push(None);
        } else {
            let score = T::one() - ss_res / truth.ss_tot[j];
            per_snapshot.push(Some(score.to_f64_lossy()));
        }
    }
    BatchScores {
        per_snapshot,
        negatives,
        total_entries,
    }
}

/// Basis + optimal placement + reconstruction operator for one sensor count.
struct Configured<T> {
    basis: TailoredBasis<T>,
    placement: SensorPlacement,
}

fn configure<T: Real>(
    factors: &BasisFactors<T>,
    cfg: &ExperimentConfig,
    p: usize,
) -> Result<Configured<T>> {
    let r = factors.resolve_rank(cfg.rank_policy, Some(p))?;
    let basis = factors.truncate(r)?;
    let (placement, _) = select_sensors(&basis, p)?;
    Ok(Configured { basis, placement })
}

fn node_names(registry: &NodeRegistry, nodes: &[usize]) -> Vec<String> {
    nodes
        .iter()
        .map(|&i| registry.node_id(i).to_string())
        .collect()
}

/// Experiment 1: DSS-optimal placement versus seeded random placements,
/// pooled over the sensor-count range and broken out per count.
pub fn experiment_random_vs_optimal<T: Real>(
    split: &DataSplit<T>,
    registry: &NodeRegistry,
    cfg: &ExperimentConfig,
) -> Result<RandomVsOptimalSection> {
    cfg.validate(registry.len())?;
    let factors = BasisFactors::factorize(&split.train)?;
    let truth = TruthStats::build(split);
    let n = registry.len();
    let rank_tol = T::from_f64_lossy(cfg.rank_tolerance);

    let mut pooled_optimal: Vec<f64> = Vec::new();
    let mut pooled_optimal_undefined = 0usize;
    let mut pooled_random: Vec<f64> = Vec::new();
    let mut pooled_random_undefined = 0usize;
    let mut per_p = Vec::with_capacity(cfg.p_range.len());

    for &p in &cfg.p_range {
        let configured = configure(&factors, cfg, p)?;
        let op = SparseReconstructor::new(&configured.basis, &configured.placement, rank_tol)?;
        let optimal_scores = score_batch(
            &truth,
            &op,
            &configured.placement.ordered_nodes,
            configured.basis.r,
            None,
        );

        let trial_seed = derive_seed(
            cfg.seed,
            StreamKind::Generic,
            &[EXP_RANDOM_BASELINE, p as u64],
        );
        let trial_batches: Vec<BatchScores> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| -> Result<BatchScores> {
                let placement = random_placement(n, p, trial_seed, trial)?;
                let op = SparseReconstructor::new(&configured.basis, &placement, rank_tol)?;
                Ok(score_batch(
                    &truth,
                    &op,
                    &placement.ordered_nodes,
                    configured.basis.r,
                    None,
                ))
            })
            .collect::<Result<_>>()?;

        let mut random_scores = Vec::with_capacity(trial_batches.len() * truth.n_snapshots());
        let mut random_undefined = 0usize;
        for batch in &trial_batches {
            random_scores.extend(batch.defined());
            random_undefined += batch.undefined();
        }

        random_scores.sort_unstable_by(|a, b| a.partial_cmp(b).expect("no NaN scores"));
        let random_summary = DistributionSummary::from_sorted(&random_scores, random_undefined);

        pooled_optimal.extend(optimal_scores.defined());
        pooled_optimal_undefined += optimal_scores.undefined();
        pooled_random.extend_from_slice(&random_scores);
        pooled_random_undefined += random_undefined;

        per_p.push(SchemeComparisonRow {
            p,
            resolved_rank: configured.basis.r,
            placement: node_names(registry, &configured.placement.ordered_nodes),
            optimal: optimal_scores.summary(),
            random: random_summary,
        });
    }

    Ok(RandomVsOptimalSection {
        trials_per_p: cfg.trials,
        pooled_optimal: DistributionSummary::from_values(pooled_optimal, pooled_optimal_undefined),
        pooled_random: DistributionSummary::from_values(pooled_random, pooled_random_undefined),
        per_p,
    })
}

/// Experiments 2 and 3: accuracy versus sensor count, clean and under
/// multiplicative measurement noise.
pub fn experiment_sensor_sweep<T: Real>(
    split: &DataSplit<T>,
    registry: &NodeRegistry,
    cfg: &ExperimentConfig,
) -> Result<SensorSweepSection> {
    cfg.validate(registry.len())?;
    let factors = BasisFactors::factorize(&split.train)?;
    let truth = TruthStats::build(split);
    let rank_tol = T::from_f64_lossy(cfg.rank_tolerance);
    let noise_seed = derive_seed(cfg.seed, StreamKind::Generic, &[EXP_MEASUREMENT_NOISE]);

    let mut levels = vec![0.0];
    levels.extend(cfg.noise_levels.iter().copied());

    let mut cells = Vec::new();
    let mut by_event = Vec::new();
    for &p in &cfg.p_range {
        let configured = configure(&factors, cfg, p)?;
        let op = SparseReconstructor::new(&configured.basis, &configured.placement, rank_tol)?;
        for &epsilon in &levels {
            let spec = NoiseSpec {
                epsilon,
                distribution: cfg.noise_distribution,
                seed: noise_seed,
            };
            let noise = (epsilon > 0.0).then_some(&spec);
            let scores = score_batch(
                &truth,
                &op,
                &configured.placement.ordered_nodes,
                configured.basis.r,
                noise,
            );

            if epsilon == 0.0 {
                let mut groups: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
                for (j, score) in scores.per_snapshot.iter().enumerate() {
                    let slot = groups.entry(truth.event_ids[j].as_str()).or_default();
                    match score {
                        Some(s) => slot.0.push(*s),
                        None => slot.1 += 1,
                    }
                }
                for (event, (values, undefined)) in groups {
                    by_event.push(EventCell {
                        p,
                        event_id: event.to_string(),
                        nse: DistributionSummary::from_values(values, undefined),
                    });
                }
            }

            let cond = op.condition_number().to_f64_lossy();
            cells.push(SweepCell {
                p,
                resolved_rank: configured.basis.r,
                epsilon: Num(epsilon),
                nse: scores.summary(),
                condition_number: cond.is_finite().then_some(Num(cond)),
                rank_deficient: op.rank_deficient(),
                negative_entries: scores.negatives,
                total_entries: scores.total_entries,
            });
        }
    }
    Ok(SensorSweepSection { cells, by_event })
}

/// Experiment 4 for one sensor count: delete each sensor in pivot order from
/// the fixed placement (no re-fit, no re-selection) and score the rest.
pub fn experiment_failure_sweep<T: Real>(
    split: &DataSplit<T>,
    registry: &NodeRegistry,
    cfg: &ExperimentConfig,
    p: usize,
) -> Result<FailureConfig> {
    if p < 2 {
        return Err(DssError::Config("failure sweep needs p >= 2".into()));
    }
    let factors = BasisFactors::factorize(&split.train)?;
    let truth = TruthStats::build(split);
    let rank_tol = T::from_f64_lossy(cfg.rank_tolerance);

    let configured = configure(&factors, cfg, p)?;
    let full_op = SparseReconstructor::new(&configured.basis, &configured.placement, rank_tol)?;
    let baseline = score_batch(
        &truth,
        &full_op,
        &configured.placement.ordered_nodes,
        configured.basis.r,
        None,
    );

    let mut rows = Vec::with_capacity(p);
    for k in 0..p {
        let lost = configured.placement.ordered_nodes[k];
        let surviving: Vec<usize> = configured
            .placement
            .ordered_nodes
            .iter()
            .copied()
            .filter(|&idx| idx != lost)
            .collect();
        let reduced = SensorPlacement {
            ordered_nodes: surviving,
            source: configured.placement.source,
        };
        let op = SparseReconstructor::new(&configured.basis, &reduced, rank_tol)?;
        let scores = score_batch(
            &truth,
            &op,
            &reduced.ordered_nodes,
            configured.basis.r,
            None,
        );
        let diag = rpr(&configured.basis, &configured.placement, lost, rank_tol)?;
        rows.push(FailureRow {
            qr_rank: k + 1,
            node_id: registry.node_id(lost).to_string(),
            nse: scores.summary(),
            rpr: diag.rpr.map(|v| Num(v.to_f64_lossy().clamp(0.0, 1.0))),
            pr: Num(diag.pr.to_f64_lossy()),
            rank_deficient: op.rank_deficient(),
        });
    }

    Ok(FailureConfig {
        p,
        resolved_rank: configured.basis.r,
        placement: node_names(registry, &configured.placement.ordered_nodes),
        baseline_nse: baseline.summary(),
        rows,
    })
}

/// Pool the failure rows by lost node across sensor-count configurations and
/// fit mean NSE against mean RPR.
pub fn rpr_nse_association(section: &FailureSection) -> RprAssociationSection {
    let mut by_node: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for config in &section.configs {
        for row in &config.rows {
            if let (Some(rpr), Some(mean)) = (row.rpr, row.nse.mean) {
                by_node
                    .entry(row.node_id.as_str())
                    .or_default()
                    .push((rpr.0, mean.0));
            }
        }
    }

    let mut points = Vec::with_capacity(by_node.len());
    let mut fit_input = Vec::with_capacity(by_node.len());
    for (node, pairs) in by_node {
        let n = pairs.len() as f64;
        let mean_rpr = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_nse = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let sd = |values: Vec<f64>, mean: f64| -> Option<Num> {
            if values.len() < 2 {
                return None;
            }
            let var =
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
            Some(Num(var.sqrt()))
        };
        points.push(RprNsePoint {
            node_id: node.to_string(),
            mean_rpr: Num(mean_rpr),
            sd_rpr: sd(pairs.iter().map(|p| p.0).collect(), mean_rpr),
            mean_nse: Num(mean_nse),
            sd_nse: sd(pairs.iter().map(|p| p.1).collect(), mean_nse),
            n_configs: pairs.len(),
        });
        fit_input.push((mean_rpr, mean_nse));
    }

    if fit_input.len() < 3 {
        return RprAssociationSection {
            points,
            slope: None,
            intercept: None,
            r_squared: None,
            degenerate: true,
        };
    }
    match ols_line_fit(&fit_input) {
        Some(fit) => RprAssociationSection {
            points,
            slope: Some(Num(fit.slope)),
            intercept: Some(Num(fit.intercept)),
            r_squared: Some(Num(fit.r_squared)),
            degenerate: false,
        },
        None => RprAssociationSection {
            points,
            slope: None,
            intercept: None,
            r_squared: None,
            degenerate: true,
        },
    }
}

/// Run all four experiments and assemble the full report.
pub fn run_experiments<T: Real>(
    registry: &NodeRegistry,
    split: &DataSplit<T>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate(registry.len())?;
    let factors = BasisFactors::factorize(&split.train)?;

    let mut warnings = Vec::new();
    for &p in &cfg.p_range {
        let configured = configure(&factors, cfg, p)?;
        if configured.basis.truncation_is_ambiguous() {
            warnings.push(format!(
                "truncation at rank {} is ill-defined for p = {p}: sigma_r and sigma_r+1 \
                 coincide within relative 1e-10",
                configured.basis.r
            ));
        }
        if p > configured.basis.r {
            warnings.push(format!(
                "oversampled placement at p = {p}: pivots beyond rank {} are weakly determined",
                configured.basis.r
            ));
        }
    }

    let random_vs_optimal = experiment_random_vs_optimal(split, registry, cfg)?;
    let sensor_sweep = experiment_sensor_sweep(split, registry, cfg)?;

    let mut failure_configs = Vec::new();
    for &p in &cfg.p_range {
        if p >= 2 {
            failure_configs.push(experiment_failure_sweep(split, registry, cfg, p)?);
        }
    }
    let failure = FailureSection {
        configs: failure_configs,
    };
    let rpr_association = rpr_nse_association(&failure);

    let per_node = if split.validate.n_snapshots() >= 2 {
        let configured = configure(&factors, cfg, cfg.per_node_p)?;
        let results = reconstruct_batch(
            &split.validate,
            &configured.basis,
            &configured.placement,
            None,
            T::from_f64_lossy(cfg.rank_tolerance),
        )?;
        let rows = per_node_summary(&split.validate, &results)?
            .into_iter()
            .map(|row| PerNodeRow {
                node_id: registry.node_id(row.row).to_string(),
                truth_mean: Num(row.truth_mean.to_f64_lossy()),
                truth_ci_half: Num(row.truth_ci_half.to_f64_lossy()),
                recon_mean: Num(row.recon_mean.to_f64_lossy()),
                recon_ci_half: Num(row.recon_ci_half.to_f64_lossy()),
            })
            .collect();
        Some(PerNodeSection {
            p: cfg.per_node_p,
            rows,
        })
    } else {
        warnings.push("per-node summary skipped: fewer than 2 validation snapshots".into());
        None
    };

    Ok(ExperimentReport {
        schema_version: 1,
        config: ConfigEcho {
            units: cfg.units.clone(),
            seed: cfg.seed,
            rank_policy: cfg.rank_policy.to_string(),
            rank_tolerance: Num(cfg.rank_tolerance),
            noise_distribution: cfg.noise_distribution.label().to_string(),
            noise_levels: cfg.noise_levels.iter().map(|&e| Num(e)).collect(),
            trials: cfg.trials,
            p_range: cfg.p_range.clone(),
            per_node_p: cfg.per_node_p,
            n_locations: registry.len(),
            n_train_snapshots: split.train.n_snapshots(),
            n_validate_snapshots: split.validate.n_snapshots(),
            nse_axis: "spatial: one score per validation snapshot, across all nodes".into(),
            pooling: "equal weight per (p, trial) pair when pooling across sensor counts".into(),
            centering: "none: raw snapshot matrix, no mean removal".into(),
            ci_method: "normal approximation: mean +- 1.96*sd/sqrt(m)".into(),
        },
        warnings,
        random_vs_optimal,
        sensor_sweep,
        failure,
        rpr_association,
        per_node,
    })
}
