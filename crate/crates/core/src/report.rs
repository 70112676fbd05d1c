//! Experiment report assembly and serialization.
//!
//! report.json is the canonical output: schema_version 1, every float
//! rendered with 17 significant digits so repeated runs of the same config
//! and seed produce byte-identical files. The figure CSVs are plot-ready
//! long-format projections of the same data.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::error::{DssError, Result};
use crate::evaluate::percentile_sorted;

/// A float that serializes as a JSON number with exactly 17 significant
/// digits. Non-finite values are a bug in report assembly and fail loudly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom("non-finite value in report"));
        }
        let text = format!("{:.16e}", self.0);
        let number: serde_json::Number = text.parse().map_err(serde::ser::Error::custom)?;
        number.serialize(serializer)
    }
}

/// Distribution summary over defined scores; undefined scores are counted,
/// never pooled.
#[derive(Debug, Clone, Serialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub undefined: usize,
    pub p25: Option<Num>,
    pub p50: Option<Num>,
    pub p75: Option<Num>,
    pub mean: Option<Num>,
    pub sd: Option<Num>,
}

impl DistributionSummary {
    /// Consumes an unsorted batch of defined scores.
    pub fn from_values(mut values: Vec<f64>, undefined: usize) -> Self {
        values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("scores are never NaN"));
        Self::from_sorted(&values, undefined)
    }

    pub fn from_sorted(sorted: &[f64], undefined: usize) -> Self {
        let count = sorted.len();
        if count == 0 {
            return DistributionSummary {
                count,
                undefined,
                p25: None,
                p50: None,
                p75: None,
                mean: None,
                sd: None,
            };
        }
        let mean = sorted.iter().sum::<f64>() / count as f64;
        let sd = if count >= 2 {
            let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            Some(Num(var.sqrt()))
        } else {
            None
        };
        DistributionSummary {
            count,
            undefined,
            p25: Some(Num(percentile_sorted(sorted, 0.25))),
            p50: Some(Num(percentile_sorted(sorted, 0.50))),
            p75: Some(Num(percentile_sorted(sorted, 0.75))),
            mean: Some(Num(mean)),
            sd,
        }
    }

    pub fn iqr(&self) -> Option<f64> {
        Some(self.p75?.0 - self.p25?.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub units: String,
    pub seed: u64,
    pub rank_policy: String,
    pub rank_tolerance: Num,
    pub noise_distribution: String,
    pub noise_levels: Vec<Num>,
    pub trials: u64,
    pub p_range: Vec<usize>,
    pub per_node_p: usize,
    pub n_locations: usize,
    pub n_train_snapshots: usize,
    pub n_validate_snapshots: usize,
    /// One score per validation snapshot, computed across all nodes.
    pub nse_axis: String,
    /// Figure-4 pooling convention across sensor counts.
    pub pooling: String,
    /// The snapshot matrix is factorized raw, with no mean removal.
    pub centering: String,
    pub ci_method: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlacementEcho {
    pub p: usize,
    pub resolved_rank: usize,
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeComparisonRow {
    pub p: usize,
    pub resolved_rank: usize,
    pub placement: Vec<String>,
    pub optimal: DistributionSummary,
    pub random: DistributionSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RandomVsOptimalSection {
    pub trials_per_p: u64,
    pub pooled_optimal: DistributionSummary,
    pub pooled_random: DistributionSummary,
    pub per_p: Vec<SchemeComparisonRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub p: usize,
    pub resolved_rank: usize,
    pub epsilon: Num,
    pub nse: DistributionSummary,
    /// Condition number of the sampled basis; None when +inf.
    pub condition_number: Option<Num>,
    pub rank_deficient: bool,
    pub negative_entries: u64,
    pub total_entries: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EventCell {
    pub p: usize,
    pub event_id: String,
    pub nse: DistributionSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensorSweepSection {
    pub cells: Vec<SweepCell>,
    /// Zero-noise NSE broken out by validation event.
    pub by_event: Vec<EventCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    /// 1-based position of the lost sensor in the QR pivot order.
    pub qr_rank: usize,
    pub node_id: String,
    pub nse: DistributionSummary,
    /// Relative projection residual, clamped to [0, 1]; None when undefined.
    pub rpr: Option<Num>,
    pub pr: Num,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureConfig {
    pub p: usize,
    pub resolved_rank: usize,
    pub placement: Vec<String>,
    pub baseline_nse: DistributionSummary,
    pub rows: Vec<FailureRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureSection {
    pub configs: Vec<FailureConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RprNsePoint {
    pub node_id: String,
    pub mean_rpr: Num,
    pub sd_rpr: Option<Num>,
    pub mean_nse: Num,
    pub sd_nse: Option<Num>,
    pub n_configs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RprAssociationSection {
    pub points: Vec<RprNsePoint>,
    pub slope: Option<Num>,
    pub intercept: Option<Num>,
    pub r_squared: Option<Num>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerNodeRow {
    pub node_id: String,
    pub truth_mean: Num,
    pub truth_ci_half: Num,
    pub recon_mean: Num,
    pub recon_ci_half: Num,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerNodeSection {
    pub p: usize,
    pub rows: Vec<PerNodeRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ConfigEcho,
    pub warnings: Vec<String>,
    pub random_vs_optimal: RandomVsOptimalSection,
    pub sensor_sweep: SensorSweepSection,
    pub failure: FailureSection,
    pub rpr_association: RprAssociationSection,
    pub per_node: Option<PerNodeSection>,
}

fn io_err(path: &Path, source: std::io::Error) -> DssError {
    DssError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl ExperimentReport {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| DssError::Numerical(format!("report serialization failed: {e}")))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_bytes()?).map_err(|e| io_err(path, e))
    }

    /// Emit the per-figure CSV tables next to report.json.
    pub fn write_figure_csvs(&self, dir: &Path) -> Result<()> {
        self.write_fig4(&dir.join("fig4_nse_by_scheme.csv"))?;
        self.write_fig5(&dir.join("fig5_nse_by_p.csv"))?;
        self.write_fig6(&dir.join("fig6_per_node.csv"))?;
        self.write_fig8(&dir.join("fig8_noise.csv"))?;
        self.write_fig9(&dir.join("fig9_failure.csv"))?;
        self.write_fig10(&dir.join("fig10_rpr_nse.csv"))?;
        self.write_fig11(&dir.join("fig11_rpr_by_config.csv"))?;
        Ok(())
    }

    fn write_fig4(&self, path: &Path) -> Result<()> {
        let mut out = String::from("scheme,p,count,undefined,p25,p50,p75\n");
        let mut push = |scheme: &str, p: &str, s: &DistributionSummary| {
            out.push_str(&format!(
                "{scheme},{p},{},{},{},{},{}\n",
                s.count,
                s.undefined,
                opt(s.p25),
                opt(s.p50),
                opt(s.p75)
            ));
        };
        let sec = &self.random_vs_optimal;
        push("optimal", "all", &sec.pooled_optimal);
        push("random", "all", &sec.pooled_random);
        for row in &sec.per_p {
            push("optimal", &row.p.to_string(), &row.optimal);
            push("random", &row.p.to_string(), &row.random);
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    fn write_fig5(&self, path: &Path) -> Result<()> {
        let mut out = String::from("p,event_id,count,undefined,p25,p50,p75\n");
        for cell in &self.sensor_sweep.cells {
            if cell.epsilon.0 == 0.0 {
                out.push_str(&format!(
                    "{},all,{},{},{},{},{}\n",
                    cell.p,
                    cell.nse.count,
                    cell.nse.undefined,
                    opt(cell.nse.p25),
                    opt(cell.nse.p50),
                    opt(cell.nse.p75)
                ));
            }
        }
        for cell in &self.sensor_sweep.by_event {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                cell.p,
                cell.event_id,
                cell.nse.count,
                cell.nse.undefined,
                opt(cell.nse.p25),
                opt(cell.nse.p50),
                opt(cell.nse.p75)
            ));
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    fn write_fig6(&self, path: &Path) -> Result<()> {
        let mut out = String::from("node_id,series,mean,ci_lower,ci_upper\n");
        if let Some(section) = &self.per_node {
            for row in &section.rows {
                out.push_str(&format!(
                    "{},truth,{},{},{}\n",
                    row.node_id,
                    fmt(row.truth_mean),
                    fmt(Num(row.truth_mean.0 - row.truth_ci_half.0)),
                    fmt(Num(row.truth_mean.0 + row.truth_ci_half.0))
                ));
                out.push_str(&format!(
                    "{},reconstructed,{},{},{}\n",
                    row.node_id,
                    fmt(row.recon_mean),
                    fmt(Num(row.recon_mean.0 - row.recon_ci_half.0)),
                    fmt(Num(row.recon_mean.0 + row.recon_ci_half.0))
                ));
            }
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    fn write_fig8(&self, path: &Path) -> Result<()> {
        let mut out = String::from("p,epsilon,count,undefined,p25,p50,p75\n");
        for cell in &self.sensor_sweep.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                cell.p,
                fmt(cell.epsilon),
                cell.nse.count,
                cell.nse.undefined,
                opt(cell.nse.p25),
                opt(cell.nse.p50),
                opt(cell.nse.p75)
            ));
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    fn write_fig9(&self, path: &Path) -> Result<()> {
        let mut out = String::from("p,qr_rank,node_id,count,undefined,p25,p50,p75,mean,sd\n");
        for config in &self.failure.configs {
            for row in &config.rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    config.p,
                    row.qr_rank,
                    row.node_id,
                    row.nse.count,
                    row.nse.undefined,
                    opt(row.nse.p25),
                    opt(row.nse.p50),
                    opt(row.nse.p75),
                    opt(row.nse.mean),
                    opt(row.nse.sd)
                ));
            }
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    fn write_fig10(&self, path: &Path) -> Result<()> {
        let mut out = String::from("node_id,mean_rpr,sd_rpr,mean_nse,sd_nse,n_configs\n");
        for point in &self.rpr_association.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                point.node_id,
                fmt(point.mean_rpr),
                opt(point.sd_rpr),
                fmt(point.mean_nse),
                opt(point.sd_nse),
                point.n_configs
            ));
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }

    fn write_fig11(&self, path: &Path) -> Result<()> {
        let mut out = String::from("p,qr_rank,node_id,rpr\n");
        for config in &self.failure.configs {
            for row in &config.rows {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    config.p,
                    row.qr_rank,
                    row.node_id,
                    opt(row.rpr)
                ));
            }
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }
}

fn fmt(n: Num) -> String {
    crate::snapshot::format_value(n.0)
}

fn opt(n: Option<Num>) -> String {
    n.map(fmt).unwrap_or_default()
}

/// Export of one reconstruction batch: snapshot_id,node_id,truth,reconstructed.
pub fn write_reconstruction_csv<W: Write>(
    mut writer: W,
    node_ids: &[String],
    rows: &[(usize, Vec<f64>, Vec<f64>)],
) -> std::io::Result<()> {
    writeln!(writer, "snapshot_id,node_id,truth,reconstructed")?;
    for (snapshot_id, truth, recon) in rows {
        for (node, id) in node_ids.iter().enumerate() {
            writeln!(
                writer,
                "{snapshot_id},{id},{},{}",
                crate::snapshot::format_value(truth[node]),
                crate::snapshot::format_value(recon[node])
            )?;
        }
    }
    Ok(())
}
