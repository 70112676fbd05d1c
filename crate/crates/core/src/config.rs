//! Run configuration: a plain key-value file plus flag overrides.
//!
//! Flags win over file values; the file format is line-oriented
//! `key = value` with `#` comments, chosen so experiment configs can be
//! archived next to their outputs. Unknown keys are rejected (they are
//! almost always typos) and missing required keys are reported by name.

use std::fs;
use std::path::{Path, PathBuf};

use crate::basis::RankPolicy;
use crate::error::{DssError, Result};
use crate::evaluate::NoiseDistribution;
use crate::experiments::ExperimentConfig;
use crate::synth::SynthSpec;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub nodes: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub snapshots_meta: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub rank_policy: RankPolicy,
    pub p: usize,
    pub p_range: Option<(usize, usize)>,
    pub trials: u64,
    pub noise_levels: Vec<f64>,
    pub noise_distribution: NoiseDistribution,
    pub rank_tolerance: f64,
    pub per_node_p: usize,
    pub units: String,
    pub synth_n: usize,
    pub synth_m: usize,
    pub synth_rank: usize,
    pub synth_noise: f64,
    pub synth_validate: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nodes: None,
            snapshots: None,
            snapshots_meta: None,
            out: PathBuf::from("out"),
            seed: None,
            threads: None,
            rank_policy: RankPolicy::MatchSensorCount,
            p: 3,
            p_range: None,
            trials: 1000,
            noise_levels: vec![0.05, 0.10, 0.15],
            noise_distribution: NoiseDistribution::UniformMultiplicative,
            rank_tolerance: 1e-10,
            per_node_p: 3,
            units: "CFS".into(),
            synth_n: 77,
            synth_m: 300,
            synth_rank: 3,
            synth_noise: 0.05,
            synth_validate: None,
        }
    }
}

fn bad(key: &str, value: &str) -> DssError {
    DssError::Config(format!("bad value '{value}' for key '{key}'"))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = RunConfig::default();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|source| DssError::Io {
                path: path.display().to_string(),
                source,
            })?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    DssError::Config(format!(
                        "{}:{}: expected 'key = value'",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                config.set(key.trim(), value.trim())?;
            }
        }
        Ok(config)
    }

    /// Apply one key/value pair; used both by the file parser and by flag
    /// overrides (flags call this after the file loads, so flags win).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "nodes" => self.nodes = Some(PathBuf::from(value)),
            "snapshots" => self.snapshots = Some(PathBuf::from(value)),
            "snapshots_meta" => self.snapshots_meta = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = Some(value.parse().map_err(|_| bad(key, value))?),
            "threads" => self.threads = Some(value.parse().map_err(|_| bad(key, value))?),
            "rank_policy" => self.rank_policy = parse_rank_policy(value)?,
            "p" => self.p = value.parse().map_err(|_| bad(key, value))?,
            "p_range" => self.p_range = Some(parse_range(value)?),
            "trials" => self.trials = value.parse().map_err(|_| bad(key, value))?,
            "noise_levels" => {
                self.noise_levels = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| bad(key, value)))
                    .collect::<Result<_>>()?
            }
            "noise_distribution" => {
                self.noise_distribution =
                    NoiseDistribution::parse(value).ok_or_else(|| bad(key, value))?
            }
            "rank_tolerance" => self.rank_tolerance = value.parse().map_err(|_| bad(key, value))?,
            "per_node_p" => self.per_node_p = value.parse().map_err(|_| bad(key, value))?,
            "units" => self.units = value.to_string(),
            "synth_n" => self.synth_n = value.parse().map_err(|_| bad(key, value))?,
            "synth_m" => self.synth_m = value.parse().map_err(|_| bad(key, value))?,
            "synth_rank" => self.synth_rank = value.parse().map_err(|_| bad(key, value))?,
            "synth_noise" => self.synth_noise = value.parse().map_err(|_| bad(key, value))?,
            "synth_validate" => {
                self.synth_validate = Some(value.parse().map_err(|_| bad(key, value))?)
            }
            _ => {
                return Err(DssError::Config(format!(
                    "unknown configuration key '{key}'"
                )))
            }
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| DssError::Config("missing required key 'seed'".into()))
    }

    fn require_path(&self, key: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        value
            .clone()
            .ok_or_else(|| DssError::Config(format!("missing required key '{key}'")))
    }

    pub fn data_paths(&self) -> Result<(PathBuf, PathBuf, PathBuf)> {
        Ok((
            self.require_path("nodes", &self.nodes)?,
            self.require_path("snapshots", &self.snapshots)?,
            self.require_path("snapshots_meta", &self.snapshots_meta)?,
        ))
    }

    /// Sensor counts for sweep-style commands: explicit p_range, else 1..=10.
    pub fn effective_p_range(&self) -> Vec<usize> {
        match self.p_range {
            Some((lo, hi)) => (lo..=hi).collect(),
            None => (1..=10).collect(),
        }
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            p_range: self.effective_p_range(),
            trials: self.trials,
            seed: self.require_seed()?,
            noise_levels: self.noise_levels.clone(),
            noise_distribution: self.noise_distribution,
            rank_policy: self.rank_policy,
            rank_tolerance: self.rank_tolerance,
            per_node_p: self.per_node_p,
            units: self.units.clone(),
        })
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        Ok(SynthSpec {
            n_locations: self.synth_n,
            n_snapshots: self.synth_m,
            rank: self.synth_rank,
            noise: self.synth_noise,
            validate_count: self
                .synth_validate
                .unwrap_or_else(|| (self.synth_m / 5).max(1)),
            seed: self.require_seed()?,
        })
    }
}

fn parse_rank_policy(value: &str) -> Result<RankPolicy> {
    if value == "match_sensor_count" {
        return Ok(RankPolicy::MatchSensorCount);
    }
    if let Some(r) = value.strip_prefix("fixed:") {
        return Ok(RankPolicy::Fixed(
            r.parse().map_err(|_| bad("rank_policy", value))?,
        ));
    }
    if let Some(f) = value.strip_prefix("energy:") {
        return Ok(RankPolicy::EnergyFraction(
            f.parse().map_err(|_| bad("rank_policy", value))?,
        ));
    }
    Err(DssError::Config(format!(
        "rank_policy must be 'match_sensor_count', 'fixed:R', or 'energy:F', got '{value}'"
    )))
}

/// Inclusive range "A..B" (or a single count "P").
pub fn parse_range(value: &str) -> Result<(usize, usize)> {
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad("p_range", value))?;
        let hi: usize = hi.trim().parse().map_err(|_| bad("p_range", value))?;
        if lo < 1 || hi < lo {
            return Err(bad("p_range", value));
        }
        return Ok((lo, hi));
    }
    let single: usize = value.trim().parse().map_err(|_| bad("p_range", value))?;
    if single < 1 {
        return Err(bad("p_range", value));
    }
    Ok((single, single))
}
