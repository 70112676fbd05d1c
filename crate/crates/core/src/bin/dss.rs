//! Command-line front end: ingest -> fit -> place -> reconstruct -> experiments.
//!
//! Every command reads one key-value config file plus flag overrides (flags
//! win), writes only beneath the output directory, and draws all randomness
//! from the configured seed. Exit codes: 0 success, 2 config error, 3 data
//! error, 4 numerical failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use dss::basis::{energy_spectrum, fit_basis, write_basis_csv, write_singular_values_csv};
use dss::config::{parse_range, RunConfig};
use dss::error::{DssError, Result};
use dss::evaluate::{nse, NoiseSpec};
use dss::experiments::run_experiments;
use dss::placement::select_sensors;
use dss::reconstruct::reconstruct_batch;
use dss::report::{write_reconstruction_csv, Num};
use dss::snapshot::{load_snapshots, split_by_tag, write_snapshots, NodeRegistry};
use dss::synth::generate;
use dss::SnapshotMatrix64;

#[derive(Parser)]
#[command(
    name = "dss",
    version,
    about = "Data-driven sparse sensing: tailored-basis sensor placement and \
             network-state reconstruction"
)]
struct Cli {
    /// Key-value configuration file; flags override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for every random stream (required by stochastic commands).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for experiment fan-out (default: machine parallelism).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory; all files are written beneath it.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic low-rank-plus-noise snapshot dataset.
    Synth {
        /// Number of candidate locations (rows).
        #[arg(long)]
        n: Option<usize>,
        /// Total number of snapshot columns.
        #[arg(long)]
        m: Option<usize>,
        /// True rank of the clean signal.
        #[arg(long)]
        rank: Option<usize>,
        /// Additive noise level relative to the clean signal RMS.
        #[arg(long)]
        noise: Option<f64>,
        /// Trailing columns tagged as the validation split.
        #[arg(long)]
        validate: Option<usize>,
    },
    /// Fit the tailored basis on the training split and export it.
    Fit,
    /// Rank sensor locations for every sensor count in p_range.
    Place,
    /// Reconstruct the validation snapshots from the optimal placement.
    Reconstruct {
        /// Optional measurement-noise half-width applied before reconstruction.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Run the four validation experiments; writes report.json + figure CSVs.
    RunExperiments {
        /// Random-placement trials per sensor count.
        #[arg(long)]
        trials: Option<u64>,
        /// Inclusive sensor-count range, e.g. 1..10.
        #[arg(long, value_name = "A..B")]
        p_range: Option<String>,
    },
    /// Projection-residual table for each sensor of the optimal placement.
    Rpr,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    fs::create_dir_all(&config.out).map_err(|source| DssError::Io {
        path: config.out.display().to_string(),
        source,
    })?;

    match cli.command {
        Command::Synth {
            n,
            m,
            rank,
            noise,
            validate,
        } => {
            if let Some(n) = n {
                config.synth_n = n;
            }
            if let Some(m) = m {
                config.synth_m = m;
            }
            if let Some(rank) = rank {
                config.synth_rank = rank;
            }
            if let Some(noise) = noise {
                config.synth_noise = noise;
            }
            if let Some(validate) = validate {
                config.synth_validate = Some(validate);
            }
            cmd_synth(&config)
        }
        Command::Fit => cmd_fit(&config),
        Command::Place => cmd_place(&config),
        Command::Reconstruct { noise } => cmd_reconstruct(&config, noise),
        Command::RunExperiments { trials, p_range } => {
            if let Some(trials) = trials {
                config.trials = trials;
            }
            if let Some(range) = p_range {
                config.p_range = Some(parse_range(&range)?);
            }
            cmd_run_experiments(&config)
        }
        Command::Rpr => cmd_rpr(&config),
    }
}

fn load_data(config: &RunConfig) -> Result<(NodeRegistry, SnapshotMatrix64)> {
    let (nodes, snapshots, meta) = config.data_paths()?;
    load_snapshots::<f64>(&nodes, &snapshots, &meta)
}

fn cmd_synth(config: &RunConfig) -> Result<()> {
    let spec = config.synth_spec()?;
    let (registry, matrix) = generate::<f64>(&spec)?;
    let nodes = config.out.join("nodes.csv");
    let snapshots = config.out.join("snapshots.csv");
    let meta = config.out.join("snapshots_meta.csv");
    write_snapshots(&registry, &matrix, &nodes, &snapshots, &meta)?;
    println!(
        "synth: {} locations x {} snapshots (rank {}, noise {}, validate {}) -> {}",
        registry.len(),
        matrix.n_snapshots(),
        spec.rank,
        spec.noise,
        spec.validate_count,
        config.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    rank_policy: String,
    resolved_r: usize,
    truncation_ambiguous: bool,
    n_locations: usize,
    n_train_snapshots: usize,
    n_validate_snapshots: usize,
    singular_values: Vec<Num>,
    energy_spectrum: Vec<Num>,
}

fn cmd_fit(config: &RunConfig) -> Result<()> {
    let (registry, matrix) = load_data(config)?;
    let split = split_by_tag(&matrix)?;
    let basis = fit_basis(&split.train, config.rank_policy, Some(config.p))?;

    write_basis_csv(&registry, &basis, &config.out.join("basis.csv"))?;
    write_singular_values_csv(&basis, &config.out.join("singular_values.csv"))?;

    let summary = FitSummary {
        rank_policy: config.rank_policy.to_string(),
        resolved_r: basis.r,
        truncation_ambiguous: basis.truncation_is_ambiguous(),
        n_locations: registry.len(),
        n_train_snapshots: split.train.n_snapshots(),
        n_validate_snapshots: split.validate.n_snapshots(),
        singular_values: basis.singular_values.iter().map(|&s| Num(s)).collect(),
        energy_spectrum: energy_spectrum(&basis).into_iter().map(Num).collect(),
    };
    write_json(&config.out.join("fit_summary.json"), &summary)?;
    if summary.truncation_ambiguous {
        eprintln!(
            "warning: sigma_{} ~= sigma_{}; the truncation is ill-defined",
            basis.r,
            basis.r + 1
        );
    }
    println!("fit: resolved rank {} -> {}", basis.r, config.out.display());
    Ok(())
}

fn cmd_place(config: &RunConfig) -> Result<()> {
    let (registry, matrix) = load_data(config)?;
    let split = split_by_tag(&matrix)?;
    for p in config.effective_p_range() {
        let basis = fit_basis(&split.train, config.rank_policy, Some(p))?;
        let (placement, _) = select_sensors(&basis, p)?;
        let path = config.out.join(format!("placement_p{p}.csv"));
        let mut out = String::from("rank,node_id,row_index\n");
        for (rank, &row) in placement.ordered_nodes.iter().enumerate() {
            out.push_str(&format!("{},{},{row}\n", rank + 1, registry.node_id(row)));
        }
        fs::write(&path, out).map_err(|source| DssError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    println!(
        "place: wrote placements for p in {:?} -> {}",
        config.effective_p_range(),
        config.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SnapshotScore {
    snapshot_id: usize,
    nse: Option<Num>,
    condition_number: Option<Num>,
    rank_deficient: bool,
    negative_entries: u64,
}

#[derive(Serialize)]
struct ReconstructionSummary {
    p: usize,
    resolved_r: usize,
    noise_epsilon: Num,
    placement: Vec<String>,
    snapshots: Vec<SnapshotScore>,
}

fn cmd_reconstruct(config: &RunConfig, noise: Option<f64>) -> Result<()> {
    let (registry, matrix) = load_data(config)?;
    let split = split_by_tag(&matrix)?;
    let basis = fit_basis(&split.train, config.rank_policy, Some(config.p))?;
    let (placement, _) = select_sensors(&basis, config.p)?;

    let epsilon = noise.unwrap_or(0.0);
    let noise_spec = if epsilon > 0.0 {
        Some(NoiseSpec {
            epsilon,
            distribution: config.noise_distribution,
            seed: config.require_seed()?,
        })
    } else {
        None
    };
    let results = reconstruct_batch(
        &split.validate,
        &basis,
        &placement,
        noise_spec.as_ref(),
        config.rank_tolerance,
    )?;

    let node_ids: Vec<String> = registry
        .entries()
        .iter()
        .map(|e| e.node_id.clone())
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut scores = Vec::with_capacity(results.len());
    for (j, result) in results.iter().enumerate() {
        let truth: Vec<f64> = split.validate.column(j).to_vec();
        let estimate: Vec<f64> = result.x_hat.to_vec();
        let snapshot_id = split.validate.meta()[j].column_index;
        let score = nse(&truth, &estimate)?;
        scores.push(SnapshotScore {
            snapshot_id,
            nse: score.map(Num),
            condition_number: result
                .condition_number
                .is_finite()
                .then_some(Num(result.condition_number)),
            rank_deficient: result.rank_deficient,
            negative_entries: estimate.iter().filter(|&&v| v < 0.0).count() as u64,
        });
        rows.push((snapshot_id, truth, estimate));
    }

    let csv_path = config.out.join("reconstruction.csv");
    let file = fs::File::create(&csv_path).map_err(|source| DssError::Io {
        path: csv_path.display().to_string(),
        source,
    })?;
    write_reconstruction_csv(std::io::BufWriter::new(file), &node_ids, &rows).map_err(
        |source| DssError::Io {
            path: csv_path.display().to_string(),
            source,
        },
    )?;

    let summary = ReconstructionSummary {
        p: config.p,
        resolved_r: basis.r,
        noise_epsilon: Num(epsilon),
        placement: placement
            .ordered_nodes
            .iter()
            .map(|&i| registry.node_id(i).to_string())
            .collect(),
        snapshots: scores,
    };
    write_json(&config.out.join("reconstruction_summary.json"), &summary)?;
    println!(
        "reconstruct: {} validation snapshots with p = {} -> {}",
        results.len(),
        config.p,
        config.out.display()
    );
    Ok(())
}

fn cmd_run_experiments(config: &RunConfig) -> Result<()> {
    let (registry, matrix) = load_data(config)?;
    let split = split_by_tag(&matrix)?;
    let experiment_config = config.experiment_config()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| DssError::Config(format!("thread pool: {e}")))?;
    let report = pool.install(|| run_experiments(&registry, &split, &experiment_config))?;

    report.write_json(&config.out.join("report.json"))?;
    report.write_figure_csvs(&config.out)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "run-experiments: p in {:?}, {} trials/p, seed {} -> {}",
        experiment_config.p_range,
        experiment_config.trials,
        experiment_config.seed,
        config.out.display()
    );
    Ok(())
}

fn cmd_rpr(config: &RunConfig) -> Result<()> {
    let (registry, matrix) = load_data(config)?;
    let split = split_by_tag(&matrix)?;
    let basis = fit_basis(&split.train, config.rank_policy, Some(config.p))?;
    let (placement, _) = select_sensors(&basis, config.p)?;

    let mut out = String::from("lost_node_id,rpr,pr,placement_size\n");
    for &lost in &placement.ordered_nodes {
        let row = dss::evaluate::rpr(&basis, &placement, lost, config.rank_tolerance)?;
        out.push_str(&format!(
            "{},{},{},{}\n",
            registry.node_id(lost),
            row.rpr
                .map(|v| dss::snapshot::format_value(v.clamp(0.0, 1.0)))
                .unwrap_or_default(),
            dss::snapshot::format_value(row.pr),
            row.placement_size
        ));
    }
    let path = config.out.join("rpr.csv");
    fs::write(&path, out).map_err(|source| DssError::Io {
        path: path.display().to_string(),
        source,
    })?;
    println!("rpr: p = {} -> {}", config.p, path.display());
    Ok(())
}

fn write_json<S: Serialize>(path: &std::path::Path, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| DssError::Numerical(format!("serialization failed: {e}")))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| DssError::Io {
        path: path.display().to_string(),
        source,
    })
}
