//! End-to-end tests of the `dss` binary: exit codes, idempotence, and
//! input immutability.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn dss(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dss"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn file_digest(path: &Path) -> String {
    format!("{:x}", Sha256::digest(fs::read(path).unwrap()))
}

fn write_config(dir: &Path, body: &str) {
    fs::write(dir.join("run.conf"), body).unwrap();
}

fn synth_fixture(dir: &Path) {
    let out = dss(
        dir,
        &[
            "synth",
            "--seed",
            "3",
            "--out",
            "data",
            "--n",
            "15",
            "--m",
            "40",
            "--rank",
            "3",
            "--noise",
            "0.02",
            "--validate",
            "8",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    write_config(
        dir,
        "nodes = data/nodes.csv\nsnapshots = data/snapshots.csv\n\
         snapshots_meta = data/snapshots_meta.csv\nseed = 5\ntrials = 40\np_range = 1..4\n",
    );
}

#[test]
fn missing_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "nodes = data/nodes.csv\nsnapshots = data/snapshots.csv\n",
    );
    let out = dss(dir.path(), &["fit", "--config", "run.conf", "--out", "out"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("snapshots_meta"), "{stderr}");
}

#[test]
fn missing_seed_for_stochastic_command_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dss(dir.path(), &["synth", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn unreadable_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "nodes = nope/nodes.csv\nsnapshots = nope/snapshots.csv\n\
         snapshots_meta = nope/meta.csv\nseed = 1\n",
    );
    let out = dss(dir.path(), &["fit", "--config", "run.conf", "--out", "out"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn non_finite_values_exit_3_naming_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("nodes.csv"), "node_id,x,y\nA,,\nB,,\n").unwrap();
    fs::write(dir.path().join("snapshots.csv"), "A,1,2\nB,3,NaN\n").unwrap();
    fs::write(
        dir.path().join("meta.csv"),
        "column_index,scenario_id,event_id,target_node_id,split_tag\n\
         0,s,e,,train\n1,s,e,,validate\n",
    )
    .unwrap();
    write_config(
        dir.path(),
        "nodes = nodes.csv\nsnapshots = snapshots.csv\nsnapshots_meta = meta.csv\nseed = 1\n",
    );
    let out = dss(dir.path(), &["fit", "--config", "run.conf", "--out", "out"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("row 1") && stderr.contains("column 1"),
        "{stderr}"
    );
}

#[test]
fn all_zero_training_matrix_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("nodes.csv"), "node_id,x,y\nA,,\nB,,\n").unwrap();
    fs::write(dir.path().join("snapshots.csv"), "A,0,0\nB,0,0\n").unwrap();
    fs::write(
        dir.path().join("meta.csv"),
        "column_index,scenario_id,event_id,target_node_id,split_tag\n\
         0,s,e,,train\n1,s,e,,validate\n",
    )
    .unwrap();
    write_config(
        dir.path(),
        "nodes = nodes.csv\nsnapshots = snapshots.csv\nsnapshots_meta = meta.csv\nseed = 1\n",
    );
    let out = dss(dir.path(), &["fit", "--config", "run.conf", "--out", "out"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("all zeros"));
}

#[test]
fn sensor_count_beyond_locations_errors() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path());
    let out = dss(
        dir.path(),
        &["place", "--config", "run.conf", "--out", "out"],
    );
    assert!(out.status.success());
    // 15 locations but a range reaching past them.
    write_config(
        dir.path(),
        "nodes = data/nodes.csv\nsnapshots = data/snapshots.csv\n\
         snapshots_meta = data/snapshots_meta.csv\nseed = 5\np_range = 14..20\n",
    );
    let out = dss(
        dir.path(),
        &["place", "--config", "run.conf", "--out", "out"],
    );
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn synth_and_fit_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path());
    let first = file_digest(&dir.path().join("data/snapshots.csv"));
    let out = dss(
        dir.path(),
        &[
            "synth",
            "--seed",
            "3",
            "--out",
            "data",
            "--n",
            "15",
            "--m",
            "40",
            "--rank",
            "3",
            "--noise",
            "0.02",
            "--validate",
            "8",
        ],
    );
    assert!(out.status.success());
    assert_eq!(first, file_digest(&dir.path().join("data/snapshots.csv")));

    for _ in 0..2 {
        let out = dss(
            dir.path(),
            &["fit", "--config", "run.conf", "--out", "fit_out"],
        );
        assert!(out.status.success());
    }
    let basis_a = file_digest(&dir.path().join("fit_out/basis.csv"));
    let out = dss(
        dir.path(),
        &["fit", "--config", "run.conf", "--out", "fit_again"],
    );
    assert!(out.status.success());
    assert_eq!(
        basis_a,
        file_digest(&dir.path().join("fit_again/basis.csv"))
    );
}

#[test]
fn run_experiments_writes_everything_and_never_touches_inputs() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path());
    let before: Vec<String> = ["nodes.csv", "snapshots.csv", "snapshots_meta.csv"]
        .iter()
        .map(|f| file_digest(&dir.path().join("data").join(f)))
        .collect();

    let out = dss(
        dir.path(),
        &["run-experiments", "--config", "run.conf", "--out", "exp"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    for file in [
        "report.json",
        "fig4_nse_by_scheme.csv",
        "fig5_nse_by_p.csv",
        "fig6_per_node.csv",
        "fig8_noise.csv",
        "fig9_failure.csv",
        "fig10_rpr_nse.csv",
        "fig11_rpr_by_config.csv",
    ] {
        assert!(dir.path().join("exp").join(file).exists(), "missing {file}");
    }

    let after: Vec<String> = ["nodes.csv", "snapshots.csv", "snapshots_meta.csv"]
        .iter()
        .map(|f| file_digest(&dir.path().join("data").join(f)))
        .collect();
    assert_eq!(before, after);

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("exp/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert!(report["random_vs_optimal"]["pooled_optimal"]["p50"].is_number());
}

#[test]
fn reconstruct_and_rpr_outputs_have_the_documented_shapes() {
    let dir = tempfile::tempdir().unwrap();
    synth_fixture(dir.path());
    let out = dss(
        dir.path(),
        &["reconstruct", "--config", "run.conf", "--out", "rec"],
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("rec/reconstruction.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("snapshot_id,node_id,truth,reconstructed")
    );
    // 8 validation snapshots x 15 nodes.
    assert_eq!(lines.count(), 8 * 15);

    let out = dss(
        dir.path(),
        &["rpr", "--config", "run.conf", "--out", "rpr_out"],
    );
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("rpr_out/rpr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("lost_node_id,rpr,pr,placement_size"));
    assert_eq!(lines.count(), 3);
}
