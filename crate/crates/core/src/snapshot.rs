//! Snapshot-matrix ingest, validation, and train/validate partitioning.
//!
//! This module is the single source of truth for data layout: one row per
//! candidate sensor location (node), one column per snapshot. Everything
//! downstream addresses rows by the registry's `row_index`.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{DssError, Result};
use crate::scalar::Real;

/// One candidate sensor location.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEntry {
    pub node_id: String,
    pub row_index: usize,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// Ordered set of nodes; `row_index` is dense 0..n with no gaps.
#[derive(Debug, Clone)]
pub struct NodeRegistry {
    entries: Vec<NodeEntry>,
    by_id: HashMap<String, usize>,
}

impl NodeRegistry {
    pub fn new(entries: Vec<NodeEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(DssError::Consistency("node registry is empty".into()));
        }
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            if entry.row_index != i {
                return Err(DssError::Consistency(format!(
                    "node '{}' has row_index {} but occupies position {}",
                    entry.node_id, entry.row_index, i
                )));
            }
            if by_id.insert(entry.node_id.clone(), i).is_some() {
                return Err(DssError::Consistency(format!(
                    "duplicate node_id '{}'",
                    entry.node_id
                )));
            }
        }
        Ok(NodeRegistry { entries, by_id })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[NodeEntry] {
        &self.entries
    }

    pub fn row_of(&self, node_id: &str) -> Option<usize> {
        self.by_id.get(node_id).copied()
    }

    pub fn node_id(&self, row: usize) -> &str {
        &self.entries[row].node_id
    }
}

/// Train/validate membership of one snapshot column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Validate,
}

impl SplitTag {
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "train" => Some(SplitTag::Train),
            "validate" => Some(SplitTag::Validate),
            _ => None,
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitTag::Train => write!(f, "train"),
            SplitTag::Validate => write!(f, "validate"),
        }
    }
}

/// Provenance of one snapshot column. `column_index` refers to the source
/// matrix and survives splitting, so noise streams and exports stay keyed
/// to a stable identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMeta {
    pub column_index: usize,
    pub scenario_id: String,
    pub event_id: String,
    pub target_node_id: String,
    pub split_tag: SplitTag,
}

/// n_locations-by-n_snapshots matrix of network states plus per-column
/// provenance. Values are validated finite at construction.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix<T> {
    values: Array2<T>,
    meta: Vec<SnapshotMeta>,
}

impl<T: Real> SnapshotMatrix<T> {
    pub fn new(values: Array2<T>, meta: Vec<SnapshotMeta>) -> Result<Self> {
        let (n_loc, n_snap) = values.dim();
        if n_loc == 0 || n_snap == 0 {
            return Err(DssError::Consistency(format!(
                "snapshot matrix must be non-empty, got {n_loc} locations x {n_snap} snapshots"
            )));
        }
        if n_snap != meta.len() {
            return Err(DssError::Consistency(format!(
                "matrix has {n_snap} columns but {} metadata rows",
                meta.len()
            )));
        }
        for ((row, col), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(DssError::Consistency(format!(
                    "non-finite value at row {row}, column {col}"
                )));
            }
        }
        Ok(SnapshotMatrix { values, meta })
    }

    pub fn n_locations(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, T> {
        self.values.column(j)
    }

    pub fn meta(&self) -> &[SnapshotMeta] {
        &self.meta
    }

    fn take_columns(&self, keep: &[usize]) -> Self {
        let mut values = Array2::zeros((self.n_locations(), keep.len()));
        let mut meta = Vec::with_capacity(keep.len());
        for (dst, &src) in keep.iter().enumerate() {
            values.column_mut(dst).assign(&self.values.column(src));
            meta.push(self.meta[src].clone());
        }
        SnapshotMatrix { values, meta }
    }
}

/// A train/validate partition of one source matrix. Column order inside
/// each side preserves source order; both sides report against the same
/// node registry.
#[derive(Debug, Clone)]
pub struct DataSplit<T> {
    pub train: SnapshotMatrix<T>,
    pub validate: SnapshotMatrix<T>,
}

/// Partition by the per-column split tag.
pub fn split_by_tag<T: Real>(matrix: &SnapshotMatrix<T>) -> Result<DataSplit<T>> {
    let mut train_cols = Vec::new();
    let mut validate_cols = Vec::new();
    for (j, meta) in matrix.meta().iter().enumerate() {
        match meta.split_tag {
            SplitTag::Train => train_cols.push(j),
            SplitTag::Validate => validate_cols.push(j),
        }
    }
    if train_cols.is_empty() {
        return Err(DssError::Consistency("empty training split".into()));
    }
    if validate_cols.is_empty() {
        return Err(DssError::Consistency("empty validation split".into()));
    }
    Ok(DataSplit {
        train: matrix.take_columns(&train_cols),
        validate: matrix.take_columns(&validate_cols),
    })
}

const NODES_HEADER: [&str; 3] = ["node_id", "x", "y"];
const META_HEADER: [&str; 5] = [
    "column_index",
    "scenario_id",
    "event_id",
    "target_node_id",
    "split_tag",
];

/// Load and cross-validate the three input files.
///
/// `nodes.csv` fixes the row order; `snapshots.csv` rows are matched to it
/// by node_id label, so file row order there is free. The metadata sidecar
/// must cover columns 0..m exactly.
pub fn load_snapshots<T: Real>(
    nodes_path: &Path,
    snapshots_path: &Path,
    meta_path: &Path,
) -> Result<(NodeRegistry, SnapshotMatrix<T>)> {
    let registry = load_nodes(nodes_path)?;
    let values = load_values::<T>(snapshots_path, &registry)?;
    let meta = load_meta(meta_path, values.ncols())?;
    let matrix = SnapshotMatrix::new(values, meta)?;
    Ok((registry, matrix))
}

fn csv_reader(path: &Path, flexible: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| DssError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(flexible)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_err(path: &Path, message: impl Into<String>) -> DssError {
    DssError::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn load_nodes(path: &Path) -> Result<NodeRegistry> {
    let mut reader = csv_reader(path, false)?;
    let mut entries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if line == 0 {
            if record.iter().ne(NODES_HEADER) {
                return Err(parse_err(path, "expected header 'node_id,x,y'"));
            }
            continue;
        }
        if record.len() != 3 {
            return Err(parse_err(
                path,
                format!("line {}: expected 3 fields", line + 1),
            ));
        }
        let coord = |field: &str, name: &str| -> Result<Option<f64>> {
            if field.is_empty() {
                return Ok(None);
            }
            field
                .parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(path, format!("line {}: bad {name} coordinate", line + 1)))
        };
        entries.push(NodeEntry {
            node_id: record[0].to_string(),
            row_index: entries.len(),
            x: coord(&record[1], "x")?,
            y: coord(&record[2], "y")?,
        });
    }
    NodeRegistry::new(entries)
}

fn load_values<T: Real>(path: &Path, registry: &NodeRegistry) -> Result<Array2<T>> {
    let mut reader = csv_reader(path, true)?;
    let n_loc = registry.len();
    let mut rows: Vec<Option<Vec<T>>> = vec![None; n_loc];
    let mut width: Option<usize> = None;

    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() < 2 {
            return Err(parse_err(
                path,
                format!("line {}: expected node_id plus values", line + 1),
            ));
        }
        let node_id = &record[0];
        let row = registry.row_of(node_id).ok_or_else(|| {
            DssError::Consistency(format!(
                "snapshot row label '{node_id}' is absent from the node registry"
            ))
        })?;
        if rows[row].is_some() {
            return Err(DssError::Consistency(format!(
                "node '{node_id}' appears twice in the snapshot file"
            )));
        }
        let m = record.len() - 1;
        match width {
            None => width = Some(m),
            Some(w) if w != m => {
                return Err(parse_err(
                    path,
                    format!("line {}: row has {m} values, expected {w}", line + 1),
                ))
            }
            _ => {}
        }
        let mut parsed = Vec::with_capacity(m);
        for (col, field) in record.iter().skip(1).enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                parse_err(
                    path,
                    format!("unparseable value at row {row}, column {col}"),
                )
            })?;
            if !value.is_finite() {
                return Err(DssError::Consistency(format!(
                    "non-finite value at row {row}, column {col}"
                )));
            }
            parsed.push(T::from_f64_lossy(value));
        }
        rows[row] = Some(parsed);
    }

    let width = width.ok_or_else(|| parse_err(path, "snapshot file is empty"))?;
    let mut values = Array2::zeros((n_loc, width));
    for (row, parsed) in rows.into_iter().enumerate() {
        let parsed = parsed.ok_or_else(|| {
            DssError::Consistency(format!(
                "node '{}' has no row in the snapshot file",
                registry.node_id(row)
            ))
        })?;
        for (col, v) in parsed.into_iter().enumerate() {
            values[(row, col)] = v;
        }
    }
    Ok(values)
}

fn load_meta(path: &Path, n_snapshots: usize) -> Result<Vec<SnapshotMeta>> {
    let mut reader = csv_reader(path, false)?;
    let mut slots: Vec<Option<SnapshotMeta>> = vec![None; n_snapshots];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if line == 0 {
            if record.iter().ne(META_HEADER) {
                return Err(parse_err(
                    path,
                    "expected header 'column_index,scenario_id,event_id,target_node_id,split_tag'",
                ));
            }
            continue;
        }
        if record.len() != 5 {
            return Err(parse_err(
                path,
                format!("line {}: expected 5 fields", line + 1),
            ));
        }
        let column_index: usize = record[0]
            .parse()
            .map_err(|_| parse_err(path, format!("line {}: bad column_index", line + 1)))?;
        if column_index >= n_snapshots {
            return Err(DssError::Consistency(format!(
                "metadata column_index {column_index} outside 0..{n_snapshots}"
            )));
        }
        let split_tag = SplitTag::parse(&record[4]).ok_or_else(|| {
            DssError::Consistency(format!(
                "column {column_index}: split_tag must be 'train' or 'validate', got '{}'",
                &record[4]
            ))
        })?;
        let meta = SnapshotMeta {
            column_index,
            scenario_id: record[1].to_string(),
            event_id: record[2].to_string(),
            target_node_id: record[3].to_string(),
            split_tag,
        };
        if slots[column_index].replace(meta).is_some() {
            return Err(DssError::Consistency(format!(
                "duplicate metadata for column {column_index}"
            )));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(col, slot)| {
            slot.ok_or_else(|| DssError::Consistency(format!("no metadata for column {col}")))
        })
        .collect()
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|source| DssError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(BufWriter::new(file))
}

fn write_record<W: std::io::Write>(writer: &mut csv::Writer<W>, fields: &[&str]) -> Result<()> {
    writer.write_record(fields).map_err(|e| DssError::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e),
    })
}

/// Write the three files back in the same formats `load_snapshots` reads.
/// Values carry 17 significant digits so a reload is bit-identical.
pub fn write_snapshots<T: Real>(
    registry: &NodeRegistry,
    matrix: &SnapshotMatrix<T>,
    nodes_path: &Path,
    snapshots_path: &Path,
    meta_path: &Path,
) -> Result<()> {
    let mut nodes = csv::Writer::from_writer(create_file(nodes_path)?);
    write_record(&mut nodes, &NODES_HEADER)?;
    for entry in registry.entries() {
        let x = entry.x.map(format_value).unwrap_or_default();
        let y = entry.y.map(format_value).unwrap_or_default();
        write_record(&mut nodes, &[&entry.node_id, &x, &y])?;
    }
    nodes.flush().map_err(|source| DssError::Io {
        path: nodes_path.display().to_string(),
        source,
    })?;

    let mut snaps = csv::Writer::from_writer(create_file(snapshots_path)?);
    for (row, entry) in registry.entries().iter().enumerate() {
        let mut fields = vec![entry.node_id.clone()];
        for j in 0..matrix.n_snapshots() {
            fields.push(format_value(matrix.values()[(row, j)].to_f64_lossy()));
        }
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        write_record(&mut snaps, &refs)?;
    }
    snaps.flush().map_err(|source| DssError::Io {
        path: snapshots_path.display().to_string(),
        source,
    })?;

    let mut meta = csv::Writer::from_writer(create_file(meta_path)?);
    write_record(&mut meta, &META_HEADER)?;
    for m in matrix.meta() {
        write_record(
            &mut meta,
            &[
                &m.column_index.to_string(),
                &m.scenario_id,
                &m.event_id,
                &m.target_node_id,
                &m.split_tag.to_string(),
            ],
        )?;
    }
    meta.flush().map_err(|source| DssError::Io {
        path: meta_path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// 17 significant decimal digits: enough to round-trip any f64.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn meta_row(col: usize, tag: SplitTag) -> SnapshotMeta {
        SnapshotMeta {
            column_index: col,
            scenario_id: format!("s{col}"),
            event_id: format!("e{}", col % 2),
            target_node_id: String::new(),
            split_tag: tag,
        }
    }

    fn write(path: &Path, content: &str) {
        fs::write(path, content).unwrap();
    }

    #[test]
    fn loads_a_small_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = dir.path().join("nodes.csv");
        let snaps = dir.path().join("snapshots.csv");
        let meta = dir.path().join("meta.csv");
        write(&nodes, "node_id,x,y\nA,0.0,1.0\nB,,\nC,2.5,-3.0\n");
        write(&snaps, "B,4,5,6,7\nA,0,1,2,3\nC,8,9,10,11\n");
        write(
            &meta,
            "column_index,scenario_id,event_id,target_node_id,split_tag\n\
             0,s0,e0,A,train\n1,s1,e1,A,train\n2,s2,e0,B,validate\n3,s3,e1,B,validate\n",
        );
        let (registry, matrix) = load_snapshots::<f64>(&nodes, &snaps, &meta).unwrap();
        assert_eq!(registry.len(), 3);
        assert_eq!(matrix.n_locations(), 3);
        assert_eq!(matrix.n_snapshots(), 4);
        // Row order follows the registry, not the snapshot file.
        assert_eq!(matrix.values()[(0, 0)], 0.0);
        assert_eq!(matrix.values()[(1, 0)], 4.0);
        assert_eq!(matrix.values()[(2, 3)], 11.0);
        assert_eq!(registry.entries()[1].x, None);
    }

    #[test]
    fn rejects_nan_naming_the_cell() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = dir.path().join("nodes.csv");
        let snaps = dir.path().join("snapshots.csv");
        let meta = dir.path().join("meta.csv");
        write(&nodes, "node_id,x,y\nA,,\nB,,\nC,,\n");
        write(&snaps, "A,0,1\nB,2,3\nC,4,NaN\n");
        write(
            &meta,
            "column_index,scenario_id,event_id,target_node_id,split_tag\n\
             0,s0,e0,,train\n1,s1,e0,,validate\n",
        );
        let err = load_snapshots::<f64>(&nodes, &snaps, &meta).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("row 2"), "{text}");
        assert!(text.contains("column 1"), "{text}");
    }

    #[test]
    fn rejects_unknown_and_duplicate_rows() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = dir.path().join("nodes.csv");
        let snaps = dir.path().join("snapshots.csv");
        let meta = dir.path().join("meta.csv");
        write(&nodes, "node_id,x,y\nA,,\nB,,\n");
        write(&snaps, "A,0\nX,1\n");
        write(
            &meta,
            "column_index,scenario_id,event_id,target_node_id,split_tag\n0,s,e,,train\n",
        );
        let err = load_snapshots::<f64>(&nodes, &snaps, &meta).unwrap_err();
        assert!(err.to_string().contains("'X'"));

        write(&snaps, "A,0\nA,1\n");
        let err = load_snapshots::<f64>(&nodes, &snaps, &meta).unwrap_err();
        assert!(err.to_string().contains("twice"));
    }

    #[test]
    fn duplicate_node_ids_rejected() {
        let entries = vec![
            NodeEntry {
                node_id: "A".into(),
                row_index: 0,
                x: None,
                y: None,
            },
            NodeEntry {
                node_id: "A".into(),
                row_index: 1,
                x: None,
                y: None,
            },
        ];
        assert!(NodeRegistry::new(entries).is_err());
    }

    #[test]
    fn split_partitions_in_source_order() {
        let values = Array2::from_shape_fn((2, 6), |(i, j)| (i * 6 + j) as f64);
        let tags = [
            SplitTag::Train,
            SplitTag::Train,
            SplitTag::Train,
            SplitTag::Validate,
            SplitTag::Validate,
            SplitTag::Validate,
        ];
        let meta: Vec<_> = tags
            .iter()
            .enumerate()
            .map(|(j, &t)| meta_row(j, t))
            .collect();
        let matrix = SnapshotMatrix::new(values, meta).unwrap();
        let split = split_by_tag(&matrix).unwrap();
        assert_eq!(split.train.n_snapshots(), 3);
        assert_eq!(split.validate.n_snapshots(), 3);
        assert_eq!(split.train.n_snapshots() + split.validate.n_snapshots(), 6);
        assert_eq!(split.validate.meta()[0].column_index, 3);
        assert_eq!(split.validate.values()[(0, 0)], 3.0);
    }

    #[test]
    fn alternating_tags_put_even_columns_in_train() {
        let values = Array2::from_shape_fn((1, 10), |(_, j)| j as f64);
        let meta: Vec<_> = (0..10)
            .map(|j| {
                meta_row(
                    j,
                    if j % 2 == 0 {
                        SplitTag::Train
                    } else {
                        SplitTag::Validate
                    },
                )
            })
            .collect();
        let matrix = SnapshotMatrix::new(values, meta).unwrap();
        let split = split_by_tag(&matrix).unwrap();
        let train_cols: Vec<usize> = split.train.meta().iter().map(|m| m.column_index).collect();
        assert_eq!(train_cols, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn all_train_is_an_error() {
        let values = Array2::from_shape_fn((1, 3), |(_, j)| j as f64);
        let meta: Vec<_> = (0..3).map(|j| meta_row(j, SplitTag::Train)).collect();
        let matrix = SnapshotMatrix::new(values, meta).unwrap();
        let err = split_by_tag(&matrix).unwrap_err();
        assert!(err.to_string().contains("empty validation split"));
    }

    #[test]
    fn write_then_load_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![
            NodeEntry {
                node_id: "J303".into(),
                row_index: 0,
                x: Some(1.5),
                y: None,
            },
            NodeEntry {
                node_id: "OF-02".into(),
                row_index: 1,
                x: None,
                y: Some(-2.25),
            },
        ];
        let registry = NodeRegistry::new(entries).unwrap();
        let values = Array2::from_shape_fn((2, 3), |(i, j)| {
            (1.0 + i as f64) * (j as f64 + 0.1) / 3.0f64.sqrt()
        });
        let meta = vec![
            meta_row(0, SplitTag::Train),
            meta_row(1, SplitTag::Train),
            meta_row(2, SplitTag::Validate),
        ];
        let matrix = SnapshotMatrix::new(values, meta).unwrap();

        let nodes = dir.path().join("nodes.csv");
        let snaps = dir.path().join("snapshots.csv");
        let metap = dir.path().join("meta.csv");
        write_snapshots(&registry, &matrix, &nodes, &snaps, &metap).unwrap();
        let (reg2, mat2) = load_snapshots::<f64>(&nodes, &snaps, &metap).unwrap();
        assert_eq!(reg2.entries(), registry.entries());
        assert_eq!(mat2.meta(), matrix.meta());
        for (a, b) in matrix.values().iter().zip(mat2.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
