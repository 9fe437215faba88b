//! Attributed graph model, dataset directory I/O, GCN adjacency
//! normalization and train/validation/test splitting.
//!
//! A dataset directory holds:
//!
//! * `meta.json` with `{"n": .., "num_classes": .., "attr_dim": ..}`
//! * `edges.csv` with header `src,dst` (undirected, one direction is enough)
//! * `features.csv` with `n` rows of `attr_dim` comma-separated floats, no header
//! * `labels.csv` with header `node,class` (nodes may be omitted)
//! * optionally `anomalies.csv` with header `node,is_anomaly,kind`

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed meta.json: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("{file}: line {line}: {msg}")]
    Parse {
        file: &'static str,
        line: usize,
        msg: String,
    },
    #[error("{file}: expected {expected} rows, found {found}")]
    RowCount {
        file: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("features.csv: row {row} has {found} columns, expected {expected}")]
    ColumnCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("node {node} has class {class}, outside [0, {num_classes})")]
    LabelOutOfRange {
        node: usize,
        class: usize,
        num_classes: usize,
    },
    #[error("node id {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("feature matrix has {rows} rows for {n} nodes")]
    FeatureShape { rows: usize, n: usize },
    #[error("class {class} has {available} non-anomalous labeled nodes, {requested} requested")]
    InsufficientClass {
        class: usize,
        available: usize,
        requested: usize,
    },
    #[error("{available} nodes left for validation/test, {requested} requested")]
    InsufficientNodes { available: usize, requested: usize },
    #[error("graph has no class labels")]
    NoClassLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    Structural,
    Contextual,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::Structural => "structural",
            AnomalyKind::Contextual => "contextual",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Symmetric binary adjacency in compressed sparse row form. Neighbor
/// lists are sorted and never contain the row itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Adjacency {
    /// Builds the adjacency from an undirected edge list. Self-loops are
    /// dropped and duplicates merged; the result is symmetric.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            if u == v {
                continue;
            }
            rows[u].push(v);
            rows[v].push(u);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        Ok(Self { indptr, indices })
    }

    pub fn n(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Number of stored entries (twice the undirected edge count).
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges with `u < v`, in row order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz() / 2);
        for u in 0..self.n() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

/// An attributed graph with optional class labels and anomaly ground truth.
#[derive(Debug, Clone)]
pub struct Graph {
    adjacency: Adjacency,
    features: Array2<f64>,
    class_labels: Vec<Option<usize>>,
    num_classes: usize,
    anomalies: Option<Vec<Option<AnomalyKind>>>,
}

impl Graph {
    pub fn new(
        edges: &[(usize, usize)],
        features: Array2<f64>,
        class_labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self, GraphError> {
        let n = features.nrows();
        if class_labels.len() != n {
            return Err(GraphError::RowCount {
                file: "labels.csv",
                expected: n,
                found: class_labels.len(),
            });
        }
        for ((row, col), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(GraphError::NonFinite { row, col });
            }
        }
        for (node, label) in class_labels.iter().enumerate() {
            if let Some(class) = *label {
                if class >= num_classes {
                    return Err(GraphError::LabelOutOfRange {
                        node,
                        class,
                        num_classes,
                    });
                }
            }
        }
        let adjacency = Adjacency::from_edges(n, edges)?;
        Ok(Self {
            adjacency,
            features,
            class_labels,
            num_classes,
            anomalies: None,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn attr_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn class_labels(&self) -> &[Option<usize>] {
        &self.class_labels
    }

    pub fn anomaly_kinds(&self) -> Option<&[Option<AnomalyKind>]> {
        self.anomalies.as_deref()
    }

    /// Binary anomaly ground truth, if the graph has any.
    pub fn anomaly_labels(&self) -> Option<Vec<bool>> {
        self.anomalies
            .as_ref()
            .map(|a| a.iter().map(Option::is_some).collect())
    }

    pub fn is_anomaly(&self, node: usize) -> bool {
        self.anomalies
            .as_ref()
            .map(|a| a[node].is_some())
            .unwrap_or(false)
    }

    pub fn anomaly_count(&self) -> usize {
        self.anomalies
            .as_ref()
            .map(|a| a.iter().filter(|k| k.is_some()).count())
            .unwrap_or(0)
    }

    pub fn set_anomalies(&mut self, kinds: Vec<Option<AnomalyKind>>) -> Result<(), GraphError> {
        if kinds.len() != self.n() {
            return Err(GraphError::RowCount {
                file: "anomalies.csv",
                expected: self.n(),
                found: kinds.len(),
            });
        }
        self.anomalies = Some(kinds);
        Ok(())
    }

    pub(crate) fn features_mut(&mut self) -> &mut Array2<f64> {
        &mut self.features
    }

    pub(crate) fn add_edges(&mut self, extra: &[(usize, usize)]) -> Result<(), GraphError> {
        let mut edges = self.adjacency.edges();
        edges.extend_from_slice(extra);
        self.adjacency = Adjacency::from_edges(self.n(), &edges)?;
        Ok(())
    }
}

/// `D^-1/2 (A + I) D^-1/2` in CSR form, with `D` the degree matrix of `A + I`.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    degrees: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Sparse-dense product `self * dense`.
    pub fn matmul(&self, dense: &Array2<f64>) -> Array2<f64> {
        assert_eq!(dense.nrows(), self.n(), "row mismatch in sparse matmul");
        let cols = dense.ncols();
        let mut out = Array2::zeros((self.n(), cols));
        for i in 0..self.n() {
            let mut out_row = out.row_mut(i);
            for (j, v) in self.row(i) {
                out_row.scaled_add(v, &dense.row(j));
            }
        }
        out
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let adj = g.adjacency();
    let n = adj.n();
    let degrees: Vec<f64> = (0..n).map(|i| (adj.degree(i) + 1) as f64).collect();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(adj.nnz() + n);
    let mut values = Vec::with_capacity(adj.nnz() + n);
    indptr.push(0);
    for i in 0..n {
        let neigh = adj.neighbors(i);
        // merge the self loop into the sorted neighbor list
        let split = neigh.partition_point(|&j| j < i);
        for &j in neigh[..split]
            .iter()
            .chain(std::iter::once(&i))
            .chain(&neigh[split..])
        {
            indices.push(j);
            values.push(inv_sqrt[i] * inv_sqrt[j]);
        }
        indptr.push(indices.len());
    }
    NormalizedAdjacency {
        indptr,
        indices,
        values,
        degrees,
    }
}

/// Node partitions for one experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub val_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub initial_class_labeled: Vec<usize>,
    pub pool_ids: Vec<usize>,
}

/// Samples `per_class` non-anomalous nodes of every class as the initial
/// classification-labeled set, then `n_val` validation and `n_test` test
/// nodes from the rest. Everything left is the query pool.
pub fn split_dataset(
    g: &Graph,
    per_class: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<Splits, GraphError> {
    if g.class_labels().iter().all(Option::is_none) {
        return Err(GraphError::NoClassLabels);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); g.num_classes()];
    for (node, label) in g.class_labels().iter().enumerate() {
        if let Some(c) = *label {
            if !g.is_anomaly(node) {
                by_class[c].push(node);
            }
        }
    }
    let mut initial = Vec::with_capacity(per_class * g.num_classes());
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < per_class {
            return Err(GraphError::InsufficientClass {
                class,
                available: members.len(),
                requested: per_class,
            });
        }
        members.shuffle(&mut rng);
        initial.extend_from_slice(&members[..per_class]);
    }
    initial.sort_unstable();

    let taken: BTreeSet<usize> = initial.iter().copied().collect();
    let mut rest: Vec<usize> = (0..g.n()).filter(|v| !taken.contains(v)).collect();
    if rest.len() < n_val + n_test {
        return Err(GraphError::InsufficientNodes {
            available: rest.len(),
            requested: n_val + n_test,
        });
    }
    rest.shuffle(&mut rng);
    let mut val_ids = rest[..n_val].to_vec();
    let mut test_ids = rest[n_val..n_val + n_test].to_vec();
    let mut pool_ids = rest[n_val + n_test..].to_vec();
    val_ids.sort_unstable();
    test_ids.sort_unstable();
    pool_ids.sort_unstable();
    Ok(Splits {
        val_ids,
        test_ids,
        initial_class_labeled: initial,
        pool_ids,
    })
}

#[derive(Debug, Deserialize, Serialize)]
struct Meta {
    n: usize,
    num_classes: usize,
    attr_dim: usize,
}

fn open(dir: &Path, name: &str) -> Result<PathBuf, GraphError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(GraphError::MissingFile(path));
    }
    Ok(path)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(file: &'static str, line: usize) -> impl FnOnce(csv::Error) -> GraphError {
    move |e| GraphError::Parse {
        file,
        line,
        msg: e.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(
    file: &'static str,
    line: usize,
    raw: Option<&str>,
) -> Result<T, GraphError> {
    let raw = raw.ok_or_else(|| GraphError::Parse {
        file,
        line,
        msg: "missing column".into(),
    })?;
    raw.trim().parse().map_err(|_| GraphError::Parse {
        file,
        line,
        msg: format!("cannot parse {raw:?}"),
    })
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph, GraphError> {
    let dir = dir.as_ref();
    let meta_path = open(dir, "meta.json")?;
    let edges_path = open(dir, "edges.csv")?;
    let features_path = open(dir, "features.csv")?;
    let labels_path = open(dir, "labels.csv")?;

    let meta: Meta =
        serde_json::from_str(&fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?)?;
    let n = meta.n;

    let mut edges = Vec::new();
    let mut reader = csv::Reader::from_path(&edges_path).map_err(csv_err("edges.csv", 1))?;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err("edges.csv", line))?;
        let u: usize = parse_field("edges.csv", line, rec.get(0))?;
        let v: usize = parse_field("edges.csv", line, rec.get(1))?;
        for node in [u, v] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange { node, n });
            }
        }
        if u == v {
            log::warn!("edges.csv line {line}: dropping self-loop on node {u}");
            continue;
        }
        edges.push((u, v));
    }

    let mut flat = Vec::with_capacity(n * meta.attr_dim);
    let mut rows = 0;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(&features_path)
        .map_err(csv_err("features.csv", 1))?;
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| GraphError::Parse {
            file: "features.csv",
            line: row + 1,
            msg: e.to_string(),
        })?;
        if rec.len() != meta.attr_dim {
            return Err(GraphError::ColumnCount {
                row,
                expected: meta.attr_dim,
                found: rec.len(),
            });
        }
        for (col, raw) in rec.iter().enumerate() {
            let v: f64 = parse_field("features.csv", row + 1, Some(raw))?;
            if !v.is_finite() {
                return Err(GraphError::NonFinite { row, col });
            }
            flat.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(GraphError::RowCount {
            file: "features.csv",
            expected: n,
            found: rows,
        });
    }
    let features = Array2::from_shape_vec((n, meta.attr_dim), flat).expect("shape checked above");

    let mut labels = vec![None; n];
    let mut reader = csv::Reader::from_path(&labels_path).map_err(csv_err("labels.csv", 1))?;
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err("labels.csv", line))?;
        let node: usize = parse_field("labels.csv", line, rec.get(0))?;
        let class: usize = parse_field("labels.csv", line, rec.get(1))?;
        if node >= n {
            return Err(GraphError::NodeOutOfRange { node, n });
        }
        if class >= meta.num_classes {
            return Err(GraphError::LabelOutOfRange {
                node,
                class,
                num_classes: meta.num_classes,
            });
        }
        labels[node] = Some(class);
    }

    let mut graph = Graph::new(&edges, features, labels, meta.num_classes)?;

    let anomalies_path = dir.join("anomalies.csv");
    if anomalies_path.is_file() {
        let mut kinds = vec![None; n];
        let mut reader =
            csv::Reader::from_path(&anomalies_path).map_err(csv_err("anomalies.csv", 1))?;
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(csv_err("anomalies.csv", line))?;
            let node: usize = parse_field("anomalies.csv", line, rec.get(0))?;
            let flag: u8 = parse_field("anomalies.csv", line, rec.get(1))?;
            if node >= n {
                return Err(GraphError::NodeOutOfRange { node, n });
            }
            if flag == 1 {
                let kind = match rec.get(2).map(str::trim) {
                    Some("structural") => AnomalyKind::Structural,
                    Some("contextual") => AnomalyKind::Contextual,
                    other => {
                        return Err(GraphError::Parse {
                            file: "anomalies.csv",
                            line,
                            msg: format!("unknown anomaly kind {other:?}"),
                        })
                    }
                };
                kinds[node] = Some(kind);
            }
        }
        graph.set_anomalies(kinds)?;
    }
    Ok(graph)
}

/// Writes `g` in the dataset directory format, including `anomalies.csv`
/// when the graph carries ground truth.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = Meta {
        n: g.n(),
        num_classes: g.num_classes(),
        attr_dim: g.attr_dim(),
    };
    let meta_path = dir.join("meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(io_err(&meta_path))?;

    let wrap = |file: &'static str| {
        move |e: csv::Error| GraphError::Parse {
            file,
            line: 0,
            msg: e.to_string(),
        }
    };

    let mut w = csv::Writer::from_path(dir.join("edges.csv")).map_err(wrap("edges.csv"))?;
    w.write_record(["src", "dst"]).map_err(wrap("edges.csv"))?;
    for (u, v) in g.adjacency().edges() {
        w.write_record([u.to_string(), v.to_string()])
            .map_err(wrap("edges.csv"))?;
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(dir.join("features.csv"))
        .map_err(wrap("features.csv"))?;
    for row in g.features().rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))
            .map_err(wrap("features.csv"))?;
    }
    w.flush().map_err(io_err(dir))?;

    let mut w = csv::Writer::from_path(dir.join("labels.csv")).map_err(wrap("labels.csv"))?;
    w.write_record(["node", "class"])
        .map_err(wrap("labels.csv"))?;
    for (node, label) in g.class_labels().iter().enumerate() {
        if let Some(c) = label {
            w.write_record([node.to_string(), c.to_string()])
                .map_err(wrap("labels.csv"))?;
        }
    }
    w.flush().map_err(io_err(dir))?;

    if let Some(kinds) = g.anomaly_kinds() {
        let mut w =
            csv::Writer::from_path(dir.join("anomalies.csv")).map_err(wrap("anomalies.csv"))?;
        w.write_record(["node", "is_anomaly", "kind"])
            .map_err(wrap("anomalies.csv"))?;
        for (node, kind) in kinds.iter().enumerate() {
            let (flag, name) = match kind {
                Some(k) => ("1", k.as_str()),
                None => ("0", ""),
            };
            w.write_record([node.to_string().as_str(), flag, name])
                .map_err(wrap("anomalies.csv"))?;
        }
        w.flush().map_err(io_err(dir))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn path_graph() -> Graph {
        Graph::new(
            &[(0, 1), (1, 2)],
            array![[1.0], [2.0], [3.0]],
            vec![Some(0), Some(1), Some(0)],
            2,
        )
        .unwrap()
    }

    #[test]
    fn path_graph_is_symmetrized() {
        let g = path_graph();
        assert_eq!(g.adjacency().nnz(), 4);
        assert!(g.adjacency().has_edge(1, 0));
        assert!(g.adjacency().has_edge(2, 1));
    }

    #[test]
    fn self_loops_and_duplicates_are_dropped() {
        let g = Graph::new(
            &[(1, 1), (0, 1), (1, 0), (0, 1)],
            Array2::zeros((2, 1)),
            vec![None, None],
            1,
        )
        .unwrap();
        assert_eq!(g.adjacency().nnz(), 2);
        assert!(!g.adjacency().has_edge(1, 1));
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let g = Graph::new(&[], array![[0.5]], vec![None], 1).unwrap();
        let a = normalize_adjacency(&g);
        assert_eq!(a.to_dense(), array![[1.0]]);
    }

    #[test]
    fn two_connected_nodes_normalize_to_half() {
        let g = Graph::new(&[(0, 1)], Array2::zeros((2, 1)), vec![None, None], 1).unwrap();
        let a = normalize_adjacency(&g).to_dense();
        for v in a.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn normalization_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10;
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.gen_bool(0.3) {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::new(&edges, Array2::zeros((n, 1)), vec![None; n], 1).unwrap();
        // dense oracle: build A + I, degrees, then scale
        let mut dense = Array2::<f64>::eye(n);
        for &(u, v) in &edges {
            dense[[u, v]] = 1.0;
            dense[[v, u]] = 1.0;
        }
        let deg: Vec<f64> = dense.rows().into_iter().map(|r| r.sum()).collect();
        for i in 0..n {
            for j in 0..n {
                dense[[i, j]] /= (deg[i] * deg[j]).sqrt();
            }
        }
        let got = normalize_adjacency(&g).to_dense();
        for (a, b) in got.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_labels_and_features() {
        let err = Graph::new(&[], array![[1.0], [2.0]], vec![Some(3), None], 2).unwrap_err();
        assert!(matches!(
            err,
            GraphError::LabelOutOfRange {
                node: 0,
                class: 3,
                ..
            }
        ));
        let err = Graph::new(&[], array![[f64::NAN]], vec![None], 1).unwrap_err();
        assert!(matches!(err, GraphError::NonFinite { row: 0, col: 0 }));
        let err = Graph::new(&[(0, 5)], array![[1.0]], vec![None], 1).unwrap_err();
        assert!(matches!(err, GraphError::NodeOutOfRange { node: 5, .. }));
    }

    fn labeled_graph(n: usize, classes: usize) -> Graph {
        Graph::new(
            &[],
            Array2::zeros((n, 1)),
            (0..n).map(|i| Some(i % classes)).collect(),
            classes,
        )
        .unwrap()
    }

    #[test]
    fn split_counts_for_seven_classes() {
        let g = labeled_graph(700, 7);
        let s = split_dataset(&g, 20, 100, 200, 3).unwrap();
        assert_eq!(s.initial_class_labeled.len(), 140);
        assert_eq!(s.val_ids.len(), 100);
        assert_eq!(s.test_ids.len(), 200);
        assert_eq!(s.pool_ids.len(), 700 - 440);
    }

    #[test]
    fn empty_val_and_test() {
        let g = labeled_graph(30, 3);
        let s = split_dataset(&g, 2, 0, 0, 1).unwrap();
        assert!(s.val_ids.is_empty() && s.test_ids.is_empty());
        assert_eq!(s.pool_ids.len(), 24);
    }

    #[test]
    fn split_is_deterministic_and_skips_anomalies() {
        let mut g = labeled_graph(60, 3);
        let mut kinds = vec![None; 60];
        for k in kinds.iter_mut().take(30) {
            *k = Some(AnomalyKind::Structural);
        }
        g.set_anomalies(kinds).unwrap();
        let a = split_dataset(&g, 5, 5, 5, 11).unwrap();
        let b = split_dataset(&g, 5, 5, 5, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.initial_class_labeled.iter().all(|&v| v >= 30));
        assert!(matches!(
            split_dataset(&g, 11, 0, 0, 0),
            Err(GraphError::InsufficientClass { .. })
        ));
    }
}
