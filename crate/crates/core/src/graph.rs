//! Directed road graph, validated paths and their initial views.
//!
//! Node ids are compacted to `0..N` when a graph is loaded from an edge
//! list; the original ids are kept in a remap table so the graph can be
//! exported again with the caller's numbering.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("line {line}: malformed record `{record}`")]
    Malformed { line: usize, record: String },
    #[error("line {line}: edge length {length} is negative or not finite")]
    BadLength { line: usize, length: f64 },
    #[error("line {line}: duplicate edge {u}->{v}")]
    DuplicateEdge { line: usize, u: u64, v: u64 },
    #[error("edge {u}->{v} references a node outside 0..{n}")]
    NodeOutOfRange { u: usize, v: usize, n: usize },
    #[error("edge list contains no edges")]
    Empty,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("path needs at least two nodes, got {0}")]
    TooShort(usize),
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("hop {hop} ({from}->{to}) is not an edge of the graph")]
    MissingEdge { hop: usize, from: NodeId, to: NodeId },
    #[error("node {0} appears more than once")]
    RepeatedNode(NodeId),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("feature table has {rows} rows but the graph has {nodes} nodes")]
    RowCount { rows: usize, nodes: usize },
    #[error("feature table must have at least one row and one column")]
    EmptyTable,
    #[error("feature entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("node {node} has no feature row (table has {rows} rows)")]
    MissingRow { node: NodeId, rows: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub to: NodeId,
    pub length: f64,
}

/// Directed graph with nonnegative edge lengths (meters).
///
/// Outgoing edges of every node are kept sorted by target id, which makes
/// neighbor iteration order (and everything seeded downstream of it)
/// deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    out: Vec<Vec<Edge>>,
    edge_count: usize,
    original_ids: Vec<u64>,
}

impl Graph {
    /// Builds a graph over nodes `0..n`. Original ids are the identity.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId, f64)>,
    {
        let mut out: Vec<Vec<Edge>> = vec![Vec::new(); n];
        let mut seen = HashSet::new();
        let mut edge_count = 0;
        for (i, (u, v, length)) in edges.into_iter().enumerate() {
            if u >= n || v >= n {
                return Err(GraphError::NodeOutOfRange { u, v, n });
            }
            if !length.is_finite() || length < 0.0 {
                return Err(GraphError::BadLength { line: i + 1, length });
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge { line: i + 1, u: u as u64, v: v as u64 });
            }
            out[u].push(Edge { to: v, length });
            edge_count += 1;
        }
        for list in &mut out {
            list.sort_by_key(|e| e.to);
        }
        Ok(Self { out, edge_count, original_ids: (0..n as u64).collect() })
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn successors(&self, u: NodeId) -> &[Edge] {
        &self.out[u]
    }

    pub fn out_degree(&self, u: NodeId) -> usize {
        self.out[u].len()
    }

    pub fn edge_length(&self, u: NodeId, v: NodeId) -> Option<f64> {
        let list = self.out.get(u)?;
        list.binary_search_by_key(&v, |e| e.to).ok().map(|i| list[i].length)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_length(u, v).is_some()
    }

    /// Iterates all edges as `(u, v, length)` in `(u, v)` order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |e| (u, e.to, e.length)))
    }

    /// Nodes carrying a self-loop. Such edges are kept but can never be
    /// part of a loopless path.
    pub fn self_loops(&self) -> Vec<NodeId> {
        (0..self.node_count()).filter(|&u| self.has_edge(u, u)).collect()
    }

    /// Original id of each compact node id.
    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    /// Parses the `u,v,length` edge-list format. Ids may be any
    /// nonnegative integers; they are remapped to `0..N` in ascending order.
    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut records = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let malformed = || GraphError::Malformed { line, record: raw.trim().to_string() };
            let fields: Vec<&str> = body.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(malformed());
            }
            let u: u64 = fields[0].parse().map_err(|_| malformed())?;
            let v: u64 = fields[1].parse().map_err(|_| malformed())?;
            let length: f64 = fields[2].parse().map_err(|_| malformed())?;
            if !length.is_finite() || length < 0.0 {
                return Err(GraphError::BadLength { line, length });
            }
            records.push((line, u, v, length));
        }
        if records.is_empty() {
            return Err(GraphError::Empty);
        }

        let ids: BTreeSet<u64> = records.iter().flat_map(|&(_, u, v, _)| [u, v]).collect();
        let original_ids: Vec<u64> = ids.into_iter().collect();
        let remap: HashMap<u64, NodeId> =
            original_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut out: Vec<Vec<Edge>> = vec![Vec::new(); original_ids.len()];
        let mut seen = HashSet::new();
        for &(line, u, v, length) in &records {
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge { line, u, v });
            }
            out[remap[&u]].push(Edge { to: remap[&v], length });
        }
        for list in &mut out {
            list.sort_by_key(|e| e.to);
        }
        Ok(Self { out, edge_count: records.len(), original_ids })
    }

    /// Serializes to the edge-list format. With `original_ids` the ids of
    /// the loaded file are written back, otherwise the compact ids.
    pub fn to_edge_list(&self, original_ids: bool) -> String {
        let mut s = String::new();
        for (u, v, length) in self.edges() {
            let (a, b) = if original_ids {
                (self.original_ids[u], self.original_ids[v])
            } else {
                (u as u64, v as u64)
            };
            writeln!(s, "{a},{b},{length}").unwrap();
        }
        s
    }

    /// Remap table as `compact_id,original_id` lines.
    pub fn remap_table(&self) -> String {
        let mut s = String::from("compact_id,original_id\n");
        for (i, id) in self.original_ids.iter().enumerate() {
            writeln!(s, "{i},{id}").unwrap();
        }
        s
    }
}

/// A loopless walk of at least two nodes along graph edges.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn validate(g: &Graph, ids: &[NodeId]) -> Result<Self, PathError> {
        if ids.len() < 2 {
            return Err(PathError::TooShort(ids.len()));
        }
        if let Some(&bad) = ids.iter().find(|&&v| v >= g.node_count()) {
            return Err(PathError::UnknownNode(bad));
        }
        for (hop, w) in ids.windows(2).enumerate() {
            if !g.has_edge(w[0], w[1]) {
                return Err(PathError::MissingEdge { hop, from: w[0], to: w[1] });
            }
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for &v in ids {
            if !seen.insert(v) {
                return Err(PathError::RepeatedNode(v));
            }
        }
        Ok(Self { nodes: ids.to_vec() })
    }

    /// Wraps a node sequence produced by one of the graph algorithms here,
    /// which guarantee the path invariants by construction.
    pub(crate) fn from_trusted(nodes: Vec<NodeId>) -> Self {
        debug_assert!(nodes.len() >= 2);
        Self { nodes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn source(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn destination(&self) -> NodeId {
        self.nodes[self.nodes.len() - 1]
    }

    /// Total length, summed left to right along the path.
    pub fn length(&self, g: &Graph) -> f64 {
        path_length(g, &self.nodes)
    }
}

/// Left-to-right sum of edge lengths. Every ordering of paths by length in
/// this crate uses this exact summation so equal paths compare equal.
pub(crate) fn path_length(g: &Graph, nodes: &[NodeId]) -> f64 {
    nodes
        .windows(2)
        .map(|w| g.edge_length(w[0], w[1]).expect("path hop is an edge"))
        .fold(0.0, |acc, l| acc + l)
}

/// Dense `N x D` table of node feature vectors, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    data: Vec<f64>,
    rows: usize,
    dim: usize,
}

impl FeatureTable {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self, FeatureError> {
        if rows == 0 || dim == 0 {
            return Err(FeatureError::EmptyTable);
        }
        if data.len() != rows * dim {
            return Err(FeatureError::RowCount { rows: data.len() / dim, nodes: rows });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(FeatureError::NonFinite { row: i / dim, col: i % dim });
        }
        Ok(Self { data, rows, dim })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, node: NodeId) -> &[f64] {
        &self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Stacks the rows of `nodes` into a `|nodes| x D` matrix.
    pub fn gather(&self, nodes: &[NodeId]) -> DMatrix<f64> {
        DMatrix::from_fn(nodes.len(), self.dim, |r, c| self.row(nodes[r])[c])
    }

    /// Mean of the feature rows of `nodes`, as a `1 x D` row.
    pub fn mean_of(&self, nodes: &[NodeId]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for &v in nodes {
            for (a, x) in acc.iter_mut().zip(self.row(v)) {
                *a += x;
            }
        }
        let n = nodes.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn check_covers(&self, g: &Graph) -> Result<(), FeatureError> {
        if self.rows != g.node_count() {
            return Err(FeatureError::RowCount { rows: self.rows, nodes: g.node_count() });
        }
        Ok(())
    }
}

/// `Z x D` matrix whose row `k` is the feature vector of the path's k-th node.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialView(pub DMatrix<f64>);

impl InitialView {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn initial_view(g: &Graph, f: &FeatureTable, p: &Path) -> Result<InitialView, FeatureError> {
    f.check_covers(g)?;
    if let Some(&node) = p.nodes().iter().find(|&&v| v >= f.rows()) {
        return Err(FeatureError::MissingRow { node, rows: f.rows() });
    }
    Ok(InitialView(f.gather(p.nodes())))
}

/// Parses a path file: one path per line, comma-separated compact node ids.
pub fn parse_paths(g: &Graph, text: &str) -> Result<Vec<Path>, (usize, String)> {
    let mut paths = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let ids: Result<Vec<NodeId>, _> = body.split(',').map(|t| t.trim().parse()).collect();
        let ids = ids.map_err(|_| (idx + 1, format!("malformed path `{}`", raw.trim())))?;
        let path = Path::validate(g, &ids).map_err(|e| (idx + 1, e.to_string()))?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn format_paths(paths: &[Path]) -> String {
    let mut s = String::new();
    for p in paths {
        s.push_str(&join_ids(p.nodes()));
        s.push('\n');
    }
    s
}

pub(crate) fn join_ids(ids: &[NodeId]) -> String {
    ids.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Graph {
        Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn minimal_chain_counts() {
        let g = Graph::parse_edge_list("0,1,1.0\n1,2,1.0\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn self_loop_is_kept_and_flagged() {
        let g = Graph::parse_edge_list("0,0,1.0\n0,1,2.0").unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.self_loops(), vec![0]);
        assert_eq!(Path::validate(&g, &[0, 0, 1]), Err(PathError::RepeatedNode(0)));
    }

    #[test]
    fn sparse_ids_are_compacted_and_export_restores_them() {
        let text = "# comment\n9,12,2.5\n5,9,1.0\n12,5,0.5 # trailing\n";
        let g = Graph::parse_edge_list(text).unwrap();
        assert_eq!(g.original_ids(), &[5, 9, 12]);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && g.has_edge(2, 0));

        let mut expected: Vec<(u64, u64, String)> = vec![
            (9, 12, "2.5".into()),
            (5, 9, "1".into()),
            (12, 5, "0.5".into()),
        ];
        let mut exported: Vec<(u64, u64, String)> = g
            .to_edge_list(true)
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].to_string())
            })
            .collect();
        expected.sort();
        exported.sort();
        assert_eq!(exported, expected);
        assert!(g.remap_table().contains("2,12"));
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        assert_eq!(
            Graph::parse_edge_list("0,1,1\n0,1,2\n"),
            Err(GraphError::DuplicateEdge { line: 2, u: 0, v: 1 })
        );
        assert!(matches!(
            Graph::parse_edge_list("0,1,1\n1,2,-3\n"),
            Err(GraphError::BadLength { line: 2, .. })
        ));
        assert!(matches!(
            Graph::parse_edge_list("0,1\n"),
            Err(GraphError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            Graph::parse_edge_list("a,1,1\n"),
            Err(GraphError::Malformed { line: 1, .. })
        ));
        assert_eq!(Graph::parse_edge_list("# nothing\n"), Err(GraphError::Empty));
    }

    #[test]
    fn reload_of_export_is_identical() {
        let g = Graph::parse_edge_list("3,7,1.25\n7,3,1.5\n7,8,0.1\n").unwrap();
        let again = Graph::parse_edge_list(&g.to_edge_list(true)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn validate_path_cases() {
        let g = chain();
        let p = Path::validate(&g, &[0, 1, 2]).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!((p.source(), p.destination()), (0, 2));
        assert_eq!(
            Path::validate(&g, &[0, 2]),
            Err(PathError::MissingEdge { hop: 0, from: 0, to: 2 })
        );
        assert_eq!(Path::validate(&g, &[1]), Err(PathError::TooShort(1)));
        assert_eq!(Path::validate(&g, &[0, 7]), Err(PathError::UnknownNode(7)));

        let cycle = Graph::from_edges(3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        assert_eq!(Path::validate(&cycle, &[0, 1, 0]), Err(PathError::RepeatedNode(0)));
    }

    #[test]
    fn validated_path_round_trips() {
        let g = chain();
        let p = Path::validate(&g, &[0, 1, 2]).unwrap();
        assert_eq!(Path::validate(&g, p.nodes()).unwrap(), p);
    }

    #[test]
    fn initial_view_rows_follow_path_order() {
        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let f = FeatureTable::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let fwd = initial_view(&g, &f, &Path::validate(&g, &[0, 1, 2]).unwrap()).unwrap();
        assert_eq!(fwd.0, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]));
        let back = initial_view(&g, &f, &Path::validate(&g, &[2, 1, 0]).unwrap()).unwrap();
        for k in 0..3 {
            assert_eq!(back.0.row(k), fwd.0.row(2 - k));
        }
        let short = initial_view(&g, &f, &Path::validate(&g, &[1, 2]).unwrap()).unwrap();
        assert_eq!(short.0.shape(), (2, 2));
    }

    #[test]
    fn initial_view_rejects_mismatched_table() {
        let g = chain();
        let f = FeatureTable::new(2, 2, vec![0.0; 4]).unwrap();
        let p = Path::validate(&g, &[0, 1]).unwrap();
        assert_eq!(initial_view(&g, &f, &p), Err(FeatureError::RowCount { rows: 2, nodes: 3 }));
    }

    #[test]
    fn path_file_round_trip() {
        let g = chain();
        let paths = parse_paths(&g, "0,1,2\n# skip\n1,2\n").unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(format_paths(&paths), "0,1,2\n1,2\n");
        assert_eq!(parse_paths(&g, "0,2\n").unwrap_err().0, 1);
    }
}
