//! Node feature vectors from biased second-order random walks and
//! skip-gram training with negative sampling (node2vec).

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{FeatureError, FeatureTable, Graph, NodeId};
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum FeaturesError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("graph has no edges to walk")]
    NoEdges,
    #[error("walk set is empty")]
    NoWalks,
    #[error("walk visits node {node} but only {n} nodes were declared")]
    NodeOutOfRange { node: NodeId, n: usize },
    #[error("feature file header must be `N D`, got `{0}`")]
    Header(String),
    #[error("feature file line {line}: {msg}")]
    Row { line: usize, msg: String },
    #[error("feature file declares {declared} rows but has {found}")]
    RowCount { declared: usize, found: usize },
    #[error(transparent)]
    Table(#[from] FeatureError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    /// Nodes per walk, including the start node.
    pub walk_length: usize,
    /// Return parameter; the previous node is weighted `1/p`.
    pub p: f64,
    /// In-out parameter; nodes two hops from the previous node are weighted `1/q`.
    pub q: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { walks_per_node: 10, walk_length: 20, p: 1.0, q: 1.0, seed: 0 }
    }
}

impl WalkConfig {
    fn validate(&self) -> Result<(), FeaturesError> {
        if self.walks_per_node < 1 || self.walk_length < 2 {
            return Err(FeaturesError::Config("need walks_per_node >= 1 and walk_length >= 2".into()));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(FeaturesError::Config("p and q must be positive".into()));
        }
        Ok(())
    }
}

fn walk_from(g: &Graph, start: NodeId, cfg: &WalkConfig, rng: &mut impl Rng) -> Vec<NodeId> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    let mut weights = Vec::new();
    while walk.len() < cfg.walk_length {
        let cur = *walk.last().unwrap();
        let succ = g.successors(cur);
        if succ.is_empty() {
            break;
        }
        let next = match walk.len() {
            1 => succ[rng.random_range(0..succ.len())].to,
            n => {
                let prev = walk[n - 2];
                weights.clear();
                weights.extend(succ.iter().map(|e| {
                    if e.to == prev {
                        1.0 / cfg.p
                    } else if g.has_edge(prev, e.to) {
                        1.0
                    } else {
                        1.0 / cfg.q
                    }
                }));
                let dist = WeightedIndex::new(&weights).expect("positive weights");
                succ[dist.sample(rng)].to
            }
        };
        walk.push(next);
    }
    walk
}

/// `walks_per_node` walks from every node with an outgoing edge, ordered
/// round by round. Walks stop early at nodes without outgoing edges.
pub fn generate_walks(g: &Graph, cfg: &WalkConfig) -> Result<Vec<Vec<NodeId>>, FeaturesError> {
    cfg.validate()?;
    if g.edge_count() == 0 {
        return Err(FeaturesError::NoEdges);
    }
    let starts: Vec<NodeId> = (0..g.node_count()).filter(|&v| g.out_degree(v) > 0).collect();
    let per_node: Vec<Vec<Vec<NodeId>>> = starts
        .par_iter()
        .map(|&v| {
            let mut rng = rng_for(cfg.seed, v as u64);
            (0..cfg.walks_per_node).map(|_| walk_from(g, v, cfg, &mut rng)).collect()
        })
        .collect();
    let mut walks = Vec::with_capacity(starts.len() * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        for node_walks in &per_node {
            walks.push(node_walks[round].clone());
        }
    }
    Ok(walks)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        Self { dim: 16, window: 5, negatives: 5, epochs: 5, learning_rate: 0.025, seed: 0 }
    }
}

impl SgnsConfig {
    fn validate(&self) -> Result<(), FeaturesError> {
        if self.dim < 1 || self.window < 1 || self.negatives < 1 || self.epochs < 1 {
            return Err(FeaturesError::Config("dim, window, negatives and epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FeaturesError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram embedding state: input vectors (the features) and output
/// (context) vectors.
#[derive(Clone, Debug)]
pub struct Sgns {
    input: Vec<f64>,
    output: Vec<f64>,
    dim: usize,
    n: usize,
}

impl Sgns {
    pub fn new(n: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let a = 0.5 / dim as f64;
        let input = (0..n * dim).map(|_| rng.random_range(-a..a)).collect();
        Self { input, output: vec![0.0; n * dim], dim, n }
    }

    /// Model score of `context` appearing near `center`.
    pub fn score(&self, center: NodeId, context: NodeId) -> f64 {
        let d = self.dim;
        self.input[center * d..(center + 1) * d]
            .iter()
            .zip(&self.output[context * d..(context + 1) * d])
            .map(|(a, b)| a * b)
            .sum()
    }

    /// One SGD step on `log σ(in_c·out_o) + Σ log σ(-in_c·out_n)`.
    pub fn update(&mut self, center: NodeId, context: NodeId, negatives: &[NodeId], lr: f64) {
        let d = self.dim;
        let mut grad_in = vec![0.0; d];
        let targets = std::iter::once((context, 1.0))
            .chain(negatives.iter().filter(|&&n| n != context).map(|&n| (n, 0.0)));
        for (node, label) in targets {
            let g = lr * (label - sigmoid(self.score(center, node)));
            let (inp, out) = (&self.input[center * d..(center + 1) * d], &mut self.output[node * d..(node + 1) * d]);
            for k in 0..d {
                grad_in[k] += g * out[k];
                out[k] += g * inp[k];
            }
        }
        for (w, g) in self.input[center * d..(center + 1) * d].iter_mut().zip(&grad_in) {
            *w += g;
        }
    }

    pub fn into_features(self) -> FeatureTable {
        FeatureTable::new(self.n, self.dim, self.input).expect("finite embedding")
    }
}

/// Trains skip-gram embeddings over the walk corpus. Negatives are drawn
/// from the unigram distribution raised to the 3/4 power; the learning rate
/// decays linearly over training.
pub fn train_sgns(
    walks: &[Vec<NodeId>],
    cfg: &SgnsConfig,
    n: usize,
) -> Result<FeatureTable, FeaturesError> {
    cfg.validate()?;
    if walks.is_empty() || n == 0 {
        return Err(FeaturesError::NoWalks);
    }
    let mut counts = vec![0usize; n];
    for &v in walks.iter().flatten() {
        if v >= n {
            return Err(FeaturesError::NodeOutOfRange { node: v, n });
        }
        counts[v] += 1;
    }
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights).map_err(|_| FeaturesError::NoWalks)?;

    let mut rng = rng_for(cfg.seed, 0);
    let mut model = Sgns::new(n, cfg.dim, &mut rng);
    let tokens: usize = walks.iter().map(Vec::len).sum();
    let total = (tokens * cfg.epochs).max(1) as f64;
    let mut seen = 0usize;
    let mut negs = vec![0; cfg.negatives];
    for _ in 0..cfg.epochs {
        for walk in walks {
            for (i, &center) in walk.iter().enumerate() {
                let lr = cfg.learning_rate * (1.0 - seen as f64 / total).max(1e-4);
                seen += 1;
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(walk.len() - 1);
                for (j, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    for slot in negs.iter_mut() {
                        *slot = noise.sample(&mut rng);
                    }
                    model.update(center, context, &negs, lr);
                }
            }
        }
    }
    Ok(model.into_features())
}

/// Serializes a table: header `N D`, then one row per node of `D` values
/// with nine significant digits.
pub fn save_features(f: &FeatureTable) -> String {
    let mut s = String::new();
    writeln!(s, "{} {}", f.rows(), f.dim()).unwrap();
    for r in 0..f.rows() {
        let row: Vec<String> = f.row(r).iter().map(|x| format!("{x:.8e}")).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    s
}

pub fn load_features(text: &str) -> Result<FeatureTable, FeaturesError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| FeaturesError::Header(String::new()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| FeaturesError::Header(header.to_string()))?;
    let [rows, dim] = dims[..] else {
        return Err(FeaturesError::Header(header.to_string()));
    };
    if rows == 0 || dim == 0 {
        return Err(FeatureError::EmptyTable.into());
    }
    let mut data = Vec::with_capacity(rows * dim);
    let mut found = 0;
    for (idx, line) in lines {
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| FeaturesError::Row { line: idx + 1, msg: "bad number".into() })?;
        if values.len() != dim {
            return Err(FeaturesError::Row {
                line: idx + 1,
                msg: format!("expected {dim} values, got {}", values.len()),
            });
        }
        data.extend(values);
        found += 1;
    }
    if found != rows {
        return Err(FeaturesError::RowCount { declared: rows, found });
    }
    Ok(FeatureTable::new(rows, dim, data)?)
}

/// Walks followed by skip-gram training.
pub fn node2vec(g: &Graph, walk: &WalkConfig, sgns: &SgnsConfig) -> Result<FeatureTable, FeaturesError> {
    let walks = generate_walks(g, walk)?;
    train_sgns(&walks, sgns, g.node_count())
}
