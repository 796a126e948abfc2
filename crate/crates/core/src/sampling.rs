//! Curriculum negative sampling.
//!
//! For every input path the sampler draws negatives of increasing
//! difficulty: random corpus paths first, then paths sharing the input's
//! source and destination taken from a diversity-filtered stream of
//! k-shortest loopless paths. Negatives are ordered by their node overlap
//! with the input, easiest first, and training reveals them in stages.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{join_ids, path_length, Graph, NodeId, Path};
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("source and destination are both node {0}")]
    SameEndpoints(NodeId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("no path from {s} to {d}")]
    NoPath { s: NodeId, d: NodeId },
    #[error("corpus needs at least {needed} paths distinct from input {input}, found {found}")]
    InsufficientCorpus { input: usize, needed: usize, found: usize },
    #[error("input path and negatives cover the same nodes")]
    EmptyPartition,
    #[error("diversity threshold {0} outside [0, 1)")]
    BadThreshold(f64),
    #[error("config conflict: {0}")]
    Conflict(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Jaccard similarity of the node sets of `a` and `b` with the endpoints
/// `s` and `d` removed. Two paths with no interior nodes count as identical.
pub fn similarity(a: &[NodeId], b: &[NodeId], s: NodeId, d: NodeId) -> f64 {
    let interior = |p: &[NodeId]| -> HashSet<NodeId> {
        p.iter().copied().filter(|&v| v != s && v != d).collect()
    };
    let (x, y) = (interior(a), interior(b));
    let union = x.union(&y).count();
    if union == 0 {
        return 1.0;
    }
    x.intersection(&y).count() as f64 / union as f64
}

/// Overlap of a negative with the input path, measured relative to the
/// input's own endpoints.
pub fn overlap_ratio(input: &Path, negative: &Path) -> f64 {
    similarity(input.nodes(), negative.nodes(), input.source(), input.destination())
}

#[derive(Clone, Debug)]
struct Candidate {
    length: f64,
    nodes: Vec<NodeId>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.length.total_cmp(&other.length).then_with(|| self.nodes.cmp(&other.nodes))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest `from -> to` path avoiding banned nodes and edges, ties broken
/// by the lexicographically smallest node sequence.
///
/// Labels are `(distance, node sequence)` and only extend settled simple
/// paths, so the result is always loopless. The lexicographic tie order is
/// exact when every edge length is positive; zero-length cycles can make
/// it pick a tied path that is not the lexicographic minimum.
fn lex_shortest(
    g: &Graph,
    from: NodeId,
    to: NodeId,
    banned_nodes: &[bool],
    banned_edges: &HashSet<(NodeId, NodeId)>,
) -> Option<Vec<NodeId>> {
    let n = g.node_count();
    let mut settled = vec![false; n];
    let mut best: Vec<Option<Candidate>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    let start = Candidate { length: 0.0, nodes: vec![from] };
    best[from] = Some(start.clone());
    heap.push(Reverse(start));
    while let Some(Reverse(label)) = heap.pop() {
        let u = *label.nodes.last().unwrap();
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == to {
            return Some(label.nodes);
        }
        for e in g.successors(u) {
            let v = e.to;
            if settled[v] || banned_nodes[v] || banned_edges.contains(&(u, v)) {
                continue;
            }
            let mut nodes = label.nodes.clone();
            nodes.push(v);
            let next = Candidate { length: label.length + e.length, nodes };
            if best[v].as_ref().is_none_or(|b| next < *b) {
                best[v] = Some(next.clone());
                heap.push(Reverse(next));
            }
        }
    }
    None
}

/// Lazy stream of loopless `s -> d` paths in non-decreasing length (Yen's
/// algorithm). Equal lengths come out in lexicographic node order.
pub struct KShortestPaths<'g> {
    g: &'g Graph,
    s: NodeId,
    d: NodeId,
    accepted: Vec<Vec<NodeId>>,
    accepted_set: HashSet<Vec<NodeId>>,
    candidates: BTreeSet<Candidate>,
    pending_spurs: bool,
}

impl<'g> KShortestPaths<'g> {
    pub fn new(g: &'g Graph, s: NodeId, d: NodeId) -> Result<Self, SampleError> {
        for v in [s, d] {
            if v >= g.node_count() {
                return Err(SampleError::UnknownNode(v));
            }
        }
        if s == d {
            return Err(SampleError::SameEndpoints(s));
        }
        let none = vec![false; g.node_count()];
        let first = lex_shortest(g, s, d, &none, &HashSet::new())
            .ok_or(SampleError::NoPath { s, d })?;
        let mut candidates = BTreeSet::new();
        candidates.insert(Candidate { length: path_length(g, &first), nodes: first });
        Ok(Self {
            g,
            s,
            d,
            accepted: Vec::new(),
            accepted_set: HashSet::new(),
            candidates,
            pending_spurs: false,
        })
    }

    fn push_spurs(&mut self) {
        let last = self.accepted.last().expect("spurs follow an accepted path").clone();
        let mut banned_nodes = vec![false; self.g.node_count()];
        for i in 0..last.len() - 1 {
            let root = &last[..=i];
            let banned_edges: HashSet<(NodeId, NodeId)> = self
                .accepted
                .iter()
                .filter(|p| p.len() > i + 1 && p[..=i] == *root)
                .map(|p| (p[i], p[i + 1]))
                .collect();
            if i > 0 {
                banned_nodes[last[i - 1]] = true;
            }
            if let Some(spur) = lex_shortest(self.g, last[i], self.d, &banned_nodes, &banned_edges) {
                let mut nodes = root[..i].to_vec();
                nodes.extend(spur);
                if !self.accepted_set.contains(&nodes) {
                    let length = path_length(self.g, &nodes);
                    self.candidates.insert(Candidate { length, nodes });
                }
            }
        }
    }
}

impl Iterator for KShortestPaths<'_> {
    type Item = (Path, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pending_spurs {
            self.push_spurs();
            self.pending_spurs = false;
        }
        let best = self.candidates.pop_first()?;
        debug_assert_eq!(best.nodes[0], self.s);
        self.accepted_set.insert(best.nodes.clone());
        self.accepted.push(best.nodes.clone());
        self.pending_spurs = true;
        Some((Path::from_trusted(best.nodes), best.length))
    }
}

/// Up to `k` loopless `s -> d` paths with their lengths, shortest first.
pub fn yen_k_shortest(
    g: &Graph,
    s: NodeId,
    d: NodeId,
    k: usize,
) -> Result<Vec<(Path, f64)>, SampleError> {
    if k == 0 {
        return Err(SampleError::ZeroK);
    }
    Ok(KShortestPaths::new(g, s, d)?.take(k).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityConfig {
    /// Paths requested.
    pub k: usize,
    /// Maximum pairwise similarity between accepted paths.
    pub threshold: f64,
    /// Bound on how many stream candidates are examined.
    pub max_candidates: usize,
}

impl DiversityConfig {
    pub fn new(k: usize, threshold: f64) -> Self {
        Self { k, threshold, max_candidates: 64 }
    }

    fn validate(&self) -> Result<(), SampleError> {
        if self.k == 0 {
            return Err(SampleError::ZeroK);
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(SampleError::BadThreshold(self.threshold));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diversified {
    pub paths: Vec<Path>,
    /// Fewer than `k` paths passed the filter.
    pub insufficient: bool,
}

/// Greedy diversity filter over the k-shortest stream: a candidate is kept
/// when its similarity to every already kept path is at most the threshold.
pub fn diversified_top_k(
    g: &Graph,
    s: NodeId,
    d: NodeId,
    cfg: &DiversityConfig,
) -> Result<Diversified, SampleError> {
    diversified_excluding(g, s, d, cfg, &[])
}

/// Like [`diversified_top_k`], but the filter starts with `seeds` already
/// accepted. Seeds constrain similarity and are never returned.
pub fn diversified_excluding(
    g: &Graph,
    s: NodeId,
    d: NodeId,
    cfg: &DiversityConfig,
    seeds: &[&Path],
) -> Result<Diversified, SampleError> {
    cfg.validate()?;
    let stream = KShortestPaths::new(g, s, d)?;
    let mut kept: Vec<Path> = Vec::new();
    for (cand, _) in stream.take(cfg.max_candidates) {
        if seeds.iter().any(|p| p.nodes() == cand.nodes()) {
            continue;
        }
        let ok = seeds
            .iter()
            .copied()
            .chain(kept.iter())
            .all(|p| similarity(p.nodes(), cand.nodes(), s, d) <= cfg.threshold);
        if ok {
            kept.push(cand);
            if kept.len() == cfg.k {
                break;
            }
        }
    }
    let insufficient = kept.len() < cfg.k;
    Ok(Diversified { paths: kept, insufficient })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NegativeKind {
    Random,
    Diversified,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Negative {
    pub path: Path,
    pub overlap: f64,
    pub kind: NegativeKind,
}

/// Negatives of one input path, ordered easy to hard.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSet {
    pub input: usize,
    pub negatives: Vec<Negative>,
    /// Some diversified slot had to be filled with a random corpus path.
    pub backfilled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplingStrategy {
    /// Random corpus paths followed by same-OD diversified paths.
    Curriculum,
    RandomOnly,
    TopKOnly,
}

impl std::str::FromStr for SamplingStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "curriculum" => Ok(Self::Curriculum),
            "random" | "random-only" => Ok(Self::RandomOnly),
            "topk" | "top-k" | "topk-only" => Ok(Self::TopKOnly),
            other => Err(format!("unknown sampling strategy `{other}`")),
        }
    }
}

impl std::fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Curriculum => "curriculum",
            Self::RandomOnly => "random",
            Self::TopKOnly => "topk",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NegativeConfig {
    /// Negatives per input path.
    pub k: usize,
    /// Leading random negatives of the curriculum.
    pub n_random: usize,
    /// Diversity thresholds of the curriculum's diversified slots, in order.
    pub thresholds: Vec<f64>,
    pub strategy: SamplingStrategy,
    pub max_candidates: usize,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        Self {
            k: 4,
            n_random: 2,
            thresholds: vec![0.6, 0.9],
            strategy: SamplingStrategy::Curriculum,
            max_candidates: 64,
        }
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Random,
    Diversified(f64),
}

impl NegativeConfig {
    fn slots(&self) -> Result<Vec<Slot>, SampleError> {
        if self.k == 0 {
            return Err(SampleError::ZeroK);
        }
        for &t in &self.thresholds {
            if !(0.0..1.0).contains(&t) {
                return Err(SampleError::BadThreshold(t));
            }
        }
        match self.strategy {
            SamplingStrategy::Curriculum => {
                let available = self.n_random + self.thresholds.len();
                if self.k > available {
                    return Err(SampleError::Conflict(format!(
                        "k = {} but the curriculum defines only {} random and {} diversified slots",
                        self.k,
                        self.n_random,
                        self.thresholds.len()
                    )));
                }
                let mut slots = vec![Slot::Random; self.n_random];
                slots.extend(self.thresholds.iter().map(|&t| Slot::Diversified(t)));
                slots.truncate(self.k);
                Ok(slots)
            }
            SamplingStrategy::RandomOnly => Ok(vec![Slot::Random; self.k]),
            SamplingStrategy::TopKOnly => {
                let t = *self.thresholds.last().ok_or_else(|| {
                    SampleError::Conflict("top-k sampling needs a diversity threshold".into())
                })?;
                Ok(vec![Slot::Diversified(t); self.k])
            }
        }
    }
}

/// Draws the negatives of `corpus[input]`.
///
/// Random slots draw uniformly from corpus paths whose node sequence
/// differs from the input and from every negative already chosen.
/// Diversified slots take the next path of the input's OD pair that passes
/// the slot's similarity threshold against the input and the diversified
/// negatives chosen so far; when none exists a random path fills the slot
/// and the set is flagged as backfilled.
pub fn sample_negatives(
    input: usize,
    corpus: &[Path],
    g: &Graph,
    cfg: &NegativeConfig,
    seed: u64,
) -> Result<NegativeSet, SampleError> {
    let slots = cfg.slots()?;
    let target = &corpus[input];
    let mut pool: Vec<usize> = Vec::new();
    let mut seen: HashSet<&[NodeId]> = HashSet::new();
    seen.insert(target.nodes());
    for (i, p) in corpus.iter().enumerate() {
        if seen.insert(p.nodes()) {
            pool.push(i);
        }
    }
    let needed = 2.min(cfg.k);
    if pool.len() < needed {
        return Err(SampleError::InsufficientCorpus { input, needed, found: pool.len() });
    }

    let mut rng = rng_for(seed, input as u64);
    let mut chosen: Vec<Negative> = Vec::with_capacity(slots.len());
    let mut backfilled = false;

    let draw_random = |chosen: &Vec<Negative>, rng: &mut rand_chacha::ChaCha8Rng| {
        let free: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| chosen.iter().all(|n| n.path.nodes() != corpus[i].nodes()))
            .collect();
        if free.is_empty() {
            return None;
        }
        Some(corpus[free[rng.random_range(0..free.len())]].clone())
    };

    for slot in slots {
        let picked = match slot {
            Slot::Random => draw_random(&chosen, &mut rng).map(|p| (p, NegativeKind::Random)),
            Slot::Diversified(threshold) => {
                let mut seeds: Vec<&Path> = vec![target];
                seeds.extend(
                    chosen.iter().filter(|n| n.kind == NegativeKind::Diversified).map(|n| &n.path),
                );
                let cfg_div = DiversityConfig { k: 1, threshold, max_candidates: cfg.max_candidates };
                let found = match diversified_excluding(
                    g,
                    target.source(),
                    target.destination(),
                    &cfg_div,
                    &seeds,
                ) {
                    Ok(div) => div.paths.into_iter().next(),
                    Err(SampleError::NoPath { .. }) => None,
                    Err(e) => return Err(e),
                };
                match found {
                    Some(p) => Some((p, NegativeKind::Diversified)),
                    None => {
                        backfilled = true;
                        draw_random(&chosen, &mut rng).map(|p| (p, NegativeKind::Random))
                    }
                }
            }
        };
        match picked {
            Some((path, kind)) => {
                let overlap = overlap_ratio(target, &path);
                chosen.push(Negative { path, overlap, kind });
            }
            None => {
                return Err(SampleError::InsufficientCorpus {
                    input,
                    needed: cfg.k,
                    found: chosen.len(),
                })
            }
        }
    }

    chosen.sort_by(|a, b| a.overlap.total_cmp(&b.overlap));
    Ok(NegativeSet { input, negatives: chosen, backfilled })
}

/// Samples negatives for every corpus path. Each path uses its own seed
/// stream, so the result does not depend on scheduling.
pub fn sample_all(
    corpus: &[Path],
    g: &Graph,
    cfg: &NegativeConfig,
    seed: u64,
) -> Result<Vec<NegativeSet>, SampleError> {
    (0..corpus.len())
        .into_par_iter()
        .map(|i| sample_negatives(i, corpus, g, cfg, seed))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurriculumMode {
    /// Stage `s` exposes the `s` easiest negatives.
    Staged,
    /// Every negative is active from the first epoch.
    All,
}

impl std::str::FromStr for CurriculumMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "staged" => Ok(Self::Staged),
            "all" => Ok(Self::All),
            other => Err(format!("unknown curriculum mode `{other}`")),
        }
    }
}

impl std::fmt::Display for CurriculumMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Staged => "staged",
            Self::All => "all",
        })
    }
}

/// Negatives active at `stage` (1-based).
pub fn curriculum_schedule(stage: usize, ns: &NegativeSet, mode: CurriculumMode) -> &[Negative] {
    match mode {
        CurriculumMode::Staged => &ns.negatives[..stage.max(1).min(ns.negatives.len())],
        CurriculumMode::All => &ns.negatives,
    }
}

/// Nodes exclusive to the input path (`positive`) and exclusive to the
/// active negatives (`negative`), each in ascending id order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodePartition {
    pub positive: Vec<NodeId>,
    pub negative: Vec<NodeId>,
}

pub fn node_partition(input: &Path, active: &[Negative]) -> Result<NodePartition, SampleError> {
    let own: BTreeSet<NodeId> = input.nodes().iter().copied().collect();
    let others: BTreeSet<NodeId> =
        active.iter().flat_map(|n| n.path.nodes().iter().copied()).collect();
    let positive: Vec<NodeId> = own.difference(&others).copied().collect();
    let negative: Vec<NodeId> = others.difference(&own).copied().collect();
    if positive.is_empty() && negative.is_empty() {
        return Err(SampleError::EmptyPartition);
    }
    Ok(NodePartition { positive, negative })
}

/// One line per input path:
/// `input<TAB>backfilled<TAB>kind|ids|overlap<TAB>...` with kind `r` or `d`.
pub fn format_negative_sets(sets: &[NegativeSet]) -> String {
    let mut s = String::new();
    for ns in sets {
        write!(s, "{}\t{}", ns.input, u8::from(ns.backfilled)).unwrap();
        for n in &ns.negatives {
            let kind = match n.kind {
                NegativeKind::Random => 'r',
                NegativeKind::Diversified => 'd',
            };
            write!(s, "\t{kind}|{}|{}", join_ids(n.path.nodes()), n.overlap).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_negative_sets(g: &Graph, text: &str) -> Result<Vec<NegativeSet>, SampleError> {
    let mut sets = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let err = |msg: &str| SampleError::Parse { line, msg: msg.to_string() };
        let mut fields = raw.trim_end().split('\t');
        let input: usize =
            fields.next().and_then(|f| f.parse().ok()).ok_or_else(|| err("bad input id"))?;
        let backfilled = match fields.next() {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(err("bad backfill flag")),
        };
        let mut negatives = Vec::new();
        for f in fields {
            let parts: Vec<&str> = f.split('|').collect();
            if parts.len() != 3 {
                return Err(err("negative must be kind|ids|overlap"));
            }
            let kind = match parts[0] {
                "r" => NegativeKind::Random,
                "d" => NegativeKind::Diversified,
                _ => return Err(err("unknown negative kind")),
            };
            let ids: Vec<NodeId> = parts[1]
                .split(',')
                .map(|t| t.parse())
                .collect::<Result<_, _>>()
                .map_err(|_| err("bad node id"))?;
            let path = Path::validate(g, &ids).map_err(|e| err(&e.to_string()))?;
            let overlap: f64 = parts[2].parse().map_err(|_| err("bad overlap"))?;
            negatives.push(Negative { path, overlap, kind });
        }
        if negatives.is_empty() {
            return Err(err("no negatives"));
        }
        sets.push(NegativeSet { input, negatives, backfilled });
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap()
    }

    /// Two corridors 0-1-2-5 and 0-3-4-5.
    fn two_corridors() -> Graph {
        Graph::from_edges(
            6,
            [(0, 1, 1.0), (1, 2, 1.0), (2, 5, 1.0), (0, 3, 1.0), (3, 4, 1.0), (4, 5, 1.5)],
        )
        .unwrap()
    }

    fn grid(w: usize, h: usize) -> Graph {
        let mut edges = Vec::new();
        for r in 0..h {
            for c in 0..w {
                let u = r * w + c;
                if c + 1 < w {
                    edges.push((u, u + 1, 1.0 + 0.01 * u as f64));
                    edges.push((u + 1, u, 1.0 + 0.01 * u as f64));
                }
                if r + 1 < h {
                    edges.push((u, u + w, 1.0 + 0.02 * u as f64));
                    edges.push((u + w, u, 1.0 + 0.02 * u as f64));
                }
            }
        }
        Graph::from_edges(w * h, edges).unwrap()
    }

    fn p(g: &Graph, ids: &[NodeId]) -> Path {
        Path::validate(g, ids).unwrap()
    }

    #[test]
    fn yen_on_triangle() {
        let g = triangle();
        let got = yen_k_shortest(&g, 0, 2, 2).unwrap();
        assert_eq!(got[0].0.nodes(), &[0, 1, 2]);
        assert_eq!(got[0].1, 2.0);
        assert_eq!(got[1].0.nodes(), &[0, 2]);
        assert_eq!(got[1].1, 3.0);
        assert_eq!(yen_k_shortest(&g, 0, 2, 10).unwrap().len(), 2);
    }

    #[test]
    fn yen_errors() {
        let g = triangle();
        assert_eq!(yen_k_shortest(&g, 2, 0, 1).unwrap_err(), SampleError::NoPath { s: 2, d: 0 });
        assert_eq!(yen_k_shortest(&g, 1, 1, 1).unwrap_err(), SampleError::SameEndpoints(1));
        assert_eq!(yen_k_shortest(&g, 0, 2, 0).unwrap_err(), SampleError::ZeroK);
    }

    #[test]
    fn equal_lengths_come_out_lexicographically() {
        let g = grid(3, 3);
        let unit: Vec<_> = g.edges().map(|(u, v, _)| (u, v, 1.0)).collect();
        let g = Graph::from_edges(9, unit).unwrap();
        let got = yen_k_shortest(&g, 0, 8, 6).unwrap();
        let seqs: Vec<&[NodeId]> = got.iter().map(|(p, _)| p.nodes()).collect();
        assert_eq!(
            seqs,
            vec![
                &[0, 1, 2, 5, 8][..],
                &[0, 1, 4, 5, 8],
                &[0, 1, 4, 7, 8],
                &[0, 3, 4, 5, 8],
                &[0, 3, 4, 7, 8],
                &[0, 3, 6, 7, 8],
            ]
        );
    }

    #[test]
    fn zero_length_edges_keep_paths_loopless() {
        let g = Graph::from_edges(4, [(0, 1, 0.0), (1, 0, 0.0), (1, 2, 0.0), (2, 1, 0.0), (2, 3, 1.0), (0, 3, 1.0)])
            .unwrap();
        let got = yen_k_shortest(&g, 0, 3, 5).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0.nodes(), &[0, 1, 2, 3]);
        assert_eq!(got[1].0.nodes(), &[0, 3]);
    }

    #[test]
    fn similarity_ignores_endpoints() {
        assert_eq!(similarity(&[0, 1, 2, 5], &[0, 3, 4, 5], 0, 5), 0.0);
        assert_eq!(similarity(&[0, 1, 2, 5], &[0, 1, 4, 5], 0, 5), 1.0 / 3.0);
        assert_eq!(similarity(&[0, 5], &[0, 5], 0, 5), 1.0);
        assert_eq!(similarity(&[0, 5], &[0, 1, 5], 0, 5), 0.0);
    }

    #[test]
    fn zero_threshold_keeps_disjoint_corridors() {
        let g = two_corridors();
        let div = diversified_top_k(&g, 0, 5, &DiversityConfig::new(2, 0.0)).unwrap();
        assert!(!div.insufficient);
        let seqs: Vec<&[NodeId]> = div.paths.iter().map(|p| p.nodes()).collect();
        assert_eq!(seqs, vec![&[0, 1, 2, 5][..], &[0, 3, 4, 5]]);
    }

    #[test]
    fn vacuous_threshold_equals_yen_prefix() {
        let g = grid(4, 4);
        let div = diversified_top_k(&g, 0, 15, &DiversityConfig::new(5, 0.99)).unwrap();
        let yen = yen_k_shortest(&g, 0, 15, 5).unwrap();
        let a: Vec<&Path> = div.paths.iter().collect();
        let b: Vec<&Path> = yen.iter().map(|(p, _)| p).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn single_route_is_flagged_insufficient() {
        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let div = diversified_top_k(&g, 0, 2, &DiversityConfig::new(2, 0.5)).unwrap();
        assert_eq!(div.paths.len(), 1);
        assert!(div.insufficient);
        assert_eq!(
            diversified_top_k(&g, 0, 2, &DiversityConfig::new(2, 1.0)).unwrap_err(),
            SampleError::BadThreshold(1.0)
        );
    }

    #[test]
    fn unique_route_input_is_backfilled() {
        // Chain 0-1-2-3 plus a separate chain 4-5-6: no alternative 0->3 route.
        let g = Graph::from_edges(7, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (4, 5, 1.0), (5, 6, 1.0)])
            .unwrap();
        let corpus = vec![p(&g, &[0, 1, 2, 3]), p(&g, &[4, 5, 6]), p(&g, &[4, 5]), p(&g, &[5, 6]), p(&g, &[1, 2])];
        let ns = sample_negatives(0, &corpus, &g, &NegativeConfig::default(), 3).unwrap();
        assert!(ns.backfilled);
        assert_eq!(ns.negatives.len(), 4);
        assert!(ns.negatives.iter().all(|n| n.kind == NegativeKind::Random));
        assert!(ns.negatives.iter().all(|n| n.path != corpus[0]));
    }

    #[test]
    fn grid_corner_negatives_share_endpoints_and_are_ordered() {
        let g = grid(5, 5);
        let corpus = vec![
            yen_k_shortest(&g, 0, 24, 1).unwrap().remove(0).0,
            p(&g, &[5, 6, 7]),
            p(&g, &[20, 21, 16]),
            p(&g, &[3, 4, 9, 14]),
        ];
        for seed in 0..5 {
            let ns = sample_negatives(0, &corpus, &g, &NegativeConfig::default(), seed).unwrap();
            assert!(!ns.backfilled);
            assert_eq!(ns.negatives.len(), 4);
            let div: Vec<_> =
                ns.negatives.iter().filter(|n| n.kind == NegativeKind::Diversified).collect();
            assert_eq!(div.len(), 2);
            for n in &div {
                assert_eq!((n.path.source(), n.path.destination()), (0, 24));
                assert_ne!(n.path, corpus[0]);
            }
            for w in ns.negatives.windows(2) {
                assert!(w[0].overlap <= w[1].overlap);
            }
            for n in &ns.negatives {
                assert_eq!(n.overlap, overlap_ratio(&corpus[0], &n.path));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let g = grid(4, 4);
        let corpus: Vec<Path> = [(0, 15), (3, 12), (1, 14), (4, 11), (2, 13)]
            .iter()
            .map(|&(s, d)| yen_k_shortest(&g, s, d, 1).unwrap().remove(0).0)
            .collect();
        let cfg = NegativeConfig::default();
        let a = sample_all(&corpus, &g, &cfg, 9).unwrap();
        let b = sample_all(&corpus, &g, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let text = format_negative_sets(&a);
        assert_eq!(parse_negative_sets(&g, &text).unwrap(), a);
    }

    #[test]
    fn strategies_fill_their_slots() {
        let g = grid(5, 5);
        let corpus: Vec<Path> = [(0, 24), (4, 20), (1, 23), (5, 19), (2, 22)]
            .iter()
            .map(|&(s, d)| yen_k_shortest(&g, s, d, 1).unwrap().remove(0).0)
            .collect();
        let rand_cfg = NegativeConfig { strategy: SamplingStrategy::RandomOnly, ..Default::default() };
        let ns = sample_negatives(0, &corpus, &g, &rand_cfg, 1).unwrap();
        assert!(ns.negatives.iter().all(|n| n.kind == NegativeKind::Random));

        let topk_cfg = NegativeConfig { strategy: SamplingStrategy::TopKOnly, ..Default::default() };
        let ns = sample_negatives(0, &corpus, &g, &topk_cfg, 1).unwrap();
        assert_eq!(ns.negatives.len(), 4);
        assert!(ns.negatives.iter().all(|n| n.kind == NegativeKind::Diversified));

        let short = NegativeConfig { k: 1, ..Default::default() };
        let ns = sample_negatives(0, &corpus, &g, &short, 1).unwrap();
        assert_eq!(ns.negatives.len(), 1);
        assert_eq!(ns.negatives[0].kind, NegativeKind::Random);

        let too_many = NegativeConfig { k: 5, ..Default::default() };
        assert!(matches!(
            sample_negatives(0, &corpus, &g, &too_many, 1),
            Err(SampleError::Conflict(_))
        ));
    }

    #[test]
    fn tiny_corpus_is_rejected() {
        let g = triangle();
        let corpus = vec![p(&g, &[0, 1, 2]), p(&g, &[0, 1, 2])];
        assert!(matches!(
            sample_negatives(0, &corpus, &g, &NegativeConfig::default(), 0),
            Err(SampleError::InsufficientCorpus { .. })
        ));
    }

    fn negset(g: &Graph, input: &[NodeId], negs: &[&[NodeId]]) -> (Path, NegativeSet) {
        let target = p(g, input);
        let negatives = negs
            .iter()
            .map(|ids| {
                let path = p(g, ids);
                Negative { overlap: overlap_ratio(&target, &path), path, kind: NegativeKind::Random }
            })
            .collect();
        (target, NegativeSet { input: 0, negatives, backfilled: false })
    }

    #[test]
    fn schedule_stages() {
        let g = grid(3, 3);
        let (_, ns) = negset(&g, &[0, 1, 2], &[&[3, 4], &[4, 5], &[6, 7], &[7, 8]]);
        assert_eq!(curriculum_schedule(1, &ns, CurriculumMode::Staged).len(), 1);
        assert_eq!(curriculum_schedule(1, &ns, CurriculumMode::Staged)[0], ns.negatives[0]);
        assert_eq!(curriculum_schedule(4, &ns, CurriculumMode::Staged).len(), 4);
        assert_eq!(curriculum_schedule(9, &ns, CurriculumMode::Staged).len(), 4);
        assert_eq!(
            curriculum_schedule(4, &ns, CurriculumMode::Staged),
            curriculum_schedule(1, &ns, CurriculumMode::All)
        );
    }

    #[test]
    fn partition_examples() {
        let g = Graph::from_edges(
            6,
            [(0, 1, 1.0), (1, 2, 1.0), (0, 3, 1.0), (3, 2, 1.0), (4, 5, 1.0)],
        )
        .unwrap();
        let (t, ns) = negset(&g, &[0, 1, 2], &[&[0, 3, 2]]);
        let part = node_partition(&t, &ns.negatives).unwrap();
        assert_eq!(part, NodePartition { positive: vec![1], negative: vec![3] });

        let (t, ns) = negset(&g, &[0, 1, 2], &[&[4, 5]]);
        let part = node_partition(&t, &ns.negatives).unwrap();
        assert_eq!(part, NodePartition { positive: vec![0, 1, 2], negative: vec![4, 5] });

        let (t, ns) = negset(&g, &[0, 1, 2], &[&[0, 1, 2]]);
        assert_eq!(node_partition(&t, &ns.negatives), Err(SampleError::EmptyPartition));
    }
}
