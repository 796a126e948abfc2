//! Seeded synthetic road networks, path corpora and labels.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::graph::{Graph, NodeId, Path};
use crate::sampling::KShortestPaths;
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempts with {found} of {wanted} paths")]
    TooFewPaths { attempts: usize, found: usize, wanted: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    /// 4-connected grid; node `r * width + c` sits at row `r`, column `c`.
    Grid { width: usize, height: usize },
    /// Uniform points in a square of side `sqrt(n)·base_length`, linked
    /// when closer than `radius·base_length`.
    Geometric { n: usize, radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub topology: Topology,
    /// Unperturbed edge length in meters.
    pub base_length: f64,
    /// Lengths are `base·(1 + U(-η, η))`.
    pub length_noise: f64,
    /// Meters per second on ordinary streets.
    pub base_speed: f64,
    /// Speed multiplier on arterial rows and columns.
    pub arterial_factor: f64,
    /// Every `arterial_every`-th grid row and column is arterial; 0 disables.
    pub arterial_every: usize,
    /// Amplitude of the smooth random speed modulation, in `[0, 1)`.
    pub speed_modulation: f64,
    pub paths: usize,
    /// Detours up to `factor × shortest length` are kept; `<= 1` keeps only
    /// shortest paths.
    pub detour_factor: f64,
    /// Paths per OD pair, shortest included.
    pub max_variants: usize,
    /// Minimum number of edges on an OD's shortest path.
    pub min_hops: usize,
    /// Relative standard deviation of multiplicative travel-time noise.
    pub label_noise: f64,
    /// Softmax temperature of the ranking score, in seconds.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Grid { width: 8, height: 8 },
            base_length: 100.0,
            length_noise: 0.2,
            base_speed: 10.0,
            arterial_factor: 2.0,
            arterial_every: 3,
            speed_modulation: 0.4,
            paths: 200,
            detour_factor: 1.3,
            max_variants: 3,
            min_hops: 2,
            label_noise: 0.05,
            temperature: 20.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        match self.topology {
            Topology::Grid { width, height } if width == 0 || height == 0 => return bad("grid sides must be >= 1"),
            Topology::Geometric { n, radius } if n == 0 || !(radius > 0.0) => {
                return bad("geometric graphs need n >= 1 and radius > 0")
            }
            _ => {}
        }
        if !(self.base_length > 0.0 && self.base_speed > 0.0 && self.arterial_factor > 0.0) {
            return bad("base_length, base_speed and arterial_factor must be positive");
        }
        if !(0.0..1.0).contains(&self.length_noise) || !(0.0..1.0).contains(&self.speed_modulation) {
            return bad("length_noise and speed_modulation must lie in [0, 1)");
        }
        if self.paths == 0 || self.max_variants == 0 {
            return bad("paths and max_variants must be >= 1");
        }
        if !(self.label_noise >= 0.0) || !(self.temperature > 0.0) || !(self.detour_factor > 0.0) {
            return bad("label_noise must be >= 0, temperature and detour_factor > 0");
        }
        Ok(())
    }
}

/// A generated network: graph, planar node positions and per-edge speeds
/// aligned with [`Graph::successors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub graph: Graph,
    pub coords: Vec<(f64, f64)>,
    pub speeds: Vec<Vec<f64>>,
}

impl Network {
    pub fn speed(&self, u: NodeId, v: NodeId) -> Option<f64> {
        let i = self.graph.successors(u).binary_search_by(|e| e.to.cmp(&v)).ok()?;
        Some(self.speeds[u][i])
    }

    /// Noise-free travel time in seconds.
    pub fn travel_time(&self, p: &Path) -> f64 {
        p.nodes()
            .windows(2)
            .map(|h| self.graph.edge_length(h[0], h[1]).unwrap() / self.speed(h[0], h[1]).unwrap())
            .sum()
    }
}

const STREAM_LENGTHS: u64 = 1;
const STREAM_SPEEDS: u64 = 2;
const STREAM_PATHS: u64 = 3;
const STREAM_LABELS: u64 = 4;
const STREAM_POINTS: u64 = 5;

/// Smooth field in `[-1, 1]`: mean of three random plane waves.
struct Modulation {
    waves: [(f64, f64, f64); 3],
}

impl Modulation {
    fn new(seed: u64, scale: f64) -> Self {
        let mut rng = rng_for(seed, STREAM_SPEEDS);
        let mut wave = || {
            let angle = rng.random_range(0.0..2.0 * PI);
            let wavelength = scale * rng.random_range(3.0..8.0);
            let k = 2.0 * PI / wavelength;
            (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..2.0 * PI))
        };
        Self { waves: [wave(), wave(), wave()] }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves.iter().map(|(kx, ky, ph)| (kx * x + ky * y + ph).sin()).sum::<f64>() / 3.0
    }
}

pub fn gen_graph(cfg: &SynthConfig) -> Result<Network, SynthError> {
    cfg.validate()?;
    let b = cfg.base_length;
    let (coords, pairs): (Vec<(f64, f64)>, Vec<(NodeId, NodeId, f64)>) = match cfg.topology {
        Topology::Grid { width, height } => {
            let coords = (0..width * height).map(|i| ((i % width) as f64 * b, (i / width) as f64 * b)).collect();
            let mut pairs = Vec::new();
            for r in 0..height {
                for c in 0..width {
                    let u = r * width + c;
                    if c + 1 < width {
                        pairs.push((u, u + 1, b));
                    }
                    if r + 1 < height {
                        pairs.push((u, u + width, b));
                    }
                }
            }
            (coords, pairs)
        }
        Topology::Geometric { n, radius } => {
            let mut rng = rng_for(cfg.seed, STREAM_POINTS);
            let side = (n as f64).sqrt() * b;
            let coords: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.random_range(0.0..side), rng.random_range(0.0..side))).collect();
            let mut pairs = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    let d = ((coords[u].0 - coords[v].0).powi(2) + (coords[u].1 - coords[v].1).powi(2)).sqrt();
                    if d < radius * b && d > 0.0 {
                        pairs.push((u, v, d));
                    }
                }
            }
            (coords, pairs)
        }
    };
    let mut rng = rng_for(cfg.seed, STREAM_LENGTHS);
    let mut edges = Vec::with_capacity(2 * pairs.len());
    for (u, v, base) in pairs {
        let eta = if cfg.length_noise > 0.0 { rng.random_range(-cfg.length_noise..cfg.length_noise) } else { 0.0 };
        let len = base * (1.0 + eta);
        edges.push((u, v, len));
        edges.push((v, u, len));
    }
    let graph = Graph::from_edges(coords.len(), edges).expect("generated edges are valid");
    let modulation = Modulation::new(cfg.seed, b);
    let speeds = (0..graph.node_count())
        .map(|u| {
            graph
                .successors(u)
                .iter()
                .map(|e| {
                    let (a, c) = (coords[u], coords[e.to]);
                    let arterial = match cfg.topology {
                        Topology::Grid { width, .. } if cfg.arterial_every > 0 => {
                            let (ru, cu, rv, cv) = (u / width, u % width, e.to / width, e.to % width);
                            (ru == rv && ru % cfg.arterial_every == 0) || (cu == cv && cu % cfg.arterial_every == 0)
                        }
                        _ => false,
                    };
                    let factor = if arterial { cfg.arterial_factor } else { 1.0 };
                    let m = modulation.at((a.0 + c.0) / 2.0, (a.1 + c.1) / 2.0);
                    cfg.base_speed * factor * (1.0 + cfg.speed_modulation * m)
                })
                .collect()
        })
        .collect();
    Ok(Network { graph, coords, speeds })
}

/// Paths with the OD group each belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub paths: Vec<Path>,
    pub groups: Vec<u64>,
}

/// Samples distinct OD pairs and emits, per pair, the shortest path followed
/// by up to `max_variants - 1` detours from the Yen stream whose length is
/// within `detour_factor` of the shortest.
pub fn gen_paths(net: &Network, cfg: &SynthConfig) -> Result<Corpus, SynthError> {
    cfg.validate()?;
    let g = &net.graph;
    let n = g.node_count();
    let mut rng = rng_for(cfg.seed, STREAM_PATHS);
    let mut corpus = Corpus { paths: Vec::new(), groups: Vec::new() };
    let mut used = BTreeSet::new();
    let max_attempts = 100 * cfg.paths + 1000;
    let mut attempts = 0;
    while corpus.paths.len() < cfg.paths {
        if attempts == max_attempts || n < 2 {
            return Err(SynthError::TooFewPaths { attempts, found: corpus.paths.len(), wanted: cfg.paths });
        }
        attempts += 1;
        let (s, d) = (rng.random_range(0..n), rng.random_range(0..n));
        if s == d || !used.insert((s, d)) {
            continue;
        }
        let mut stream = KShortestPaths::new(g, s, d).expect("distinct in-range endpoints");
        let Some((shortest, best)) = stream.next() else { continue };
        if shortest.len() < cfg.min_hops + 1 {
            continue;
        }
        let group = used.len() as u64 - 1;
        let room = cfg.max_variants.min(cfg.paths - corpus.paths.len());
        let mut variants = vec![shortest];
        if cfg.detour_factor > 1.0 {
            variants.extend(
                stream.take_while(|(_, len)| *len <= cfg.detour_factor * best).map(|(p, _)| p).take(room - 1),
            );
        }
        for p in variants.into_iter().take(room) {
            corpus.paths.push(p);
            corpus.groups.push(group);
        }
    }
    Ok(corpus)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    /// Seconds, one per corpus path.
    pub travel_times: Vec<f64>,
    /// Softmax of `-travel_time / temperature` within each OD group.
    pub rank_scores: Vec<f64>,
}

pub fn gen_labels(net: &Network, corpus: &Corpus, cfg: &SynthConfig) -> Result<Labels, SynthError> {
    cfg.validate()?;
    let normal = Normal::new(0.0, cfg.label_noise).expect("validated noise");
    let base = derive_seed(cfg.seed, STREAM_LABELS);
    let travel_times: Vec<f64> = corpus
        .paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let noise = if cfg.label_noise > 0.0 { normal.sample(&mut rng_for(base, i as u64)) } else { 0.0 };
            // Noise cannot make a travel time non-positive.
            net.travel_time(p) * (1.0 + noise).max(0.05)
        })
        .collect();
    let mut rank_scores = vec![0.0; travel_times.len()];
    let mut by_group: std::collections::BTreeMap<u64, Vec<usize>> = Default::default();
    for (i, &gid) in corpus.groups.iter().enumerate() {
        by_group.entry(gid).or_default().push(i);
    }
    for members in by_group.values() {
        let best = members.iter().map(|&i| travel_times[i]).fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = members.iter().map(|&i| (-(travel_times[i] - best) / cfg.temperature).exp()).collect();
        let total: f64 = w.iter().sum();
        for (&i, wi) in members.iter().zip(&w) {
            rank_scores[i] = wi / total;
        }
    }
    Ok(Labels { travel_times, rank_scores })
}

/// Parses `WxH` grid sizes such as `8x8`.
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w = w.trim().parse().map_err(|_| format!("bad grid width in `{s}`"))?;
    let h = h.trim().parse().map_err(|_| format!("bad grid height in `{s}`"))?;
    Ok((w, h))
}
