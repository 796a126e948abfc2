//! End-to-end experiment plumbing shared by the command-line tool and the
//! acceptance suite: synthetic dataset, node features, negatives, PIM
//! training on the training split, and downstream evaluation.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::autodiff::Matrix;
use crate::downstream::{fit, metrics, split_indices, DownstreamError, MetricsReport, RegressorKind, Split};
use crate::features::{node2vec, FeaturesError, SgnsConfig, WalkConfig};
use crate::graph::{FeatureTable, Path};
use crate::infomax::MiMode;
use crate::sampling::{sample_all, CurriculumMode, NegativeConfig, NegativeSet, SampleError, SamplingStrategy};
use crate::seed::derive_seed;
use crate::synth::{gen_graph, gen_labels, gen_paths, Corpus, Labels, Network, SynthConfig, SynthError, Topology};
use crate::training::{
    embed_paths, finetune, train, FinetuneConfig, LossTrace, Model, SupervisedModel, TrainConfig, TrainData, TrainError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Features(#[from] FeaturesError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Downstream(#[from] DownstreamError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub walk: WalkConfig,
    pub sgns: SgnsConfig,
    pub negatives: NegativeConfig,
    pub train: TrainConfig,
    pub regressor: RegressorKind,
    pub split_seed: u64,
}

impl PipelineConfig {
    /// Desk-scale setting: 8x8 grid, 200 paths, seed 7, D=16, H=D'=32.
    pub fn standard() -> Self {
        Self {
            synth: SynthConfig { topology: Topology::Grid { width: 8, height: 8 }, paths: 200, seed: 7, ..Default::default() },
            walk: WalkConfig { seed: 7, ..Default::default() },
            sgns: SgnsConfig { dim: 16, seed: 7, ..Default::default() },
            negatives: NegativeConfig::default(),
            train: TrainConfig { hidden: 32, repr_dim: 32, ..Default::default() },
            regressor: RegressorKind::Ridge { lambda: 1e-3 },
            split_seed: 7,
        }
    }
}

/// Generated network, corpus, labels, frozen node features and split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub network: Network,
    pub corpus: Corpus,
    pub labels: Labels,
    pub features: FeatureTable,
    pub split: Split,
}

impl Dataset {
    pub fn paths(&self, idx: &[usize]) -> Vec<Path> {
        idx.iter().map(|&i| self.corpus.paths[i].clone()).collect()
    }

    /// Validation and test indices together, ascending.
    pub fn held_out(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.split.validation.iter().chain(&self.split.test).copied().collect();
        v.sort_unstable();
        v
    }

    pub fn travel_times(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.labels.travel_times[i]).collect()
    }
}

pub fn build_dataset(cfg: &PipelineConfig) -> Result<Dataset, PipelineError> {
    let network = gen_graph(&cfg.synth)?;
    let corpus = gen_paths(&network, &cfg.synth)?;
    let labels = gen_labels(&network, &corpus, &cfg.synth)?;
    let features = node2vec(&network.graph, &cfg.walk, &cfg.sgns)?;
    let split = split_indices(corpus.paths.len(), cfg.split_seed);
    Ok(Dataset { network, corpus, labels, features, split })
}

/// A trained model with the negatives it saw. Negative set `i` belongs to
/// the `i`-th training path.
#[derive(Clone, Debug)]
pub struct PimRun {
    pub model: Model,
    pub trace: LossTrace,
    pub negatives: Vec<NegativeSet>,
}

/// Trains PIM on the training split with `seed` driving negatives,
/// initialization and batch order.
pub fn train_pim(
    ds: &Dataset,
    negatives: &NegativeConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<PimRun, PipelineError> {
    let corpus = ds.paths(&ds.split.train);
    let sets = sample_all(&corpus, &ds.network.graph, negatives, derive_seed(seed, 1))?;
    let cfg = TrainConfig { seed: derive_seed(seed, 2), ..train_cfg.clone() };
    let data = TrainData { graph: &ds.network.graph, features: &ds.features, corpus: &corpus, negatives: &sets };
    let (model, trace) = train(&cfg, &data, Some(negatives), None)?;
    Ok(PimRun { model, trace, negatives: sets })
}

/// Fits `kind` on the training rows of `embeddings` (one row per corpus
/// path) and reports travel-time error on `eval`.
pub fn travel_time_report(
    ds: &Dataset,
    embeddings: &Matrix,
    kind: RegressorKind,
    eval: &[usize],
) -> Result<MetricsReport, PipelineError> {
    let rows = |idx: &[usize]| Matrix::from_fn(idx.len(), embeddings.ncols(), |r, c| embeddings[(idx[r], c)]);
    let reg = fit(kind, &rows(&ds.split.train), &ds.travel_times(&ds.split.train))?;
    let pred = reg.predict(&rows(eval))?;
    Ok(metrics(&pred, &ds.travel_times(eval))?)
}

/// PIM representations of every corpus path.
pub fn pim_embeddings(ds: &Dataset, model: &Model) -> Result<Matrix, PipelineError> {
    Ok(embed_paths(&model.encoder, &ds.features, &ds.corpus.paths)?)
}

/// Mean of the node feature vectors along each path.
pub fn mean_feature_embeddings(ds: &Dataset) -> Matrix {
    let f = &ds.features;
    let mut out = Matrix::zeros(ds.corpus.paths.len(), f.dim());
    for (i, p) in ds.corpus.paths.iter().enumerate() {
        for (c, v) in f.mean_of(p.nodes()).into_iter().enumerate() {
            out[(i, c)] = v;
        }
    }
    out
}

/// Fine-tunes `encoder` on the first `fraction` of the (seed-shuffled)
/// training split and reports travel-time error on `eval`.
pub fn finetune_report(
    ds: &Dataset,
    encoder: crate::encoder::EncoderParams,
    cfg: &FinetuneConfig,
    fraction: f64,
    eval: &[usize],
) -> Result<(SupervisedModel, MetricsReport), PipelineError> {
    let take = ((ds.split.train.len() as f64 * fraction).round() as usize).clamp(1, ds.split.train.len());
    let labeled: Vec<(Path, f64)> = ds.split.train[..take]
        .iter()
        .map(|&i| (ds.corpus.paths[i].clone(), ds.labels.travel_times[i]))
        .collect();
    let (model, _) = finetune(encoder, &ds.features, &labeled, cfg)?;
    let pred = model.predict(&ds.features, &ds.paths(eval))?;
    let report = metrics(&pred, &ds.travel_times(eval))?;
    Ok((model, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationAxis {
    /// Global-only, local-only and joint objectives.
    MiMode,
    /// Random-only, top-k-only and curriculum negatives.
    Strategy,
    /// K from 1 to the configured K, all negatives active from the start.
    NegativeCount,
}

impl FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mi-mode" => Ok(Self::MiMode),
            "strategy" | "sampling-strategy" => Ok(Self::Strategy),
            "k" | "negatives" => Ok(Self::NegativeCount),
            other => Err(format!("unknown ablation axis `{other}` (expected mi-mode, strategy or k)")),
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MiMode => "mi-mode",
            Self::Strategy => "strategy",
            Self::NegativeCount => "k",
        })
    }
}

/// One variant of an ablation with its per-seed held-out MAE.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub negatives: NegativeConfig,
    pub train: TrainConfig,
    pub maes: Vec<f64>,
}

impl AblationRow {
    pub fn mean_mae(&self) -> f64 {
        self.maes.iter().sum::<f64>() / self.maes.len() as f64
    }
}

/// The variants of `axis` derived from a base configuration.
pub fn ablation_variants(axis: AblationAxis, base: &PipelineConfig) -> Vec<(String, NegativeConfig, TrainConfig)> {
    let (n, t) = (&base.negatives, &base.train);
    match axis {
        AblationAxis::MiMode => [MiMode::GlobalOnly, MiMode::LocalOnly, MiMode::Joint]
            .into_iter()
            .map(|m| (m.to_string(), n.clone(), TrainConfig { mi_mode: m, ..t.clone() }))
            .collect(),
        AblationAxis::Strategy => [SamplingStrategy::RandomOnly, SamplingStrategy::TopKOnly, SamplingStrategy::Curriculum]
            .into_iter()
            .map(|s| (s.to_string(), NegativeConfig { strategy: s, ..n.clone() }, t.clone()))
            .collect(),
        AblationAxis::NegativeCount => (1..=n.k)
            .map(|k| {
                let neg = NegativeConfig { k, ..n.clone() };
                (format!("K={k}"), neg, TrainConfig { k, curriculum: CurriculumMode::All, ..t.clone() })
            })
            .collect(),
    }
}

/// Trains every variant of `axis` once per seed and records held-out MAE.
pub fn ablate(
    ds: &Dataset,
    base: &PipelineConfig,
    axis: AblationAxis,
    seeds: &[u64],
) -> Result<Vec<AblationRow>, PipelineError> {
    let eval = ds.held_out();
    ablation_variants(axis, base)
        .into_iter()
        .map(|(label, negatives, train_cfg)| {
            let maes = seeds
                .iter()
                .map(|&s| {
                    let run = train_pim(ds, &negatives, &train_cfg, s)?;
                    let emb = pim_embeddings(ds, &run.model)?;
                    Ok(travel_time_report(ds, &emb, base.regressor, &eval)?.mae)
                })
                .collect::<Result<Vec<f64>, PipelineError>>()?;
            Ok(AblationRow { label, negatives, train: train_cfg, maes })
        })
        .collect()
}

/// Plain-text comparison table.
pub fn format_ablation(axis: AblationAxis, rows: &[AblationRow]) -> String {
    let mut s = format!("{:<12} {:>12}  per-seed MAE\n", axis.to_string(), "mean MAE");
    for r in rows {
        let per: Vec<String> = r.maes.iter().map(|m| format!("{m:.4}")).collect();
        writeln!(s, "{:<12} {:>12.4}  {}", r.label, r.mean_mae(), per.join(" ")).unwrap();
    }
    s
}
