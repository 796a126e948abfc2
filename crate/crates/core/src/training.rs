//! PIM training loop, checkpoints, corpus embedding and supervised
//! fine-tuning of a pre-trained encoder.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path as FsPath;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Matrix, Tape};
use crate::encoder::{EncoderError, EncoderParams, ENCODER_TENSORS};
use crate::graph::{FeatureError, FeatureTable, Graph, Path};
use crate::infomax::{
    sample_objective, DiscVars, InfomaxError, MiMode, PathNodeDisc, PathPathDisc, PathPathOperand, SampleViews,
};
use crate::sampling::{
    curriculum_schedule, node_partition, sample_all, CurriculumMode, Negative, NegativeConfig, NegativeSet,
    SampleError,
};
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid training data: {0}")]
    Data(String),
    #[error("non-finite objective at epoch {epoch}, sample {sample}")]
    NonFinite { epoch: usize, sample: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Infomax(#[from] InfomaxError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Negatives per input path used in training.
    pub k: usize,
    pub curriculum: CurriculumMode,
    pub mi_mode: MiMode,
    pub hidden: usize,
    /// Path representation size `D'`.
    pub repr_dim: usize,
    pub seed: u64,
    /// Redraw negatives at the start of every epoch after the first.
    pub resample_negatives: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            k: 4,
            curriculum: CurriculumMode::Staged,
            mi_mode: MiMode::Joint,
            hidden: 128,
            repr_dim: 128,
            seed: 0,
            resample_negatives: false,
        }
    }
}

/// Parses flat `key = value` text; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value.parse().map_err(|_| TrainError::Config(format!("bad value `{value}` for {key}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.k < 1 {
            return bad("k must be >= 1");
        }
        if self.hidden < 1 || self.repr_dim < 1 {
            return bad("hidden and repr_dim must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }

    /// Overrides fields from `key=value` pairs.
    pub fn apply_kv(&mut self, pairs: &[(String, String)]) -> Result<(), TrainError> {
        for (k, v) in pairs {
            match k.as_str() {
                "epochs" => self.epochs = parse_field(k, v)?,
                "batch_size" => self.batch_size = parse_field(k, v)?,
                "learning_rate" => self.learning_rate = parse_field(k, v)?,
                "beta1" => self.beta1 = parse_field(k, v)?,
                "beta2" => self.beta2 = parse_field(k, v)?,
                "eps" => self.eps = parse_field(k, v)?,
                "k" => self.k = parse_field(k, v)?,
                "curriculum" => self.curriculum = v.parse().map_err(TrainError::Config)?,
                "mi_mode" => self.mi_mode = v.parse().map_err(TrainError::Config)?,
                "hidden" => self.hidden = parse_field(k, v)?,
                "repr_dim" => self.repr_dim = parse_field(k, v)?,
                "seed" => self.seed = parse_field(k, v)?,
                "resample_negatives" => self.resample_negatives = parse_field(k, v)?,
                other => return Err(TrainError::Config(format!("unknown key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "epochs={}\nbatch_size={}\nlearning_rate={}\nbeta1={}\nbeta2={}\neps={}\nk={}\ncurriculum={}\n\
             mi_mode={}\nhidden={}\nrepr_dim={}\nseed={}\nresample_negatives={}\n",
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.eps,
            self.k,
            self.curriculum,
            self.mi_mode,
            self.hidden,
            self.repr_dim,
            self.seed,
            self.resample_negatives
        )
    }

    /// Curriculum stage (1-based) of a 1-based epoch. Stages advance every
    /// `epochs / k` epochs.
    pub fn stage(&self, epoch: usize) -> usize {
        match self.curriculum {
            CurriculumMode::All => self.k,
            CurriculumMode::Staged => {
                let len = (self.epochs / self.k).max(1);
                ((epoch.max(1) - 1) / len + 1).min(self.k)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    fn zeros_like(params: &[&Matrix]) -> Self {
        let z: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.nrows(), p.ncols())).collect();
        Self { m: z.clone(), v: z, t: 0 }
    }
}

/// One bias-corrected Adam step minimizing the loss whose gradients are `grads`.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads[i]);
        for j in 0..g.len() {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
        }
    }
}

pub const DISC_TENSORS: [&str; 3] = ["w_pp", "l", "w_pn"];

/// Encoder, both discriminators and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub path_path: PathPathDisc,
    pub path_node: PathNodeDisc,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
}

impl Model {
    pub fn init(d: usize, hidden: usize, repr_dim: usize, seed: u64) -> Result<Self, TrainError> {
        let encoder = EncoderParams::init(d, hidden, repr_dim, seed)?;
        let path_path = PathPathDisc::init(d, repr_dim, seed);
        let path_node = PathNodeDisc::init(repr_dim, d);
        let mut m = Self { encoder, path_path, path_node, adam: AdamState { m: vec![], v: vec![], t: 0 }, epoch: 0 };
        m.adam = AdamState::zeros_like(&m.tensors());
        Ok(m)
    }

    /// Encoder tensors, then `W_pp`, `L`, `W_pn`.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.encoder.tensors().iter().collect();
        v.extend([&self.path_path.w_pp, &self.path_path.l, &self.path_node.w_pn]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.encoder.tensors_mut().iter_mut().collect();
        v.extend([&mut self.path_path.w_pp, &mut self.path_path.l, &mut self.path_node.w_pn]);
        v
    }

    pub fn tensor_names() -> Vec<String> {
        ENCODER_TENSORS
            .iter()
            .map(|n| format!("enc.{n}"))
            .chain(DISC_TENSORS.iter().map(|n| format!("disc.{n}")))
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn repr_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Per-epoch means of the per-sample objectives.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub global: f64,
    pub local: f64,
    pub joint: f64,
    pub stage: usize,
    /// Samples whose local term was dropped for an empty node partition.
    pub local_skipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<EpochRecord>,
    /// Mean joint objective of the very first batch, before any update.
    pub first_batch_joint: Option<f64>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,global,local,joint,stage\n");
        for r in &self.records {
            writeln!(s, "{},{},{},{},{}", r.epoch, r.global, r.local, r.joint, r.stage).unwrap();
        }
        s
    }
}

/// Inputs shared by training and evaluation.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub graph: &'a Graph,
    pub features: &'a FeatureTable,
    pub corpus: &'a [Path],
    /// One set per corpus path, in corpus order.
    pub negatives: &'a [NegativeSet],
}

impl TrainData<'_> {
    fn validate(&self) -> Result<(), TrainError> {
        self.features.check_covers(self.graph)?;
        if self.corpus.is_empty() {
            return Err(TrainError::Data("corpus is empty".into()));
        }
        if self.negatives.len() != self.corpus.len() {
            return Err(TrainError::Data(format!(
                "{} negative sets for {} corpus paths",
                self.negatives.len(),
                self.corpus.len()
            )));
        }
        for (i, ns) in self.negatives.iter().enumerate() {
            if ns.input != i {
                return Err(TrainError::Data(format!("negative set {i} belongs to path {}", ns.input)));
            }
            if ns.negatives.is_empty() {
                return Err(TrainError::Data(format!("path {i} has no negatives")));
            }
        }
        Ok(())
    }
}

struct SampleResult {
    grads: Vec<Matrix>,
    global: f64,
    local: f64,
    local_skipped: bool,
}

fn sample_step(model: &Model, f: &FeatureTable, input: &Path, active: &[Negative], mode: MiMode) -> Result<SampleResult, TrainError> {
    let iv = f.gather(input.nodes());
    let neg_views: Vec<Matrix> = active.iter().map(|n| f.gather(n.path.nodes())).collect();
    let (x, y) = match node_partition(input, active) {
        Ok(p) => (f.gather(&p.positive), f.gather(&p.negative)),
        Err(_) => (Matrix::zeros(0, f.dim()), Matrix::zeros(0, f.dim())),
    };
    let views = SampleViews { input: &iv, negatives: &neg_views, positive_nodes: &x, negative_nodes: &y };
    let mut tape = Tape::new();
    let enc = model.encoder.record(&mut tape);
    let disc = DiscVars::record(&mut tape, &model.path_path, &model.path_node);
    let obj = sample_objective(&mut tape, &enc, &disc, &views, mode)?;
    let grads = tape.backward(obj.total)?;
    let vars = enc.vars().iter().copied().chain([disc.w_pp, disc.l, disc.w_pn]);
    let grads = vars
        .zip(model.tensors())
        .map(|(v, t)| grads.get_or_zeros(v, t.nrows(), t.ncols()))
        .collect();
    Ok(SampleResult { grads, global: obj.global, local: obj.local, local_skipped: obj.local_skipped })
}

fn active<'a>(cfg: &TrainConfig, ns: &'a NegativeSet, stage: usize) -> &'a [Negative] {
    let a = curriculum_schedule(stage, ns, cfg.curriculum);
    &a[..a.len().min(cfg.k)]
}

/// Writes the model to `dir/checkpoint.manifest` and `dir/checkpoint.bin`.
///
/// The manifest lists `name rows cols offset` per tensor, with offsets
/// counted in little-endian `f64` values of the binary file.
pub fn save_checkpoint(model: &Model, dir: &FsPath) -> Result<(), TrainError> {
    fs::create_dir_all(dir)?;
    let names = Model::tensor_names();
    let mut manifest = format!("pim-checkpoint 1\nepoch {}\nadam_t {}\n", model.epoch, model.adam.t);
    let mut bytes = Vec::new();
    let mut offset = 0;
    let groups = [("", model.tensors()), ("adam_m.", model.adam.m.iter().collect()), ("adam_v.", model.adam.v.iter().collect())];
    for (prefix, tensors) in groups {
        for (name, t) in names.iter().zip(tensors) {
            writeln!(manifest, "{prefix}{name} {} {} {offset}", t.nrows(), t.ncols()).unwrap();
            // Row-major on disk.
            for r in 0..t.nrows() {
                for c in 0..t.ncols() {
                    bytes.extend_from_slice(&t[(r, c)].to_le_bytes());
                }
            }
            offset += t.len();
        }
    }
    let tmp_bin = dir.join("checkpoint.bin.tmp");
    let tmp_man = dir.join("checkpoint.manifest.tmp");
    fs::write(&tmp_bin, bytes)?;
    fs::write(&tmp_man, manifest)?;
    fs::rename(tmp_bin, dir.join("checkpoint.bin"))?;
    fs::rename(tmp_man, dir.join("checkpoint.manifest"))?;
    Ok(())
}

pub fn load_checkpoint(dir: &FsPath) -> Result<Model, TrainError> {
    let bad = |m: String| TrainError::Checkpoint(m);
    let manifest = fs::read_to_string(dir.join("checkpoint.manifest"))?;
    let bytes = fs::read(dir.join("checkpoint.bin"))?;
    if bytes.len() % 8 != 0 {
        return Err(bad("binary length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut lines = manifest.lines();
    if lines.next() != Some("pim-checkpoint 1") {
        return Err(bad("unknown manifest header".into()));
    }
    let mut header = |key: &str| -> Result<u64, TrainError> {
        let line = lines.next().unwrap_or("");
        line.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad(format!("expected `{key}` line, got `{line}`")))
    };
    let epoch = header("epoch")? as usize;
    let t = header("adam_t")?;
    let names = Model::tensor_names();
    let mut expected: Vec<String> = names.clone();
    expected.extend(names.iter().map(|n| format!("adam_m.{n}")));
    expected.extend(names.iter().map(|n| format!("adam_v.{n}")));
    let mut tensors = Vec::with_capacity(expected.len());
    for want in &expected {
        let line = lines.next().ok_or_else(|| bad(format!("missing tensor {want}")))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [name, rows, cols, off] = parts[..] else {
            return Err(bad(format!("malformed line `{line}`")));
        };
        if name != want {
            return Err(bad(format!("expected tensor {want}, found {name}")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("malformed line `{line}`")));
        let (rows, cols, off) = (parse(rows)?, parse(cols)?, parse(off)?);
        let data = values
            .get(off..off + rows * cols)
            .ok_or_else(|| bad(format!("tensor {name} runs past the end of the binary")))?;
        tensors.push(Matrix::from_row_slice(rows, cols, data));
    }
    let n = names.len();
    let v = tensors.split_off(2 * n);
    let m = tensors.split_off(n);
    let disc = tensors.split_off(ENCODER_TENSORS.len());
    let encoder = EncoderParams::from_tensors(tensors).map_err(|e| bad(e.to_string()))?;
    let [w_pp, l, w_pn]: [Matrix; 3] = disc.try_into().unwrap();
    let (d, d_out) = (encoder.input_dim(), encoder.output_dim());
    if w_pp.shape() != (d_out, d_out) || l.shape() != (d, d_out) || w_pn.shape() != (d_out, d) {
        return Err(bad("discriminator shapes do not match the encoder".into()));
    }
    let model = Model {
        encoder,
        path_path: PathPathDisc { w_pp, l },
        path_node: PathNodeDisc { w_pn },
        adam: AdamState { m, v, t },
        epoch,
    };
    let shapes_match = model
        .tensors()
        .iter()
        .zip(model.adam.m.iter().zip(&model.adam.v))
        .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
    if !shapes_match {
        return Err(bad("optimizer buffers do not match parameter shapes".into()));
    }
    Ok(model)
}

/// Trains a fresh model. With `checkpoint_dir`, the model is saved after
/// every epoch.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    negative_cfg: Option<&NegativeConfig>,
    checkpoint_dir: Option<&FsPath>,
) -> Result<(Model, LossTrace), TrainError> {
    cfg.validate()?;
    data.validate()?;
    if cfg.resample_negatives && negative_cfg.is_none() {
        return Err(TrainError::Config("resampling negatives needs a negative sampling config".into()));
    }
    let mut model = Model::init(data.features.dim(), cfg.hidden, cfg.repr_dim, cfg.seed)?;
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..data.corpus.len()).collect();
    let mut resampled: Option<Vec<NegativeSet>> = None;
    for epoch in 1..=cfg.epochs {
        if cfg.resample_negatives && epoch > 1 {
            let nc = negative_cfg.expect("checked above");
            resampled = Some(sample_all(data.corpus, data.graph, nc, derive_seed(cfg.seed, epoch as u64))?);
        }
        let sets = resampled.as_deref().unwrap_or(data.negatives);
        let stage = cfg.stage(epoch);
        order.shuffle(&mut rng_for(cfg.seed, 0x5EED_0000 + epoch as u64));
        let (mut g_sum, mut l_sum, mut skipped) = (0.0, 0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<SampleResult, TrainError>> = batch
                .par_iter()
                .map(|&i| sample_step(&model, data.features, &data.corpus[i], active(cfg, &sets[i], stage), cfg.mi_mode))
                .collect();
            let mut grads: Vec<Matrix> = model.tensors().iter().map(|t| Matrix::zeros(t.nrows(), t.ncols())).collect();
            let (mut bg, mut bl) = (0.0, 0.0);
            for (res, &i) in results.into_iter().zip(batch) {
                let r = res?;
                if !(r.global.is_finite() && r.local.is_finite()) {
                    return Err(TrainError::NonFinite { epoch, sample: i });
                }
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    *acc += g;
                }
                bg += r.global;
                bl += r.local;
                skipped += r.local_skipped as usize;
            }
            if trace.first_batch_joint.is_none() {
                trace.first_batch_joint = Some((bg + bl) / batch.len() as f64);
            }
            g_sum += bg;
            l_sum += bl;
            // Loss is the negated batch-mean objective.
            let scale = -1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            let mut adam = std::mem::replace(&mut model.adam, AdamState { m: vec![], v: vec![], t: 0 });
            adam_step(&mut model.tensors_mut(), &grads, &mut adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
            model.adam = adam;
            if !model.is_finite() {
                return Err(TrainError::NonFinite { epoch, sample: batch[0] });
            }
        }
        let n = data.corpus.len() as f64;
        trace.records.push(EpochRecord {
            epoch,
            global: g_sum / n,
            local: l_sum / n,
            joint: (g_sum + l_sum) / n,
            stage,
            local_skipped: skipped,
        });
        model.epoch = epoch;
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&model, dir)?;
        }
    }
    Ok((model, trace))
}

/// Row `i` is the encoding of `paths[i]`.
pub fn embed_paths(encoder: &EncoderParams, features: &FeatureTable, paths: &[Path]) -> Result<Matrix, TrainError> {
    let rows: Vec<Matrix> = paths
        .par_iter()
        .map(|p| encoder.encode(&features.gather(p.nodes())))
        .collect::<Result<_, _>>()?;
    let mut out = Matrix::zeros(paths.len(), encoder.output_dim());
    for (i, r) in rows.iter().enumerate() {
        out.set_row(i, &r.row(0));
    }
    Ok(out)
}

/// [`embed_paths`] with the paths checked against the graph and features.
pub fn embed_corpus(model: &Model, g: &Graph, features: &FeatureTable, paths: &[Path]) -> Result<Matrix, TrainError> {
    features.check_covers(g)?;
    for (i, p) in paths.iter().enumerate() {
        Path::validate(g, p.nodes()).map_err(|e| TrainError::Data(format!("path {i}: {e}")))?;
    }
    embed_paths(&model.encoder, features, paths)
}

/// Fraction of correct path-path decisions at threshold 0.5: each input
/// path should score above 0.5 against its own initial view and below 0.5
/// against the paired negative path's representation.
pub fn pair_accuracy(model: &Model, features: &FeatureTable, inputs: &[Path], negatives: &[Path]) -> Result<f64, TrainError> {
    if inputs.len() != negatives.len() || inputs.is_empty() {
        return Err(TrainError::Data("need one negative per input path".into()));
    }
    let correct: usize = inputs
        .par_iter()
        .zip(negatives)
        .map(|(p, n)| -> Result<usize, TrainError> {
            let iv = features.gather(p.nodes());
            let rep = model.encoder.encode(&iv)?;
            let neg = model.encoder.encode(&features.gather(n.nodes()))?;
            let pos_ok = model.path_path.score(&rep, PathPathOperand::View(&iv)) > 0.5;
            let neg_ok = model.path_path.score(&rep, PathPathOperand::Repr(&neg)) < 0.5;
            Ok(pos_ok as usize + neg_ok as usize)
        })
        .sum::<Result<usize, _>>()?;
    Ok(correct as f64 / (2 * inputs.len()) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { epochs: 50, learning_rate: 1e-3, batch_size: 32, seed: 0 }
    }
}

/// Encoder plus a linear head `D' -> 1` predicting standardized targets.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedModel {
    pub encoder: EncoderParams,
    pub head_w: Matrix,
    pub head_b: Matrix,
    pub target_mean: f64,
    pub target_std: f64,
}

impl SupervisedModel {
    pub fn predict(&self, features: &FeatureTable, paths: &[Path]) -> Result<Vec<f64>, TrainError> {
        let reps = embed_paths(&self.encoder, features, paths)?;
        let out = reps * &self.head_w;
        Ok(out.iter().map(|z| (z + self.head_b[0]) * self.target_std + self.target_mean).collect())
    }
}

/// Supervised regression with both the head and the encoder updated.
/// Returns the model and the per-epoch training MSE in target units.
pub fn finetune(
    encoder: EncoderParams,
    features: &FeatureTable,
    labeled: &[(Path, f64)],
    cfg: &FinetuneConfig,
) -> Result<(SupervisedModel, Vec<f64>), TrainError> {
    if labeled.is_empty() {
        return Err(TrainError::Data("no labeled paths".into()));
    }
    if cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0) {
        return Err(TrainError::Config("finetune needs epochs, batch_size and learning_rate > 0".into()));
    }
    if labeled.iter().any(|(_, y)| !y.is_finite()) {
        return Err(TrainError::Data("non-finite target".into()));
    }
    let n = labeled.len() as f64;
    let mean = labeled.iter().map(|(_, y)| y).sum::<f64>() / n;
    let var = labeled.iter().map(|(_, y)| (y - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let d_out = encoder.output_dim();
    let mut model = SupervisedModel {
        encoder,
        head_w: Matrix::zeros(d_out, 1),
        head_b: Matrix::zeros(1, 1),
        target_mean: mean,
        target_std: std,
    };
    let views: Vec<Matrix> = labeled.iter().map(|(p, _)| features.gather(p.nodes())).collect();
    let targets: Vec<f64> = labeled.iter().map(|(_, y)| (y - mean) / std).collect();
    let n_tensors = ENCODER_TENSORS.len() + 2;
    let mut adam = {
        let mut shapes: Vec<&Matrix> = model.encoder.tensors().iter().collect();
        shapes.extend([&model.head_w, &model.head_b]);
        AdamState::zeros_like(&shapes)
    };
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, 0xF17E_0000 + epoch as u64));
        let mut sq_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(Vec<Matrix>, f64), TrainError>> = batch
                .par_iter()
                .map(|&i| {
                    let mut tape = Tape::new();
                    let enc = model.encoder.record(&mut tape);
                    let w = tape.param(model.head_w.clone());
                    let b = tape.param(model.head_b.clone());
                    let iv = tape.constant(views[i].clone());
                    let rep = enc.encode(&mut tape, iv)?;
                    let z = tape.matmul(rep, w)?;
                    let pred = tape.add(z, b)?;
                    let target = tape.constant(Matrix::from_element(1, 1, targets[i]));
                    let err = tape.sub(pred, target)?;
                    let sq = tape.mul(err, err)?;
                    let grads = tape.backward(sq)?;
                    let vars = enc.vars().iter().copied().chain([w, b]);
                    let shapes = model.encoder.tensors().iter().chain([&model.head_w, &model.head_b]);
                    let g = vars.zip(shapes).map(|(v, t)| grads.get_or_zeros(v, t.nrows(), t.ncols())).collect();
                    Ok((g, tape.scalar(sq)))
                })
                .collect();
            let mut grads: Vec<Matrix> = Vec::with_capacity(n_tensors);
            for (k, res) in results.into_iter().enumerate() {
                let (g, sq) = res?;
                if !sq.is_finite() {
                    return Err(TrainError::NonFinite { epoch, sample: batch[k] });
                }
                sq_sum += sq;
                if grads.is_empty() {
                    grads = g;
                } else {
                    for (acc, gi) in grads.iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                *g *= scale;
            }
            let SupervisedModel { encoder, head_w, head_b, .. } = &mut model;
            let mut params: Vec<&mut Matrix> = encoder.tensors_mut().iter_mut().collect();
            params.extend([head_w, head_b]);
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate, 0.9, 0.999, 1e-8);
        }
        history.push(sq_sum / n * std * std);
    }
    Ok((model, history))
}
