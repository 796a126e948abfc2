use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use pim_core::autodiff::Matrix;
use pim_core::downstream::{
    fit, metrics, parse_rank_labels, parse_value_labels, rank_metrics, split_indices, MetricsReport, RankReport,
    RegressorKind, ValueLabels,
};
use pim_core::encoder::EncoderParams;
use pim_core::features::{load_features, node2vec, save_features, SgnsConfig, WalkConfig};
use pim_core::graph::{format_paths, parse_paths, FeatureTable, Graph, Path};
use pim_core::downstream::{format_rank_labels, format_value_labels, RankLabels};
use pim_core::infomax::MiMode;
use pim_core::pipeline::{ablate as run_ablation, build_dataset, format_ablation, AblationAxis, PipelineConfig};
use pim_core::sampling::{format_negative_sets, parse_negative_sets, sample_all, CurriculumMode, NegativeConfig, SamplingStrategy};
use pim_core::seed::derive_seed;
use pim_core::synth::{gen_graph, gen_labels, gen_paths, parse_grid, SynthConfig, Topology};
use pim_core::training::{
    embed_paths, finetune as run_finetune, load_checkpoint, train as run_train, FinetuneConfig, TrainConfig, TrainData,
};

use crate::error::CliError;
use crate::io;
use crate::manifest::RunManifest;
use crate::settings::Settings;
use crate::{AblateArgs, EmbedArgs, EvalArgs, FeaturesArgs, FinetuneArgs, NegativesArgs, SynthArgs, TrainArgs};

fn parse_with<T>(key: &str, raw: &str, f: impl FnOnce(&str) -> Result<T, String>) -> Result<T, CliError> {
    f(raw).map_err(|e| CliError::config(format!("{key}: {e}")))
}

fn existing(s: &mut Settings, key: &str, flag: Option<String>, m: &mut RunManifest) -> Result<PathBuf, CliError> {
    let p = PathBuf::from(s.required(key, flag)?);
    if !p.is_file() {
        return Err(CliError::io(format!("{}: no such file", p.display())));
    }
    m.input(&p);
    Ok(p)
}

/// A checkpoint directory; its two files are recorded as inputs.
fn checkpoint_dir(dir: PathBuf, m: &mut RunManifest) -> Result<PathBuf, CliError> {
    for name in ["checkpoint.manifest", "checkpoint.bin"] {
        let f = dir.join(name);
        if !f.is_file() {
            return Err(CliError::io(format!("{}: no such file", f.display())));
        }
        m.input(&f);
    }
    Ok(dir)
}

fn load_graph(p: &FsPath) -> Result<Graph, CliError> {
    Graph::parse_edge_list(&io::read(p)?).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
}

fn load_paths(g: &Graph, p: &FsPath) -> Result<Vec<Path>, CliError> {
    parse_paths(g, &io::read(p)?).map_err(|(line, e)| CliError::data(format!("{}:{line}: {e}", p.display())))
}

fn load_table(p: &FsPath) -> Result<FeatureTable, CliError> {
    load_features(&io::read(p)?).map_err(|e| CliError::data(format!("{}: {e}", p.display())))
}

fn matrix_to_table(m: &Matrix) -> FeatureTable {
    let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect();
    FeatureTable::new(m.nrows(), m.ncols(), data).expect("finite embeddings")
}

fn table_to_matrix(t: &FeatureTable) -> Matrix {
    Matrix::from_row_slice(t.rows(), t.dim(), t.as_slice())
}

pub fn synth(a: SynthArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("synth");
    let mut cfg = SynthConfig::default();
    cfg.topology = match s.opt("geometric", a.geometric)? {
        Some(n) => Topology::Geometric { n, radius: s.get("radius", a.radius, 1.5)? },
        None => {
            let grid = s.get("grid", a.grid, "8x8".to_string())?;
            let (width, height) = parse_with("grid", &grid, parse_grid)?;
            Topology::Grid { width, height }
        }
    };
    cfg.paths = s.get("paths", a.paths, cfg.paths)?;
    cfg.seed = s.get("seed", a.seed, cfg.seed)?;
    cfg.label_noise = s.get("label-noise", a.label_noise, cfg.label_noise)?;
    cfg.temperature = s.get("temperature", a.temperature, cfg.temperature)?;
    cfg.detour_factor = s.get("detour-factor", a.detour_factor, cfg.detour_factor)?;
    cfg.max_variants = s.get("max-variants", a.max_variants, cfg.max_variants)?;
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;

    let net = gen_graph(&cfg)?;
    let corpus = gen_paths(&net, &cfg)?;
    let labels = gen_labels(&net, &corpus, &cfg)?;
    m.lap("generate");
    io::create_dir(&out)?;
    let ids: Vec<usize> = (0..corpus.paths.len()).collect();
    let tt = ValueLabels { ids: ids.clone(), values: labels.travel_times.clone() };
    let rank = RankLabels { ids, groups: corpus.groups.clone(), scores: labels.rank_scores.clone() };
    let files = [
        ("graph.csv", net.graph.to_edge_list(false)),
        ("paths.txt", format_paths(&corpus.paths)),
        ("travel_times.csv", format_value_labels("travel_time_seconds", &tt)),
        ("rank_scores.csv", format_rank_labels(&rank)),
    ];
    for (name, text) in files {
        let p = out.join(name);
        io::write(&p, &text)?;
        m.output(&p);
    }
    m.lap("write");
    println!("wrote {} nodes, {} edges, {} paths to {}", net.graph.node_count(), net.graph.edge_count(), corpus.paths.len(), out.display());
    m.write(s, &out.join("manifest.json"))
}

pub fn features(a: FeaturesArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("features");
    let graph_path = existing(s, "graph", a.graph, &mut m)?;
    let seed = s.get("seed", a.seed, 0)?;
    let wd = WalkConfig::default();
    let walk = WalkConfig {
        walks_per_node: s.get("walks-per-node", a.walks_per_node, wd.walks_per_node)?,
        walk_length: s.get("walk-length", a.walk_length, wd.walk_length)?,
        p: s.get("p", a.p, wd.p)?,
        q: s.get("q", a.q, wd.q)?,
        seed,
    };
    let sd = SgnsConfig::default();
    let sgns = SgnsConfig {
        dim: s.get("dim", a.dim, sd.dim)?,
        window: s.get("window", a.window, sd.window)?,
        negatives: s.get("sgns-negatives", a.sgns_negatives, sd.negatives)?,
        epochs: s.get("sgns-epochs", a.sgns_epochs, sd.epochs)?,
        learning_rate: s.get("learning-rate", a.learning_rate, sd.learning_rate)?,
        seed,
    };
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;

    let g = load_graph(&graph_path)?;
    m.lap("load");
    let table = node2vec(&g, &walk, &sgns)?;
    m.lap("node2vec");
    io::write(&out, &save_features(&table))?;
    m.output(&out);
    println!("wrote {}x{} features to {}", table.rows(), table.dim(), out.display());
    m.write(s, &io::manifest_beside(&out))
}

pub fn negatives(a: NegativesArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("negatives");
    let graph_path = existing(s, "graph", a.graph, &mut m)?;
    let paths_path = existing(s, "paths", a.paths, &mut m)?;
    let d = NegativeConfig::default();
    let taus_explicit = s.explicit("tau1", &a.tau1) || s.explicit("tau2", &a.tau2);
    let k = s.get("k", a.k, d.k)?;
    let n_random = s.get("n-random", a.n_random, d.n_random)?;
    let thresholds = vec![s.get("tau1", a.tau1, d.thresholds[0])?, s.get("tau2", a.tau2, d.thresholds[1])?];
    let strategy = s.get("strategy", a.strategy, d.strategy.to_string())?;
    let strategy: SamplingStrategy = parse_with("strategy", &strategy, str::parse)?;
    let max_candidates = s.get("max-candidates", a.max_candidates, d.max_candidates)?;
    let seed = s.get("seed", a.seed, 0)?;
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;
    let requested = n_random + thresholds.len();
    if strategy == SamplingStrategy::Curriculum && taus_explicit && k < requested {
        return Err(CliError::config(format!(
            "k = {k} is smaller than the {n_random} random + {} diversified negatives requested",
            thresholds.len()
        )));
    }
    let cfg = NegativeConfig { k, n_random, thresholds, strategy, max_candidates };

    let g = load_graph(&graph_path)?;
    let paths = load_paths(&g, &paths_path)?;
    m.lap("load");
    let sets = sample_all(&paths, &g, &cfg, seed)?;
    m.lap("sample");
    io::write(&out, &format_negative_sets(&sets))?;
    m.output(&out);
    let backfilled = sets.iter().filter(|n| n.backfilled).count();
    println!("wrote negatives for {} paths ({backfilled} backfilled) to {}", sets.len(), out.display());
    m.write(s, &io::manifest_beside(&out))
}

pub fn train(a: TrainArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("train");
    let graph_path = existing(s, "graph", a.graph, &mut m)?;
    let paths_path = existing(s, "paths", a.paths, &mut m)?;
    let features_path = existing(s, "features", a.features, &mut m)?;
    let negatives_path = match s.explicit("negatives", &a.negatives) {
        true => Some(existing(s, "negatives", a.negatives, &mut m)?),
        false => None,
    };
    let d = TrainConfig::default();
    let curriculum = s.get("curriculum", a.curriculum, d.curriculum.to_string())?;
    let mi_mode = s.get("mi-mode", a.mi_mode, d.mi_mode.to_string())?;
    let cfg = TrainConfig {
        epochs: s.get("epochs", a.epochs, d.epochs)?,
        batch_size: s.get("batch-size", a.batch_size, d.batch_size)?,
        learning_rate: s.get("learning-rate", a.learning_rate, d.learning_rate)?,
        k: s.get("k", a.k, d.k)?,
        curriculum: parse_with("curriculum", &curriculum, str::parse::<CurriculumMode>)?,
        mi_mode: parse_with("mi-mode", &mi_mode, str::parse::<MiMode>)?,
        hidden: s.get("hidden", a.hidden, d.hidden)?,
        repr_dim: s.get("repr-dim", a.repr_dim, d.repr_dim)?,
        seed: s.get("seed", a.seed, d.seed)?,
        resample_negatives: s.get("resample-negatives", a.resample_negatives, d.resample_negatives)?,
        ..d
    };
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;
    cfg.validate()?;

    let g = load_graph(&graph_path)?;
    let paths = load_paths(&g, &paths_path)?;
    let features = load_table(&features_path)?;
    let neg_cfg = NegativeConfig { k: cfg.k, ..NegativeConfig::default() };
    let sets = match &negatives_path {
        Some(p) => parse_negative_sets(&g, &io::read(p)?)
            .map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        None => sample_all(&paths, &g, &neg_cfg, derive_seed(cfg.seed, 1))?,
    };
    m.lap("load");
    io::create_dir(&out)?;
    let data = TrainData { graph: &g, features: &features, corpus: &paths, negatives: &sets };
    let (model, trace) = run_train(&cfg, &data, Some(&neg_cfg), Some(&out))?;
    m.lap("train");
    let loss = out.join("loss.csv");
    io::write(&loss, &trace.to_csv())?;
    let cfg_file = out.join("train.cfg");
    io::write(&cfg_file, &cfg.to_kv())?;
    for p in [out.join("checkpoint.manifest"), out.join("checkpoint.bin"), loss, cfg_file] {
        m.output(&p);
    }
    if let (Some(first), Some(last)) = (trace.records.first(), trace.records.last()) {
        println!(
            "trained {} epochs: joint {:.4} -> {:.4} (global {:.4}, local {:.4})",
            model.epoch, first.joint, last.joint, last.global, last.local
        );
    }
    m.write(s, &out.join("manifest.json"))
}

pub fn embed(a: EmbedArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("embed");
    let graph_path = existing(s, "graph", a.graph, &mut m)?;
    let features_path = existing(s, "features", a.features, &mut m)?;
    let paths_path = existing(s, "paths", a.paths, &mut m)?;
    let ckpt = checkpoint_dir(PathBuf::from(s.required("checkpoint", a.checkpoint)?), &mut m)?;
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;

    let g = load_graph(&graph_path)?;
    let features = load_table(&features_path)?;
    let paths = load_paths(&g, &paths_path)?;
    let model = load_checkpoint(&ckpt)?;
    m.lap("load");
    let emb = embed_paths(&model.encoder, &features, &paths)?;
    m.lap("embed");
    io::write(&out, &save_features(&matrix_to_table(&emb)))?;
    m.output(&out);
    println!("wrote {}x{} embeddings to {}", emb.nrows(), emb.ncols(), out.display());
    m.write(s, &io::manifest_beside(&out))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Task {
    TravelTime,
    Ranking,
}

fn parse_task(raw: &str) -> Result<Task, String> {
    match raw {
        "travel-time" | "tt" => Ok(Task::TravelTime),
        "ranking" | "rank" => Ok(Task::Ranking),
        other => Err(format!("unknown task `{other}` (expected travel-time or ranking)")),
    }
}

/// Truth values, and OD groups for ranking, keyed by path id.
struct Truth {
    ids: Vec<usize>,
    values: Vec<f64>,
    groups: Option<Vec<u64>>,
}

fn load_truth(task: Task, p: &FsPath) -> Result<Truth, CliError> {
    let text = io::read(p)?;
    let wrap = |e: pim_core::downstream::DownstreamError| CliError::data(format!("{}: {e}", p.display()));
    Ok(match task {
        Task::TravelTime => {
            let l = parse_value_labels(&text).map_err(wrap)?;
            Truth { ids: l.ids, values: l.values, groups: None }
        }
        Task::Ranking => {
            let l = parse_rank_labels(&text).map_err(wrap)?;
            Truth { ids: l.ids, values: l.scores, groups: Some(l.groups) }
        }
    })
}

fn report_csv(task: Task, r: &MetricsReport, rank: Option<&RankReport>) -> String {
    let task = match task {
        Task::TravelTime => "travel-time",
        Task::Ranking => "ranking",
    };
    let mut s = String::from("task,count,mae,mare,mape,tau,rho\n");
    let (tau, rho) = rank.map_or((f64::NAN, f64::NAN), |k| (k.tau, k.rho));
    writeln!(s, "{task},{},{},{},{},{tau},{rho}", r.count, r.mae, r.mare, r.mape).unwrap();
    s
}

fn print_report(r: &MetricsReport, rank: Option<&RankReport>) {
    println!("{:<6} {:>12}", "count", r.count);
    println!("{:<6} {:>12.4}", "MAE", r.mae);
    println!("{:<6} {:>12.4}", "MARE", r.mare);
    println!("{:<6} {:>12.4}", "MAPE", r.mape);
    if let Some(k) = rank {
        println!("{:<6} {:>12.4}  ({} groups, {} singleton, {} degenerate)", "tau", k.tau, k.groups, k.singleton_groups, k.degenerate_groups);
        println!("{:<6} {:>12.4}", "rho", k.rho);
    }
}

pub fn eval(a: EvalArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("eval");
    let task = s.get("task", a.task.clone(), "travel-time".to_string())?;
    let task = parse_with("task", &task, parse_task)?;
    if s.explicit("embeddings", &a.embeddings) {
        eval_embeddings(a, task, s, m)
    } else {
        let pred_path = existing(s, "pred", a.pred, &mut m)?;
        let truth_path = existing(s, "truth", a.truth, &mut m)?;
        let out = PathBuf::from(s.required("out", a.out)?);
        s.finish()?;
        let pred = parse_value_labels(&io::read(&pred_path)?)
            .map_err(|e| CliError::data(format!("{}: {e}", pred_path.display())))?;
        let truth = load_truth(task, &truth_path)?;
        let by_id: HashMap<usize, f64> = pred.ids.iter().copied().zip(pred.values).collect();
        let p = truth
            .ids
            .iter()
            .map(|id| by_id.get(id).copied().ok_or_else(|| CliError::data(format!("no prediction for path id {id}"))))
            .collect::<Result<Vec<f64>, CliError>>()?;
        m.lap("load");
        finish_eval(task, (p, truth.values, truth.groups), m, s, &out, None)
    }
}

/// Fits a regressor on the training split of labeled embeddings and scores
/// the validation and test rows.
fn eval_embeddings(a: EvalArgs, task: Task, s: &mut Settings, mut m: RunManifest) -> Result<(), CliError> {
    let emb_path = existing(s, "embeddings", a.embeddings, &mut m)?;
    let labels_path = existing(s, "labels", a.labels, &mut m)?;
    let regressor = s.get("regressor", a.regressor, "ridge".to_string())?;
    let kind = match regressor.as_str() {
        "ridge" => RegressorKind::Ridge { lambda: s.get("lambda", a.lambda, 1e-3)? },
        "gp" => RegressorKind::GaussianProcess { gamma: s.opt("gamma", a.gamma)?, noise: s.opt("noise", a.noise)? },
        other => return Err(CliError::config(format!("unknown regressor `{other}` (expected ridge or gp)"))),
    };
    let split_seed = s.get("split-seed", a.split_seed, 0)?;
    let pred_out = s.opt("predictions", a.predictions)?.map(PathBuf::from);
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;

    let emb = table_to_matrix(&load_table(&emb_path)?);
    let truth = load_truth(task, &labels_path)?;
    if let Some(&bad) = truth.ids.iter().find(|&&i| i >= emb.nrows()) {
        return Err(CliError::data(format!("label path id {bad} has no embedding row ({} rows)", emb.nrows())));
    }
    m.lap("load");
    let split = split_indices(truth.ids.len(), split_seed);
    let rows = |idx: &[usize]| Matrix::from_fn(idx.len(), emb.ncols(), |r, c| emb[(truth.ids[idx[r]], c)]);
    let values = |idx: &[usize]| idx.iter().map(|&i| truth.values[i]).collect::<Vec<f64>>();
    let mut held: Vec<usize> = split.validation.iter().chain(&split.test).copied().collect();
    held.sort_unstable();
    let reg = fit(kind, &rows(&split.train), &values(&split.train))?;
    let pred = reg.predict(&rows(&held))?;
    m.lap("fit");
    if let Some(p) = &pred_out {
        let ids = held.iter().map(|&i| truth.ids[i]).collect();
        io::write(p, &format_value_labels("prediction", &ValueLabels { ids, values: pred.clone() }))?;
    }
    let groups = truth.groups.as_ref().map(|g| held.iter().map(|&i| g[i]).collect());
    finish_eval(task, (pred, values(&held), groups), m, s, &out, pred_out.as_deref())
}

fn finish_eval(
    task: Task,
    (pred, truth, groups): (Vec<f64>, Vec<f64>, Option<Vec<u64>>),
    mut m: RunManifest,
    s: &Settings,
    out: &FsPath,
    pred_out: Option<&FsPath>,
) -> Result<(), CliError> {
    let r = metrics(&pred, &truth)?;
    let rank = match (&groups, task) {
        (Some(g), Task::Ranking) => Some(rank_metrics(&pred, &truth, g)?),
        _ => None,
    };
    io::write(out, &report_csv(task, &r, rank.as_ref()))?;
    m.output(out);
    if let Some(p) = pred_out {
        m.output(p);
    }
    print_report(&r, rank.as_ref());
    m.lap("score");
    m.write(s, &io::manifest_beside(out))
}

pub fn finetune(a: FinetuneArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("finetune");
    let graph_path = existing(s, "graph", a.graph, &mut m)?;
    let features_path = existing(s, "features", a.features, &mut m)?;
    let paths_path = existing(s, "paths", a.paths, &mut m)?;
    let labels_path = existing(s, "labels", a.labels, &mut m)?;
    let ckpt = match s.opt("checkpoint", a.checkpoint)? {
        Some(p) => Some(checkpoint_dir(PathBuf::from(p), &mut m)?),
        None => None,
    };
    let fraction = s.get("fraction", a.fraction, 1.0)?;
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CliError::config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let d = FinetuneConfig::default();
    let cfg = FinetuneConfig {
        epochs: s.get("epochs", a.epochs, d.epochs)?,
        learning_rate: s.get("learning-rate", a.learning_rate, d.learning_rate)?,
        batch_size: s.get("batch-size", a.batch_size, d.batch_size)?,
        seed: s.get("seed", a.seed, d.seed)?,
    };
    let (hidden, repr_dim) = if ckpt.is_none() {
        let t = TrainConfig::default();
        (s.get("hidden", a.hidden, t.hidden)?, s.get("repr-dim", a.repr_dim, t.repr_dim)?)
    } else {
        (0, 0)
    };
    let split_seed = s.get("split-seed", a.split_seed, 0)?;
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;

    let g = load_graph(&graph_path)?;
    let features = load_table(&features_path)?;
    let paths = load_paths(&g, &paths_path)?;
    let labels = load_truth(Task::TravelTime, &labels_path)?;
    if let Some(&bad) = labels.ids.iter().find(|&&i| i >= paths.len()) {
        return Err(CliError::data(format!("label path id {bad} exceeds the {} paths", paths.len())));
    }
    let encoder = match &ckpt {
        Some(dir) => load_checkpoint(dir)?.encoder,
        None => EncoderParams::init(features.dim(), hidden, repr_dim, derive_seed(cfg.seed, 3))?,
    };
    m.lap("load");
    let split = split_indices(labels.ids.len(), split_seed);
    let take = ((split.train.len() as f64 * fraction).round() as usize).clamp(1, split.train.len());
    let labeled: Vec<(Path, f64)> =
        split.train[..take].iter().map(|&i| (paths[labels.ids[i]].clone(), labels.values[i])).collect();
    let (model, history) = run_finetune(encoder, &features, &labeled, &cfg)?;
    m.lap("finetune");
    let mut held: Vec<usize> = split.validation.iter().chain(&split.test).copied().collect();
    held.sort_unstable();
    let held_paths: Vec<Path> = held.iter().map(|&i| paths[labels.ids[i]].clone()).collect();
    let pred = model.predict(&features, &held_paths)?;
    let truth: Vec<f64> = held.iter().map(|&i| labels.values[i]).collect();
    let r = metrics(&pred, &truth)?;

    io::create_dir(&out)?;
    let pred_file = out.join("predictions.csv");
    let ids = held.iter().map(|&i| labels.ids[i]).collect();
    io::write(&pred_file, &format_value_labels("prediction", &ValueLabels { ids, values: pred }))?;
    let hist_file = out.join("history.csv");
    let mut hist = String::from("epoch,train_mse\n");
    for (e, v) in history.iter().enumerate() {
        writeln!(hist, "{},{v}", e + 1).unwrap();
    }
    io::write(&hist_file, &hist)?;
    let report = out.join("report.csv");
    io::write(&report, &report_csv(Task::TravelTime, &r, None))?;
    for p in [&pred_file, &hist_file, &report] {
        m.output(p);
    }
    println!("fine-tuned on {take} labeled paths");
    print_report(&r, None);
    m.write(s, &out.join("manifest.json"))
}

pub fn ablate(a: AblateArgs, s: &mut Settings) -> Result<(), CliError> {
    let mut m = RunManifest::start("ablate");
    let axis = s.required("axis", a.axis)?;
    let axis: AblationAxis = parse_with("axis", &axis, str::parse)?;
    let mut cfg = PipelineConfig::standard();
    let grid = s.get("grid", a.grid, "8x8".to_string())?;
    let (width, height) = parse_with("grid", &grid, parse_grid)?;
    cfg.synth.topology = Topology::Grid { width, height };
    cfg.synth.paths = s.get("paths", a.paths, cfg.synth.paths)?;
    let seed = s.get("seed", a.seed, cfg.synth.seed)?;
    (cfg.synth.seed, cfg.walk.seed, cfg.sgns.seed, cfg.split_seed) = (seed, seed, seed, seed);
    let seeds = s.get("seeds", a.seeds, 3)?;
    if seeds == 0 {
        return Err(CliError::config("seeds must be >= 1"));
    }
    cfg.train.epochs = s.get("epochs", a.epochs, cfg.train.epochs)?;
    cfg.sgns.dim = s.get("dim", a.dim, cfg.sgns.dim)?;
    cfg.train.hidden = s.get("hidden", a.hidden, cfg.train.hidden)?;
    cfg.train.repr_dim = s.get("repr-dim", a.repr_dim, cfg.train.repr_dim)?;
    let out = PathBuf::from(s.required("out", a.out)?);
    s.finish()?;

    let ds = build_dataset(&cfg)?;
    m.lap("dataset");
    let seed_list: Vec<u64> = (0..seeds).collect();
    let rows = run_ablation(&ds, &cfg, axis, &seed_list)?;
    m.lap("ablate");
    let mut csv = String::from("variant,mean_mae");
    for sd in &seed_list {
        write!(csv, ",mae_seed{sd}").unwrap();
    }
    csv.push('\n');
    for r in &rows {
        write!(csv, "{},{}", r.label, r.mean_mae()).unwrap();
        for v in &r.maes {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    io::write(&out, &csv)?;
    m.output(&out);
    print!("{}", format_ablation(axis, &rows));
    m.write(s, &io::manifest_beside(&out))
}
