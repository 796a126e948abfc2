//! Regression on frozen path representations and the evaluation metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DVector};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::autodiff::Matrix;
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum DownstreamError {
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("{rows} input rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("input has {got} columns, regressor expects {expected}")]
    Width { expected: usize, got: usize },
    #[error("singular system: inputs are collinear")]
    Singular,
    #[error("kernel matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite input or target")]
    NonFinite,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegressorKind {
    /// Ridge regression with an unpenalized intercept.
    Ridge { lambda: f64 },
    /// RBF-kernel Gaussian process mean with a constant prior mean of
    /// `mean(y)`. `None` selects the defaults: `γ = 1/median pairwise squared
    /// distance`, `σ² = 0.01·var(y)`.
    GaussianProcess { gamma: Option<f64>, noise: Option<f64> },
}

/// Smallest noise variance used when `0.01·var(y)` vanishes.
pub const GP_NOISE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum Regressor {
    Ridge { weights: DVector<f64>, intercept: f64, lambda: f64 },
    GaussianProcess { gamma: f64, noise: f64, train: Matrix, alpha: DVector<f64>, mean: f64 },
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<(), DownstreamError> {
    if x.nrows() != y.len() {
        return Err(DownstreamError::LengthMismatch { rows: x.nrows(), targets: y.len() });
    }
    if y.len() < 2 {
        return Err(DownstreamError::TooFewRows(y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(DownstreamError::NonFinite);
    }
    Ok(())
}

fn sq_dist(a: &Matrix, i: usize, b: &Matrix, j: usize) -> f64 {
    a.row(i).iter().zip(b.row(j).iter()).map(|(p, q)| (p - q).powi(2)).sum()
}

/// Median of the squared distances between distinct training rows.
pub fn median_sq_distance(x: &Matrix) -> f64 {
    let mut d = Vec::with_capacity(x.nrows() * x.nrows().saturating_sub(1) / 2);
    for i in 0..x.nrows() {
        for j in i + 1..x.nrows() {
            d.push(sq_dist(x, i, x, j));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    if m % 2 == 1 {
        d[m / 2]
    } else {
        (d[m / 2 - 1] + d[m / 2]) / 2.0
    }
}

fn rbf(a: &Matrix, i: usize, b: &Matrix, j: usize, gamma: f64) -> f64 {
    (-gamma * sq_dist(a, i, b, j)).exp()
}

pub fn fit(kind: RegressorKind, x: &Matrix, y: &[f64]) -> Result<Regressor, DownstreamError> {
    check_xy(x, y)?;
    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    match kind {
        RegressorKind::Ridge { lambda } => {
            let means = Matrix::from_fn(1, x.ncols(), |_, c| x.column(c).sum() / n);
            let mut xc = x.clone();
            for mut row in xc.row_iter_mut() {
                row -= &means;
            }
            let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
            let mut a = xc.transpose() * &xc;
            let max_diag = a.diagonal().max().max(0.0);
            for i in 0..a.nrows() {
                a[(i, i)] += lambda;
            }
            let chol = Cholesky::new(a).ok_or(DownstreamError::Singular)?;
            // Reject numerically rank-deficient systems that still factor.
            let tol = 1e-12 * max_diag.max(lambda).max(f64::MIN_POSITIVE);
            if chol.l_dirty().diagonal().iter().any(|l| l * l <= tol) {
                return Err(DownstreamError::Singular);
            }
            let weights = chol.solve(&(xc.transpose() * yc));
            let intercept = y_mean - (means * &weights)[0];
            Ok(Regressor::Ridge { weights, intercept, lambda })
        }
        RegressorKind::GaussianProcess { gamma, noise } => {
            let gamma = gamma.unwrap_or_else(|| {
                let m = median_sq_distance(x);
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            });
            let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
            let noise = noise.unwrap_or((0.01 * var).max(GP_NOISE_FLOOR));
            let rows = x.nrows();
            let mut k = Matrix::from_fn(rows, rows, |i, j| rbf(x, i, x, j, gamma));
            for i in 0..rows {
                k[(i, i)] += noise;
            }
            let chol = Cholesky::new(k).ok_or(DownstreamError::NotPositiveDefinite)?;
            let resid = DVector::from_iterator(y.len(), y.iter().map(|v| v - y_mean));
            let alpha = chol.solve(&resid);
            Ok(Regressor::GaussianProcess { gamma, noise, train: x.clone(), alpha, mean: y_mean })
        }
    }
}

impl Regressor {
    pub fn input_dim(&self) -> usize {
        match self {
            Regressor::Ridge { weights, .. } => weights.len(),
            Regressor::GaussianProcess { train, .. } => train.ncols(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, DownstreamError> {
        if x.ncols() != self.input_dim() {
            return Err(DownstreamError::Width { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(match self {
            Regressor::Ridge { weights, intercept, .. } => (x * weights).iter().map(|v| v + intercept).collect(),
            Regressor::GaussianProcess { gamma, train, alpha, mean, .. } => (0..x.nrows())
                .map(|i| mean + (0..train.nrows()).map(|j| rbf(x, i, train, j, *gamma) * alpha[j]).sum::<f64>())
                .collect(),
        })
    }
}

/// Regression error summary. MAPE is in percent over rows with nonzero
/// truth; `mape_excluded` counts the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub mare: f64,
    pub mape: f64,
    pub mape_excluded: usize,
    pub count: usize,
}

pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<MetricsReport, DownstreamError> {
    if pred.len() != truth.len() {
        return Err(DownstreamError::LengthMismatch { rows: pred.len(), targets: truth.len() });
    }
    if pred.is_empty() {
        return Err(DownstreamError::TooFewRows(0));
    }
    if pred.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(DownstreamError::NonFinite);
    }
    let abs_err: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    let abs_truth: f64 = truth.iter().map(|t| t.abs()).sum();
    let (mut pct, mut used) = (0.0, 0usize);
    for (p, t) in pred.iter().zip(truth) {
        if *t != 0.0 {
            pct += (p - t).abs() / t.abs();
            used += 1;
        }
    }
    Ok(MetricsReport {
        mae: abs_err / pred.len() as f64,
        mare: if abs_truth > 0.0 { abs_err / abs_truth } else { f64::NAN },
        mape: if used > 0 { 100.0 * pct / used as f64 } else { f64::NAN },
        mape_excluded: pred.len() - used,
        count: pred.len(),
    })
}

/// Group-averaged rank agreement.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub tau: f64,
    pub rho: f64,
    pub groups: usize,
    /// Groups with a single path.
    pub singleton_groups: usize,
    /// Groups where a coefficient is undefined because all predictions or
    /// all truths tie.
    pub degenerate_groups: usize,
}

/// Kendall τ-b; `None` when either side is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut conc, mut disc, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let denom = (((conc + disc + tie_x) * (conc + disc + tie_y)) as f64).sqrt();
    (denom > 0.0).then(|| (conc - disc) as f64 / denom)
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman ρ as Pearson correlation of average ranks; `None` when either
/// side is constant.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// τ and ρ per group of equal `groups` id, averaged over groups where both
/// are defined.
pub fn rank_metrics(pred: &[f64], truth: &[f64], groups: &[u64]) -> Result<RankReport, DownstreamError> {
    if pred.len() != truth.len() || pred.len() != groups.len() {
        return Err(DownstreamError::LengthMismatch { rows: pred.len(), targets: truth.len() });
    }
    let mut by_group: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    let mut report = RankReport { tau: 0.0, rho: 0.0, groups: 0, singleton_groups: 0, degenerate_groups: 0 };
    for members in by_group.values() {
        if members.len() < 2 {
            report.singleton_groups += 1;
            continue;
        }
        let p: Vec<f64> = members.iter().map(|&i| pred[i]).collect();
        let t: Vec<f64> = members.iter().map(|&i| truth[i]).collect();
        match (kendall_tau_b(&p, &t), spearman_rho(&p, &t)) {
            (Some(tau), Some(rho)) => {
                report.tau += tau;
                report.rho += rho;
                report.groups += 1;
            }
            _ => report.degenerate_groups += 1,
        }
    }
    if report.groups > 0 {
        report.tau /= report.groups as f64;
        report.rho /= report.groups as f64;
    } else {
        report.tau = f64::NAN;
        report.rho = f64::NAN;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded 85/10/5 shuffle split of `0..n`; each part is sorted.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, 0x5_1117));
    let n_train = (n as f64 * 0.85).round() as usize;
    let n_val = ((n as f64 * 0.10).round() as usize).min(n - n_train);
    let mut train = idx[..n_train].to_vec();
    let mut validation = idx[n_train..n_train + n_val].to_vec();
    let mut test = idx[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Split { train, validation, test }
}

/// Travel-time style labels `path_id,value`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueLabels {
    pub ids: Vec<usize>,
    pub values: Vec<f64>,
}

/// Ranking labels `path_id,group_id,rank_score`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankLabels {
    pub ids: Vec<usize>,
    pub groups: Vec<u64>,
    pub scores: Vec<f64>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split(',').map(str::trim).collect::<Vec<_>>()))
        // An optional header row starts with a non-numeric field.
        .skip_while(|(i, f)| *i == 1 && f[0].parse::<usize>().is_err())
}

fn field<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, DownstreamError> {
    s.parse().map_err(|_| DownstreamError::Parse { line, msg: format!("bad field `{s}`") })
}

pub fn parse_value_labels(text: &str) -> Result<ValueLabels, DownstreamError> {
    let mut out = ValueLabels { ids: vec![], values: vec![] };
    for (line, f) in data_lines(text) {
        if f.len() != 2 {
            return Err(DownstreamError::Parse { line, msg: format!("expected 2 fields, got {}", f.len()) });
        }
        out.ids.push(field(line, f[0])?);
        out.values.push(field(line, f[1])?);
    }
    Ok(out)
}

pub fn parse_rank_labels(text: &str) -> Result<RankLabels, DownstreamError> {
    let mut out = RankLabels { ids: vec![], groups: vec![], scores: vec![] };
    for (line, f) in data_lines(text) {
        if f.len() != 3 {
            return Err(DownstreamError::Parse { line, msg: format!("expected 3 fields, got {}", f.len()) });
        }
        out.ids.push(field(line, f[0])?);
        out.groups.push(field(line, f[1])?);
        out.scores.push(field(line, f[2])?);
    }
    Ok(out)
}

pub fn format_value_labels(header: &str, labels: &ValueLabels) -> String {
    let mut s = format!("path_id,{header}\n");
    for (id, v) in labels.ids.iter().zip(&labels.values) {
        writeln!(s, "{id},{v}").unwrap();
    }
    s
}

pub fn format_rank_labels(labels: &RankLabels) -> String {
    let mut s = String::from("path_id,group_id,rank_score\n");
    for ((id, g), v) in labels.ids.iter().zip(&labels.groups).zip(&labels.scores) {
        writeln!(s, "{id},{g},{v}").unwrap();
    }
    s
}
