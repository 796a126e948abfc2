//! Bilinear path-path and path-node discriminators and the global, local
//! and joint mutual-information objectives.
//!
//! Objectives are reported as values to maximize; both are bounded above by
//! zero. `log(1 - σ(s))` is evaluated as `log σ(-s)`, and every log is
//! floored at [`LOG_FLOOR`](crate::autodiff::LOG_FLOOR).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Matrix, Tape, Var};
use crate::encoder::{EncoderError, EncoderVars};
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum InfomaxError {
    #[error("global objective needs at least one negative path")]
    NoNegatives,
    #[error("local objective needs a non-empty node partition")]
    EmptyPartition,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The second operand of the path-path discriminator.
#[derive(Clone, Copy, Debug)]
pub enum PathPathOperand<'a> {
    /// A `1 x D'` path representation.
    Repr(&'a Matrix),
    /// A `Z x D` initial view, mean-pooled and projected through `L`.
    View(&'a Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathPathDisc {
    /// `D' x D'`, zero at init.
    pub w_pp: Matrix,
    /// `D x D'` projection of a pooled initial view.
    pub l: Matrix,
}

impl PathPathDisc {
    pub fn init(d: usize, d_out: usize, seed: u64) -> Self {
        let a = (1.0 / d as f64).sqrt();
        let mut rng = rng_for(seed, 0xD15C);
        Self {
            w_pp: Matrix::zeros(d_out, d_out),
            l: Matrix::from_fn(d, d_out, |_, _| rng.random_range(-a..a)),
        }
    }

    /// `σ(p W_pp gᵀ)`.
    pub fn score(&self, p: &Matrix, other: PathPathOperand<'_>) -> f64 {
        let g = match other {
            PathPathOperand::Repr(r) => r.clone(),
            PathPathOperand::View(iv) => {
                let n = iv.nrows().max(1) as f64;
                Matrix::from_fn(1, iv.ncols(), |_, c| iv.column(c).sum() / n) * &self.l
            }
        };
        sigmoid((p * &self.w_pp).dot(&g))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathNodeDisc {
    /// `D' x D`, zero at init.
    pub w_pn: Matrix,
}

impl PathNodeDisc {
    pub fn init(d_out: usize, d: usize) -> Self {
        Self { w_pn: Matrix::zeros(d_out, d) }
    }

    /// `σ(p W_pn vᵀ)` for a node feature vector `v`.
    pub fn score(&self, p: &Matrix, v: &[f64]) -> f64 {
        let pw = p * &self.w_pn;
        sigmoid(pw.iter().zip(v).map(|(a, b)| a * b).sum())
    }
}

/// Discriminator tensors recorded on one tape.
#[derive(Clone, Copy, Debug)]
pub struct DiscVars {
    pub w_pp: Var,
    pub l: Var,
    pub w_pn: Var,
}

impl DiscVars {
    pub fn record(tape: &mut Tape, pp: &PathPathDisc, pn: &PathNodeDisc) -> Self {
        Self { w_pp: tape.param(pp.w_pp.clone()), l: tape.param(pp.l.clone()), w_pn: tape.param(pn.w_pn.clone()) }
    }
}

fn bilinear(tape: &mut Tape, p: Var, w: Var, g: Var) -> Result<Var, AutodiffError> {
    let pw = tape.matmul(p, w)?;
    let prod = tape.mul(pw, g)?;
    Ok(tape.sum(prod))
}

/// `(1/(1+K)) [log D(p, iv) + Σ_j log(1 - D(p, n_j))]` over `K` negative
/// representations.
pub fn global_mi(tape: &mut Tape, d: &DiscVars, p: Var, iv: Var, negatives: &[Var]) -> Result<Var, InfomaxError> {
    if negatives.is_empty() {
        return Err(InfomaxError::NoNegatives);
    }
    let pooled = tape.mean_rows(iv);
    let g = tape.matmul(pooled, d.l)?;
    let pos = bilinear(tape, p, d.w_pp, g)?;
    let mut terms = vec![tape.log_sigmoid(pos)];
    for &n in negatives {
        let s = bilinear(tape, p, d.w_pp, n)?;
        let flipped = tape.scale(s, -1.0);
        terms.push(tape.log_sigmoid(flipped));
    }
    let stacked = tape.concat_rows(&terms)?;
    let total = tape.sum(stacked);
    Ok(tape.scale(total, 1.0 / terms.len() as f64))
}

/// `(1/|X ∪ Y|) [Σ_{X} log D(p, v) + Σ_{Y} log(1 - D(p, v))]` with node
/// features as rows of `x_feats` and `y_feats`; either may have zero rows.
pub fn local_mi(
    tape: &mut Tape,
    d: &DiscVars,
    p: Var,
    x_feats: &Matrix,
    y_feats: &Matrix,
) -> Result<Var, InfomaxError> {
    let n = x_feats.nrows() + y_feats.nrows();
    if n == 0 {
        return Err(InfomaxError::EmptyPartition);
    }
    let pw = tape.matmul(p, d.w_pn)?;
    let mut parts = Vec::with_capacity(2);
    for (feats, sign) in [(x_feats, 1.0), (y_feats, -1.0)] {
        if feats.nrows() == 0 {
            continue;
        }
        let ft = tape.constant(feats.transpose());
        let logits = tape.matmul(pw, ft)?;
        let signed = tape.scale(logits, sign);
        let ls = tape.log_sigmoid(signed);
        parts.push(tape.sum(ls));
    }
    let stacked = tape.concat_rows(&parts)?;
    let total = tape.sum(stacked);
    Ok(tape.scale(total, 1.0 / n as f64))
}

/// Unweighted sum of the two objectives.
pub fn joint_objective(tape: &mut Tape, global: Var, local: Var) -> Result<Var, InfomaxError> {
    Ok(tape.add(global, local)?)
}

/// Which objective terms are trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MiMode {
    Joint,
    GlobalOnly,
    LocalOnly,
}

impl MiMode {
    pub fn uses_global(self) -> bool {
        self != MiMode::LocalOnly
    }

    pub fn uses_local(self) -> bool {
        self != MiMode::GlobalOnly
    }
}

impl FromStr for MiMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "joint" => Ok(MiMode::Joint),
            "global" | "global-only" => Ok(MiMode::GlobalOnly),
            "local" | "local-only" => Ok(MiMode::LocalOnly),
            other => Err(format!("unknown MI mode `{other}` (expected joint, global or local)")),
        }
    }
}

impl fmt::Display for MiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiMode::Joint => "joint",
            MiMode::GlobalOnly => "global",
            MiMode::LocalOnly => "local",
        })
    }
}

/// Dense inputs of one training sample.
#[derive(Clone, Copy, Debug)]
pub struct SampleViews<'a> {
    /// Initial view of the input path.
    pub input: &'a Matrix,
    /// Initial views of the active negative paths.
    pub negatives: &'a [Matrix],
    /// Features of nodes only on the input path (`X`).
    pub positive_nodes: &'a Matrix,
    /// Features of nodes only on the negatives (`Y`).
    pub negative_nodes: &'a Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct SampleObjective {
    /// Objective to maximize for this sample under the chosen mode.
    pub total: Var,
    /// Zero when the mode excludes the term.
    pub global: f64,
    /// Zero when the mode excludes the term or the partition is empty.
    pub local: f64,
    pub local_skipped: bool,
}

/// Encodes the sample and records the objective terms selected by `mode`.
/// Negative paths are encoded on the same tape, so gradients reach the
/// encoder through them too. An empty node partition drops the local term.
pub fn sample_objective(
    tape: &mut Tape,
    enc: &EncoderVars,
    disc: &DiscVars,
    s: &SampleViews<'_>,
    mode: MiMode,
) -> Result<SampleObjective, InfomaxError> {
    let iv = tape.constant(s.input.clone());
    let p = enc.encode(tape, iv)?;
    let mut terms = Vec::with_capacity(2);
    let mut out = SampleObjective { total: p, global: 0.0, local: 0.0, local_skipped: false };
    if mode.uses_global() {
        let mut negs = Vec::with_capacity(s.negatives.len());
        for view in s.negatives {
            let v = tape.constant(view.clone());
            negs.push(enc.encode(tape, v)?);
        }
        let g = global_mi(tape, disc, p, iv, &negs)?;
        out.global = tape.scalar(g);
        terms.push(g);
    }
    if mode.uses_local() {
        match local_mi(tape, disc, p, s.positive_nodes, s.negative_nodes) {
            Ok(l) => {
                out.local = tape.scalar(l);
                terms.push(l);
            }
            Err(InfomaxError::EmptyPartition) => out.local_skipped = true,
            Err(e) => return Err(e),
        }
    }
    out.total = match terms[..] {
        [] => tape.constant(Matrix::zeros(1, 1)),
        [t] => t,
        [g, l] => joint_objective(tape, g, l)?,
        _ => unreachable!(),
    };
    Ok(out)
}
