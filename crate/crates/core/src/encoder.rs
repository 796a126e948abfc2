//! Gated recurrent path encoder: initial view (`Z x D`) to path
//! representation (`1 x D'`).
//!
//! Cell, per row `x` of the view, from a zero state:
//!
//! ```text
//! r  = σ(x W_r + h U_r + b_r)
//! z  = σ(x W_z + h U_z + b_z)
//! n  = tanh(x W_n + (r ⊙ h) U_n + b_n)
//! h' = n + z ⊙ (h − n)
//! ```
//!
//! The representation is `h_Z W_o + b_o`.

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Matrix, Tape, Var};
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("encoder dimensions must be >= 1, got D={d} H={h} D'={d_out}")]
    Dims { d: usize, h: usize, d_out: usize },
    #[error("initial view is empty")]
    EmptyView,
    #[error("initial view has {got} columns, encoder expects {expected}")]
    ViewWidth { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub const ENCODER_TENSORS: [&str; 11] =
    ["w_r", "w_z", "w_n", "u_r", "u_z", "u_n", "b_r", "b_z", "b_n", "w_o", "b_o"];

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// In the order of [`ENCODER_TENSORS`].
    tensors: [Matrix; 11],
}

const W_R: usize = 0;
const W_Z: usize = 1;
const W_N: usize = 2;
const U_R: usize = 3;
const U_Z: usize = 4;
const U_N: usize = 5;
const B_R: usize = 6;
const B_Z: usize = 7;
const B_N: usize = 8;
const W_O: usize = 9;
const B_O: usize = 10;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl EncoderParams {
    /// Weights uniform in `(-a, a)` with `a = sqrt(1/H)`, biases zero.
    pub fn init(d: usize, h: usize, d_out: usize, seed: u64) -> Result<Self, EncoderError> {
        if d == 0 || h == 0 || d_out == 0 {
            return Err(EncoderError::Dims { d, h, d_out });
        }
        let a = (1.0 / h as f64).sqrt();
        let mut rng = rng_for(seed, 0xE4C0);
        let mut uni = |r, c| DMatrix::from_fn(r, c, |_, _| rng.random_range(-a..a));
        let tensors = [
            uni(d, h),
            uni(d, h),
            uni(d, h),
            uni(h, h),
            uni(h, h),
            uni(h, h),
            Matrix::zeros(1, h),
            Matrix::zeros(1, h),
            Matrix::zeros(1, h),
            uni(h, d_out),
            Matrix::zeros(1, d_out),
        ];
        Ok(Self { tensors })
    }

    /// Rebuilds parameters from tensors in [`ENCODER_TENSORS`] order.
    pub fn from_tensors(tensors: Vec<Matrix>) -> Result<Self, EncoderError> {
        let tensors: [Matrix; 11] = tensors
            .try_into()
            .map_err(|_| EncoderError::Dims { d: 0, h: 0, d_out: 0 })?;
        let (d, h) = tensors[W_R].shape();
        let d_out = tensors[W_O].ncols();
        let expected = [
            (d, h),
            (d, h),
            (d, h),
            (h, h),
            (h, h),
            (h, h),
            (1, h),
            (1, h),
            (1, h),
            (h, d_out),
            (1, d_out),
        ];
        if d == 0 || h == 0 || d_out == 0 || tensors.iter().zip(expected).any(|(t, s)| t.shape() != s) {
            return Err(EncoderError::Dims { d, h, d_out });
        }
        Ok(Self { tensors })
    }

    pub fn input_dim(&self) -> usize {
        self.tensors[W_R].nrows()
    }

    pub fn hidden(&self) -> usize {
        self.tensors[W_R].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.tensors[W_O].ncols()
    }

    pub fn tensors(&self) -> &[Matrix; 11] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix; 11] {
        &mut self.tensors
    }

    /// Records every tensor as a differentiable leaf.
    pub fn record(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars { vars: self.tensors.clone().map(|t| tape.param(t)) }
    }

    fn check_view(&self, iv: &Matrix) -> Result<(), EncoderError> {
        if iv.nrows() == 0 {
            return Err(EncoderError::EmptyView);
        }
        if iv.ncols() != self.input_dim() {
            return Err(EncoderError::ViewWidth { expected: self.input_dim(), got: iv.ncols() });
        }
        Ok(())
    }

    /// Forward pass without recording; same arithmetic as [`EncoderVars::encode`].
    pub fn encode(&self, iv: &Matrix) -> Result<Matrix, EncoderError> {
        self.check_view(iv)?;
        let t = &self.tensors;
        let xr = iv * &t[W_R];
        let xz = iv * &t[W_Z];
        let xn = iv * &t[W_N];
        let mut h = Matrix::zeros(1, self.hidden());
        for step in 0..iv.nrows() {
            let r = (xr.rows(step, 1) + &h * &t[U_R] + &t[B_R]).map(sigmoid);
            let z = (xz.rows(step, 1) + &h * &t[U_Z] + &t[B_Z]).map(sigmoid);
            let rh = r.component_mul(&h);
            let n = (xn.rows(step, 1) + &rh * &t[U_N] + &t[B_N]).map(f64::tanh);
            let gated = z.component_mul(&(&h - &n));
            h = n + gated;
        }
        Ok(h * &t[W_O] + &t[B_O])
    }
}

/// Encoder tensors recorded on one tape.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    vars: [Var; 11],
}

impl EncoderVars {
    /// Wraps leaves recorded in [`ENCODER_TENSORS`] order.
    pub fn new(vars: [Var; 11]) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var; 11] {
        &self.vars
    }

    /// Differentiable encoding of the view held by `iv`.
    pub fn encode(&self, tape: &mut Tape, iv: Var) -> Result<Var, EncoderError> {
        let v = &self.vars;
        let (rows, cols) = tape.value(iv).shape();
        let (d, hidden) = tape.value(v[W_R]).shape();
        if rows == 0 {
            return Err(EncoderError::EmptyView);
        }
        if cols != d {
            return Err(EncoderError::ViewWidth { expected: d, got: cols });
        }
        let xr = tape.matmul(iv, v[W_R])?;
        let xz = tape.matmul(iv, v[W_Z])?;
        let xn = tape.matmul(iv, v[W_N])?;
        let mut h = tape.constant(Matrix::zeros(1, hidden));
        for step in 0..rows {
            let gate = |tape: &mut Tape, x: Var, h: Var, u: Var, b: Var| -> Result<Var, AutodiffError> {
                let xs = tape.row(x, step)?;
                let hu = tape.matmul(h, u)?;
                let s = tape.add(xs, hu)?;
                tape.add(s, b)
            };
            let r = gate(tape, xr, h, v[U_R], v[B_R])?;
            let r = tape.sigmoid(r);
            let z = gate(tape, xz, h, v[U_Z], v[B_Z])?;
            let z = tape.sigmoid(z);
            let rh = tape.mul(r, h)?;
            let n = gate(tape, xn, rh, v[U_N], v[B_N])?;
            let n = tape.tanh(n);
            let diff = tape.sub(h, n)?;
            let gated = tape.mul(z, diff)?;
            h = tape.add(n, gated)?;
        }
        let out = tape.matmul(h, v[W_O])?;
        Ok(tape.add(out, v[B_O])?)
    }
}
