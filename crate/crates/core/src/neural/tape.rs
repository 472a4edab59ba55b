//! A small reverse-mode differentiation tape over dense matrices.
//!
//! Every operation appends a node holding its value; [`Tape::backward`] walks
//! the nodes in reverse and accumulates vector-Jacobian products. Nodes that
//! do not depend on a parameter are skipped during the backward pass.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};
use rustfft::num_complex::Complex64;

use crate::dsp::{overlap_add, overlap_add_vjp, SegmentalConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Per-example spectra for [`Tape::mask_synthesis`].
#[derive(Debug)]
pub struct SynthesisContext {
    /// One `frames x bins` spectrum per batch example.
    pub spectra: Vec<Array2<Complex64>>,
    pub config: SegmentalConfig,
    pub len: usize,
}

#[derive(Debug)]
struct SegmentalTarget {
    target: Array2<f64>,
    weights: Array2<f64>,
    config: SegmentalConfig,
}

enum Op {
    Constant,
    Parameter(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Columns(Var, usize),
    Rows(Var, usize),
    StackRows(Vec<Var>),
    MaskSynthesis(Var, Arc<SynthesisContext>),
    MseAgainst(Var, Arc<Array2<f64>>),
    SegmentalMse(Var, Arc<SegmentalTarget>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to each parameter slot.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> &Array2<f64> {
        &self.grads[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.mapv_inplace(|v| v * factor);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum()
    }

    pub fn from_vec(grads: Vec<Array2<f64>>) -> Self {
        Gradients { grads }
    }
}

fn sigmoid(v: f64) -> f64 {
    crate::metrics::logistic(v)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Parameter(_) => true,
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Columns(a, _)
            | Op::Rows(a, _)
            | Op::MaskSynthesis(a, _)
            | Op::MseAgainst(a, _)
            | Op::SegmentalMse(a, _) => self.needs(*a),
            Op::StackRows(parts) => parts.iter().any(|p| self.needs(*p)),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    /// A differentiable leaf; its gradient is reported under `slot`.
    pub fn parameter(&mut self, slot: usize, value: Array2<f64>) -> Var {
        self.push(value, Op::Parameter(slot))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a + bias` with a `1 x n` bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a) * factor;
        self.push(v, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn columns(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + width]).to_owned();
        self.push(v, Op::Columns(a, start))
    }

    pub fn rows(&mut self, a: Var, start: usize, count: usize) -> Var {
        let v = self.value(a).slice(s![start..start + count, ..]).to_owned();
        self.push(v, Op::Rows(a, start))
    }

    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("stacked parts share a width");
        self.push(v, Op::StackRows(parts.to_vec()))
    }

    /// Applies a real time-major mask (`row = frame * batch + example`) to
    /// each example's spectrum and resynthesizes `batch x len` waveforms.
    pub fn mask_synthesis(&mut self, mask: Var, ctx: Arc<SynthesisContext>) -> Result<Var> {
        let batch = ctx.spectra.len();
        let m = self.value(mask);
        let frames = ctx.spectra.first().map_or(0, |s| s.nrows());
        if batch == 0 || m.nrows() != frames * batch || m.ncols() != ctx.config.num_bins() {
            return Err(Error::invalid(format!(
                "mask of shape {:?} does not match {batch} spectra of {frames} frames",
                m.dim()
            )));
        }
        let mut out = Array2::zeros((batch, ctx.len));
        for (b, spec) in ctx.spectra.iter().enumerate() {
            let mut z = spec.clone();
            for (t, mut row) in z.rows_mut().into_iter().enumerate() {
                for (c, g) in row.iter_mut().zip(m.row(t * batch + b)) {
                    *c *= *g;
                }
            }
            let y = overlap_add(z.view(), &ctx.config, ctx.len);
            out.row_mut(b).assign(&ndarray::ArrayView1::from(&y));
        }
        Ok(self.push(out, Op::MaskSynthesis(mask, ctx)))
    }

    /// Mean of squared differences against a constant target.
    pub fn mse_against(&mut self, a: Var, target: Array2<f64>) -> Result<Var> {
        if self.value(a).dim() != target.dim() {
            return Err(Error::invalid(format!(
                "prediction {:?} and target {:?} differ in shape",
                self.value(a).dim(),
                target.dim()
            )));
        }
        let count = target.len() as f64;
        let sum: f64 = self
            .value(a)
            .iter()
            .zip(target.iter())
            .map(|(y, t)| (y - t) * (y - t))
            .sum();
        Ok(self.push(
            Array2::from_elem((1, 1), sum / count),
            Op::MseAgainst(a, Arc::new(target)),
        ))
    }

    /// Frame-weighted segmental MSE of each row of `a` against `target`,
    /// averaged over rows. `weights` is `batch x frames`.
    pub fn segmental_mse(
        &mut self,
        a: Var,
        target: Array2<f64>,
        weights: Array2<f64>,
        config: SegmentalConfig,
    ) -> Result<Var> {
        let y = self.value(a);
        if y.dim() != target.dim() || weights.nrows() != y.nrows() {
            return Err(Error::invalid("segmental loss operands differ in shape"));
        }
        let frames = config.frame_count(y.ncols())?;
        if weights.ncols() != frames {
            return Err(Error::invalid(format!(
                "{} weights per example for {frames} frames",
                weights.ncols()
            )));
        }
        let total: f64 = (0..y.nrows())
            .map(|b| {
                crate::metrics::segmental_mse_samples(
                    target.row(b).as_slice().expect("standard layout"),
                    y.row(b).as_slice().expect("standard layout"),
                    weights.row(b).as_slice().expect("standard layout"),
                    &config,
                )
            })
            .sum();
        let value = Array2::from_elem((1, 1), total / y.nrows() as f64);
        Ok(self.push(
            value,
            Op::SegmentalMse(
                a,
                Arc::new(SegmentalTarget {
                    target,
                    weights,
                    config,
                }),
            ),
        ))
    }

    /// Reverse pass from a `1 x 1` root. Returns one gradient per parameter
    /// slot in `0..slots`; slots that never appeared get zeros of shape `1 x 1`
    /// unless a parameter with that slot was recorded.
    pub fn backward(&self, root: Var, slots: usize) -> Result<Gradients> {
        if self.value(root).dim() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).dim()
            )));
        }
        let mut out: Vec<Option<Array2<f64>>> = vec![None; slots];
        for node in &self.nodes[..=root.0] {
            if let Op::Parameter(slot) = node.op {
                if slot >= slots {
                    return Err(Error::invalid(format!("parameter slot {slot} >= {slots}")));
                }
                out[slot].get_or_insert_with(|| Array2::zeros(node.value.dim()));
            }
        }
        let mut grads: Vec<Option<Array2<f64>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones((1, 1)));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let send = |grads: &mut Vec<Option<Array2<f64>>>, v: Var, contribution: Array2<f64>| {
                if !self.needs(v) {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => *acc += &contribution,
                    slot @ None => *slot = Some(contribution),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Parameter(slot) => {
                    if let Some(acc) = &mut out[*slot] {
                        *acc += &g;
                    }
                }
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        send(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.needs(*b) {
                        send(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.needs(*bias) {
                        send(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    send(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        send(&mut grads, *b, g.clone());
                    }
                    send(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        send(&mut grads, *b, -&g);
                    }
                    send(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        send(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.needs(*b) {
                        send(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::Scale(a, f) => send(&mut grads, *a, g * *f),
                Op::Sigmoid(a) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= y * (1.0 - y));
                    send(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    ndarray::Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= 1.0 - y * y);
                    send(&mut grads, *a, d);
                }
                Op::Columns(a, start) => {
                    let dim = self.value(*a).dim();
                    let acc = grads[a.0].get_or_insert_with(|| Array2::zeros(dim));
                    let mut view = acc.slice_mut(s![.., *start..*start + g.ncols()]);
                    view += &g;
                }
                Op::Rows(a, start) => {
                    let dim = self.value(*a).dim();
                    let acc = grads[a.0].get_or_insert_with(|| Array2::zeros(dim));
                    let mut view = acc.slice_mut(s![*start..*start + g.nrows(), ..]);
                    view += &g;
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(*p).nrows();
                        send(&mut grads, *p, g.slice(s![offset..offset + rows, ..]).to_owned());
                        offset += rows;
                    }
                }
                Op::MaskSynthesis(mask, ctx) => {
                    let batch = ctx.spectra.len();
                    let mut d = Array2::zeros(self.value(*mask).dim());
                    for (b, spec) in ctx.spectra.iter().enumerate() {
                        let gy = g.row(b).to_vec();
                        let gz = overlap_add_vjp(&gy, &ctx.config, spec.nrows());
                        for (t, (gz_row, s_row)) in gz.rows().into_iter().zip(spec.rows()).enumerate() {
                            for (dst, (gc, sc)) in d
                                .row_mut(t * batch + b)
                                .iter_mut()
                                .zip(gz_row.iter().zip(s_row.iter()))
                            {
                                *dst = gc.re * sc.re + gc.im * sc.im;
                            }
                        }
                    }
                    send(&mut grads, *mask, d);
                }
                Op::MseAgainst(a, target) => {
                    let scale = 2.0 * g[[0, 0]] / target.len() as f64;
                    let d = (self.value(*a) - &**target) * scale;
                    send(&mut grads, *a, d);
                }
                Op::SegmentalMse(a, ctx) => {
                    let y = self.value(*a);
                    let (batch, len) = y.dim();
                    let cfg = &ctx.config;
                    let frames = ctx.weights.ncols();
                    let window = cfg.window();
                    let n = cfg.frame_size() as f64;
                    let outer = g[[0, 0]] / (batch as f64 * frames as f64);
                    let mut d = Array2::zeros((batch, len));
                    for b in 0..batch {
                        let mut coef = vec![0.0; len];
                        for j in 0..frames {
                            let p = ctx.weights[[b, j]];
                            let start = j * cfg.hop();
                            for (k, w) in window.iter().enumerate() {
                                let i = start + k;
                                if i >= len {
                                    break;
                                }
                                coef[i] += p * w * w;
                            }
                        }
                        for i in 0..len {
                            d[[b, i]] =
                                outer * 2.0 / n * coef[i] * (y[[b, i]] - ctx.target[[b, i]]);
                        }
                    }
                    send(&mut grads, *a, d);
                }
            }
        }
        Ok(Gradients {
            grads: out
                .into_iter()
                .map(|g| g.unwrap_or_else(|| Array2::zeros((1, 1))))
                .collect(),
        })
    }
}
