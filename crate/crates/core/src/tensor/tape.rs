//! Reverse-mode differentiation tape.
//!
//! Every recorded node owns its forward value plus whatever its backward
//! pass needs. Values are never mutated after recording. Gradients are
//! retained for leaves only; intermediate gradients are dropped as soon as
//! they have been propagated.

use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use super::ops::{self, BnForward, ChannelGeom, Mode, RunningStats, SpatialGeom, TimeGeom};
use super::{expect_extent, expect_rank, ConvSpec, Real, Tensor, TensorError};

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Reshape(Var),
    ConvTime {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: TimeGeom,
    },
    ConvSpatial {
        x: Var,
        w: Var,
        geom: SpatialGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        geom: ChannelGeom,
        x_hat: Vec<T>,
        inv_std: Vec<T>,
        train: bool,
    },
    Concat(Vec<Var>),
    Elu(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    AvgPool {
        x: Var,
        rows: usize,
        len: usize,
        pool: usize,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Softmax(Var),
    SoftmaxCe {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Batch statistics observed by a train-mode batch norm, for updating the
/// layer's running estimates after the step.
#[derive(Debug, Clone)]
pub struct BatchMoments<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    tape: u32,
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to `var`; zero when `var` does not influence the loss.
    pub fn get(&self, var: Var) -> Tensor<T> {
        assert_eq!(var.tape, self.tape, "variable from another tape");
        let shape = &self.shapes[var.index];
        match &self.grads[var.index] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Whether the loss depended on `var` at all.
    pub fn reached(&self, var: Var) -> bool {
        self.grads[var.index].is_some()
    }
}

/// Records a forward computation for later differentiation.
pub struct Tape<T> {
    id: u32,
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<(), TensorError> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::UnknownVar(v.index));
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.index].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("add", va.shape(), vb.shape())?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("mul", va.shape(), vb.shape())?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        let total = self.value(a).data().iter().copied().sum::<T>();
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(total), Op::Sum(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        self.check(a)?;
        let out = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Flattens everything after the batch axis (map-major, then time).
    pub fn flatten(&mut self, a: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        let shape = self.value(a).shape();
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(a, &[n, rest])
    }

    pub fn conv_temporal(
        &mut self,
        x: Var,
        spec: &ConvSpec,
        w: Var,
        b: Option<Var>,
    ) -> Result<Var, TensorError> {
        self.check(x)?;
        self.check(w)?;
        if let Some(b) = b {
            self.check(b)?;
        }
        let geom = TimeGeom::resolve(
            self.value(x).shape(),
            spec,
            self.value(w).shape(),
            b.map(|b| self.value(b).shape()),
        )?;
        let y = ops::conv_time_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let out = Tensor::new(geom.out_shape(), y)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(out, Op::ConvTime { x, w, b, geom }, rg))
    }

    pub fn conv_spatial(&mut self, x: Var, w: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        self.check(w)?;
        let geom = SpatialGeom::resolve(self.value(x).shape(), self.value(w).shape())?;
        let y = ops::conv_spatial_forward(&geom, self.value(x).data(), self.value(w).data());
        let out = Tensor::new(geom.out_shape(), y)?;
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, Op::ConvSpatial { x, w, geom }, rg))
    }

    /// Batch norm over axis 1. Returns the output and, in train mode, the
    /// batch moments the caller should fold into the running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: T,
        mode: Mode,
        running: &RunningStats<T>,
    ) -> Result<(Var, Option<BatchMoments<T>>), TensorError> {
        self.check(x)?;
        self.check(gamma)?;
        self.check(beta)?;
        let geom = ChannelGeom::of(self.value(x).shape())?;
        let BnForward {
            y,
            x_hat,
            inv_std,
            batch_mean,
            batch_var,
        } = ops::batch_norm_forward(
            &geom,
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
            mode,
            running,
        )?;
        let out = Tensor::new(self.value(x).shape().to_vec(), y)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let train = mode == Mode::Train;
        let var = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                geom,
                x_hat,
                inv_std,
                train,
            },
            rg,
        );
        let moments = train.then_some(BatchMoments {
            mean: batch_mean,
            var: batch_var,
        });
        Ok((var, moments))
    }

    /// Concatenates along axis 1.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        const OP: &str = "concat";
        let first = *parts.first().ok_or(TensorError::InvalidSpec("concat of nothing".into()))?;
        for &p in parts {
            self.check(p)?;
        }
        let base = self.value(first).shape().to_vec();
        if base.len() < 2 {
            return Err(TensorError::Rank {
                op: OP,
                expected: 2,
                got: base,
            });
        }
        let inner: usize = base[2..].iter().product();
        let mut maps = 0;
        for &p in parts {
            let s = self.value(p).shape();
            expect_rank(OP, s, base.len())?;
            expect_extent(OP, "batch", base[0], s[0])?;
            for (a, b) in base[2..].iter().zip(&s[2..]) {
                expect_extent(OP, "trailing", *a, *b)?;
            }
            maps += s[1];
        }
        let mut data = Vec::with_capacity(base[0] * maps * inner);
        for n in 0..base[0] {
            for &p in parts {
                let v = self.value(p);
                let chunk = v.shape()[1] * inner;
                data.extend_from_slice(&v.data()[n * chunk..(n + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[1] = maps;
        let out = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    pub fn elu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        let out = ops::elu(self.value(x));
        let rg = self.rg(x);
        Ok(self.push(out, Op::Elu(x), rg))
    }

    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        self.check(x)?;
        ops::check_rate(rate)?;
        if mode == Mode::Infer || rate == 0.0 {
            return Ok(x);
        }
        let v = self.value(x);
        let mask: Vec<T> = ops::dropout_mask(v.numel(), rate, rng);
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout { x, mask }, rg))
    }

    pub fn avg_pool_time(&mut self, x: Var, pool: usize) -> Result<Var, TensorError> {
        self.check(x)?;
        let (rows, len, _) = ops::avg_pool_geom(self.value(x).shape(), pool)?;
        let out = ops::avg_pool_time(self.value(x), pool)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::AvgPool { x, rows, len, pool }, rg))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        self.check(w)?;
        self.check(b)?;
        let out = ops::dense(self.value(x), self.value(w), self.value(b))?;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(out, Op::Dense { x, w, b }, rg))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        let out = ops::softmax_rows(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Softmax(x), rg))
    }

    /// Mean categorical cross-entropy of `softmax(logits)` against `labels`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        self.check(logits)?;
        let v = self.value(logits);
        expect_rank("softmax_cross_entropy", v.shape(), 2)?;
        let (n, k) = (v.shape()[0], v.shape()[1]);
        expect_extent("softmax_cross_entropy", "batch", n, labels.len())?;
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::LabelOutOfRange { label, classes: k });
        }
        let probs = ops::softmax_rows_raw(v.data(), k);
        let tiny = T::min_positive_value();
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -(probs[i * k + l].max(tiny)).ln())
            .sum::<T>()
            / T::from_usize(n).unwrap();
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    /// Propagates gradients from a scalar `loss` to every leaf. A tape can be
    /// differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, TensorError> {
        if self.consumed {
            return Err(TensorError::BackwardTwice);
        }
        self.check(loss)?;
        let shape = self.value(loss).shape();
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NotScalar(shape.to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(vec![T::one()]);
        for i in (0..=loss.index).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(i, &gy, &mut grads);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes,
        })
    }

    fn propagate(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let mut slot = |v: Var| -> Option<Vec<T>> {
            if !nodes[v.index].requires_grad {
                return None;
            }
            Some(
                grads[v.index]
                    .take()
                    .unwrap_or_else(|| vec![T::zero(); nodes[v.index].value.numel()]),
            )
        };
        // Each arm takes the input buffers it writes, accumulates, and
        // hands them back through `out`.
        let mut out: Vec<(Var, Vec<T>)> = Vec::with_capacity(3);
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if a == b {
                    if let Some(mut g) = slot(*a) {
                        g.iter_mut().zip(gy).for_each(|(d, &s)| *d += s + s);
                        out.push((*a, g));
                    }
                } else {
                    for v in [*a, *b] {
                        if let Some(mut g) = slot(v) {
                            g.iter_mut().zip(gy).for_each(|(d, &s)| *d += s);
                            out.push((v, g));
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (nodes[a.index].value.data(), nodes[b.index].value.data());
                if let Some(mut g) = slot(*a) {
                    g.iter_mut().zip(gy).zip(vb).for_each(|((d, &s), &o)| *d += s * o);
                    if a == b {
                        g.iter_mut().zip(gy).zip(va).for_each(|((d, &s), &o)| *d += s * o);
                    }
                    out.push((*a, g));
                }
                if a != b {
                    if let Some(mut g) = slot(*b) {
                        g.iter_mut().zip(gy).zip(va).for_each(|((d, &s), &o)| *d += s * o);
                        out.push((*b, g));
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(mut g) = slot(*a) {
                    g.iter_mut().for_each(|d| *d += gy[0]);
                    out.push((*a, g));
                }
            }
            Op::Reshape(a) => {
                if let Some(mut g) = slot(*a) {
                    g.iter_mut().zip(gy).for_each(|(d, &s)| *d += s);
                    out.push((*a, g));
                }
            }
            Op::ConvTime { x, w, b, geom } => {
                let mut gx = slot(*x);
                let mut gw = slot(*w);
                let mut gb = b.and_then(&mut slot);
                ops::conv_time_backward(
                    geom,
                    nodes[x.index].value.data(),
                    nodes[w.index].value.data(),
                    gy,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                push_some(&mut out, *x, gx);
                push_some(&mut out, *w, gw);
                if let Some(b) = b {
                    push_some(&mut out, *b, gb);
                }
            }
            Op::ConvSpatial { x, w, geom } => {
                let mut gx = slot(*x);
                let mut gw = slot(*w);
                ops::conv_spatial_backward(
                    geom,
                    nodes[x.index].value.data(),
                    nodes[w.index].value.data(),
                    gy,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                );
                push_some(&mut out, *x, gx);
                push_some(&mut out, *w, gw);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                geom,
                x_hat,
                inv_std,
                train,
            } => {
                let mut gx = slot(*x);
                let mut gg = slot(*gamma);
                let mut gb = slot(*beta);
                ops::batch_norm_backward(
                    geom,
                    x_hat,
                    inv_std,
                    nodes[gamma.index].value.data(),
                    *train,
                    gy,
                    gx.as_deref_mut(),
                    gg.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                push_some(&mut out, *x, gx);
                push_some(&mut out, *gamma, gg);
                push_some(&mut out, *beta, gb);
            }
            Op::Concat(parts) => {
                let n = nodes[i].value.shape()[0];
                let inner: usize = nodes[i].value.shape()[2..].iter().product();
                let total = nodes[i].value.shape()[1] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = nodes[p.index].value.shape()[1] * inner;
                    if let Some(mut g) = slot(p) {
                        for b in 0..n {
                            let src = &gy[b * total + offset..b * total + offset + chunk];
                            g[b * chunk..(b + 1) * chunk]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, &s)| *d += s);
                        }
                        out.push((p, g));
                    }
                    offset += chunk;
                }
            }
            Op::Elu(x) => {
                if let Some(mut g) = slot(*x) {
                    let (xs, ys) = (nodes[x.index].value.data(), nodes[i].value.data());
                    for ((d, &s), (&xv, &yv)) in g.iter_mut().zip(gy).zip(xs.iter().zip(ys)) {
                        *d += if xv > T::zero() { s } else { s * (yv + T::one()) };
                    }
                    out.push((*x, g));
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(mut g) = slot(*x) {
                    g.iter_mut().zip(gy).zip(mask).for_each(|((d, &s), &m)| *d += s * m);
                    out.push((*x, g));
                }
            }
            Op::AvgPool { x, rows, len, pool } => {
                if let Some(mut g) = slot(*x) {
                    let out_len = len / pool;
                    let inv = T::one() / T::from_usize(*pool).unwrap();
                    for r in 0..*rows {
                        for j in 0..out_len {
                            let s = gy[r * out_len + j] * inv;
                            g[r * len + j * pool..r * len + (j + 1) * pool]
                                .iter_mut()
                                .for_each(|d| *d += s);
                        }
                    }
                    out.push((*x, g));
                }
            }
            Op::Dense { x, w, b } => {
                let (xv, wv) = (&nodes[x.index].value, &nodes[w.index].value);
                let (n, d_in, d_out) = (xv.shape()[0], xv.shape()[1], wv.shape()[1]);
                if let Some(mut g) = slot(*x) {
                    for r in 0..n {
                        let gr = &gy[r * d_out..(r + 1) * d_out];
                        for k in 0..d_in {
                            let wr = &wv.data()[k * d_out..(k + 1) * d_out];
                            g[r * d_in + k] += gr.iter().zip(wr).map(|(&a, &b)| a * b).sum::<T>();
                        }
                    }
                    out.push((*x, g));
                }
                if let Some(mut g) = slot(*w) {
                    for r in 0..n {
                        let gr = &gy[r * d_out..(r + 1) * d_out];
                        for k in 0..d_in {
                            let xk = xv.data()[r * d_in + k];
                            g[k * d_out..(k + 1) * d_out]
                                .iter_mut()
                                .zip(gr)
                                .for_each(|(d, &s)| *d += xk * s);
                        }
                    }
                    out.push((*w, g));
                }
                if let Some(mut g) = slot(*b) {
                    for r in 0..n {
                        g.iter_mut()
                            .zip(&gy[r * d_out..(r + 1) * d_out])
                            .for_each(|(d, &s)| *d += s);
                    }
                    out.push((*b, g));
                }
            }
            Op::Softmax(x) => {
                if let Some(mut g) = slot(*x) {
                    let y = nodes[i].value.data();
                    let k = nodes[i].value.shape()[1];
                    for r in 0..y.len() / k {
                        let (yr, gr) = (&y[r * k..(r + 1) * k], &gy[r * k..(r + 1) * k]);
                        let dot = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum::<T>();
                        for j in 0..k {
                            g[r * k + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                    out.push((*x, g));
                }
            }
            Op::SoftmaxCe {
                logits,
                probs,
                labels,
            } => {
                if let Some(mut g) = slot(*logits) {
                    let n = labels.len();
                    let k = probs.len() / n.max(1);
                    let scale = gy[0] / T::from_usize(n).unwrap();
                    for (r, &l) in labels.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == l { T::one() } else { T::zero() };
                            g[r * k + j] += scale * (probs[r * k + j] - onehot);
                        }
                    }
                    out.push((*logits, g));
                }
            }
        }
        for (v, g) in out {
            grads[v.index] = Some(g);
        }
    }
}

fn push_some<T>(out: &mut Vec<(Var, Vec<T>)>, v: Var, g: Option<Vec<T>>) {
    if let Some(g) = g {
        out.push((v, g));
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), TensorError> {
    expect_rank(op, b, a.len())?;
    for (&x, &y) in a.iter().zip(b) {
        expect_extent(op, "elementwise", x, y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient_is_twice_input() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::from_f64(&[4], &[1.0, -2.0, 0.5, 3.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[2.0, -4.0, 1.0, 6.0]);
    }

    #[test]
    fn unreachable_parameter_gets_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::full(&[3], 2.0));
        let unused = tape.param(Tensor::full(&[2], 5.0));
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(!g.reached(unused));
        assert_eq!(g.get(unused).data(), &[0.0, 0.0]);
        assert_eq!(g.get(x).data(), &[1.0; 3]);
    }

    #[test]
    fn backward_twice_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::full(&[3], 2.0));
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.backward(loss).err(), Some(TensorError::BackwardTwice));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::full(&[3], 2.0));
        assert!(matches!(tape.backward(x), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn vars_from_other_tapes_are_rejected() {
        let mut a = Tape::<f64>::new();
        let mut b = Tape::<f64>::new();
        let x = a.param(Tensor::full(&[1], 1.0));
        assert!(matches!(b.sum(x), Err(TensorError::UnknownVar(_))));
    }

    #[test]
    fn add_with_itself_doubles_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::full(&[2], 1.0));
        let y = tape.add(x, x).unwrap();
        let loss = tape.sum(y).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[2.0, 2.0]);
    }

    #[test]
    fn constants_do_not_receive_gradients() {
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::full(&[2], 3.0));
        let x = tape.param(Tensor::full(&[2], 1.0));
        let y = tape.mul(c, x).unwrap();
        let loss = tape.sum(y).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(!g.reached(c));
        assert_eq!(g.get(x).data(), &[3.0, 3.0]);
    }
}
