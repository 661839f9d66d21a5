//! Forward and backward kernels for the layer primitives.
//!
//! The functions here work on plain tensors and slices. [`Tape`](super::Tape)
//! calls them while recording; they are also usable directly for
//! inference-only code and tests.

use rand::Rng;

use super::{expect_extent, expect_rank, Real, Tensor, TensorError};

/// Whether layers behave as during training or as during inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Zero padding applied along the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output length equals input length; the kernel is centred (extra
    /// padding goes to the trailing side for even spans).
    Same,
    /// No padding; output shrinks by the dilated kernel span.
    Valid,
    /// `(T-1)·d` zeros on the leading side only.
    Causal,
}

/// Geometry of a temporal convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_extent: usize,
    pub dilation: usize,
    pub padding: Padding,
    /// One kernel per input map (times a depth multiplier) instead of full
    /// cross-map mixing.
    pub depthwise: bool,
    /// Number of output maps.
    pub filter_count: usize,
}

impl ConvSpec {
    pub fn new(kernel_extent: usize, dilation: usize, padding: Padding, filter_count: usize) -> Self {
        ConvSpec {
            kernel_extent,
            dilation,
            padding,
            depthwise: false,
            filter_count,
        }
    }

    pub fn depthwise(kernel_extent: usize, dilation: usize, padding: Padding, filter_count: usize) -> Self {
        ConvSpec {
            depthwise: true,
            ..Self::new(kernel_extent, dilation, padding, filter_count)
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.kernel_extent == 0 {
            return Err(TensorError::InvalidSpec("kernel extent must be at least 1".into()));
        }
        if self.dilation == 0 {
            return Err(TensorError::InvalidSpec("dilation must be at least 1".into()));
        }
        if self.filter_count == 0 {
            return Err(TensorError::InvalidSpec("filter count must be at least 1".into()));
        }
        Ok(())
    }

    /// Distance between the first and last kernel tap, in samples.
    pub fn span(&self) -> usize {
        (self.kernel_extent - 1) * self.dilation
    }

    /// Leading and trailing zero padding.
    pub fn pads(&self) -> (usize, usize) {
        let span = self.span();
        match self.padding {
            Padding::Same => (span / 2, span - span / 2),
            Padding::Valid => (0, 0),
            Padding::Causal => (span, 0),
        }
    }

    /// Expected weight shape for `in_maps` input maps.
    pub fn weight_shape(&self, in_maps: usize) -> [usize; 3] {
        if self.depthwise {
            [self.filter_count, 1, self.kernel_extent]
        } else {
            [self.filter_count, in_maps, self.kernel_extent]
        }
    }
}

/// Resolved geometry of one temporal convolution call.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TimeGeom {
    pub batch: usize,
    pub in_maps: usize,
    pub out_maps: usize,
    pub electrodes: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub taps: usize,
    pub dilation: usize,
    pub lead: usize,
    /// `Some(multiplier)` for depthwise convolutions.
    pub depth_mult: Option<usize>,
}

impl TimeGeom {
    pub fn resolve(
        x: &[usize],
        spec: &ConvSpec,
        w: &[usize],
        bias: Option<&[usize]>,
    ) -> Result<Self, TensorError> {
        const OP: &str = "conv_temporal";
        spec.validate()?;
        expect_rank(OP, x, 4)?;
        expect_rank(OP, w, 3)?;
        let (batch, in_maps, electrodes, len_in) = (x[0], x[1], x[2], x[3]);
        let expected = spec.weight_shape(in_maps);
        expect_extent(OP, "filter", expected[0], w[0])?;
        expect_extent(OP, "input-map", expected[1], w[1])?;
        expect_extent(OP, "kernel", expected[2], w[2])?;
        let depth_mult = if spec.depthwise {
            if spec.filter_count % in_maps != 0 {
                return Err(TensorError::InvalidSpec(format!(
                    "depthwise filter count {} is not a multiple of {} input maps",
                    spec.filter_count, in_maps
                )));
            }
            Some(spec.filter_count / in_maps)
        } else {
            None
        };
        if let Some(b) = bias {
            expect_rank(OP, b, 1)?;
            expect_extent(OP, "bias", spec.filter_count, b[0])?;
        }
        let span = spec.span();
        if spec.padding == Padding::Valid && span >= len_in {
            return Err(TensorError::SpanTooLong {
                span,
                extent: len_in,
            });
        }
        let (lead, trail) = spec.pads();
        Ok(TimeGeom {
            batch,
            in_maps,
            out_maps: spec.filter_count,
            electrodes,
            len_in,
            len_out: len_in + lead + trail - span,
            taps: spec.kernel_extent,
            dilation: spec.dilation,
            lead,
            depth_mult,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_maps, self.electrodes, self.len_out]
    }

    fn in_maps_of(&self, o: usize) -> std::ops::Range<usize> {
        match self.depth_mult {
            Some(m) => o / m..o / m + 1,
            None => 0..self.in_maps,
        }
    }

    fn w_cols(&self) -> usize {
        if self.depth_mult.is_some() {
            1
        } else {
            self.in_maps
        }
    }

    /// Output index range touched by tap `k`, and the input offset for it.
    #[inline]
    fn tap_range(&self, k: usize) -> (usize, usize, isize) {
        let shift = (k * self.dilation) as isize - self.lead as isize;
        let start = (-shift).max(0) as usize;
        let end = ((self.len_in as isize - shift).max(0) as usize).min(self.len_out);
        (start.min(end), end, shift)
    }
}

pub(crate) fn conv_time_forward<T: Real>(g: &TimeGeom, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let mut y = vec![T::zero(); g.batch * g.out_maps * g.electrodes * g.len_out];
    let wc = g.w_cols();
    for n in 0..g.batch {
        for o in 0..g.out_maps {
            let bias = b.map_or(T::zero(), |b| b[o]);
            for c in 0..g.electrodes {
                let yo = ((n * g.out_maps + o) * g.electrodes + c) * g.len_out;
                let row = &mut y[yo..yo + g.len_out];
                row.iter_mut().for_each(|v| *v = bias);
                for (col, i) in g.in_maps_of(o).enumerate() {
                    let xo = ((n * g.in_maps + i) * g.electrodes + c) * g.len_in;
                    let xr = &x[xo..xo + g.len_in];
                    let wr = &w[(o * wc + col) * g.taps..(o * wc + col + 1) * g.taps];
                    for (k, &wk) in wr.iter().enumerate() {
                        let (s, e, shift) = g.tap_range(k);
                        let xs = (s as isize + shift) as usize;
                        for (yv, &xv) in row[s..e].iter_mut().zip(&xr[xs..xs + (e - s)]) {
                            *yv += wk * xv;
                        }
                    }
                }
            }
        }
    }
    y
}

/// Accumulates gradients of a temporal convolution into the provided buffers.
pub(crate) fn conv_time_backward<T: Real>(
    g: &TimeGeom,
    x: &[T],
    w: &[T],
    gy: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let wc = g.w_cols();
    for n in 0..g.batch {
        for o in 0..g.out_maps {
            for c in 0..g.electrodes {
                let yo = ((n * g.out_maps + o) * g.electrodes + c) * g.len_out;
                let gr = &gy[yo..yo + g.len_out];
                if let Some(gb) = gb.as_deref_mut() {
                    gb[o] += gr.iter().copied().sum::<T>();
                }
                for (col, i) in g.in_maps_of(o).enumerate() {
                    let xo = ((n * g.in_maps + i) * g.electrodes + c) * g.len_in;
                    let wo = (o * wc + col) * g.taps;
                    for k in 0..g.taps {
                        let (s, e, shift) = g.tap_range(k);
                        let xs = (s as isize + shift) as usize;
                        if let Some(gw) = gw.as_deref_mut() {
                            let xr = &x[xo + xs..xo + xs + (e - s)];
                            let mut acc = T::zero();
                            for (&gv, &xv) in gr[s..e].iter().zip(xr) {
                                acc += gv * xv;
                            }
                            gw[wo + k] += acc;
                        }
                        if let Some(gx) = gx.as_deref_mut() {
                            let wk = w[wo + k];
                            let xr = &mut gx[xo + xs..xo + xs + (e - s)];
                            for (xv, &gv) in xr.iter_mut().zip(&gr[s..e]) {
                                *xv += wk * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Depthwise convolution along the electrode axis with valid padding.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SpatialGeom {
    pub batch: usize,
    pub in_maps: usize,
    pub mult: usize,
    pub electrodes: usize,
    pub kernel: usize,
    pub out_electrodes: usize,
    pub len: usize,
}

impl SpatialGeom {
    pub fn resolve(x: &[usize], w: &[usize]) -> Result<Self, TensorError> {
        const OP: &str = "conv_spatial";
        expect_rank(OP, x, 4)?;
        expect_rank(OP, w, 3)?;
        expect_extent(OP, "input-map", 1, w[1])?;
        let in_maps = x[1];
        if in_maps == 0 || w[0] % in_maps != 0 || w[0] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: OP,
                axis: "filter",
                expected: in_maps,
                got: w[0],
            });
        }
        let kernel = w[2];
        if kernel == 0 || kernel > x[2] {
            return Err(TensorError::SpanTooLong {
                span: kernel,
                extent: x[2],
            });
        }
        Ok(SpatialGeom {
            batch: x[0],
            in_maps,
            mult: w[0] / in_maps,
            electrodes: x[2],
            kernel,
            out_electrodes: x[2] - kernel + 1,
            len: x[3],
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.in_maps * self.mult, self.out_electrodes, self.len]
    }
}

pub(crate) fn conv_spatial_forward<T: Real>(g: &SpatialGeom, x: &[T], w: &[T]) -> Vec<T> {
    let out_maps = g.in_maps * g.mult;
    let mut y = vec![T::zero(); g.batch * out_maps * g.out_electrodes * g.len];
    for n in 0..g.batch {
        for o in 0..out_maps {
            let i = o / g.mult;
            for c in 0..g.out_electrodes {
                let yo = ((n * out_maps + o) * g.out_electrodes + c) * g.len;
                for j in 0..g.kernel {
                    let wk = w[o * g.kernel + j];
                    let xo = ((n * g.in_maps + i) * g.electrodes + c + j) * g.len;
                    let (yr, xr) = (&mut y[yo..yo + g.len], &x[xo..xo + g.len]);
                    for (yv, &xv) in yr.iter_mut().zip(xr) {
                        *yv += wk * xv;
                    }
                }
            }
        }
    }
    y
}

pub(crate) fn conv_spatial_backward<T: Real>(
    g: &SpatialGeom,
    x: &[T],
    w: &[T],
    gy: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
) {
    let out_maps = g.in_maps * g.mult;
    for n in 0..g.batch {
        for o in 0..out_maps {
            let i = o / g.mult;
            for c in 0..g.out_electrodes {
                let yo = ((n * out_maps + o) * g.out_electrodes + c) * g.len;
                let gr = &gy[yo..yo + g.len];
                for j in 0..g.kernel {
                    let xo = ((n * g.in_maps + i) * g.electrodes + c + j) * g.len;
                    if let Some(gw) = gw.as_deref_mut() {
                        let mut acc = T::zero();
                        for (&gv, &xv) in gr.iter().zip(&x[xo..xo + g.len]) {
                            acc += gv * xv;
                        }
                        gw[o * g.kernel + j] += acc;
                    }
                    if let Some(gx) = gx.as_deref_mut() {
                        let wk = w[o * g.kernel + j];
                        for (xv, &gv) in gx[xo..xo + g.len].iter_mut().zip(gr) {
                            *xv += wk * gv;
                        }
                    }
                }
            }
        }
    }
}

/// Running mean and variance tracked by a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// Exponential moving average: `running = momentum·running + (1-momentum)·batch`.
    pub fn update(&mut self, batch_mean: &[T], batch_var: &[T], momentum: T) {
        let rest = T::one() - momentum;
        for (r, &b) in self.mean.iter_mut().zip(batch_mean) {
            *r = momentum * *r + rest * b;
        }
        for (r, &b) in self.var.iter_mut().zip(batch_var) {
            *r = momentum * *r + rest * b;
        }
    }
}

/// Layout of a tensor as `[outer, channels, inner]` for per-channel statistics.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChannelGeom {
    pub outer: usize,
    pub channels: usize,
    pub inner: usize,
}

impl ChannelGeom {
    pub fn of(shape: &[usize]) -> Result<Self, TensorError> {
        if shape.len() < 2 {
            return Err(TensorError::Rank {
                op: "batch_norm",
                expected: 2,
                got: shape.to_vec(),
            });
        }
        Ok(ChannelGeom {
            outer: shape[0],
            channels: shape[1],
            inner: shape[2..].iter().product(),
        })
    }

    #[inline]
    fn for_each_row(&self, mut f: impl FnMut(usize, std::ops::Range<usize>)) {
        for n in 0..self.outer {
            for ch in 0..self.channels {
                let start = (n * self.channels + ch) * self.inner;
                f(ch, start..start + self.inner);
            }
        }
    }
}

/// Output of a batch-norm forward pass.
pub(crate) struct BnForward<T> {
    pub y: Vec<T>,
    pub x_hat: Vec<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
}

pub(crate) fn batch_norm_forward<T: Real>(
    geom: &ChannelGeom,
    x: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
    mode: Mode,
    running: &RunningStats<T>,
) -> Result<BnForward<T>, TensorError> {
    const OP: &str = "batch_norm";
    expect_extent(OP, "gamma", geom.channels, gamma.len())?;
    expect_extent(OP, "beta", geom.channels, beta.len())?;
    expect_extent(OP, "running-stat", geom.channels, running.mean.len())?;
    let (mean, var) = match mode {
        Mode::Train => {
            if geom.outer < 2 {
                return Err(TensorError::BatchTooSmall(geom.outer));
            }
            let count = T::from_usize(geom.outer * geom.inner).unwrap();
            let mut mean = vec![T::zero(); geom.channels];
            geom.for_each_row(|ch, r| mean[ch] += x[r].iter().copied().sum::<T>());
            mean.iter_mut().for_each(|m| *m = *m / count);
            let mut var = vec![T::zero(); geom.channels];
            geom.for_each_row(|ch, r| {
                let m = mean[ch];
                var[ch] += x[r].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
            });
            var.iter_mut().for_each(|v| *v = *v / count);
            (mean, var)
        }
        Mode::Infer => (running.mean.clone(), running.var.clone()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut x_hat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    geom.for_each_row(|ch, r| {
        let (m, s, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
        for ((h, o), &v) in x_hat[r.clone()].iter_mut().zip(&mut y[r.clone()]).zip(&x[r]) {
            *h = (v - m) * s;
            *o = g * *h + b;
        }
    });
    Ok(BnForward {
        y,
        x_hat,
        inv_std,
        batch_mean: mean,
        batch_var: var,
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn batch_norm_backward<T: Real>(
    geom: &ChannelGeom,
    x_hat: &[T],
    inv_std: &[T],
    gamma: &[T],
    train: bool,
    gy: &[T],
    gx: Option<&mut [T]>,
    ggamma: Option<&mut [T]>,
    gbeta: Option<&mut [T]>,
) {
    let mut sum_g = vec![T::zero(); geom.channels];
    let mut sum_gx = vec![T::zero(); geom.channels];
    geom.for_each_row(|ch, r| {
        for (&g, &h) in gy[r.clone()].iter().zip(&x_hat[r]) {
            sum_g[ch] += g;
            sum_gx[ch] += g * h;
        }
    });
    if let Some(gg) = ggamma {
        gg.iter_mut().zip(&sum_gx).for_each(|(a, &b)| *a += b);
    }
    if let Some(gb) = gbeta {
        gb.iter_mut().zip(&sum_g).for_each(|(a, &b)| *a += b);
    }
    if let Some(gx) = gx {
        let count = T::from_usize(geom.outer * geom.inner).unwrap();
        geom.for_each_row(|ch, r| {
            let scale = gamma[ch] * inv_std[ch];
            if train {
                let mg = sum_g[ch] / count;
                let mgx = sum_gx[ch] / count;
                for ((d, &g), &h) in gx[r.clone()].iter_mut().zip(&gy[r.clone()]).zip(&x_hat[r]) {
                    *d += scale * (g - mg - h * mgx);
                }
            } else {
                for (d, &g) in gx[r.clone()].iter_mut().zip(&gy[r]) {
                    *d += scale * g;
                }
            }
        });
    }
}

#[inline]
pub(crate) fn elu_scalar<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        v.exp_m1()
    }
}

pub(crate) fn avg_pool_geom(shape: &[usize], pool: usize) -> Result<(usize, usize, usize), TensorError> {
    let len = *shape.last().ok_or(TensorError::Rank {
        op: "avg_pool_time",
        expected: 1,
        got: shape.to_vec(),
    })?;
    if pool == 0 || pool > len {
        return Err(TensorError::InvalidPool { pool, extent: len });
    }
    let rows = shape[..shape.len() - 1].iter().product();
    Ok((rows, len, len / pool))
}

pub(crate) fn avg_pool_forward<T: Real>(x: &[T], rows: usize, len: usize, pool: usize) -> Vec<T> {
    let out_len = len / pool;
    let inv = T::one() / T::from_usize(pool).unwrap();
    let mut y = Vec::with_capacity(rows * out_len);
    for r in 0..rows {
        let xr = &x[r * len..(r + 1) * len];
        for j in 0..out_len {
            y.push(xr[j * pool..(j + 1) * pool].iter().copied().sum::<T>() * inv);
        }
    }
    y
}

pub(crate) fn dropout_mask<T: Real, R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from_real(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

pub(crate) fn check_rate(rate: f64) -> Result<(), TensorError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::InvalidRate(rate));
    }
    Ok(())
}

pub(crate) fn dense_forward<T: Real>(x: &[T], w: &[T], b: &[T], n: usize, d_in: usize, d_out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * d_out];
    for i in 0..n {
        let yr = &mut y[i * d_out..(i + 1) * d_out];
        yr.copy_from_slice(b);
        for (k, &xv) in x[i * d_in..(i + 1) * d_in].iter().enumerate() {
            for (yv, &wv) in yr.iter_mut().zip(&w[k * d_out..(k + 1) * d_out]) {
                *yv += xv * wv;
            }
        }
    }
    y
}

pub(crate) fn softmax_rows_raw<T: Real>(x: &[T], cols: usize) -> Vec<T> {
    let mut y = x.to_vec();
    for row in y.chunks_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / total);
    }
    y
}

// Tensor-level entry points for inference and tests.

pub fn conv_temporal<T: Real>(
    x: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>, TensorError> {
    let g = TimeGeom::resolve(x.shape(), spec, weights.shape(), bias.map(|b| b.shape()))?;
    let y = conv_time_forward(&g, x.data(), weights.data(), bias.map(|b| b.data()));
    Tensor::new(g.out_shape(), y)
}

/// Depthwise convolution along electrodes (valid padding).
pub fn conv_spatial<T: Real>(x: &Tensor<T>, weights: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let g = SpatialGeom::resolve(x.shape(), weights.shape())?;
    Tensor::new(g.out_shape(), conv_spatial_forward(&g, x.data(), weights.data()))
}

/// Batch normalisation over axis 1. In train mode the running statistics are
/// updated with `momentum`.
pub fn batch_norm<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
    momentum: T,
    mode: Mode,
    running: &mut RunningStats<T>,
) -> Result<Tensor<T>, TensorError> {
    let geom = ChannelGeom::of(x.shape())?;
    let out = batch_norm_forward(&geom, x.data(), gamma.data(), beta.data(), eps, mode, running)?;
    if mode == Mode::Train {
        running.update(&out.batch_mean, &out.batch_var, momentum);
    }
    Tensor::new(x.shape().to_vec(), out.y)
}

pub fn elu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(elu_scalar)
}

/// Mean over non-overlapping windows of `pool` samples on the last axis;
/// a trailing partial window is dropped.
pub fn avg_pool_time<T: Real>(x: &Tensor<T>, pool: usize) -> Result<Tensor<T>, TensorError> {
    let (rows, len, out_len) = avg_pool_geom(x.shape(), pool)?;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_len;
    Tensor::new(shape, avg_pool_forward(x.data(), rows, len, pool))
}

/// Inverted dropout: survivors are scaled by `1/(1-rate)`; identity in infer mode.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor<T>, TensorError> {
    check_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok(x.clone());
    }
    let mask: Vec<T> = dropout_mask(x.numel(), rate, rng);
    let data = x.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// `x·W + b` for `x: [N, D_in]`, `W: [D_in, D_out]`, `b: [D_out]`.
pub fn dense<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (n, d_in, d_out) = dense_dims(x.shape(), w.shape(), b.shape())?;
    Tensor::new(vec![n, d_out], dense_forward(x.data(), w.data(), b.data(), n, d_in, d_out))
}

pub(crate) fn dense_dims(x: &[usize], w: &[usize], b: &[usize]) -> Result<(usize, usize, usize), TensorError> {
    const OP: &str = "dense";
    expect_rank(OP, x, 2)?;
    expect_rank(OP, w, 2)?;
    expect_rank(OP, b, 1)?;
    expect_extent(OP, "input-feature", w[0], x[1])?;
    expect_extent(OP, "bias", w[1], b[0])?;
    Ok((x[0], x[1], w[1]))
}

pub fn softmax_rows<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    expect_rank("softmax_rows", x.shape(), 2)?;
    Tensor::new(x.shape().to_vec(), softmax_rows_raw(x.data(), x.shape()[1]))
}
