//! The network: inception block, dilated temporal-convolution block,
//! dimension reduction and softmax classifier.
//!
//! ```text
//! input (N,1,c,s)
//!   ├─ per branch: temporal conv (same) → BN → depthwise spatial conv (valid) → BN
//!   └─ concat → ELU → dropout → avg-pool(pool1)                  (N,c',1,s/pool1)
//! n residual blocks, block i with dilation bⁱ:
//!   m × [depthwise causal conv → BN → ELU → dropout], skip added before the last ELU
//! 1×1 conv(dr) → BN → ELU → dropout → avg-pool(pool2)            (N,dr,1,s')
//! flatten → dense → softmax                                      (N,classes)
//! ```

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::data::Montage;
use crate::kv::KvError;
use crate::tensor::ops::{self, RunningStats};

use crate::tensor::{init, Adam, BatchMoments, ConvSpec, Gradients, Mode, Padding, Real, Tape, Tensor, TensorError, Var};

mod config;
pub mod io;
mod receptive;

pub use config::{ArchConfig, Branch, DROPOUT_CROSS, DROPOUT_WITHIN};
pub use receptive::{coverage_ratio, plan_kernel, receptive_field_blocks, receptive_field_plain};

pub const BN_EPS: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Config(#[from] KvError),
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file: bad magic")]
    BadMagic,
    #[error("model file: unsupported version {0}")]
    Version(u32),
    #[error("model file: truncated")]
    Truncated,
    #[error("model file: unknown dtype tag {0}")]
    DType(u8),
    #[error("model file: {0}")]
    Format(String),
}

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormState<T: Real> {
    pub name: String,
    pub stats: RunningStats<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NormIdx {
    gamma: usize,
    beta: usize,
    state: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BranchIdx {
    temporal_w: usize,
    temporal_b: usize,
    bn_temporal: NormIdx,
    spatial_w: usize,
    bn_spatial: NormIdx,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TcLayerIdx {
    w: usize,
    b: usize,
    bn: NormIdx,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    branches: Vec<BranchIdx>,
    tc: Vec<Vec<TcLayerIdx>>,
    dr_w: usize,
    dr_b: usize,
    dr_bn: NormIdx,
    dense_w: usize,
    dense_b: usize,
}

/// Kind of a layer in [`ItNet::layers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    TemporalConv,
    SpatialConv,
    BatchNorm,
    Concat,
    Elu,
    Dropout,
    AvgPool,
    CausalConv,
    Residual,
    PointwiseConv,
    Flatten,
    Dense,
    Softmax,
}

/// Layer descriptor with its per-example output shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub output_shape: Vec<usize>,
}

/// Output of a recorded forward pass.
pub struct Forward<T> {
    pub logits: Var,
    pub probs: Var,
    /// Tape leaves of the trainable parameters, in [`ItNet::params`] order.
    pub param_vars: Vec<Var>,
    /// Batch moments observed by each batch-norm layer (train mode only).
    pub moments: Vec<(usize, BatchMoments<T>)>,
}

/// The assembled network.
#[derive(Debug, Clone, PartialEq)]
pub struct ItNet<T: Real> {
    config: ArchConfig,
    params: Vec<Param<T>>,
    norms: Vec<NormState<T>>,
    layout: Layout,
    montage: Option<Montage>,
}

struct Builder<T: Real> {
    params: Vec<Param<T>>,
    norms: Vec<NormState<T>>,
}

impl<T: Real> Builder<T> {
    fn param(&mut self, name: String, value: Tensor<T>) -> usize {
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    fn norm(&mut self, prefix: &str, channels: usize) -> NormIdx {
        let gamma = self.param(format!("{prefix}.gamma"), Tensor::full(&[channels], T::one()));
        let beta = self.param(format!("{prefix}.beta"), Tensor::zeros(&[channels]));
        self.norms.push(NormState {
            name: prefix.to_string(),
            stats: RunningStats::new(channels),
        });
        NormIdx {
            gamma,
            beta,
            state: self.norms.len() - 1,
        }
    }
}

/// Parameter order is a function of the config alone.
fn layout_and_params<T: Real, R: Rng + ?Sized>(cfg: &ArchConfig, rng: &mut R) -> (Layout, Vec<Param<T>>, Vec<NormState<T>>) {
    let mut b = Builder {
        params: Vec::new(),
        norms: Vec::new(),
    };
    let c = cfg.n_channels;
    let mut branches = Vec::new();
    for (i, br) in cfg.inception_branches.iter().enumerate() {
        let (f, k) = (br.filters, br.kernel);
        let temporal_w = b.param(
            format!("inception.{i}.temporal.weight"),
            init::glorot_uniform(&[f, 1, k], k, f * k, rng),
        );
        let temporal_b = b.param(format!("inception.{i}.temporal.bias"), Tensor::zeros(&[f]));
        let bn_temporal = b.norm(&format!("inception.{i}.bn_temporal"), f);
        let spatial_w = b.param(
            format!("inception.{i}.spatial.weight"),
            init::glorot_uniform(&[f, 1, c], f * c, c, rng),
        );
        let bn_spatial = b.norm(&format!("inception.{i}.bn_spatial"), f);
        branches.push(BranchIdx {
            temporal_w,
            temporal_b,
            bn_temporal,
            spatial_w,
            bn_spatial,
        });
    }
    let src = cfg.sources();
    let t = cfg.tc_kernel;
    let mut tc = Vec::new();
    for blk in 0..cfg.tc_blocks {
        let mut layers = Vec::new();
        for l in 0..cfg.tc_layers_per_block {
            let p = format!("tc.{blk}.{l}");
            let w = b.param(format!("{p}.conv.weight"), init::glorot_uniform(&[src, 1, t], src * t, t, rng));
            let bias = b.param(format!("{p}.conv.bias"), Tensor::zeros(&[src]));
            let bn = b.norm(&format!("{p}.bn"), src);
            layers.push(TcLayerIdx { w, b: bias, bn });
        }
        tc.push(layers);
    }
    let dr = cfg.dr_filters;
    let dr_w = b.param("dr.conv.weight".into(), init::glorot_uniform(&[dr, src, 1], src, dr, rng));
    let dr_b = b.param("dr.conv.bias".into(), Tensor::zeros(&[dr]));
    let dr_bn = b.norm("dr.bn", dr);
    let flat = cfg.flat_features();
    let k = cfg.n_classes;
    let dense_w = b.param("classifier.weight".into(), init::glorot_uniform(&[flat, k], flat, k, rng));
    let dense_b = b.param("classifier.bias".into(), Tensor::zeros(&[k]));
    let layout = Layout {
        branches,
        tc,
        dr_w,
        dr_b,
        dr_bn,
        dense_w,
        dense_b,
    };
    (layout, b.params, b.norms)
}

struct Ctx<'a, T, R: ?Sized> {
    vars: &'a [Var],
    mode: Mode,
    rng: &'a mut R,
    moments: Vec<(usize, BatchMoments<T>)>,
}

impl<T: Real> ItNet<T> {
    /// Builds the network with Glorot-uniform weights, zero biases, unit
    /// batch-norm scales and fresh running statistics.
    pub fn build<R: Rng + ?Sized>(config: ArchConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, params, norms) = layout_and_params(&config, rng);
        Ok(ItNet {
            config,
            params,
            norms,
            layout,
            montage: None,
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn montage(&self) -> Option<&Montage> {
        self.montage.as_ref()
    }

    pub fn set_montage(&mut self, montage: Option<Montage>) {
        self.montage = montage;
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn norm_states(&self) -> &[NormState<T>] {
        &self.norms
    }

    pub fn norm_states_mut(&mut self) -> &mut [NormState<T>] {
        &mut self.norms
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Converts every tensor to another precision.
    pub fn cast<U: Real>(&self) -> ItNet<U> {
        ItNet {
            config: self.config.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|n| NormState {
                    name: n.name.clone(),
                    stats: RunningStats {
                        mean: n.stats.mean.iter().map(|v| U::from_real(v.as_f64())).collect(),
                        var: n.stats.var.iter().map(|v| U::from_real(v.as_f64())).collect(),
                    },
                })
                .collect(),
            layout: self.layout.clone(),
            montage: self.montage.clone(),
        }
    }

    /// Registers all parameters on `tape` (as trainable leaves or constants).
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    fn check_input(&self, shape: &[usize]) -> Result<(), ModelError> {
        let c = &self.config;
        let expected = [shape.first().copied().unwrap_or(0), 1, c.n_channels, c.n_samples];
        if shape.len() != 4 || shape[1..] != expected[1..] {
            return Err(ModelError::Tensor(TensorError::Rank {
                op: "itnet input (N,1,channels,samples)",
                expected: 4,
                got: shape.to_vec(),
            }));
        }
        Ok(())
    }

    fn norm<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, ctx: &mut Ctx<'_, T, R>, idx: NormIdx, x: Var) -> Result<Var, ModelError> {
        let (y, m) = tape.batch_norm(
            x,
            ctx.vars[idx.gamma],
            ctx.vars[idx.beta],
            T::from_real(BN_EPS),
            ctx.mode,
            &self.norms[idx.state].stats,
        )?;
        if let Some(m) = m {
            ctx.moments.push((idx.state, m));
        }
        Ok(y)
    }

    fn inception<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, ctx: &mut Ctx<'_, T, R>, layout: &Layout, x: Var) -> Result<Var, ModelError> {
        let mut outs = Vec::with_capacity(layout.branches.len());
        for (br, idx) in self.config.inception_branches.iter().zip(&layout.branches) {
            let spec = ConvSpec::new(br.kernel, 1, Padding::Same, br.filters);
            let h = tape.conv_temporal(x, &spec, ctx.vars[idx.temporal_w], Some(ctx.vars[idx.temporal_b]))?;
            let h = self.norm(tape, ctx, idx.bn_temporal, h)?;
            let h = tape.conv_spatial(h, ctx.vars[idx.spatial_w])?;
            outs.push(self.norm(tape, ctx, idx.bn_spatial, h)?);
        }
        let h = tape.concat(&outs)?;
        let h = tape.elu(h)?;
        let h = tape.dropout(h, self.config.dropout_rate, ctx.mode, ctx.rng)?;
        Ok(tape.avg_pool_time(h, self.config.pool1)?)
    }

    fn tc_block<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, ctx: &mut Ctx<'_, T, R>, layout: &Layout, x: Var) -> Result<Var, ModelError> {
        let cfg = &self.config;
        let mut h = x;
        for (blk, layers) in layout.tc.iter().enumerate() {
            let dilation = cfg.dilation_base.pow(blk as u32);
            let spec = ConvSpec::depthwise(cfg.tc_kernel, dilation, Padding::Causal, cfg.sources());
            let skip = h;
            let mut y = h;
            for (l, idx) in layers.iter().enumerate() {
                y = tape.conv_temporal(y, &spec, ctx.vars[idx.w], Some(ctx.vars[idx.b]))?;
                y = self.norm(tape, ctx, idx.bn, y)?;
                if l + 1 == layers.len() {
                    y = tape.add(y, skip)?;
                }
                y = tape.elu(y)?;
                y = tape.dropout(y, cfg.dropout_rate, ctx.mode, ctx.rng)?;
            }
            h = y;
        }
        Ok(h)
    }

    fn reduce<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, ctx: &mut Ctx<'_, T, R>, layout: &Layout, x: Var) -> Result<Var, ModelError> {
        let spec = ConvSpec::new(1, 1, Padding::Valid, self.config.dr_filters);
        let h = tape.conv_temporal(x, &spec, ctx.vars[layout.dr_w], Some(ctx.vars[layout.dr_b]))?;
        let h = self.norm(tape, ctx, layout.dr_bn, h)?;
        let h = tape.elu(h)?;
        let h = tape.dropout(h, self.config.dropout_rate, ctx.mode, ctx.rng)?;
        Ok(tape.avg_pool_time(h, self.config.pool2)?)
    }

    /// Records a full forward pass of `x: (N,1,c,s)`.
    pub fn forward<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, x: Var, mode: Mode, rng: &mut R) -> Result<Forward<T>, ModelError> {
        self.check_input(tape.value(x).shape())?;
        let layout = &self.layout;
        let vars = self.bind(tape, true);
        let mut ctx = Ctx {
            vars: &vars,
            mode,
            rng,
            moments: Vec::new(),
        };
        let h = self.inception(tape, &mut ctx, layout, x)?;
        let h = self.tc_block(tape, &mut ctx, layout, h)?;
        let h = self.reduce(tape, &mut ctx, layout, h)?;
        let flat = tape.flatten(h)?;
        let logits = tape.dense(flat, vars[layout.dense_w], vars[layout.dense_b])?;
        let probs = tape.softmax(logits)?;
        let moments = ctx.moments;
        Ok(Forward {
            logits,
            probs,
            param_vars: vars,
            moments,
        })
    }

    /// Output of the dimension-reduction block (the tensor that gets
    /// flattened), shape `(N, dr_filters, 1, s')`.
    pub fn features<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, x: Var, mode: Mode, rng: &mut R) -> Result<Var, ModelError> {
        self.check_input(tape.value(x).shape())?;
        let layout = &self.layout;
        let vars = self.bind(tape, false);
        let mut ctx = Ctx {
            vars: &vars,
            mode,
            rng,
            moments: Vec::new(),
        };
        let h = self.inception(tape, &mut ctx, layout, x)?;
        let h = self.tc_block(tape, &mut ctx, layout, h)?;
        self.reduce(tape, &mut ctx, layout, h)
    }

    /// Runs the temporal-convolution block alone on `x: (N, c', 1, L)`.
    pub fn tc_block_forward<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, x: Var, mode: Mode, rng: &mut R) -> Result<Var, ModelError> {
        let layout = &self.layout;
        let vars = self.bind(tape, false);
        let mut ctx = Ctx {
            vars: &vars,
            mode,
            rng,
            moments: Vec::new(),
        };
        self.tc_block(tape, &mut ctx, layout, x)
    }

    /// Folds train-mode batch moments into the running statistics.
    pub fn update_running_stats(&mut self, moments: &[(usize, BatchMoments<T>)]) {
        let momentum = T::from_real(BN_MOMENTUM);
        for (idx, m) in moments {
            self.norms[*idx].stats.update(&m.mean, &m.var, momentum);
        }
    }

    /// One optimiser step from the gradients of a recorded forward pass.
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, param_vars: &[Var], opt: &mut Adam<T>) -> Result<(), ModelError> {
        let g: Vec<Tensor<T>> = param_vars.iter().map(|&v| grads.get(v)).collect();
        let mut refs: Vec<&mut Tensor<T>> = self.params.iter_mut().map(|p| &mut p.value).collect();
        opt.step(&mut refs, &g)?;
        Ok(())
    }

    /// Class probabilities in inference mode, evaluated in chunks.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        self.check_input(x.shape())?;
        let n = x.shape()[0];
        let k = self.config.n_classes;
        let mut out = Vec::with_capacity(n * k);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        const CHUNK: usize = 64;
        let mut start = 0;
        while start < n {
            let rows: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
            let mut tape = Tape::new();
            let xv = tape.constant(x.select_rows(&rows));
            let layout = &self.layout;
            let vars = self.bind(&mut tape, false);
            let mut ctx = Ctx {
                vars: &vars,
                mode: Mode::Infer,
                rng: &mut rng,
                moments: Vec::new(),
            };
            let h = self.inception(&mut tape, &mut ctx, layout, xv)?;
            let h = self.tc_block(&mut tape, &mut ctx, layout, h)?;
            let h = self.reduce(&mut tape, &mut ctx, layout, h)?;
            let flat = tape.flatten(h)?;
            let logits = tape.dense(flat, vars[layout.dense_w], vars[layout.dense_b])?;
            out.extend_from_slice(ops::softmax_rows(tape.value(logits))?.data());
            start += CHUNK;
        }
        Ok(Tensor::new(vec![n, k], out)?)
    }

    /// Ordered layer descriptors with per-example output shapes.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let c = &self.config;
        let (ch, s, src) = (c.n_channels, c.n_samples, c.sources());
        let mut out = Vec::new();
        let mut push = |name: String, kind, shape: Vec<usize>| {
            out.push(LayerInfo {
                name,
                kind,
                output_shape: shape,
            })
        };
        for (i, br) in c.inception_branches.iter().enumerate() {
            let f = br.filters;
            push(format!("inception.{i}.temporal"), LayerKind::TemporalConv, vec![f, ch, s]);
            push(format!("inception.{i}.bn_temporal"), LayerKind::BatchNorm, vec![f, ch, s]);
            push(format!("inception.{i}.spatial"), LayerKind::SpatialConv, vec![f, 1, s]);
            push(format!("inception.{i}.bn_spatial"), LayerKind::BatchNorm, vec![f, 1, s]);
        }
        push("inception.concat".into(), LayerKind::Concat, vec![src, 1, s]);
        push("inception.elu".into(), LayerKind::Elu, vec![src, 1, s]);
        push("inception.dropout".into(), LayerKind::Dropout, vec![src, 1, s]);
        let p1 = c.pooled_len();
        push("inception.pool".into(), LayerKind::AvgPool, vec![src, 1, p1]);
        for blk in 0..c.tc_blocks {
            for l in 0..c.tc_layers_per_block {
                let pfx = format!("tc.{blk}.{l}");
                push(format!("{pfx}.conv"), LayerKind::CausalConv, vec![src, 1, p1]);
                push(format!("{pfx}.bn"), LayerKind::BatchNorm, vec![src, 1, p1]);
                if l + 1 == c.tc_layers_per_block {
                    push(format!("tc.{blk}.skip"), LayerKind::Residual, vec![src, 1, p1]);
                }
                push(format!("{pfx}.elu"), LayerKind::Elu, vec![src, 1, p1]);
                push(format!("{pfx}.dropout"), LayerKind::Dropout, vec![src, 1, p1]);
            }
        }
        let dr = c.dr_filters;
        push("dr.conv".into(), LayerKind::PointwiseConv, vec![dr, 1, p1]);
        push("dr.bn".into(), LayerKind::BatchNorm, vec![dr, 1, p1]);
        push("dr.elu".into(), LayerKind::Elu, vec![dr, 1, p1]);
        push("dr.dropout".into(), LayerKind::Dropout, vec![dr, 1, p1]);
        push("dr.pool".into(), LayerKind::AvgPool, vec![dr, 1, c.reduced_len()]);
        push("flatten".into(), LayerKind::Flatten, vec![c.flat_features()]);
        push("classifier".into(), LayerKind::Dense, vec![c.n_classes]);
        push("softmax".into(), LayerKind::Softmax, vec![c.n_classes]);
        out
    }

    /// Spatial kernel of every inception filter, one row per filter in
    /// branch order: the unmixing matrix `W` (sources × electrodes).
    pub fn unmixing_rows(&self) -> Vec<(usize, usize, Vec<T>)> {
        let layout = &self.layout;
        let mut rows = Vec::new();
        for (b, idx) in layout.branches.iter().enumerate() {
            let w = &self.params[idx.spatial_w].value;
            let c = w.shape()[2];
            for f in 0..w.shape()[0] {
                rows.push((b, f, w.data()[f * c..(f + 1) * c].to_vec()));
            }
        }
        rows
    }

    /// Temporal kernels of every inception filter, in branch order.
    pub fn temporal_kernels(&self) -> Vec<(usize, usize, Vec<T>)> {
        let layout = &self.layout;
        let mut rows = Vec::new();
        for (b, idx) in layout.branches.iter().enumerate() {
            let w = &self.params[idx.temporal_w].value;
            let k = w.shape()[2];
            for f in 0..w.shape()[0] {
                rows.push((b, f, w.data()[f * k..(f + 1) * k].to_vec()));
            }
        }
        rows
    }
}
