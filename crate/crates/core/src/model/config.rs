//! Architecture configuration.

use std::fmt;
use std::str::FromStr;

use crate::kv::{KvDoc, KvError, KvReader};

use super::ModelError;

/// One parallel branch of the inception block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Branch {
    pub filters: usize,
    pub kernel: usize,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.filters, self.kernel)
    }
}

impl FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (f, k) = s
            .split_once('x')
            .ok_or_else(|| format!("expected FILTERSxKERNEL, got {s:?}"))?;
        Ok(Branch {
            filters: f.trim().parse().map_err(|e| format!("{e}"))?,
            kernel: k.trim().parse().map_err(|e| format!("{e}"))?,
        })
    }
}

/// Hyper-parameters of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    /// Ordered by ascending kernel extent.
    pub inception_branches: Vec<Branch>,
    pub pool1: usize,
    pub tc_blocks: usize,
    pub tc_layers_per_block: usize,
    pub tc_kernel: usize,
    pub dilation_base: usize,
    pub dr_filters: usize,
    pub pool2: usize,
    pub dropout_rate: f64,
}

/// Dropout used for within-subject training.
pub const DROPOUT_WITHIN: f64 = 0.4;
/// Dropout used when training across subjects.
pub const DROPOUT_CROSS: f64 = 0.2;

impl Default for ArchConfig {
    /// Four-class, 22-electrode, 3 s at 125 Hz.
    fn default() -> Self {
        Self::for_data(22, 375, 4)
    }
}

impl ArchConfig {
    /// Default hyper-parameters for the given input geometry.
    pub fn for_data(n_channels: usize, n_samples: usize, n_classes: usize) -> Self {
        ArchConfig {
            n_channels,
            n_samples,
            n_classes,
            inception_branches: vec![
                Branch { filters: 2, kernel: 16 },
                Branch { filters: 4, kernel: 32 },
                Branch { filters: 8, kernel: 64 },
            ],
            pool1: 4,
            tc_blocks: 4,
            tc_layers_per_block: 2,
            tc_kernel: 4,
            dilation_base: 2,
            dr_filters: 14,
            pool2: 4,
            dropout_rate: DROPOUT_WITHIN,
        }
    }

    /// Number of source maps leaving the inception block.
    pub fn sources(&self) -> usize {
        self.inception_branches.iter().map(|b| b.filters).sum()
    }

    pub fn pooled_len(&self) -> usize {
        self.n_samples / self.pool1
    }

    pub fn reduced_len(&self) -> usize {
        self.pooled_len() / self.pool2
    }

    pub fn flat_features(&self) -> usize {
        self.dr_filters * self.reduced_len()
    }

    /// Receptive field of the temporal-convolution block, in pooled samples.
    pub fn tc_receptive_field(&self) -> u64 {
        super::receptive_field_blocks(
            self.tc_layers_per_block as u64,
            self.tc_kernel as u64,
            self.dilation_base as u64,
            self.tc_blocks as u32,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.n_channels == 0 || self.n_samples == 0 {
            return bad("channel and sample counts must be positive".into());
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.inception_branches.is_empty() {
            return bad("at least one inception branch is required".into());
        }
        for w in self.inception_branches.windows(2) {
            if w[0].kernel >= w[1].kernel {
                return bad("inception branches must have strictly ascending kernel extents".into());
            }
        }
        if self.inception_branches.iter().any(|b| b.filters == 0 || b.kernel == 0) {
            return bad("inception branches need positive filter counts and kernels".into());
        }
        if self.tc_kernel <= self.dilation_base {
            return bad(format!(
                "TC kernel {} must exceed dilation base {} or the receptive field has holes",
                self.tc_kernel, self.dilation_base
            ));
        }
        if self.dilation_base == 0 || self.tc_layers_per_block == 0 {
            return bad("dilation base and layers per block must be positive".into());
        }
        if self.pool1 == 0 || self.pooled_len() == 0 {
            return bad(format!("pool1={} leaves no samples from {}", self.pool1, self.n_samples));
        }
        if self.pool2 == 0 || self.reduced_len() == 0 {
            return bad(format!("pool2={} leaves no samples from {}", self.pool2, self.pooled_len()));
        }
        if self.dr_filters == 0 {
            return bad("dr_filters must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        doc.set("arch.n_channels", self.n_channels);
        doc.set("arch.n_samples", self.n_samples);
        doc.set("arch.n_classes", self.n_classes);
        let branches: Vec<String> = self.inception_branches.iter().map(|b| b.to_string()).collect();
        doc.set("arch.inception_branches", branches.join(","));
        doc.set("arch.pool1", self.pool1);
        doc.set("arch.tc_blocks", self.tc_blocks);
        doc.set("arch.tc_layers_per_block", self.tc_layers_per_block);
        doc.set("arch.tc_kernel", self.tc_kernel);
        doc.set("arch.dilation_base", self.dilation_base);
        doc.set("arch.dr_filters", self.dr_filters);
        doc.set("arch.pool2", self.pool2);
        doc.set("arch.dropout_rate", self.dropout_rate);
    }

    /// Overrides fields of `self` with any `arch.*` keys present.
    pub fn read_kv(mut self, r: &mut KvReader<'_>) -> Result<Self, KvError> {
        self.n_channels = r.or("arch.n_channels", self.n_channels)?;
        self.n_samples = r.or("arch.n_samples", self.n_samples)?;
        self.n_classes = r.or("arch.n_classes", self.n_classes)?;
        if let Some(b) = r.list::<Branch>("arch.inception_branches")? {
            self.inception_branches = b;
        }
        self.pool1 = r.or("arch.pool1", self.pool1)?;
        self.tc_blocks = r.or("arch.tc_blocks", self.tc_blocks)?;
        self.tc_layers_per_block = r.or("arch.tc_layers_per_block", self.tc_layers_per_block)?;
        self.tc_kernel = r.or("arch.tc_kernel", self.tc_kernel)?;
        self.dilation_base = r.or("arch.dilation_base", self.dilation_base)?;
        self.dr_filters = r.or("arch.dr_filters", self.dr_filters)?;
        self.pool2 = r.or("arch.pool2", self.pool2)?;
        self.dropout_rate = r.or("arch.dropout_rate", self.dropout_rate)?;
        Ok(self)
    }
}
