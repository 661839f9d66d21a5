//! Labelled multi-channel trials, their file container, preprocessing and a
//! synthetic generator with planted sources.

use thiserror::Error;

use crate::tensor::{Real, Tensor};

mod format;
mod montage;
pub mod preprocess;
pub mod synth;

pub use format::{decode_epochs, encode_epochs, load_epochs, save_epochs, EPOCH_MAGIC, EPOCH_VERSION};
pub use montage::Montage;
pub use preprocess::{decimate, decimate_set, extract_epochs, standardize, ChannelStats};
pub use synth::{generate, SourceDef, SynthSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: not an EEGEPOCH file")]
    BadMagic,
    #[error("unsupported EEGEPOCH version {0}")]
    Version(u32),
    #[error("truncated payload: {0}")]
    Truncated(&'static str),
    #[error("extent overflow: {0}")]
    ExtentOverflow(String),
    #[error("channel {channel:?} has zero variance in the training data")]
    ZeroVariance { channel: String },
    #[error("invalid epoch set: {0}")]
    Invalid(String),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

impl DataError {
    /// Stable short identifier per error class.
    pub fn code(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "io",
            DataError::BadMagic => "bad-magic",
            DataError::Version(_) => "version",
            DataError::Truncated(_) => "truncated",
            DataError::ExtentOverflow(_) => "extent-overflow",
            DataError::ZeroVariance { .. } => "zero-variance",
            DataError::Invalid(_) => "invalid",
            DataError::Spec(_) => "spec",
        }
    }
}

/// Fixed-length trials stored trial-major, channel-major within a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub n_trials: usize,
    pub n_channels: usize,
    pub n_samples: usize,
    pub trials: Vec<f32>,
    pub labels: Vec<u32>,
    pub class_names: Vec<String>,
    pub montage: Montage,
    pub fs: f32,
}

impl EpochSet {
    pub fn new(
        trials: Vec<f32>,
        n_samples: usize,
        labels: Vec<u32>,
        class_names: Vec<String>,
        montage: Montage,
        fs: f32,
    ) -> Result<Self, DataError> {
        let set = EpochSet {
            n_trials: labels.len(),
            n_channels: montage.len(),
            n_samples,
            trials,
            labels,
            class_names,
            montage,
            fs,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Invalid(m));
        if self.labels.len() != self.n_trials {
            return bad(format!("{} labels for {} trials", self.labels.len(), self.n_trials));
        }
        if self.montage.len() != self.n_channels || self.montage.xy.len() != self.n_channels {
            return bad(format!(
                "{} channel names / {} coordinates for {} channels",
                self.montage.names.len(),
                self.montage.xy.len(),
                self.n_channels
            ));
        }
        if self.trials.len() != self.n_trials * self.n_channels * self.n_samples {
            return bad(format!(
                "{} values for {}x{}x{} trials",
                self.trials.len(),
                self.n_trials,
                self.n_channels,
                self.n_samples
            ));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.class_names.len()) {
            return bad(format!("label {l} outside {} classes", self.class_names.len()));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return bad(format!("sampling rate {} is not positive", self.fs));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn trial_len(&self) -> usize {
        self.n_channels * self.n_samples
    }

    pub fn trial(&self, i: usize) -> &[f32] {
        let len = self.trial_len();
        &self.trials[i * len..(i + 1) * len]
    }

    pub fn trial_mut(&mut self, i: usize) -> &mut [f32] {
        let len = self.trial_len();
        &mut self.trials[i * len..(i + 1) * len]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// The listed trials, in the listed order.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        let mut trials = Vec::with_capacity(indices.len() * self.trial_len());
        for &i in indices {
            trials.extend_from_slice(self.trial(i));
        }
        EpochSet {
            n_trials: indices.len(),
            trials,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.header_clone()
        }
    }

    fn header_clone(&self) -> EpochSet {
        EpochSet {
            n_trials: 0,
            n_channels: self.n_channels,
            n_samples: self.n_samples,
            trials: Vec::new(),
            labels: Vec::new(),
            class_names: self.class_names.clone(),
            montage: self.montage.clone(),
            fs: self.fs,
        }
    }

    /// Whether two sets share channels, trial length, rate and label space.
    pub fn compatible(&self, other: &EpochSet) -> bool {
        self.n_channels == other.n_channels
            && self.n_samples == other.n_samples
            && self.class_names == other.class_names
            && self.fs == other.fs
    }

    /// Stacks compatible sets in order.
    pub fn concat(sets: &[&EpochSet]) -> Result<EpochSet, DataError> {
        let first = sets.first().ok_or_else(|| DataError::Invalid("nothing to concatenate".into()))?;
        let mut out = first.header_clone();
        for s in sets {
            if !first.compatible(s) {
                return Err(DataError::Invalid(
                    "sets differ in channels, trial length, sampling rate or classes".into(),
                ));
            }
            out.trials.extend_from_slice(&s.trials);
            out.labels.extend_from_slice(&s.labels);
            out.n_trials += s.n_trials;
        }
        Ok(out)
    }

    /// Network input `(N, 1, channels, samples)` for the listed trials.
    pub fn to_tensor<T: Real>(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.trial_len());
        for &i in indices {
            data.extend(self.trial(i).iter().map(|&v| T::from_real(v as f64)));
        }
        Tensor::new(vec![indices.len(), 1, self.n_channels, self.n_samples], data).expect("extents match buffer")
    }

    pub fn labels_usize(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i] as usize).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EpochSet {
        EpochSet::new(
            (0..24).map(|v| v as f32).collect(),
            3,
            vec![0, 1, 1, 0],
            vec!["a".into(), "b".into()],
            Montage::for_channels(2),
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn subset_and_concat() {
        let s = tiny();
        let sub = s.subset(&[2, 0]);
        assert_eq!(sub.trial(0), s.trial(2));
        assert_eq!(sub.labels, vec![1, 0]);
        let both = EpochSet::concat(&[&sub, &s]).unwrap();
        assert_eq!(both.n_trials, 6);
        assert_eq!(both.trial(5), s.trial(3));
        both.validate().unwrap();
    }

    #[test]
    fn invalid_sets_are_rejected() {
        let s = tiny();
        let mut bad = s.clone();
        bad.labels[0] = 2;
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.trials.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tensor_layout() {
        let s = tiny();
        let t: Tensor<f64> = s.to_tensor(&[1]);
        assert_eq!(t.shape(), &[1, 1, 2, 3]);
        assert_eq!(t.data(), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
        assert_eq!(s.class_counts(), vec![2, 2]);
    }
}
