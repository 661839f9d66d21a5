//! Decimation, per-channel standardisation and cue-locked epoching.

use super::{DataError, EpochSet, Montage};

/// Taps of the anti-aliasing filter.
pub const DECIMATION_TAPS: usize = 63;
/// Cut-off as a fraction of the output sampling rate.
pub const DECIMATION_CUTOFF: f64 = 0.45;

/// Hamming-windowed sinc low-pass with unit DC gain; `cutoff` in cycles per
/// input sample.
pub fn lowpass_taps(taps: usize, cutoff: f64) -> Vec<f64> {
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * t).sin() / (std::f64::consts::PI * t)
            };
            let window = if taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (taps - 1) as f64).cos()
            };
            sinc * window
        })
        .collect();
    let gain: f64 = h.iter().sum();
    for v in &mut h {
        *v /= gain;
    }
    h
}

/// Linear-phase FIR applied causally with zero initial state.
fn fir(h: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| h.iter().enumerate().take(t + 1).map(|(k, &c)| c * x[t - k]).sum())
        .collect()
}

/// Forward-backward filtering with odd-reflection padding at both ends.
pub fn filtfilt(h: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (3 * h.len()).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let mut y = fir(h, &ext);
    y.reverse();
    let mut y = fir(h, &y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Low-pass filters at `0.45·fs/factor` and keeps every `factor`-th sample.
/// Output length is `floor(n / factor)`.
pub fn decimate(signal: &[f64], factor: usize) -> Result<Vec<f64>, DataError> {
    if factor == 0 || factor > signal.len() {
        return Err(DataError::Invalid(format!(
            "decimation factor {factor} invalid for {} samples",
            signal.len()
        )));
    }
    if factor == 1 {
        return Ok(signal.to_vec());
    }
    let h = lowpass_taps(DECIMATION_TAPS, DECIMATION_CUTOFF / factor as f64);
    let y = filtfilt(&h, signal);
    Ok((0..signal.len() / factor).map(|i| y[i * factor]).collect())
}

/// Decimates every channel of every trial.
pub fn decimate_set(set: &EpochSet, factor: usize) -> Result<EpochSet, DataError> {
    let new_len = set.n_samples / factor.max(1);
    let mut trials = Vec::with_capacity(set.n_trials * set.n_channels * new_len);
    for row in set.trials.chunks(set.n_samples.max(1)) {
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        trials.extend(decimate(&x, factor)?.into_iter().map(|v| v as f32));
    }
    Ok(EpochSet {
        n_samples: new_len,
        trials,
        fs: set.fs / factor as f32,
        ..set.clone()
    })
}

/// Per-channel affine transform fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Mean and (population) standard deviation per channel over every trial
    /// and sample of `train`.
    pub fn fit(train: &EpochSet) -> Result<Self, DataError> {
        if train.n_trials == 0 || train.n_samples == 0 {
            return Err(DataError::Invalid("cannot fit statistics on an empty set".into()));
        }
        let (c, s) = (train.n_channels, train.n_samples);
        let count = (train.n_trials * s) as f64;
        let mut mean = vec![0.0; c];
        for trial in train.trials.chunks(c * s) {
            for (ch, row) in trial.chunks(s).enumerate() {
                mean[ch] += row.iter().map(|&v| v as f64).sum::<f64>();
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        let mut var = vec![0.0; c];
        for trial in train.trials.chunks(c * s) {
            for (ch, row) in trial.chunks(s).enumerate() {
                var[ch] += row.iter().map(|&v| (v as f64 - mean[ch]).powi(2)).sum::<f64>();
            }
        }
        let mut std = Vec::with_capacity(c);
        for (ch, v) in var.into_iter().enumerate() {
            let sd = (v / count).sqrt();
            if !(sd > f64::EPSILON * mean[ch].abs().max(1.0)) {
                return Err(DataError::ZeroVariance {
                    channel: train.montage.names[ch].clone(),
                });
            }
            std.push(sd);
        }
        Ok(ChannelStats { mean, std })
    }

    pub fn apply(&self, set: &mut EpochSet) -> Result<(), DataError> {
        if set.n_channels != self.mean.len() {
            return Err(DataError::Invalid(format!(
                "statistics for {} channels applied to {}",
                self.mean.len(),
                set.n_channels
            )));
        }
        let s = set.n_samples.max(1);
        for trial in set.trials.chunks_mut(set.n_channels * s) {
            for (ch, row) in trial.chunks_mut(s).enumerate() {
                let (m, sd) = (self.mean[ch], self.std[ch]);
                for v in row {
                    *v = ((*v as f64 - m) / sd) as f32;
                }
            }
        }
        Ok(())
    }
}

/// Fits statistics on `train` and applies them to `train` and every other set.
pub fn standardize(train: &mut EpochSet, others: &mut [&mut EpochSet]) -> Result<ChannelStats, DataError> {
    let stats = ChannelStats::fit(train)?;
    stats.apply(train)?;
    for o in others.iter_mut() {
        stats.apply(o)?;
    }
    Ok(stats)
}

/// Cuts `duration_s` windows starting at each cue onset out of a continuous
/// recording given as one row per channel.
pub fn extract_epochs(
    continuous: &[Vec<f32>],
    montage: Montage,
    fs: f32,
    onsets: &[usize],
    labels: &[u32],
    class_names: Vec<String>,
    duration_s: f32,
) -> Result<EpochSet, DataError> {
    if continuous.len() != montage.len() {
        return Err(DataError::Invalid(format!(
            "{} rows for {} channels",
            continuous.len(),
            montage.len()
        )));
    }
    if onsets.len() != labels.len() {
        return Err(DataError::Invalid(format!("{} onsets for {} labels", onsets.len(), labels.len())));
    }
    let len = (duration_s * fs).round() as usize;
    let total = continuous.iter().map(Vec::len).min().unwrap_or(0);
    let mut trials = Vec::with_capacity(onsets.len() * continuous.len() * len);
    for &onset in onsets {
        if onset + len > total {
            return Err(DataError::Invalid(format!(
                "window at {onset} of {len} samples runs past the recording ({total} samples)"
            )));
        }
        for row in continuous {
            trials.extend_from_slice(&row[onset..onset + len]);
        }
    }
    EpochSet::new(trials, len, labels.to_vec(), class_names, montage, fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    /// Least-squares amplitude of a sinusoid of known frequency.
    fn fitted_amplitude(y: &[f64], freq: f64, fs: f64) -> f64 {
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &v) in y.iter().enumerate() {
            let a = 2.0 * PI * freq * i as f64 / fs;
            let (s, c) = a.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        (a * a + b * b).sqrt()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn factor_one_is_identity() {
        let x = tone(3.0, 100.0, 50);
        assert_eq!(decimate(&x, 1).unwrap(), x);
    }

    #[test]
    fn passband_tone_keeps_amplitude() {
        let x = tone(10.0, 250.0, 1000);
        let y = decimate(&x, 2).unwrap();
        assert_eq!(y.len(), 500);
        let amp = fitted_amplitude(&y, 10.0, 125.0);
        assert!((amp - 1.0).abs() < 0.01, "amplitude {amp}");
    }

    #[test]
    fn stopband_tone_is_attenuated() {
        let x = tone(70.0, 250.0, 1000);
        let y = decimate(&x, 2).unwrap();
        assert!(rms(&y) < 0.05 * rms(&x), "ratio {}", rms(&y) / rms(&x));
    }

    #[test]
    fn output_length_floors() {
        assert_eq!(decimate(&vec![1.0; 1001], 4).unwrap().len(), 250);
        assert!(decimate(&[1.0, 2.0], 3).is_err());
        assert!(decimate(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn taps_have_unit_gain_and_symmetry() {
        let h = lowpass_taps(DECIMATION_TAPS, 0.225);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..h.len() {
            assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-15);
        }
    }

    fn set_from(values: Vec<f32>, channels: usize, samples: usize) -> EpochSet {
        let n = values.len() / (channels * samples);
        EpochSet::new(
            values,
            samples,
            vec![0; n],
            vec!["a".into()],
            Montage::for_channels(channels),
            125.0,
        )
        .unwrap()
    }

    fn moments(set: &EpochSet, ch: usize) -> (f64, f64) {
        let mut vals = Vec::new();
        for i in 0..set.n_trials {
            vals.extend(set.trial(i)[ch * set.n_samples..(ch + 1) * set.n_samples].iter().map(|&v| v as f64));
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
        (m, v.sqrt())
    }

    #[test]
    fn training_channels_become_standard() {
        // channel 0: mean 10, std 2; channel 1: arbitrary ramp
        let mut values = Vec::new();
        for t in 0..3 {
            values.extend([8.0, 12.0, 8.0, 12.0]);
            values.extend((0..4).map(|i| (i * 3 + t) as f32));
        }
        let mut train = set_from(values, 2, 4);
        let stats = standardize(&mut train, &mut []).unwrap();
        assert!((stats.mean[0] - 10.0).abs() < 1e-12 && (stats.std[0] - 2.0).abs() < 1e-12);
        for ch in 0..2 {
            let (m, s) = moments(&train, ch);
            assert!(m.abs() < 1e-5 && (s - 1.0).abs() < 1e-3);
        }
        let again = train.clone();
        standardize(&mut train, &mut []).unwrap();
        for (a, b) in train.trials.iter().zip(&again.trials) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn other_sets_use_training_statistics() {
        let mut train = set_from(vec![0.0, 2.0, 0.0, 2.0], 1, 2);
        let mut test = set_from(vec![5.0, 7.0], 1, 2);
        let reference = test.clone();
        standardize(&mut train, &mut [&mut test]).unwrap();
        assert_eq!(test.trials, vec![4.0, 6.0]);

        let mut perturbed = reference.clone();
        perturbed.trials[0] = -100.0;
        let mut train2 = set_from(vec![0.0, 2.0, 0.0, 2.0], 1, 2);
        let s1 = standardize(&mut train2.clone(), &mut [&mut reference.clone()]).unwrap();
        let s2 = standardize(&mut train2, &mut [&mut perturbed]).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn zero_variance_names_the_channel() {
        let mut train = set_from(vec![1.0, 2.0, 3.0, 3.0, 3.0, 3.0], 2, 3);
        let err = standardize(&mut train, &mut []).unwrap_err();
        let name = Montage::for_channels(2).names[1].clone();
        assert!(err.to_string().contains(&name), "{err}");
    }

    #[test]
    fn three_seconds_at_125_hz_is_375_samples() {
        let rec: Vec<Vec<f32>> = (0..3).map(|c| (0..2000).map(|i| (i * 10 + c) as f32).collect()).collect();
        let set = extract_epochs(
            &rec,
            Montage::for_channels(3),
            125.0,
            &[0, 500, 1000],
            &[0, 1, 0],
            vec!["l".into(), "r".into()],
            3.0,
        )
        .unwrap();
        assert_eq!(set.n_samples, 375);
        assert_eq!(set.trial(1)[0], 5000.0);
        assert_eq!(set.trial(1)[375], 5001.0);
        assert!(extract_epochs(&rec, Montage::for_channels(3), 125.0, &[1700], &[0], vec!["l".into()], 3.0).is_err());
    }
}
