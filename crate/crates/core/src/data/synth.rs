//! Synthetic trials built from planted band-limited sources.
//!
//! Each trial of class `k` is `Σ_j a_j·s_j(t)·w_j + σ·ε(t)` over the
//! sources `j` of class `k`, where `s_j` is unit-RMS noise restricted to
//! `center ± bandwidth/2` in the Fourier domain, `w_j` is a unit-norm
//! mixing column over the electrodes and `ε` is white Gaussian noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DataError, EpochSet, Montage};
use crate::kv::{KvDoc, KvError, KvReader};

/// One planted source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDef {
    pub class: usize,
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub amplitude: f64,
    /// Unit-norm weights over the electrodes.
    pub mixing: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_trials: usize,
    pub n_classes: usize,
    pub fs: f64,
    pub duration_s: f64,
    pub montage: Montage,
    pub sources: Vec<SourceDef>,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Unit-norm Gaussian bump over the montage centred on electrode `focus`.
pub fn focal_column(montage: &Montage, focus: &str, spread: f64) -> Option<Vec<f64>> {
    let idx = montage.names.iter().position(|n| n.eq_ignore_ascii_case(focus))?;
    let [fx, fy] = montage.xy[idx];
    let col: Vec<f64> = montage
        .xy
        .iter()
        .map(|&[x, y]| {
            let d2 = ((x - fx) as f64).powi(2) + ((y - fy) as f64).powi(2);
            (-d2 / (2.0 * spread * spread)).exp()
        })
        .collect();
    Some(normalized(col))
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Noise level giving a 6 dB ratio between total source power `amplitude²`
/// and total noise power `channels·σ²`.
pub fn sigma_for_6db(amplitude: f64, channels: usize) -> f64 {
    amplitude / (2.0 * (channels as f64).sqrt())
}

impl SynthSpec {
    /// Two classes on the 8-electrode layout: 10 Hz focused on C3 versus
    /// 22 Hz focused on C4, at roughly 6 dB SNR.
    pub fn two_class(n_trials: usize, duration_s: f64, seed: u64) -> Self {
        Self::two_class_on(Montage::for_channels(8), n_trials, duration_s, seed)
    }

    /// [`SynthSpec::two_class`] on any montage containing C3 and C4.
    pub fn two_class_on(montage: Montage, n_trials: usize, duration_s: f64, seed: u64) -> Self {
        let a = focal_column(&montage, "C3", 0.25).expect("montage lacks C3");
        let b = focal_column(&montage, "C4", 0.25).expect("montage lacks C4");
        SynthSpec {
            n_trials,
            n_classes: 2,
            fs: 125.0,
            duration_s,
            sources: vec![
                SourceDef {
                    class: 0,
                    center_hz: 10.0,
                    bandwidth_hz: 2.0,
                    amplitude: 1.0,
                    mixing: a,
                },
                SourceDef {
                    class: 1,
                    center_hz: 22.0,
                    bandwidth_hz: 2.0,
                    amplitude: 1.0,
                    mixing: b,
                },
            ],
            noise_sigma: sigma_for_6db(1.0, montage.len()),
            montage,
            seed,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.montage.len()
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Spec(m));
        if self.n_classes == 0 || self.n_channels() == 0 || self.n_samples() == 0 {
            return bad("classes, channels and samples must be positive".into());
        }
        if !(self.fs > 0.0) {
            return bad(format!("sampling rate {} is not positive", self.fs));
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {} is negative", self.noise_sigma));
        }
        for (j, s) in self.sources.iter().enumerate() {
            if s.class >= self.n_classes {
                return bad(format!("source {j}: class {} outside {} classes", s.class, self.n_classes));
            }
            if !(s.center_hz > 0.0 && s.center_hz < self.fs / 2.0) {
                return bad(format!(
                    "source {j}: centre {} Hz must lie in (0, {}) Hz",
                    s.center_hz,
                    self.fs / 2.0
                ));
            }
            if !(s.bandwidth_hz > 0.0) {
                return bad(format!("source {j}: bandwidth must be positive"));
            }
            if s.mixing.len() != self.n_channels() {
                return bad(format!(
                    "source {j}: mixing column has {} weights for {} channels",
                    s.mixing.len(),
                    self.n_channels()
                ));
            }
            let norm = s.mixing.iter().map(|w| w * w).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return bad(format!("source {j}: mixing column norm {norm} is not 1"));
            }
        }
        Ok(())
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        doc.set("synth.n_trials", self.n_trials);
        doc.set("synth.n_classes", self.n_classes);
        doc.set("synth.fs", self.fs);
        doc.set("synth.duration_s", self.duration_s);
        doc.set("synth.channels", self.montage.names.join(","));
        doc.set("synth.noise_sigma", self.noise_sigma);
        doc.set("synth.seed", self.seed);
        doc.set("synth.sources", self.sources.len());
        for (j, s) in self.sources.iter().enumerate() {
            doc.set(format!("synth.source.{j}.class"), s.class);
            doc.set(format!("synth.source.{j}.center_hz"), s.center_hz);
            doc.set(format!("synth.source.{j}.bandwidth_hz"), s.bandwidth_hz);
            doc.set(format!("synth.source.{j}.amplitude"), s.amplitude);
            let w: Vec<String> = s.mixing.iter().map(|v| v.to_string()).collect();
            doc.set(format!("synth.source.{j}.mixing"), w.join(","));
        }
    }

    /// Overrides fields from `synth.*` keys. A source's column is given either
    /// as explicit `mixing` weights or as a `focus` electrode with optional
    /// `spread`; either way it is scaled to unit norm.
    pub fn read_kv(mut self, r: &mut KvReader<'_>) -> Result<Self, KvError> {
        self.n_trials = r.or("synth.n_trials", self.n_trials)?;
        self.n_classes = r.or("synth.n_classes", self.n_classes)?;
        self.fs = r.or("synth.fs", self.fs)?;
        self.duration_s = r.or("synth.duration_s", self.duration_s)?;
        let channels_key = "synth.channels";
        if let Some(names) = r.list::<String>(channels_key)? {
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            self.montage = Montage::standard_subset(&refs).ok_or_else(|| KvError::Value {
                key: channels_key.into(),
                value: names.join(","),
                reason: "unknown electrode name".into(),
            })?;
        } else if let Some(n) = r.opt::<usize>("synth.n_channels")? {
            self.montage = Montage::for_channels(n);
        }
        let sigma_default = self.noise_sigma;
        self.noise_sigma = match r.opt::<String>("synth.noise_sigma")? {
            Some(v) if v == "6db" => sigma_for_6db(1.0, self.montage.len()),
            Some(v) => v.parse().map_err(|e: std::num::ParseFloatError| KvError::Value {
                key: "synth.noise_sigma".into(),
                value: v.clone(),
                reason: e.to_string(),
            })?,
            None => sigma_default,
        };
        self.seed = r.or("synth.seed", self.seed)?;
        let count = r.opt::<usize>("synth.sources")?;
        let old = std::mem::take(&mut self.sources);
        let n = count.unwrap_or(old.len());
        for j in 0..n {
            let base = old.get(j).cloned();
            let key = |f: &str| format!("synth.source.{j}.{f}");
            let missing = || KvError::Missing(key("class"));
            let class = match r.opt(&key("class"))? {
                Some(c) => c,
                None => base.as_ref().map(|b| b.class).ok_or_else(missing)?,
            };
            let center_hz = r.opt(&key("center_hz"))?.or(base.as_ref().map(|b| b.center_hz)).ok_or_else(|| KvError::Missing(key("center_hz")))?;
            let bandwidth_hz = r.or(&key("bandwidth_hz"), base.as_ref().map_or(2.0, |b| b.bandwidth_hz))?;
            let amplitude = r.or(&key("amplitude"), base.as_ref().map_or(1.0, |b| b.amplitude))?;
            let focus: Option<String> = r.opt(&key("focus"))?;
            let spread: f64 = r.or(&key("spread"), 0.25)?;
            let explicit: Option<Vec<f64>> = r.list(&key("mixing"))?;
            let mixing = match (explicit, focus) {
                (Some(w), _) => normalized(w),
                (None, Some(f)) => focal_column(&self.montage, &f, spread).ok_or_else(|| KvError::Value {
                    key: key("focus"),
                    value: f.clone(),
                    reason: "electrode not in montage".into(),
                })?,
                (None, None) => match base {
                    Some(b) if b.mixing.len() == self.montage.len() => b.mixing,
                    _ => return Err(KvError::Missing(key("mixing"))),
                },
            };
            self.sources.push(SourceDef {
                class,
                center_hz,
                bandwidth_hz,
                amplitude,
                mixing,
            });
        }
        Ok(self)
    }
}

/// Unit-RMS noise restricted to `[lo, hi]` Hz. Falls back to the single
/// nearest bin when the band is narrower than the frequency resolution.
fn band_noise<R: Rng + ?Sized>(n: usize, fs: f64, lo: f64, hi: f64, rng: &mut R, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.sample(StandardNormal), 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = fs / n as f64;
    let in_band = |k: usize| {
        let f = k.min(n - k) as f64 * df;
        f >= lo && f <= hi
    };
    let any = (1..n).any(in_band);
    let nearest = (((lo + hi) / 2.0) / df).round() as usize;
    for (k, c) in buf.iter_mut().enumerate() {
        let keep = if any { in_band(k) } else { k != 0 && (k == nearest || k == n - nearest) };
        if !keep {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        for v in &mut out {
            *v /= rms;
        }
    }
    out
}

/// Generates the trial set described by `spec`. Classes are balanced
/// (counts differ by at most one) and shuffled; the output depends only on
/// the spec.
pub fn generate(spec: &SynthSpec) -> Result<EpochSet, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (c, s) = (spec.n_channels(), spec.n_samples());
    let mut labels: Vec<u32> = (0..spec.n_trials).map(|i| (i % spec.n_classes) as u32).collect();
    labels.shuffle(&mut rng);
    let mut planner = FftPlanner::new();
    let mut trials = Vec::with_capacity(spec.n_trials * c * s);
    let mut trial = vec![0.0f64; c * s];
    for &label in &labels {
        trial.fill(0.0);
        for src in spec.sources.iter().filter(|src| src.class == label as usize) {
            let half = src.bandwidth_hz / 2.0;
            let carrier = band_noise(s, spec.fs, src.center_hz - half, src.center_hz + half, &mut rng, &mut planner);
            for (ch, &w) in src.mixing.iter().enumerate() {
                let gain = src.amplitude * w;
                for (o, &v) in trial[ch * s..(ch + 1) * s].iter_mut().zip(&carrier) {
                    *o += gain * v;
                }
            }
        }
        if spec.noise_sigma > 0.0 {
            for v in &mut trial {
                *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        trials.extend(trial.iter().map(|&v| v as f32));
    }
    let class_names = (0..spec.n_classes).map(|k| format!("class{k}")).collect();
    EpochSet::new(trials, s, labels, class_names, spec.montage.clone(), spec.fs as f32)
}
