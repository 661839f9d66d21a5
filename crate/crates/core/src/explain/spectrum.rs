use rustfft::{num_complex::Complex, FftPlanner};

use super::ExplainError;

/// One-sided magnitude spectrum on the grid `k·fs/pad_to`, `k ≤ pad_to/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        self.freqs.get(1).copied().unwrap_or(0.0)
    }

    /// Frequency of the largest value of `values` (same grid as `freqs`).
    pub fn peak_of(&self, values: &[f64]) -> f64 {
        let k = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        self.freqs[k]
    }
}

/// Zero-pads `kernel` to `pad_to` points and returns `|FFT|` up to Nyquist.
pub fn kernel_spectrum(kernel: &[f64], fs: f64, pad_to: usize) -> Result<Spectrum, ExplainError> {
    if kernel.len() < 2 {
        return Err(ExplainError::Spectrum(format!("kernel needs at least 2 taps, got {}", kernel.len())));
    }
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(ExplainError::Spectrum(format!("sampling rate {fs} must be positive")));
    }
    if pad_to < kernel.len() {
        return Err(ExplainError::Spectrum(format!(
            "padding length {pad_to} is shorter than the {}-tap kernel",
            kernel.len()
        )));
    }
    let mut buf: Vec<Complex<f64>> = kernel.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(pad_to, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(pad_to).process(&mut buf);
    let bins = pad_to / 2 + 1;
    Ok(Spectrum {
        freqs: (0..bins).map(|k| k as f64 * fs / pad_to as f64).collect(),
        magnitude: buf[..bins].iter().map(|c| c.norm()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn dft_magnitude(x: &[f64], pad: usize, k: usize) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &v) in x.iter().enumerate() {
            let ang = -2.0 * PI * (k * n) as f64 / pad as f64;
            re += v * ang.cos();
            im += v * ang.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn impulse_is_flat() {
        let s = kernel_spectrum(&[1.0, 0.0, 0.0], 128.0, 16).unwrap();
        assert_eq!(s.freqs.len(), 9);
        assert!(s.magnitude.iter().all(|&m| (m - 1.0).abs() < 1e-12));
        assert_eq!(s.freqs[8], 64.0);
    }

    #[test]
    fn sinusoid_peaks_at_its_frequency() {
        let fs = 125.0;
        let k: Vec<f64> = (0..64).map(|n| (2.0 * PI * 10.0 * n as f64 / fs).cos()).collect();
        let s = kernel_spectrum(&k, fs, 512).unwrap();
        assert!((s.peak_of(&s.magnitude) - 10.0).abs() <= s.resolution());
    }

    /// The unpadded grid spacing is `fs / taps`: 64 taps at 125 Hz resolve
    /// about 2 Hz, while 16 taps cannot separate anything closer than 7.8 Hz
    /// and have no bin for periods longer than the kernel.
    #[test]
    fn kernel_length_sets_the_native_resolution() {
        let fs = 125.0;
        let long = kernel_spectrum(&[1.0; 64], fs, 64).unwrap();
        let short = kernel_spectrum(&[1.0; 16], fs, 16).unwrap();
        assert!((long.resolution() - 125.0 / 64.0).abs() < 1e-12);
        assert!(long.resolution() < 2.0);
        assert!((short.resolution() - 125.0 / 16.0).abs() < 1e-12);
        let lowest = |s: &Spectrum| s.freqs[1];
        assert!(1.0 / lowest(&short) <= 16.0 / fs + 1e-12);
        assert!(1.0 / lowest(&long) > 16.0 / fs);
    }

    #[test]
    fn bad_arguments_are_rejected() {
        assert!(kernel_spectrum(&[], 128.0, 8).is_err());
        assert!(kernel_spectrum(&[1.0; 9], 128.0, 8).is_err());
        assert!(kernel_spectrum(&[1.0], 128.0, 8).is_err());
        assert!(kernel_spectrum(&[1.0, 0.0], 0.0, 8).is_err());
    }

    proptest! {
        #[test]
        fn matches_direct_dft(kernel in proptest::collection::vec(-1.0f64..1.0, 2..40), extra in 0usize..30) {
            let pad = kernel.len() + extra;
            let s = kernel_spectrum(&kernel, 100.0, pad).unwrap();
            prop_assert!((s.resolution() - 100.0 / pad as f64).abs() < 1e-12);
            for (k, m) in s.magnitude.iter().enumerate() {
                prop_assert!((m - dft_magnitude(&kernel, pad, k)).abs() < 1e-9);
            }
        }

        #[test]
        fn magnitude_is_linear_in_scale(kernel in proptest::collection::vec(-1.0f64..1.0, 2..40), alpha in -4.0f64..4.0) {
            let s = kernel_spectrum(&kernel, 125.0, 64).unwrap();
            let scaled: Vec<f64> = kernel.iter().map(|v| v * alpha).collect();
            let t = kernel_spectrum(&scaled, 125.0, 64).unwrap();
            for (a, b) in s.magnitude.iter().zip(&t.magnitude) {
                prop_assert!((a * alpha.abs() - b).abs() < 1e-9);
            }
        }
    }
}
