//! Interpretation of the inception block: per-filter frequency responses
//! and the spatial pattern each source projects onto the scalp.
//!
//! ```text
//! temporal kernel ──FFT (padded)──► |H(f)| ──Savitzky–Golay──► smoothed
//! spatial rows W  ──pinv──────────► W⁺ columns ──IDW──► topomap
//! ```

mod patterns;
mod savgol;
mod spectrum;
mod svg;

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::Montage;
use crate::fsio::write_atomic;
use crate::model::ItNet;
use crate::tensor::Real;

pub use patterns::{pinv, spatial_patterns, SpatialPatterns, PINV_RCOND};
pub use savgol::{savgol_coeffs, savgol_smooth, EdgeMode};
pub use spectrum::{kernel_spectrum, Spectrum};

/// Spectra are computed on at least this many points.
pub const SPECTRUM_POINTS: usize = 512;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("smoothing: {0}")]
    Savgol(String),
    #[error("spectrum: {0}")]
    Spectrum(String),
    #[error("montage has {got} electrodes, model expects {expected}")]
    Montage { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Everything known about one inception filter.
#[derive(Debug, Clone)]
pub struct FilterEntry {
    pub branch: usize,
    pub filter: usize,
    pub spectrum: Spectrum,
    pub smoothed: Vec<f64>,
    /// Column of `W⁺`, scaled to unit peak magnitude when nonzero.
    pub pattern: Vec<f64>,
    pub degenerate: bool,
}

impl FilterEntry {
    pub fn peak_hz(&self) -> f64 {
        self.spectrum.peak_of(&self.smoothed)
    }

    pub fn stem(&self) -> String {
        format!("b{}_f{}", self.branch, self.filter)
    }
}

#[derive(Debug, Clone)]
pub struct FilterAtlas {
    pub fs: f64,
    pub montage: Montage,
    pub entries: Vec<FilterEntry>,
}

impl FilterAtlas {
    /// Upper edge of the meaningful band.
    pub fn nyquist(&self) -> f64 {
        self.fs / 2.0
    }

    pub fn annotation(&self) -> String {
        format!("valid below {} Hz", self.nyquist())
    }
}

/// Builds spectra and patterns for every inception filter of `model`.
pub fn build_atlas<T: Real>(model: &ItNet<T>, fs: f64, l: usize, p: usize) -> Result<FilterAtlas, ExplainError> {
    let n_channels = model.config().n_channels;
    let montage = model.montage().cloned().unwrap_or_else(|| Montage::for_channels(n_channels));
    if montage.len() != n_channels {
        return Err(ExplainError::Montage { expected: n_channels, got: montage.len() });
    }
    let patterns = spatial_patterns(model);
    let mut entries = Vec::new();
    for (j, (branch, filter, kernel)) in model.temporal_kernels().into_iter().enumerate() {
        let kernel: Vec<f64> = kernel.iter().map(|v| v.as_f64()).collect();
        let spectrum = kernel_spectrum(&kernel, fs, SPECTRUM_POINTS.max(kernel.len()))?;
        let smoothed = savgol_smooth(&spectrum.magnitude, l, p, EdgeMode::Truncated)?;
        let mut pattern = patterns.pattern(j);
        let peak = pattern.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            pattern.iter_mut().for_each(|v| *v /= peak);
        }
        entries.push(FilterEntry {
            branch,
            filter,
            spectrum,
            smoothed,
            pattern,
            degenerate: patterns.degenerate.contains(&j),
        });
    }
    Ok(FilterAtlas { fs, montage, entries })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExplainError> {
    write_atomic(path, bytes).map_err(|source| ExplainError::Io { path: path.to_path_buf(), source })
}

pub fn spectrum_csv(entry: &FilterEntry) -> String {
    let mut out = String::from("freq,raw,smoothed\n");
    for ((f, r), s) in entry.spectrum.freqs.iter().zip(&entry.spectrum.magnitude).zip(&entry.smoothed) {
        let _ = writeln!(out, "{f},{r},{s}");
    }
    out
}

pub fn pattern_csv(entry: &FilterEntry, montage: &Montage) -> String {
    let mut out = String::from("channel,x,y,value\n");
    for ((name, xy), v) in montage.names.iter().zip(&montage.xy).zip(&entry.pattern) {
        let _ = writeln!(out, "{name},{},{},{v}", xy[0], xy[1]);
    }
    out
}

/// Writes `spectrum_<stem>.csv`, `pattern_<stem>.csv` per filter and
/// `atlas.svg` into `dir`, returning the paths in that order.
pub fn export_atlas(atlas: &FilterAtlas, dir: &Path) -> Result<Vec<PathBuf>, ExplainError> {
    std::fs::create_dir_all(dir).map_err(|source| ExplainError::Io { path: dir.to_path_buf(), source })?;
    let mut written = Vec::new();
    for entry in &atlas.entries {
        let path = dir.join(format!("spectrum_{}.csv", entry.stem()));
        write_file(&path, spectrum_csv(entry).as_bytes())?;
        written.push(path);
        let path = dir.join(format!("pattern_{}.csv", entry.stem()));
        write_file(&path, pattern_csv(entry, &atlas.montage).as_bytes())?;
        written.push(path);
    }
    let path = dir.join("atlas.svg");
    write_file(&path, svg::render(atlas).as_bytes())?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> ItNet<f32> {
        ItNet::build(ArchConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn parse_csv(text: &str) -> Vec<Vec<String>> {
        text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
    }

    #[test]
    fn default_atlas_has_fourteen_filters_up_to_nyquist() {
        let atlas = build_atlas(&model(1), 125.0, 5, 3).unwrap();
        assert_eq!(atlas.entries.len(), 14);
        assert_eq!(atlas.annotation(), "valid below 62.5 Hz");
        for e in &atlas.entries {
            assert_eq!(e.spectrum.freqs.len(), 257);
            assert_eq!(*e.spectrum.freqs.last().unwrap(), 62.5);
            assert!((e.spectrum.resolution() - 125.0 / 512.0).abs() < 1e-12);
            assert!(!e.degenerate);
            let peak = e.pattern.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spatial_weights_are_flagged() {
        let mut m = model(3);
        for p in m.params_mut() {
            if p.name.contains(".spatial.weight") {
                p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let atlas = build_atlas(&m, 125.0, 5, 3).unwrap();
        assert!(atlas.entries.iter().all(|e| e.degenerate && e.pattern.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn export_round_trips_through_csv() {
        let atlas = build_atlas(&model(4), 125.0, 5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = export_atlas(&atlas, dir.path()).unwrap();
        assert_eq!(written.len(), 29);
        let e = &atlas.entries[5];
        let rows = parse_csv(&std::fs::read_to_string(dir.path().join("spectrum_b1_f3.csv")).unwrap());
        assert_eq!(rows.len(), e.spectrum.freqs.len());
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row[0].parse::<f64>().unwrap(), e.spectrum.freqs[k]);
            assert_eq!(row[1].parse::<f64>().unwrap(), e.spectrum.magnitude[k]);
            assert_eq!(row[2].parse::<f64>().unwrap(), e.smoothed[k]);
        }
        let rows = parse_csv(&std::fs::read_to_string(dir.path().join("pattern_b1_f3.csv")).unwrap());
        assert_eq!(rows.len(), 22);
        assert_eq!(rows[0][0], atlas.montage.names[0]);
        for (c, row) in rows.iter().enumerate() {
            assert_eq!(row[3].parse::<f64>().unwrap(), e.pattern[c]);
        }
        let svg = std::fs::read_to_string(dir.path().join("atlas.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("valid below 62.5 Hz"));
    }

    #[test]
    fn mismatched_montage_is_rejected() {
        let mut m = model(5);
        m.set_montage(Some(Montage::for_channels(8)));
        assert!(matches!(build_atlas(&m, 125.0, 5, 3), Err(ExplainError::Montage { expected: 22, got: 8 })));
    }
}
