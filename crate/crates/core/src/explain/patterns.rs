use faer::Mat;

use crate::model::ItNet;
use crate::tensor::Real;

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Moore–Penrose pseudo-inverse through the thin SVD, and the numerical
/// rank it kept.
pub fn pinv_rank(m: &Mat<f64>) -> (Mat<f64>, usize) {
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows == 0 || cols == 0 || m.col_iter().all(|c| c.iter().all(|&v| v == 0.0)) {
        return (Mat::zeros(cols, rows), 0);
    }
    let svd = m.thin_svd().expect("SVD of a finite matrix converges");
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let cutoff = PINV_RCOND * smax;
    let (u, v) = (svd.U(), svd.V());
    let kept: Vec<usize> = (0..s.nrows()).filter(|&i| s[i] > cutoff).collect();
    let out = Mat::from_fn(cols, rows, |r, c| kept.iter().map(|&i| v[(r, i)] * u[(c, i)] / s[i]).sum());
    (out, kept.len())
}

pub fn pinv(m: &Mat<f64>) -> Mat<f64> {
    pinv_rank(m).0
}

/// Unmixing matrix of the inception spatial filters and its pseudo-inverse.
#[derive(Debug, Clone)]
pub struct SpatialPatterns {
    /// `(branch, filter)` of each row of `w`.
    pub labels: Vec<(usize, usize)>,
    /// Sources × electrodes.
    pub w: Mat<f64>,
    /// Electrodes × sources; column `j` is the pattern of source `j`.
    pub w_plus: Mat<f64>,
    /// Rows of `w` that are identically zero; their patterns are zero.
    pub degenerate: Vec<usize>,
}

impl SpatialPatterns {
    pub fn from_unmixing(labels: Vec<(usize, usize)>, w: Mat<f64>) -> Self {
        let degenerate = (0..w.nrows()).filter(|&r| (0..w.ncols()).all(|c| w[(r, c)] == 0.0)).collect();
        let w_plus = pinv(&w);
        SpatialPatterns { labels, w, w_plus, degenerate }
    }

    pub fn pattern(&self, source: usize) -> Vec<f64> {
        (0..self.w_plus.nrows()).map(|r| self.w_plus[(r, source)]).collect()
    }
}

pub fn spatial_patterns<T: Real>(model: &ItNet<T>) -> SpatialPatterns {
    let rows = model.unmixing_rows();
    let c = model.config().n_channels;
    let labels = rows.iter().map(|(b, f, _)| (*b, *f)).collect();
    let w = Mat::from_fn(rows.len(), c, |r, j| rows[r].2[j].as_f64());
    SpatialPatterns::from_unmixing(labels, w)
}
