//! One-sided paired comparisons between classifiers evaluated on the same
//! subjects: the Wilcoxon signed-rank test and the paired t-test, both with
//! the alternative "first sample is larger".

use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Absolute differences closer than this are tied; smaller ones are zero.
pub const TIE_TOL: f64 = 1e-9;

/// Largest sample size for which the signed-rank null is enumerated.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("samples differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("need at least {needed} pairs, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("every paired difference is zero")]
    AllZero,
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wilcoxon {
    /// Rank sum of the positive differences.
    pub w_plus: f64,
    /// Rank sum of the negative differences; the reported statistic.
    pub w_minus: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n_eff: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedT {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Length(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: a.len() });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Midranks of `values` (1-based), treating values within [`TIE_TOL`] as tied.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - values[order[end - 1]] <= TIE_TOL {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Number of sign assignments whose doubled positive rank sum is at least
/// `threshold`, over all `2ⁿ` assignments of the doubled ranks.
fn upper_tail_count(doubled: &[usize], threshold: usize) -> (f64, f64) {
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let hits = counts[threshold.min(total + 1)..].iter().sum();
    (hits, 2f64.powi(doubled.len() as i32))
}

/// Tests `H₁: a > b` on paired samples.
pub fn wilcoxon_one_sided(a: &[f64], b: &[f64]) -> Result<Wilcoxon, StatsError> {
    let d: Vec<f64> = differences(a, b)?.into_iter().filter(|v| v.abs() > TIE_TOL).collect();
    if d.is_empty() {
        return Err(StatsError::AllZero);
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let w_minus = (n * (n + 1)) as f64 / 2.0 - w_plus;
    if n <= EXACT_MAX_N {
        // Midranks are multiples of one half, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let (hits, total) = upper_tail_count(&doubled, (2.0 * w_plus).round() as usize);
        return Ok(Wilcoxon { w_plus, w_minus, p_value: hits / total, n_eff: n, exact: true });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        ties += t * t * t - t;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let z = (w_plus - mean - 0.5) / var.sqrt();
    let p_value = 1.0 - Normal::standard().cdf(z);
    Ok(Wilcoxon { w_plus, w_minus, p_value, n_eff: n, exact: false })
}

/// Tests `H₁: mean(a − b) > 0` with Student's t on `n − 1` degrees of freedom.
pub fn paired_t_right(a: &[f64], b: &[f64]) -> Result<PairedT, StatsError> {
    let d = differences(a, b)?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo <= TIE_TOL {
        return Err(StatsError::ZeroVariance);
    }
    let t = mean / (var / n).sqrt();
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    Ok(PairedT { t, df, p_value: dist.sf(t) })
}

/// Per-subject accuracies of several models, one column per model.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub subjects: Vec<String>,
    pub models: Vec<String>,
    /// `values[model][subject]`.
    pub values: Vec<Vec<f64>>,
}

impl AccuracyTable {
    /// Parses `subject,<model>,<model>,...` CSV. Summary rows named
    /// `Average`, `Mean` or `Std` are skipped.
    pub fn parse(text: &str) -> Result<Self, StatsError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| StatsError::Table(e.to_string()))?.clone();
        if headers.len() < 2 {
            return Err(StatsError::Table("need a subject column and at least one model column".into()));
        }
        let models: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut subjects = Vec::new();
        let mut values = vec![Vec::new(); models.len()];
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| StatsError::Table(e.to_string()))?;
            let subject = record.get(0).unwrap_or_default();
            if ["average", "mean", "std"].contains(&subject.to_ascii_lowercase().as_str()) {
                continue;
            }
            for (m, column) in values.iter_mut().enumerate() {
                let cell = record.get(m + 1).unwrap_or_default();
                let v: f64 = cell.parse().map_err(|_| {
                    StatsError::Table(format!("row {}: `{cell}` under {} is not a number", line + 2, models[m]))
                })?;
                column.push(v);
            }
            subjects.push(subject.to_string());
        }
        Ok(AccuracyTable { subjects, models, values })
    }

    pub fn load(path: &Path) -> Result<Self, StatsError> {
        let text = std::fs::read_to_string(path).map_err(|e| StatsError::Table(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn column(&self, model: &str) -> Result<&[f64], StatsError> {
        self.models
            .iter()
            .position(|m| m == model)
            .map(|i| self.values[i].as_slice())
            .ok_or_else(|| StatsError::Table(format!("no column `{model}` (have {})", self.models.join(", "))))
    }
}
