//! Savitzky–Golay smoothing by local least-squares polynomial fits.
//!
//! For a window of `2l+1` samples at offsets `n ∈ [-l, l]` the design
//! matrix is `D[n][m] = nᵐ` (`m ≤ p`) and the fitted coefficients are
//! `A = (DᵀD)⁻¹DᵀY`. The smoothed value is `a₀`, so the central weights
//! are row 0 of `(DᵀD)⁻¹Dᵀ`.

use super::ExplainError;

/// How samples closer than `l` to either end are smoothed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgeMode {
    /// Fit on the window clipped to the series, with the order reduced to at
    /// most `len − 1`, and evaluate the fit at the sample itself.
    #[default]
    Truncated,
    /// Fit once on the first (last) full window and evaluate that polynomial
    /// at every edge position.
    Interp,
}

/// Weights `w` such that `Σ w_j y_j` is the order-`order` least-squares
/// polynomial through `(offsets, y)` evaluated at `at`. Built from the
/// polynomials orthogonal on `offsets` (Stieltjes recurrence), so the fit
/// never forms the ill-conditioned normal matrix.
fn fit_weights(offsets: &[f64], order: usize, at: f64) -> Result<Vec<f64>, ExplainError> {
    if order + 1 > offsets.len() {
        return Err(ExplainError::Savgol(format!(
            "order {order} is rank-deficient on {} points",
            offsets.len()
        )));
    }
    let n = offsets.len();
    let mut prev = vec![0.0; n];
    let mut cur = vec![1.0; n];
    let (mut prev_at, mut cur_at) = (0.0, 1.0);
    let mut prev_norm = 1.0;
    let mut weights = vec![0.0; n];
    for k in 0..=order {
        let norm: f64 = cur.iter().map(|v| v * v).sum();
        if norm <= f64::EPSILON * n as f64 {
            return Err(ExplainError::Savgol(format!("order {order} is rank-deficient on {n} points")));
        }
        for (w, c) in weights.iter_mut().zip(&cur) {
            *w += cur_at * c / norm;
        }
        if k == order {
            break;
        }
        let alpha = offsets.iter().zip(&cur).map(|(x, c)| x * c * c).sum::<f64>() / norm;
        let beta = if k == 0 { 0.0 } else { norm / prev_norm };
        let next: Vec<f64> = (0..n).map(|j| (offsets[j] - alpha) * cur[j] - beta * prev[j]).collect();
        let next_at = (at - alpha) * cur_at - beta * prev_at;
        prev = std::mem::replace(&mut cur, next);
        (prev_at, cur_at) = (cur_at, next_at);
        prev_norm = norm;
    }
    Ok(weights)
}

/// Central smoothing weights for half-width `l` and order `p`.
pub fn savgol_coeffs(l: usize, p: usize) -> Result<Vec<f64>, ExplainError> {
    if p > 2 * l {
        return Err(ExplainError::Savgol(format!(
            "order {p} exceeds window length {} − 1; the design is rank-deficient",
            2 * l + 1
        )));
    }
    let offsets: Vec<f64> = (-(l as i64)..=l as i64).map(|n| n as f64).collect();
    fit_weights(&offsets, p, 0.0)
}

fn fit_eval(offsets: &[f64], values: &[f64], order: usize, at: f64) -> Result<f64, ExplainError> {
    Ok(fit_weights(offsets, order, at)?.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// Smooths `series` with a `2l+1` window of order `p`.
pub fn savgol_smooth(series: &[f64], l: usize, p: usize, edge: EdgeMode) -> Result<Vec<f64>, ExplainError> {
    let len = series.len();
    let window = 2 * l + 1;
    if len < window {
        return Err(ExplainError::Savgol(format!(
            "series of {len} samples is shorter than the {window}-sample window"
        )));
    }
    let h = savgol_coeffs(l, p)?;
    let mut out = vec![0.0; len];
    for i in l..len - l {
        out[i] = h.iter().zip(&series[i - l..=i + l]).map(|(a, b)| a * b).sum();
    }
    match edge {
        EdgeMode::Truncated => {
            for i in (0..l).chain(len - l..len) {
                let lo = i.saturating_sub(l);
                let hi = (i + l).min(len - 1);
                let offsets: Vec<f64> = (lo..=hi).map(|j| j as f64 - i as f64).collect();
                let order = p.min(offsets.len() - 1);
                out[i] = fit_eval(&offsets, &series[lo..=hi], order, 0.0)?;
            }
        }
        EdgeMode::Interp => {
            let offsets: Vec<f64> = (-(l as i64)..=l as i64).map(|n| n as f64).collect();
            for i in 0..l {
                out[i] = fit_eval(&offsets, &series[..window], p, i as f64 - l as f64)?;
            }
            let start = len - window;
            for i in len - l..len {
                out[i] = fit_eval(&offsets, &series[start..], p, (i - start) as f64 - l as f64)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Solves the normal equations for one window by Gauss–Jordan
    /// elimination on exact small integers.
    fn normal_equation_a0(l: usize, p: usize, y: &[f64]) -> f64 {
        let k = p + 1;
        let mut m = vec![vec![0.0; k + 1]; k];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().take(k).enumerate() {
                *v = (-(l as i64)..=l as i64).map(|n| (n as f64).powi((r + c) as i32)).sum();
            }
            row[k] = (-(l as i64)..=l as i64)
                .zip(y)
                .map(|(n, &v)| (n as f64).powi(r as i32) * v)
                .sum();
        }
        for col in 0..k {
            let pivot = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, pivot);
            let d = m[col][col];
            for v in m[col].iter_mut() {
                *v /= d;
            }
            for r in 0..k {
                if r != col {
                    let f = m[r][col];
                    let src = m[col].clone();
                    for (v, s) in m[r].iter_mut().zip(&src) {
                        *v -= f * s;
                    }
                }
            }
        }
        m[0][k]
    }

    #[test]
    fn order_zero_is_the_mean() {
        let h = savgol_coeffs(2, 0).unwrap();
        assert_eq!(h, vec![0.2; 5]);
    }

    #[test]
    fn quadratic_five_point_weights() {
        let h = savgol_coeffs(2, 2).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }
        for j in 0..5 {
            let mut e = [0.0; 5];
            e[j] = 1.0;
            assert!((h[j] - normal_equation_a0(2, 2, &e)).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_orders_are_rejected() {
        assert!(savgol_coeffs(2, 5).is_err());
        assert!(savgol_smooth(&[1.0; 4], 2, 2, EdgeMode::Truncated).is_err());
    }

    #[test]
    fn full_order_interpolates() {
        let series: Vec<f64> = (0..20).map(|i| ((i * 37) % 11) as f64).collect();
        let out = savgol_smooth(&series, 3, 6, EdgeMode::Truncated).unwrap();
        for i in 3..17 {
            assert!((out[i] - series[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn order_zero_is_moving_average_inside() {
        let series: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let out = savgol_smooth(&series, 2, 0, EdgeMode::Truncated).unwrap();
        for i in 2..10 {
            let avg = series[i - 2..=i + 2].iter().sum::<f64>() / 5.0;
            assert!((out[i] - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn edges_follow_truncated_fits() {
        let series: Vec<f64> = (0..15).map(|i| 0.5 * i as f64 - 2.0).collect();
        for mode in [EdgeMode::Truncated, EdgeMode::Interp] {
            let out = savgol_smooth(&series, 3, 1, mode).unwrap();
            for (a, b) in out.iter().zip(&series) {
                assert!((a - b).abs() < 1e-9, "{mode:?}");
            }
        }
    }

    #[test]
    fn symmetry_and_moments_for_all_small_designs() {
        for l in 0..=6 {
            for p in 0..=2 * l {
                let h = savgol_coeffs(l, p).unwrap();
                assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12, "l={l} p={p}");
                for i in 0..h.len() {
                    assert!((h[i] - h[h.len() - 1 - i]).abs() < 1e-9);
                }
                if p >= 1 {
                    let m1: f64 = h.iter().enumerate().map(|(i, c)| (i as f64 - l as f64) * c).sum();
                    assert!(m1.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn polynomials_up_to_the_order_are_reproduced() {
        for l in 1..=6usize {
            for p in 0..=2 * l {
                for degree in 0..=p {
                    let poly = |x: f64| (0..=degree).map(|k| (k as f64 + 1.0) * 0.3f64.powi(k as i32) * x.powi(k as i32)).sum::<f64>();
                    let series: Vec<f64> = (0..2 * l + 9).map(|i| poly(i as f64 - 4.0)).collect();
                    let out = savgol_smooth(&series, l, p, EdgeMode::Truncated).unwrap();
                    for i in l..series.len() - l {
                        let tol = 1e-9 * series[i].abs().max(1.0);
                        assert!((out[i] - series[i]).abs() < tol, "l={l} p={p} deg={degree}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn window_fits_match_the_convolution(series in proptest::collection::vec(-5.0f64..5.0, 13..40), l in 1usize..5, p_frac in 0.0f64..1.0) {
            let p = ((2 * l) as f64 * p_frac).floor() as usize;
            prop_assume!(series.len() >= 2 * l + 1);
            let out = savgol_smooth(&series, l, p, EdgeMode::Truncated).unwrap();
            for i in l..series.len() - l {
                let direct = normal_equation_a0(l, p, &series[i - l..=i + l]);
                prop_assert!((out[i] - direct).abs() < 1e-10 * direct.abs().max(1.0), "{} vs {}", out[i], direct);
            }
        }
    }
}
