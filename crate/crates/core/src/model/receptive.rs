//! Receptive-field arithmetic for stacks of dilated causal convolutions.
//!
//! A stack of `n` layers with kernel `T` and dilations `1, b, b², …` sees
//! `1 + (T-1)(bⁿ-1)/(b-1)` samples. Grouping `m` layers of equal dilation
//! into each residual block multiplies the reach by `m`.

/// Samples seen by `n` stacked causal layers with kernel `kernel` and
/// dilation base `base`. Saturates at `u64::MAX`.
pub fn receptive_field_plain(kernel: u64, base: u64, n: u32) -> u64 {
    receptive_field_blocks(1, kernel, base, n)
}

/// Samples seen by `n` residual blocks of `m` layers each, block `i` using
/// dilation `baseⁱ`.
pub fn receptive_field_blocks(m: u64, kernel: u64, base: u64, n: u32) -> u64 {
    // (bⁿ-1)/(b-1) = Σ_{i<n} bⁱ, which is also the b = 1 limit.
    let mut geometric: u64 = 0;
    let mut power: u64 = 1;
    for _ in 0..n {
        geometric = geometric.saturating_add(power);
        power = power.saturating_mul(base);
    }
    m.saturating_mul(kernel.saturating_sub(1))
        .saturating_mul(geometric)
        .saturating_add(1)
}

/// Smallest kernel extent `T > base` whose receptive field reaches
/// `target`. `None` when no kernel can (only possible with `n = 0` and
/// `target > 1`).
pub fn plan_kernel(target: u64, m: u64, base: u64, n: u32) -> Option<u64> {
    let floor = base + 1;
    if receptive_field_blocks(m, floor, base, n) >= target {
        return Some(floor);
    }
    if n == 0 || m == 0 {
        return None;
    }
    let per_tap = receptive_field_blocks(m, 2, base, n) - 1;
    // r(T) = 1 + (T-1)·per_tap, solve for the least T with r(T) ≥ target.
    let needed = (target - 1).div_ceil(per_tap) + 1;
    Some(needed.max(floor))
}

/// Fraction of a sequence of `len` samples covered by receptive field `r`.
pub fn coverage_ratio(r: u64, len: usize) -> f64 {
    r as f64 / len as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_stack_examples() {
        // 1 + 2·(1 + 2 + 4)
        assert_eq!(receptive_field_plain(3, 2, 3), 15);
        assert_eq!(receptive_field_plain(5, 3, 0), 1);
        for b in 1..5 {
            assert_eq!(receptive_field_plain(1, b, 4), 1);
        }
        // b = 1 limit: 1 + n(T-1)
        assert_eq!(receptive_field_plain(4, 1, 5), 16);
    }

    #[test]
    fn block_examples() {
        assert_eq!(receptive_field_blocks(2, 4, 2, 4), 91);
        assert_eq!(receptive_field_blocks(1, 3, 2, 3), 15);
        assert_eq!(receptive_field_blocks(3, 2, 2, 2), 10);
    }

    #[test]
    fn planning_examples() {
        assert_eq!(plan_kernel(91, 2, 2, 4), Some(4));
        assert_eq!(plan_kernel(92, 2, 2, 4), Some(5));
        assert_eq!(plan_kernel(121, 2, 2, 4), Some(5));
        assert_eq!(plan_kernel(1, 2, 2, 4), Some(3));
        assert_eq!(plan_kernel(1, 2, 5, 4), Some(6));
        assert_eq!(plan_kernel(2, 2, 2, 0), None);
    }

    #[test]
    fn equations_agree_on_grid() {
        for t in 1..=8u64 {
            for b in 2..t {
                for n in 0..=5 {
                    assert_eq!(receptive_field_blocks(1, t, b, n), receptive_field_plain(t, b, n));
                }
            }
        }
    }

    /// Direct enumeration: the furthest reachable lag is the sum of every
    /// layer's span.
    fn enumerate(m: u64, t: u64, b: u64, n: u32) -> u64 {
        let mut lag = 0;
        for block in 0..n {
            for _ in 0..m {
                lag += (t - 1) * b.pow(block);
            }
        }
        lag + 1
    }

    proptest! {
        #[test]
        fn closed_form_matches_enumeration(m in 1u64..4, t in 2u64..9, b in 1u64..5, n in 0u32..6) {
            prop_assert_eq!(receptive_field_blocks(m, t, b, n), enumerate(m, t, b, n));
        }

        #[test]
        fn plan_is_minimal(target in 1u64..500, m in 1u64..4, b in 1u64..4, n in 1u32..5) {
            let t = plan_kernel(target, m, b, n).unwrap();
            prop_assert!(t > b);
            prop_assert!(receptive_field_blocks(m, t, b, n) >= target);
            if t > b + 1 {
                prop_assert!(receptive_field_blocks(m, t - 1, b, n) < target);
            }
        }
    }
}
