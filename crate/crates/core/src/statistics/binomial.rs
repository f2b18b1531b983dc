//! Exact tails of `Bin(n, ½)`.

use crate::error::{Error, Result};

/// `log₂ C(n, m)` as a sum of `min(m, n-m)` ratio logs.
fn log2_choose(n: u64, m: u64) -> f64 {
    let m = m.min(n - m);
    (0..m)
        .map(|j| ((n - j) as f64 / (j + 1) as f64).log2())
        .sum()
}

/// `P[Bin(n,½) ≥ k]` for `k > n/2`, summed outward from the largest term.
fn upper_tail(n: u64, k: u64) -> f64 {
    debug_assert!(2 * k > n);
    if k > n {
        return 0.0;
    }
    let mut ratio = 1.0;
    let mut sum = 1.0;
    for i in k..n {
        ratio *= (n - i) as f64 / (i + 1) as f64;
        if ratio < f64::EPSILON * 1e-4 * sum {
            break;
        }
        sum += ratio;
    }
    (log2_choose(n, k) - n as f64).exp2() * sum
}

/// Exact `P[Bin(n, ½) ≥ k]`, `0 ≤ k ≤ n+1`.
///
/// The smaller of the two tails is summed directly; the other side comes from
/// the complement.
pub fn binomial_tail(n: u64, k: u64) -> Result<f64> {
    if k > n + 1 {
        return Err(Error::invalid(
            "k",
            format!("tail index {k} exceeds n + 1 = {}", n + 1),
        ));
    }
    if 2 * k > n {
        Ok(upper_tail(n, k))
    } else {
        // P[X ≥ k] = 1 - P[X ≤ k-1] = 1 - P[X ≥ n-k+1]
        Ok(1.0 - upper_tail(n, n - k + 1))
    }
}

/// Smallest `τ ∈ [0, n]` with `P[Bin(n,½) ≥ τ] ≤ fpr`.
pub fn min_threshold(n: u64, fpr: f64) -> Result<u64> {
    if !(fpr > 0.0 && fpr <= 1.0) {
        return Err(Error::invalid("fpr", format!("{fpr} not in (0, 1]")));
    }
    let tail = |k| binomial_tail(n, k).expect("k within range");
    if tail(n) > fpr {
        return Err(Error::UnreachableThreshold { n, fpr });
    }
    let (mut lo, mut hi) = (0u64, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if tail(mid) <= fpr {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_values() {
        assert_eq!(binomial_tail(17, 0).unwrap(), 1.0);
        assert_eq!(binomial_tail(4, 4).unwrap(), 0.0625);
        assert_eq!(binomial_tail(4, 5).unwrap(), 0.0);
        assert!(binomial_tail(4, 6).is_err());
        for n in [1u64, 10, 64, 256, 1000] {
            assert_eq!(binomial_tail(n, n).unwrap(), (-(n as f64)).exp2());
        }
    }

    #[test]
    fn n10_enumeration() {
        // tail(10,9) = (10+1)/1024, tail(10,8) = (45+10+1)/1024
        assert!((binomial_tail(10, 9).unwrap() - 11.0 / 1024.0).abs() < 1e-16);
        assert!((binomial_tail(10, 8).unwrap() - 56.0 / 1024.0).abs() < 1e-16);
        assert_eq!(min_threshold(10, 0.05).unwrap(), 9);
    }

    #[test]
    fn threshold_edges() {
        assert_eq!(min_threshold(10, 1.0).unwrap(), 0);
        assert!(matches!(
            min_threshold(10, (-11f64).exp2()),
            Err(Error::UnreachableThreshold { n: 10, .. })
        ));
        assert!(min_threshold(10, 0.0).is_err());
        assert!(min_threshold(10, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn tail_monotone_in_k(n in 1u64..600, a in 0u64..600, b in 0u64..600) {
            let (a, b) = (a.min(n + 1), b.min(n + 1));
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(binomial_tail(n, hi).unwrap() <= binomial_tail(n, lo).unwrap());
        }

        #[test]
        fn threshold_monotone_in_fpr(n in 20u64..400, e1 in 0.5f64..12.0, e2 in 0.5f64..12.0) {
            let (f_big, f_small) = (10f64.powf(-e1.min(e2)), 10f64.powf(-e1.max(e2)));
            match (min_threshold(n, f_big), min_threshold(n, f_small)) {
                (Ok(t_big), Ok(t_small)) => prop_assert!(t_small >= t_big),
                (Err(_), Ok(_)) => prop_assert!(false, "looser fpr unreachable"),
                _ => {}
            }
        }
    }
}
