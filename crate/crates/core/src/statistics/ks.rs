use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const MIN_KS_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size used in the asymptotic p-value.
    pub n_eff: f64,
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{j-1} exp(-2 j² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series converges fast for small λ.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let mut s = 0.0;
        let mut j = 1i32;
        loop {
            let term = y.powi(j * j);
            s += term;
            if term < 1e-17 {
                break;
            }
            j += 2;
        }
        (1.0 - (std::f64::consts::TAU).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
            s += sign * term;
            if term < 1e-300 {
                break;
            }
            sign = -sign;
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn asymptotic_p(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// One-sample KS test against the standard normal.
pub fn ks_test(samples: &[f64]) -> Result<KsResult> {
    ks_test_against(samples, standard_normal_cdf)
}

pub fn ks_test_against<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::Insufficient(format!(
            "KS needs at least {MIN_KS_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let d = ks_statistic(samples, cdf);
    let n = samples.len() as f64;
    Ok(KsResult {
        statistic: d,
        p_value: asymptotic_p(d, n),
        n_eff: n,
    })
}

/// Two-sample KS statistic and asymptotic p-value. Ties are stepped together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Insufficient("two-sample KS needs non-empty samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    Ok(KsResult {
        statistic: d,
        p_value: asymptotic_p(d, n_eff),
        n_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn sampler_passes_and_uniform_fails() {
        let mut s = RngStream::from_state(99);
        let g = s.gaussian_vec(1_000_000);
        let r = ks_test(&g).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");

        let u: Vec<f64> = (0..1_000_000).map(|_| s.next_open01()).collect();
        let r = ks_test(&u).unwrap();
        assert!(r.p_value < 1e-10, "{r:?}");
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(ks_test(&[0.0]).is_err());
        assert!(ks_test(&[0.0; 99]).is_err());
    }

    #[test]
    fn kolmogorov_series_reference_points() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098 (standard critical values)
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 5e-4);
        // both branches agree at the switch
        let lo = kolmogorov_q(1.18 - 1e-12);
        let hi = kolmogorov_q(1.18);
        assert!((lo - hi).abs() < 1e-12);
    }

    #[test]
    fn self_distance_zero_and_monotone_invariance() {
        let g = RngStream::from_state(5).gaussian_vec(500);
        assert_eq!(ks_two_sample(&g, &g).unwrap().statistic, 0.0);

        let d = ks_statistic(&g, standard_normal_cdf);
        let e: Vec<f64> = g.iter().map(|v| v.exp()).collect();
        let d2 = ks_statistic(&e, |x| standard_normal_cdf(x.ln()));
        assert!((d - d2).abs() < 1e-12);
    }

    #[test]
    fn shifted_samples_detected() {
        let mut s = RngStream::from_state(6);
        let a = s.gaussian_vec(2000);
        let b: Vec<f64> = s.gaussian_vec(2000).iter().map(|v| v + 0.5).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value < 1e-6);
    }
}
