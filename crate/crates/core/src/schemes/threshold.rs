//! Detection thresholds: exact binomial for the sign-counting schemes,
//! empirical null quantile for the ring scheme.

use super::{SchemeId, Watermarker};
use crate::error::{Error, Result};
use crate::exec::{map_trials, Execution};
use crate::latent::{gaussian_latent, Latent, LatentShape};
use crate::rng::{derive_stream, KeyBundle};
use crate::statistics::min_threshold;

/// Score threshold `τ/n` for a statistic that counts `n` fair coins under the null.
pub fn bitwise_threshold(n_units: u64, fpr: f64) -> Result<f64> {
    if n_units == 0 {
        return Err(Error::invalid("n_units", "must be positive"));
    }
    Ok(min_threshold(n_units, fpr)? as f64 / n_units as f64)
}

/// Unwatermarked latent `t` of a null population keyed by `key`.
pub fn null_latent(key: &KeyBundle, shape: LatentShape, t: u64) -> Latent {
    gaussian_latent(&mut derive_stream(key, "null", t), shape)
}

/// Threshold for `wm` at false-positive rate `fpr`.
///
/// Bitwise schemes ignore `null_trials` and `null_key`. TR_LITE scores
/// `null_trials` null latents and returns the `⌊fpr·N⌋`-th smallest distance,
/// so at most that many null samples fall at or below it (ties aside). Such a
/// threshold cannot certify rates below `1/N`.
pub fn calibrate_threshold(
    wm: &Watermarker,
    fpr: f64,
    null_trials: usize,
    null_key: &KeyBundle,
    exec: Execution,
) -> Result<f64> {
    if !(fpr > 0.0 && fpr <= 1.0) {
        return Err(Error::invalid("fpr", format!("{fpr} not in (0, 1]")));
    }
    if let Some(n) = wm.score_units() {
        return bitwise_threshold(n, fpr);
    }
    debug_assert_eq!(wm.scheme(), SchemeId::TrLite);
    let rank = (fpr * null_trials as f64).floor() as usize;
    if rank == 0 {
        return Err(Error::Insufficient(format!(
            "{null_trials} null trials cannot resolve fpr {fpr:e}"
        )));
    }
    let shape = wm.shape();
    let mut scores = map_trials(null_trials, exec, |t| {
        let z = null_latent(null_key, shape, t as u64);
        wm.decode(&z, None).map(|d| d.score)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    scores.sort_by(f64::total_cmp);
    Ok(scores[rank - 1])
}

#[cfg(test)]
mod tests {
    use super::super::SchemeConfig;
    use super::*;

    #[test]
    fn bitwise_examples() {
        assert_eq!(bitwise_threshold(10, 0.05).unwrap(), 0.9);
        assert_eq!(bitwise_threshold(10, 1.0).unwrap(), 0.0);
        assert!(matches!(
            bitwise_threshold(10, 2f64.powi(-11)),
            Err(Error::UnreachableThreshold { n: 10, .. })
        ));
    }

    #[test]
    fn scheme_units() {
        let key = KeyBundle::from_seed(3);
        let cfg = SchemeConfig::default();
        let gs = Watermarker::new(SchemeId::GsLite, &key, cfg.clone()).unwrap();
        let t = calibrate_threshold(&gs, 1e-6, 0, &key, Execution::default()).unwrap();
        assert_eq!(t, min_threshold(256, 1e-6).unwrap() as f64 / 256.0);
        let prc = Watermarker::new(SchemeId::PrcLite, &key, cfg).unwrap();
        assert_eq!(prc.score_units(), Some(16384));
    }

    #[test]
    fn tr_quantile() {
        let key = KeyBundle::from_seed(4);
        let tr = Watermarker::new(SchemeId::TrLite, &key, SchemeConfig::default()).unwrap();
        let null = key.derive("null");
        assert!(calibrate_threshold(&tr, 1e-2, 50, &null, Execution::default()).is_err());
        let t = calibrate_threshold(&tr, 0.1, 100, &null, Execution::default()).unwrap();
        let below = (0..100)
            .filter(|&i| {
                let z = null_latent(&null, tr.shape(), i);
                tr.decode(&z, None).unwrap().score <= t
            })
            .count();
        assert_eq!(below, 10);
        // a watermarked latent sits far below the null quantile
        let z = tr.embed(None, &mut derive_stream(&key, "x", 0)).unwrap();
        assert!(tr.decode(&z, None).unwrap().score < 0.1 * t);
    }
}
