//! Fixed normality battery used as the operational distinguisher for
//! undetectability claims.
//!
//! Passing the battery is evidence, not proof: it is a strict
//! under-approximation of an arbitrary efficient adversary. Cutoffs are frozen
//! in [`BatteryConfig::default`].

use serde::Serialize;

use crate::dft::Dft2;
use crate::error::{Error, Result};
use crate::exec::{map_trials, Execution};
use crate::latent::Latent;
use crate::statistics::ks::ks_test;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteMode {
    /// Each sample is judged on its own; only pooled marginals and per-sample
    /// spectra are inspected.
    Single,
    /// The distinguisher also sees how samples co-vary.
    Multi,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatteryConfig {
    pub ks_alpha: f64,
    /// Pooled moment bounds in standard errors.
    pub mean_sigmas: f64,
    pub var_sigmas: f64,
    pub shape_sigmas: f64,
    /// Max `|mean_i|·√n` over coordinates (multi).
    pub coord_mean_cutoff: f64,
    /// Max `|var_i - 1| / √(2/(n-1))` over coordinates (multi).
    pub coord_var_cutoff: f64,
    /// Max `|r|·√L` over consecutive sample pairs (multi).
    pub cross_corr_cutoff: f64,
    /// Min power coefficient of variation over spectral annuli of channel 0.
    pub annulus_cv_cutoff: f64,
    pub annulus_min_pairs: usize,
    /// Min `(ratio - 1)·√(n-1)` for per-bin spectral variance across samples (multi).
    pub spectral_var_cutoff: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            ks_alpha: 0.01,
            mean_sigmas: 4.0,
            var_sigmas: 5.0,
            shape_sigmas: 5.0,
            coord_mean_cutoff: 5.0,
            coord_var_cutoff: 6.0,
            cross_corr_cutoff: 5.0,
            annulus_cv_cutoff: 0.05,
            annulus_min_pairs: 24,
            spectral_var_cutoff: -6.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    pub ks: bool,
    pub moments: bool,
    /// Per-sample fixed-subspace (spectral annulus) variance test.
    pub fixed_subspace: bool,
    pub coord_mean: Option<bool>,
    pub coord_var: Option<bool>,
    pub cross_corr: Option<bool>,
    pub spectral_var: Option<bool>,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.ks
            && self.moments
            && self.fixed_subspace
            && [self.coord_mean, self.coord_var, self.cross_corr, self.spectral_var]
                .iter()
                .all(|v| v.unwrap_or(true))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityReport {
    pub mode: SuiteMode,
    pub n_samples: usize,
    pub n_values: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub annulus_min_cv: f64,
    pub coord_mean_max_abs: Option<f64>,
    pub coord_var_min: Option<f64>,
    pub coord_var_max: Option<f64>,
    pub cross_corr_max_z: Option<f64>,
    pub spectral_var_min_ratio: Option<f64>,
    pub verdicts: Verdicts,
    pub passed: bool,
}

struct Moments {
    mean: f64,
    variance: f64,
    skewness: f64,
    excess_kurtosis: f64,
}

fn pooled_moments(values: &[f64]) -> Moments {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

/// Smallest coefficient of variation of spectral power over the annuli of
/// channel 0 that hold at least `min_pairs` conjugate pairs.
///
/// For white Gaussian noise each bin's power is exponential (CV ≈ 1); a
/// pattern that pins a ring of coefficients to a fixed magnitude drives it to 0.
pub fn annulus_min_cv(z: &Latent, dft: &Dft2, min_pairs: usize) -> f64 {
    let (h, w) = (dft.height(), dft.width());
    let spec = dft.forward_real(z.channel(0));
    let max_r = (h.min(w) / 2).saturating_sub(1);
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); max_r + 1];
    for u in 0..h {
        for v in 0..w {
            let idx = u * w + v;
            if dft.conjugate_index(u, v) < idx {
                continue;
            }
            let r = dft.radius(u, v).round() as usize;
            if (1..=max_r).contains(&r) {
                buckets[r].push(spec[idx].norm_sqr());
            }
        }
    }
    buckets
        .iter()
        .filter(|b| b.len() >= min_pairs)
        .map(|b| {
            let n = b.len() as f64;
            let m = b.iter().sum::<f64>() / n;
            let var = b.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (n - 1.0);
            var.sqrt() / m
        })
        .fold(f64::INFINITY, f64::min)
}

/// Runs the battery on `n_samples` latents produced by `generator(i)`.
pub fn undetectability_suite<G>(
    generator: G,
    n_samples: usize,
    mode: SuiteMode,
    cfg: &BatteryConfig,
    exec: Execution,
) -> Result<NormalityReport>
where
    G: Fn(usize) -> Latent + Sync + Send,
{
    let min = if mode == SuiteMode::Multi { 20 } else { 1 };
    if n_samples < min {
        return Err(Error::Insufficient(format!(
            "{mode:?} mode needs at least {min} samples, got {n_samples}"
        )));
    }
    let samples = map_trials(n_samples, exec, generator);
    let shape = samples[0].shape();
    for s in &samples {
        s.ensure_shape(shape)?;
    }
    let dft = Dft2::new(shape.height, shape.width);

    let pooled: Vec<f64> = samples.iter().flat_map(|s| s.as_slice()).copied().collect();
    let ks = ks_test(&pooled)?;
    let mo = pooled_moments(&pooled);
    let nv = pooled.len() as f64;
    let moments_ok = mo.mean.abs() < cfg.mean_sigmas / nv.sqrt()
        && (mo.variance - 1.0).abs() < cfg.var_sigmas * (2.0 / nv).sqrt()
        && mo.skewness.abs() < cfg.shape_sigmas * (6.0 / nv).sqrt()
        && mo.excess_kurtosis.abs() < cfg.shape_sigmas * (24.0 / nv).sqrt();

    let cvs = map_trials(n_samples, exec, |i| {
        annulus_min_cv(&samples[i], &dft, cfg.annulus_min_pairs)
    });
    let annulus_min = cvs.into_iter().fold(f64::INFINITY, f64::min);

    let mut report = NormalityReport {
        mode,
        n_samples,
        n_values: pooled.len(),
        ks_statistic: ks.statistic,
        ks_p_value: ks.p_value,
        mean: mo.mean,
        variance: mo.variance,
        skewness: mo.skewness,
        excess_kurtosis: mo.excess_kurtosis,
        annulus_min_cv: annulus_min,
        coord_mean_max_abs: None,
        coord_var_min: None,
        coord_var_max: None,
        cross_corr_max_z: None,
        spectral_var_min_ratio: None,
        verdicts: Verdicts {
            ks: ks.p_value > cfg.ks_alpha,
            moments: moments_ok,
            fixed_subspace: annulus_min > cfg.annulus_cv_cutoff,
            coord_mean: None,
            coord_var: None,
            cross_corr: None,
            spectral_var: None,
        },
        passed: false,
    };

    if mode == SuiteMode::Multi {
        multi_sample_tests(&samples, &dft, cfg, exec, &mut report);
    }
    report.passed = report.verdicts.all_pass();
    Ok(report)
}

fn multi_sample_tests(
    samples: &[Latent],
    dft: &Dft2,
    cfg: &BatteryConfig,
    exec: Execution,
    report: &mut NormalityReport,
) {
    let n = samples.len();
    let nf = n as f64;
    let len = samples[0].as_slice().len();

    let mut sum = vec![0.0; len];
    let mut sq = vec![0.0; len];
    for s in samples {
        for ((a, b), v) in sum.iter_mut().zip(sq.iter_mut()).zip(s.as_slice()) {
            *a += v;
            *b += v * v;
        }
    }
    let mut max_mean: f64 = 0.0;
    let (mut var_min, mut var_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (s, q) in sum.iter().zip(&sq) {
        let m = s / nf;
        let var = (q - nf * m * m) / (nf - 1.0);
        max_mean = max_mean.max(m.abs());
        var_min = var_min.min(var);
        var_max = var_max.max(var);
    }
    let var_se = (2.0 / (nf - 1.0)).sqrt();
    let var_z = ((var_max - 1.0).abs()).max((var_min - 1.0).abs()) / var_se;

    let corr = map_trials(n - 1, exec, |i| {
        let (a, b) = (samples[i].as_slice(), samples[i + 1].as_slice());
        let ma = a.iter().sum::<f64>() / len as f64;
        let mb = b.iter().sum::<f64>() / len as f64;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        (sab / (saa * sbb).sqrt()).abs() * (len as f64).sqrt()
    });
    let corr_max = corr.into_iter().fold(0.0, f64::max);

    let spectra = map_trials(n, exec, |i| dft.forward_real(samples[i].channel(0)));
    let bins = dft.height() * dft.width();
    let plane = bins as f64;
    let mut min_ratio = f64::INFINITY;
    for k in 0..bins {
        let mean = spectra.iter().map(|s| s[k]).sum::<num_complex::Complex64>() / nf;
        let var = spectra.iter().map(|s| (s[k] - mean).norm_sqr()).sum::<f64>() / (nf - 1.0);
        min_ratio = min_ratio.min(var / plane);
    }

    report.coord_mean_max_abs = Some(max_mean);
    report.coord_var_min = Some(var_min);
    report.coord_var_max = Some(var_max);
    report.cross_corr_max_z = Some(corr_max);
    report.spectral_var_min_ratio = Some(min_ratio);
    report.verdicts.coord_mean = Some(max_mean * nf.sqrt() < cfg.coord_mean_cutoff);
    report.verdicts.coord_var = Some(var_z < cfg.coord_var_cutoff);
    report.verdicts.cross_corr = Some(corr_max < cfg.cross_corr_cutoff);
    report.verdicts.spectral_var = Some((min_ratio - 1.0) * (nf - 1.0).sqrt() > cfg.spectral_var_cutoff);
}

/// Fraction of `null_trials` unwatermarked inputs for which `accepts(i)` holds.
pub fn empirical_fpr<F>(null_trials: usize, exec: Execution, accepts: F) -> Result<f64>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    if null_trials == 0 {
        return Err(Error::invalid("null_trials", "must be at least 1"));
    }
    Ok(crate::exec::count_trials(null_trials, exec, accepts) as f64 / null_trials as f64)
}
