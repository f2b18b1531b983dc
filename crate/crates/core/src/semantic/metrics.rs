//! Code-space tightness and separability metrics.

use serde::Serialize;

use super::oracle::Oracle;
use crate::code::SemanticCode;
use crate::error::{Error, Result};
use crate::exec::{map_trials, Execution};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    /// Mean pairwise Hamming distance among originals.
    pub intra_orig: f64,
    /// Mean Hamming distance from original #1 to each distortion.
    pub ref_vs_dist: f64,
    /// Mean pairwise Hamming distance over originals ∪ distortions.
    pub all_pairs: f64,
    /// Mean per-bit entropy over originals ∪ distortions.
    pub bit_entropy: f64,
    pub cross_min: Option<f64>,
    pub cross_mean: Option<f64>,
    pub cross_max: Option<f64>,
    /// Mean per-bit entropy of the cross-prompt codes.
    pub cross_entropy: Option<f64>,
}

fn mean_pairwise(codes: &[&SemanticCode]) -> f64 {
    let n = codes.len();
    let mut sum = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            sum += codes[i].hamming(codes[j]);
        }
    }
    2.0 * sum as f64 / (n * (n - 1)) as f64
}

/// Mean over bits of the binary entropy of each bit's frequency.
pub fn bit_entropy(codes: &[&SemanticCode]) -> f64 {
    let n = codes.len() as f64;
    let bits = codes[0].len();
    (0..bits)
        .map(|k| {
            let p = codes.iter().filter(|c| c.get(k)).count() as f64 / n;
            let h = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
            h(p) + h(1.0 - p)
        })
        .sum::<f64>()
        / bits as f64
}

fn check_lengths(codes: &[&SemanticCode]) -> Result<()> {
    let b = codes[0].len();
    match codes.iter().find(|c| c.len() != b) {
        Some(c) => Err(Error::DimensionMismatch {
            expected: b,
            got: c.len(),
        }),
        None => Ok(()),
    }
}

pub fn code_metrics(
    originals: &[SemanticCode],
    distortions: &[SemanticCode],
    cross: &[SemanticCode],
) -> Result<MetricReport> {
    if originals.len() < 2 {
        return Err(Error::Insufficient("need at least 2 originals".into()));
    }
    if distortions.is_empty() {
        return Err(Error::Insufficient("need at least 1 distortion".into()));
    }
    let all: Vec<&SemanticCode> = originals.iter().chain(distortions).chain(cross).collect();
    check_lengths(&all)?;

    let origs: Vec<&SemanticCode> = originals.iter().collect();
    let union: Vec<&SemanticCode> = originals.iter().chain(distortions).collect();
    let first = &originals[0];
    let ref_vs_dist =
        distortions.iter().map(|d| first.hamming(d) as f64).sum::<f64>() / distortions.len() as f64;

    let mut report = MetricReport {
        intra_orig: mean_pairwise(&origs),
        ref_vs_dist,
        all_pairs: mean_pairwise(&union),
        bit_entropy: bit_entropy(&union),
        ..MetricReport::default()
    };
    if !cross.is_empty() {
        let d: Vec<f64> = originals
            .iter()
            .flat_map(|o| cross.iter().map(move |c| o.hamming(c) as f64))
            .collect();
        report.cross_min = d.iter().copied().reduce(f64::min);
        report.cross_max = d.iter().copied().reduce(f64::max);
        report.cross_mean = Some(d.iter().sum::<f64>() / d.len() as f64);
        report.cross_entropy = Some(bit_entropy(&cross.iter().collect::<Vec<_>>()));
    }
    Ok(report)
}

/// Field-wise mean of per-prompt reports.
pub fn average_reports(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Insufficient("no reports to average".into()));
    }
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let avg_opt = |f: fn(&MetricReport) -> Option<f64>| {
        reports.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
    };
    Ok(MetricReport {
        intra_orig: avg(|r| r.intra_orig),
        ref_vs_dist: avg(|r| r.ref_vs_dist),
        all_pairs: avg(|r| r.all_pairs),
        bit_entropy: avg(|r| r.bit_entropy),
        cross_min: avg_opt(|r| r.cross_min),
        cross_mean: avg_opt(|r| r.cross_mean),
        cross_max: avg_opt(|r| r.cross_max),
        cross_entropy: avg_opt(|r| r.cross_entropy),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetricProtocol {
    pub prompts: usize,
    pub originals: usize,
    pub distortions: usize,
    pub cross: usize,
}

impl Default for MetricProtocol {
    fn default() -> Self {
        Self {
            prompts: 1000,
            originals: 10,
            distortions: 10,
            cross: 10,
        }
    }
}

/// Per-prompt metrics averaged over `protocol.prompts` prompts. Prompt `p`
/// uses instances `0..originals`, distortions of instance 0, and the first
/// instance of the next `cross` prompts (cyclically) as cross-prompt codes.
pub fn oracle_metrics(oracle: &Oracle, protocol: MetricProtocol, exec: Execution) -> Result<MetricReport> {
    let MetricProtocol {
        prompts,
        originals,
        distortions,
        cross,
    } = protocol;
    if cross >= prompts && cross > 0 {
        return Err(Error::Insufficient(format!(
            "{cross} cross-prompt codes need more than {prompts} prompts"
        )));
    }
    let reports = map_trials(prompts, exec, |p| {
        let p = p as u64;
        let origs: Vec<_> = (0..originals as u64).map(|i| oracle.instance(p, i)).collect();
        let dists: Vec<_> = (0..distortions as u64)
            .map(|j| oracle.distort(&origs[0], p * distortions as u64 + j))
            .collect();
        let others: Vec<_> = (1..=cross as u64)
            .map(|c| oracle.instance((p + c) % prompts as u64, 0))
            .collect();
        code_metrics(&origs, &dists, &others)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    average_reports(&reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::Bits;

    fn b(v: &[u8]) -> Bits {
        Bits::from_01(v).unwrap()
    }

    #[test]
    fn identical_codes_are_zero() {
        let c = b(&[1, 0, 1, 1]);
        let r = code_metrics(&[c.clone(), c.clone()], std::slice::from_ref(&c), &[]).unwrap();
        assert_eq!((r.intra_orig, r.ref_vs_dist, r.all_pairs, r.bit_entropy), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.cross_mean, None);
    }

    #[test]
    fn hand_evaluation() {
        let r = code_metrics(&[b(&[0, 0, 0, 0]), b(&[1, 1, 1, 1])], &[b(&[0, 0, 0, 1])], &[b(&[1, 1, 0, 0])])
            .unwrap();
        assert_eq!(r.intra_orig, 4.0);
        assert_eq!(r.ref_vs_dist, 1.0);
        // pairs: (0000,1111)=4 (0000,0001)=1 (1111,0001)=3
        assert!((r.all_pairs - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.cross_min, r.cross_max, r.cross_mean), (Some(2.0), Some(2.0), Some(2.0)));
        let two = code_metrics(&[b(&[0, 0, 0, 0]), b(&[1, 1, 1, 1])], &[b(&[0, 0, 0, 0]), b(&[1, 1, 1, 1])], &[])
            .unwrap();
        assert_eq!(two.bit_entropy, 1.0);
    }

    #[test]
    fn insufficient_inputs() {
        let c = b(&[0, 1]);
        assert!(code_metrics(std::slice::from_ref(&c), std::slice::from_ref(&c), &[]).is_err());
        assert!(code_metrics(&[c.clone(), c.clone()], &[], &[]).is_err());
        assert!(code_metrics(&[c.clone(), c.clone()], &[b(&[0])], &[]).is_err());
    }
}
