//! Synthetic prompt clusters on the unit sphere and PK batch sampling.

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Views of `P` prompts, each a jittered copy of the prompt's reference
/// direction. Row `i` of `views` carries label `labels[i]`.
#[derive(Debug, Clone)]
pub struct ClusterDataset {
    pub references: Array2<f64>,
    pub views: Array2<f64>,
    pub labels: Vec<usize>,
    pub jitter: f64,
}

fn normalize_row(mut row: ndarray::ArrayViewMut1<f64>) {
    let norm = row.dot(&row).sqrt();
    if norm > 0.0 {
        row.mapv_inplace(|v| v / norm);
    }
}

fn jittered(reference: ArrayView1<f64>, jitter: f64, rng: &mut RngStream) -> Vec<f64> {
    let noise = rng.gaussian_vec(reference.len());
    reference.iter().zip(noise).map(|(r, n)| r + jitter * n).collect()
}

/// `P` uniform reference directions in `R^{d_e}` and `K` views each:
/// `normalize(reference + jitter·g)` with `g` standard normal per coordinate.
pub fn synth_dataset(rng: &mut RngStream, prompts: usize, views: usize, dim: usize, jitter: f64) -> Result<ClusterDataset> {
    if prompts < 2 || views < 2 {
        return Err(Error::invalid("dataset", "need at least 2 prompts and 2 views"));
    }
    if dim == 0 || !(jitter >= 0.0) {
        return Err(Error::invalid("dataset", "dimension must be positive and jitter non-negative"));
    }
    let mut references = Array2::from_shape_vec((prompts, dim), rng.gaussian_vec(prompts * dim))
        .expect("shape matches length");
    for row in references.axis_iter_mut(Axis(0)) {
        normalize_row(row);
    }
    Ok(ClusterDataset::from_references(references, jitter).fresh_views(rng, views))
}

impl ClusterDataset {
    pub fn from_references(references: Array2<f64>, jitter: f64) -> Self {
        let dim = references.ncols();
        Self {
            references,
            views: Array2::zeros((0, dim)),
            labels: Vec::new(),
            jitter,
        }
    }

    pub fn prompts(&self) -> usize {
        self.references.nrows()
    }

    pub fn dim(&self) -> usize {
        self.references.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// A new dataset with the same references and `views` new views per
    /// prompt, stored prompt-major.
    pub fn fresh_views(&self, rng: &mut RngStream, views: usize) -> Self {
        let (p, d) = (self.prompts(), self.dim());
        let mut out = Array2::zeros((p * views, d));
        let mut labels = Vec::with_capacity(p * views);
        for (c, reference) in self.references.axis_iter(Axis(0)).enumerate() {
            for v in 0..views {
                let row = jittered(reference, self.jitter, rng);
                let mut dst = out.row_mut(c * views + v);
                dst.assign(&ArrayView1::from(&row));
                normalize_row(dst);
                labels.push(c);
            }
        }
        Self {
            references: self.references.clone(),
            views: out,
            labels,
            jitter: self.jitter,
        }
    }

    /// Rows `idx` of the views with their labels.
    pub fn select(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (self.views.select(Axis(0), idx), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// One epoch of PK batches: every class's views are shuffled and cut into
/// `k`-sized chunks; each round shuffles the classes that still hold a chunk
/// and groups them `p` at a time. The epoch ends once fewer than `p` classes
/// have a chunk left.
pub fn pk_batches(labels: &[usize], p: usize, k: usize, rng: &mut RngStream) -> Result<Vec<Vec<usize>>> {
    if p == 0 || k == 0 {
        return Err(Error::invalid("pk", "P and K must be positive"));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        per_class[y].push(i);
    }
    let populated = per_class.iter().filter(|v| v.len() >= k).count();
    if populated < p {
        return Err(Error::invalid(
            "pk",
            format!("{populated} classes with at least {k} views, batch needs {p}"),
        ));
    }
    let mut chunks: Vec<Vec<Vec<usize>>> = per_class
        .into_iter()
        .map(|mut v| {
            shuffle(&mut v, rng);
            let mut c: Vec<Vec<usize>> = v.chunks_exact(k).map(<[usize]>::to_vec).collect();
            c.reverse();
            c
        })
        .collect();
    let mut batches = Vec::new();
    loop {
        let mut ready: Vec<usize> = (0..classes).filter(|&c| !chunks[c].is_empty()).collect();
        if ready.len() < p {
            break;
        }
        shuffle(&mut ready, rng);
        for group in ready.chunks_exact(p) {
            let mut batch = Vec::with_capacity(p * k);
            for &c in group {
                batch.extend(chunks[c].pop().expect("class is ready"));
            }
            batches.push(batch);
        }
    }
    Ok(batches)
}

fn shuffle<T>(v: &mut [T], rng: &mut RngStream) {
    for i in (1..v.len()).rev() {
        let j = rng.next_below(i as u64 + 1) as usize;
        v.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, KeyBundle};

    fn rng(i: u64) -> RngStream {
        derive_stream(&KeyBundle::from_seed(40), "data", i)
    }

    #[test]
    fn zero_jitter_views_match() {
        let ds = synth_dataset(&mut rng(0), 3, 4, 8, 0.0).unwrap();
        for c in 0..3 {
            for v in 1..4 {
                assert_eq!(ds.views.row(c * 4), ds.views.row(c * 4 + v));
            }
        }
    }

    #[test]
    fn views_are_unit_norm() {
        let ds = synth_dataset(&mut rng(1), 16, 8, 64, 0.2).unwrap();
        for row in ds.views.axis_iter(Axis(0)) {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn antipodal_references_separate() {
        let mut refs = Array2::zeros((2, 8));
        refs[[0, 0]] = 1.0;
        refs[[1, 0]] = -1.0;
        let ds = ClusterDataset::from_references(refs, 0.05).fresh_views(&mut rng(2), 5);
        let cos = |a: usize, b: usize| ds.views.row(a).dot(&ds.views.row(b));
        let mut min_within = f64::INFINITY;
        let mut max_cross = f64::NEG_INFINITY;
        for a in 0..10 {
            for b in 0..10 {
                if a == b {
                    continue;
                }
                if ds.labels[a] == ds.labels[b] {
                    min_within = min_within.min(cos(a, b));
                } else {
                    max_cross = max_cross.max(cos(a, b));
                }
            }
        }
        assert!(min_within > max_cross);
    }

    #[test]
    fn too_small_rejected() {
        assert!(synth_dataset(&mut rng(3), 1, 4, 8, 0.1).is_err());
        assert!(synth_dataset(&mut rng(3), 4, 1, 8, 0.1).is_err());
    }

    #[test]
    fn pk_batches_have_p_classes_of_k() {
        let ds = synth_dataset(&mut rng(4), 10, 12, 4, 0.1).unwrap();
        let batches = pk_batches(&ds.labels, 4, 3, &mut rng(5)).unwrap();
        assert!(!batches.is_empty());
        let mut seen = vec![false; ds.len()];
        for b in &batches {
            assert_eq!(b.len(), 12);
            let mut counts = std::collections::BTreeMap::new();
            for &i in b {
                assert!(!seen[i]);
                seen[i] = true;
                *counts.entry(ds.labels[i]).or_insert(0) += 1;
            }
            assert_eq!(counts.len(), 4);
            assert!(counts.values().all(|&c| c == 3));
        }
        assert!(pk_batches(&ds.labels, 11, 3, &mut rng(6)).is_err());
    }
}
