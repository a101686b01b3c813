//! Near-duplicate detection for points compared in a polyhedral norm.

use std::collections::HashMap;

use crate::model::NormSpec;

/// Buckets points by a fixed linear projection so that two points within
/// `tol` of each other always land in the same or adjacent buckets.
pub(crate) struct DedupIndex {
    norm: NormSpec,
    tol: f64,
    weights: Vec<f64>,
    cell: f64,
    buckets: HashMap<i64, Vec<usize>>,
    points: Vec<Vec<f64>>,
}

impl DedupIndex {
    pub(crate) fn new(dim: usize, norm: NormSpec, tol: f64) -> Self {
        // Weights in [0.5, 1] from the golden-ratio sequence.
        let weights = (0..dim)
            .map(|j| 0.5 + 0.5 * ((j as f64 + 1.0) * 0.618_033_988_749_895).fract())
            .collect();
        // |<w, a - b>| <= |a - b|_1 <= dim * |a - b|_inf.
        let cell = tol * dim.max(1) as f64;
        DedupIndex {
            norm,
            tol,
            weights,
            cell,
            buckets: HashMap::new(),
            points: Vec::new(),
        }
    }

    fn key(&self, p: &[f64]) -> i64 {
        let proj: f64 = self.weights.iter().zip(p).map(|(w, x)| w * x).sum();
        (proj / self.cell).floor() as i64
    }

    /// Index of a stored point within `tol` of `p`, if any.
    pub(crate) fn find(&self, p: &[f64]) -> Option<usize> {
        let k = self.key(p);
        for kk in [k.saturating_sub(1), k, k.saturating_add(1)] {
            if let Some(ids) = self.buckets.get(&kk) {
                for &i in ids {
                    if self.norm.dist(&self.points[i], p) <= self.tol {
                        return Some(i);
                    }
                }
            }
        }
        None
    }

    /// Stores `p` unless a near-duplicate exists; returns `(index, inserted)`.
    pub(crate) fn insert(&mut self, p: &[f64]) -> (usize, bool) {
        if let Some(i) = self.find(p) {
            return (i, false);
        }
        let i = self.points.len();
        let k = self.key(p);
        self.points.push(p.to_vec());
        self.buckets.entry(k).or_default().push(i);
        (i, true)
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.points.len()
    }
}
