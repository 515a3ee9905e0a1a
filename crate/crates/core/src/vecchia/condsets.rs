use rayon::prelude::*;

use super::kdtree::{nearest_exhaustive, KdTree, Neighbors};
use super::ordering::EXHAUSTIVE_BELOW;
use crate::points::PointSet;

/// Conditioning sets in compressed form: set `i` lists earlier positions, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CondSets {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl CondSets {
    pub fn from_sets(sets: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(sets.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for s in sets {
            indices.extend_from_slice(s);
            offsets.push(indices.len());
        }
        CondSets { offsets, indices }
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn max_size(&self) -> usize {
        self.iter().map(<[usize]>::len).max().unwrap_or(0)
    }

    /// Total number of stored indices.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn raw_indices(&self) -> &[usize] {
        &self.indices
    }

    /// Checks the structural invariants: set `i` is sorted, strictly below `i`, and has
    /// `min(i, m)` entries.
    pub fn is_valid(&self, m: usize) -> bool {
        (0..self.len()).all(|i| {
            let s = self.get(i);
            s.len() == i.min(m) && s.windows(2).all(|w| w[0] < w[1]) && s.iter().all(|&j| j < i)
        })
    }
}

const CHUNK: usize = 1024;

/// For every position `i` of the (already ordered and scaled) points, the `m`
/// nearest earlier positions, ties to the smaller position.
pub fn conditioning_sets_scaled(ordered: &PointSet, m: usize) -> CondSets {
    let n = ordered.len();
    let tree = (n >= EXHAUSTIVE_BELOW).then(|| KdTree::new(ordered));
    let chunks: Vec<Vec<Vec<usize>>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map_init(
            || Neighbors::new(m),
            |nb, c| {
                (c * CHUNK..((c + 1) * CHUNK).min(n))
                    .map(|i| {
                        nb.reset(m.min(i));
                        match &tree {
                            Some(t) => t.nearest(ordered.row(i), i, nb),
                            None => nearest_exhaustive(ordered, ordered.row(i), i, nb),
                        }
                        let mut s: Vec<usize> = nb.indices().collect();
                        s.sort_unstable();
                        s
                    })
                    .collect()
            },
        )
        .collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(n * m);
    offsets.push(0);
    for s in chunks.into_iter().flatten() {
        indices.extend_from_slice(&s);
        offsets.push(indices.len());
    }
    CondSets { offsets, indices }
}

/// Conditioning sets of ordered points in the metric given by `scaling` (weights per dimension).
pub fn build_conditioning_sets(ordered: &PointSet, m: usize, scaling: &[f64]) -> CondSets {
    conditioning_sets_scaled(&ordered.scaled(scaling), m)
}
