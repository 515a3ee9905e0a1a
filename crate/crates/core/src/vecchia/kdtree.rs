//! Static kd-tree with index-aware pruning.
//!
//! Every node knows the smallest point index below it, so "nearest among the
//! points with index < i" queries skip whole subtrees of later points.

use crate::points::{squared_distance, PointSet};

const LEAF_SIZE: usize = 12;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    left: usize,
    right: usize,
    min_index: usize,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    // point coordinates stored in tree order
    coords: Vec<f64>,
    index: Vec<usize>,
    nodes: Vec<Node>,
    bbox_lo: Vec<f64>,
    bbox_hi: Vec<f64>,
}

/// Bounded list of the best `(squared distance, index)` pairs, kept sorted.
#[derive(Debug, Clone, Default)]
pub struct Neighbors {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Neighbors {
    pub fn new(k: usize) -> Self {
        Neighbors {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    pub fn reset(&mut self, k: usize) {
        self.k = k;
        self.items.clear();
    }

    #[inline]
    fn is_full(&self) -> bool {
        self.items.len() >= self.k
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.is_full() {
            self.items[self.items.len() - 1].0
        } else {
            f64::INFINITY
        }
    }

    /// Inserts if the pair beats the current worst; ties go to the smaller index.
    #[inline]
    pub fn offer(&mut self, d2: f64, idx: usize) {
        if self.k == 0 {
            return;
        }
        if self.is_full() {
            let last = self.items[self.items.len() - 1];
            if (d2, idx) >= last {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&p| p < (d2, idx));
        self.items.insert(pos, (d2, idx));
    }

    /// Pairs in increasing `(distance, index)` order.
    pub fn items(&self) -> &[(f64, usize)] {
        &self.items
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|p| p.1)
    }
}

impl KdTree {
    pub fn new(points: &PointSet) -> Self {
        let dim = points.dim();
        let n = points.len();
        let mut tree = KdTree {
            dim,
            coords: Vec::new(),
            index: (0..n).collect(),
            nodes: Vec::new(),
            bbox_lo: Vec::new(),
            bbox_hi: Vec::new(),
        };
        if n > 0 {
            let mut index = std::mem::take(&mut tree.index);
            tree.build(points, &mut index, 0, n);
            tree.index = index;
        }
        tree.coords = Vec::with_capacity(n * dim);
        for &i in &tree.index {
            tree.coords.extend_from_slice(points.row(i));
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn build(&mut self, points: &PointSet, index: &mut [usize], start: usize, end: usize) -> usize {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut min_index = NONE;
        for &i in &index[start..end] {
            let r = points.row(i);
            for k in 0..dim {
                lo[k] = lo[k].min(r[k]);
                hi[k] = hi[k].max(r[k]);
            }
            min_index = min_index.min(i);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            left: NONE,
            right: NONE,
            min_index,
        });
        self.bbox_lo.extend_from_slice(&lo);
        self.bbox_hi.extend_from_slice(&hi);

        if end - start > LEAF_SIZE {
            let split = (0..dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
                .unwrap_or(0);
            if hi[split] > lo[split] {
                let mid = (end - start) / 2;
                index[start..end].select_nth_unstable_by(mid, |&a, &b| {
                    points.row(a)[split].total_cmp(&points.row(b)[split]).then(a.cmp(&b))
                });
                let left = self.build(points, index, start, start + mid);
                let right = self.build(points, index, start + mid, end);
                self.nodes[id].left = left;
                self.nodes[id].right = right;
            }
        }
        id
    }

    #[inline]
    fn bbox_distance2(&self, node: usize, q: &[f64]) -> f64 {
        let lo = &self.bbox_lo[node * self.dim..(node + 1) * self.dim];
        let hi = &self.bbox_hi[node * self.dim..(node + 1) * self.dim];
        let mut s = 0.0;
        for k in 0..self.dim {
            let d = if q[k] < lo[k] {
                lo[k] - q[k]
            } else if q[k] > hi[k] {
                q[k] - hi[k]
            } else {
                0.0
            };
            s += d * d;
        }
        s
    }

    /// The `out.k` nearest points to `q` among those with index `< limit`.
    pub fn nearest(&self, q: &[f64], limit: usize, out: &mut Neighbors) {
        out.items.clear();
        if self.nodes.is_empty() || out.k == 0 {
            return;
        }
        self.nearest_in(0, q, limit, out);
    }

    fn nearest_in(&self, node: usize, q: &[f64], limit: usize, out: &mut Neighbors) {
        let nd = &self.nodes[node];
        if nd.min_index >= limit {
            return;
        }
        if nd.left == NONE {
            for pos in nd.start..nd.end {
                let idx = self.index[pos];
                if idx >= limit {
                    continue;
                }
                let d2 = squared_distance(q, &self.coords[pos * self.dim..(pos + 1) * self.dim]);
                out.offer(d2, idx);
            }
            return;
        }
        let (l, r) = (nd.left, nd.right);
        let dl = self.bbox_distance2(l, q);
        let dr = self.bbox_distance2(r, q);
        let (first, d_first, second, d_second) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
        if d_first <= out.worst() {
            self.nearest_in(first, q, limit, out);
        }
        if d_second <= out.worst() {
            self.nearest_in(second, q, limit, out);
        }
    }

    /// Calls `f(index, squared distance)` for every point within `sqrt(r2)` of `q`.
    pub fn within<F: FnMut(usize, f64)>(&self, q: &[f64], r2: f64, mut f: F) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            if self.bbox_distance2(node, q) > r2 {
                continue;
            }
            let nd = &self.nodes[node];
            if nd.left == NONE {
                for pos in nd.start..nd.end {
                    let d2 = squared_distance(q, &self.coords[pos * self.dim..(pos + 1) * self.dim]);
                    if d2 <= r2 {
                        f(self.index[pos], d2);
                    }
                }
            } else {
                stack.push(nd.right);
                stack.push(nd.left);
            }
        }
    }
}

/// Brute-force counterpart of [`KdTree::nearest`].
pub fn nearest_exhaustive(points: &PointSet, q: &[f64], limit: usize, out: &mut Neighbors) {
    out.items.clear();
    for j in 0..limit.min(points.len()) {
        out.offer(squared_distance(q, points.row(j)), j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, dim: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a coarse lattice forces exact distance ties
        let data = (0..n * dim).map(|_| (rng.random::<f64>() * 8.0).floor() / 2.0).collect();
        PointSet::new(dim, data)
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let pts = cloud(700, 3, 11);
        let tree = KdTree::new(&pts);
        let mut a = Neighbors::new(9);
        let mut b = Neighbors::new(9);
        for i in [0usize, 1, 2, 5, 40, 333, 699] {
            for limit in [i, pts.len()] {
                tree.nearest(pts.row(i), limit, &mut a);
                nearest_exhaustive(&pts, pts.row(i), limit, &mut b);
                assert_eq!(a.items(), b.items(), "query {i} limit {limit}");
            }
        }
    }

    #[test]
    fn radius_query() {
        let pts = cloud(300, 2, 3);
        let tree = KdTree::new(&pts);
        let q = [1.0, 2.0];
        let mut got = Vec::new();
        tree.within(&q, 1.0, |i, _| got.push(i));
        got.sort_unstable();
        let want: Vec<usize> = (0..pts.len()).filter(|&j| squared_distance(&q, pts.row(j)) <= 1.0).collect();
        assert_eq!(got, want);
    }
}
