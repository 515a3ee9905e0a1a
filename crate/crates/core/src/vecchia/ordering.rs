use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kdtree::KdTree;
use crate::points::{squared_distance, PointSet};

/// Below this size the ordering and neighbor searches scan all pairs.
pub const EXHAUSTIVE_BELOW: usize = 2000;

/// Index of the point nearest the centroid, ties to the smaller index.
fn centroid_point(points: &PointSet) -> usize {
    let n = points.len();
    let dim = points.dim();
    let mut c = vec![0.0; dim];
    for r in points.rows() {
        for (ck, x) in c.iter_mut().zip(r) {
            *ck += x;
        }
    }
    for ck in &mut c {
        *ck /= n as f64;
    }
    let mut best = (f64::INFINITY, 0);
    for (i, r) in points.rows().enumerate() {
        let d = squared_distance(&c, r);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Greedy maximin (farthest-point) ordering of already-scaled points.
///
/// Starts at the point nearest the centroid; every later point maximizes its
/// minimum distance to the points placed before it, ties to the smaller index.
pub fn maximin_order(points: &PointSet) -> Vec<usize> {
    if points.len() < EXHAUSTIVE_BELOW {
        maximin_exhaustive(points)
    } else {
        maximin_tree(points)
    }
}

pub fn maximin_exhaustive(points: &PointSet) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let first = centroid_point(points);
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut mind = vec![f64::INFINITY; n];
    let mut next = first;
    for _ in 0..n {
        order.push(next);
        placed[next] = true;
        let p = points.row(next);
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if placed[j] {
                continue;
            }
            let d = squared_distance(p, points.row(j));
            if d < mind[j] {
                mind[j] = d;
            }
            if best.is_none_or(|(bd, _)| mind[j] > bd) {
                best = Some((mind[j], j));
            }
        }
        match best {
            Some((_, j)) => next = j,
            None => break,
        }
    }
    order
}

/// Same result as [`maximin_exhaustive`], with a lazy max-heap and distance
/// updates restricted to the points a new pick can actually affect.
pub fn maximin_tree(points: &PointSet) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let tree = KdTree::new(points);
    let first = centroid_point(points);
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let mut mind = vec![f64::INFINITY; n];
    let mut heap: BinaryHeap<(OrderedFloat<f64>, Reverse<usize>)> = BinaryHeap::with_capacity(2 * n);

    let place = |i: usize, placed: &mut Vec<bool>, mind: &mut Vec<f64>, heap: &mut BinaryHeap<_>, radius2: f64| {
        placed[i] = true;
        let p = points.row(i);
        tree.within(p, radius2, |j, d| {
            if !placed[j] && d < mind[j] {
                mind[j] = d;
                heap.push((OrderedFloat(d), Reverse(j)));
            }
        });
    };

    order.push(first);
    placed[first] = true;
    for j in 0..n {
        if j != first {
            mind[j] = squared_distance(points.row(first), points.row(j));
            heap.push((OrderedFloat(mind[j]), Reverse(j)));
        }
    }
    while let Some((OrderedFloat(d), Reverse(j))) = heap.pop() {
        if placed[j] || d != mind[j] {
            continue;
        }
        order.push(j);
        // no unplaced point has a minimum distance above d, so farther points cannot change
        place(j, &mut placed, &mut mind, &mut heap, d);
    }
    order
}

/// Seeded uniformly random permutation, for stress tests.
pub fn random_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tiny_cases() {
        assert_eq!(maximin_order(&PointSet::new(1, vec![4.0])), vec![0]);
        let pts = PointSet::new(1, vec![0.0, 1.0, 10.0]);
        assert_eq!(maximin_exhaustive(&pts), vec![1, 2, 0]);
        assert_eq!(maximin_tree(&pts), vec![1, 2, 0]);
    }

    #[test]
    fn tree_and_exhaustive_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (n, dim, lattice) in [(500, 2, false), (900, 3, true), (1200, 5, false)] {
            let data = (0..n * dim)
                .map(|_| {
                    let x: f64 = rng.random::<f64>() * 10.0;
                    if lattice {
                        x.floor()
                    } else {
                        x
                    }
                })
                .collect();
            let pts = PointSet::new(dim, data);
            assert_eq!(maximin_tree(&pts), maximin_exhaustive(&pts), "n={n} dim={dim}");
        }
    }

    proptest::proptest! {
        #[test]
        fn is_a_permutation(xs in proptest::collection::vec(-5.0f64..5.0, 1..120)) {
            let pts = PointSet::new(1, xs.clone());
            let mut o = maximin_order(&pts);
            o.sort_unstable();
            proptest::prop_assert_eq!(o, (0..xs.len()).collect::<Vec<_>>());
        }
    }
}
