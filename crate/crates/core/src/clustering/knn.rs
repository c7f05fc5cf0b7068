//! k-nearest-neighbour graphs under Euclidean distance.
//!
//! Exact brute force up to [`EXACT_KNN_LIMIT`] points; above that, a forest of
//! random-projection trees seeds candidates and one round of
//! neighbour-of-neighbour exploration refines them.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const EXACT_KNN_LIMIT: usize = 5000;

/// Row-major point set.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    pub data: &'a [f32],
    pub dim: usize,
}

impl<'a> Points<'a> {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum()
    }
}

/// Neighbour lists: `(squared distance, index)` sorted ascending, self excluded.
pub type KnnGraph = Vec<Vec<(f64, usize)>>;

fn by_dist(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

pub fn knn(points: Points<'_>, k: usize, seed: u64) -> KnnGraph {
    if points.len() <= EXACT_KNN_LIMIT {
        exact_knn(points, k)
    } else {
        approximate_knn(points, k, seed)
    }
}

pub fn exact_knn(points: Points<'_>, k: usize) -> KnnGraph {
    let n = points.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (points.sq_dist(i, j), j)).collect();
            let k = k.min(row.len());
            if k < row.len() {
                row.select_nth_unstable_by(k, by_dist);
                row.truncate(k);
            }
            row.sort_by(by_dist);
            row
        })
        .collect()
}

const RP_TREES: usize = 8;

fn rp_leaves(points: Points<'_>, leaf_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut leaves = Vec::new();
    let mut stack = vec![(0..points.len()).collect::<Vec<_>>()];
    while let Some(idx) = stack.pop() {
        if idx.len() <= leaf_size {
            leaves.push(idx);
            continue;
        }
        let a = idx[rng.random_range(0..idx.len())];
        let mut b = idx[rng.random_range(0..idx.len())];
        if a == b {
            b = idx[(idx.iter().position(|&x| x == a).unwrap() + 1) % idx.len()];
        }
        let (ra, rb) = (points.row(a), points.row(b));
        let normal: Vec<f64> = ra.iter().zip(rb).map(|(&x, &y)| x as f64 - y as f64).collect();
        let offset: f64 = ra.iter().zip(rb).zip(&normal).map(|((&x, &y), w)| 0.5 * (x as f64 + y as f64) * w).sum();
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| {
            let proj: f64 = points.row(i).iter().zip(&normal).map(|(&x, w)| x as f64 * w).sum();
            proj < offset
        });
        if left.is_empty() || right.is_empty() {
            // Coincident points: split arbitrarily so recursion terminates.
            let mut all = idx;
            right = all.split_off(all.len() / 2);
            left = all;
        }
        stack.push(right);
        stack.push(left);
    }
    leaves
}

fn merge_candidates(points: Points<'_>, i: usize, current: &[(f64, usize)], cands: &[usize], k: usize) -> Vec<(f64, usize)> {
    let mut row: Vec<(f64, usize)> = current.to_vec();
    let mut seen: std::collections::HashSet<usize> = row.iter().map(|&(_, j)| j).collect();
    seen.insert(i);
    for &j in cands {
        if seen.insert(j) {
            row.push((points.sq_dist(i, j), j));
        }
    }
    row.sort_by(by_dist);
    row.truncate(k);
    row
}

pub fn approximate_knn(points: Points<'_>, k: usize, seed: u64) -> KnnGraph {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaf_size = (2 * k).max(32);
    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for _ in 0..RP_TREES {
        for leaf in rp_leaves(points, leaf_size, &mut rng) {
            for &i in &leaf {
                candidates[i].extend(leaf.iter().copied().filter(|&j| j != i));
            }
        }
    }
    let graph: KnnGraph = (0..n)
        .into_par_iter()
        .map(|i| merge_candidates(points, i, &[], &candidates[i], k))
        .collect();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let hop: Vec<usize> = graph[i].iter().flat_map(|&(_, j)| graph[j].iter().map(|&(_, l)| l)).collect();
            merge_candidates(points, i, &graph[i], &hop, k)
        })
        .collect()
}
