//! HDBSCAN over 2D points with excess-of-mass cluster selection.
//!
//! Pipeline: core distances, Prim's MST over mutual reachability, single
//! linkage, condensed tree, stability, flat extraction. Tie handling and label
//! numbering follow the scikit-learn implementation so memberships can be
//! compared exactly.

use serde::{Deserialize, Serialize};

use super::ClusteringError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbourhood size for core distances, counting the point itself.
    pub min_samples: usize,
    /// Allow the root to be selected; then every point of it is labelled.
    pub allow_single_cluster: bool,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams { min_cluster_size: 25, min_samples: 10, allow_single_cluster: false }
    }
}

fn euclid(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

fn core_distances(points: &[[f64; 2]], min_samples: usize) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            let mut d: Vec<f64> = points.iter().map(|q| euclid(p, q)).collect();
            let k = min_samples - 1;
            d.select_nth_unstable_by(k, f64::total_cmp);
            d[k]
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct MstEdge {
    a: usize,
    b: usize,
    dist: f64,
}

fn prim_mst(points: &[[f64; 2]], core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut min_reach = vec![f64::INFINITY; n];
    let mut sources = vec![1usize; n];
    let mut current = 0usize;
    let mut mst = Vec::with_capacity(n.saturating_sub(1));
    for _ in 0..n.saturating_sub(1) {
        in_tree[current] = true;
        let core_cur = core[current];
        let mut best = f64::INFINITY;
        let mut source = 0usize;
        let mut next = 0usize;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let reach_j = min_reach[j];
            let source_j = sources[j];
            let mrd = core_cur.max(core[j]).max(euclid(&points[current], &points[j]));
            if mrd < reach_j {
                min_reach[j] = mrd;
                sources[j] = current;
                if mrd < best {
                    best = mrd;
                    source = current;
                    next = j;
                }
            } else if reach_j < best {
                best = reach_j;
                source = source_j;
                next = j;
            }
        }
        mst.push(MstEdge { a: source, b: next, dist: best });
        current = next;
    }
    mst
}

#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    dist: f64,
    size: usize,
}

fn single_linkage(mut mst: Vec<MstEdge>, n: usize) -> Vec<Merge> {
    mst.sort_by(|x, y| x.dist.total_cmp(&y.dist));
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut size: Vec<usize> = (0..2 * n - 1).map(|i| usize::from(i < n)).collect();
    let mut next_label = n;
    let find = |parent: &mut Vec<usize>, x: usize| {
        let mut root = x;
        while parent[root] != usize::MAX {
            root = parent[root];
        }
        let mut p = x;
        while parent[p] != usize::MAX && parent[p] != root {
            let up = parent[p];
            parent[p] = root;
            p = up;
        }
        root
    };
    let mut out = Vec::with_capacity(n - 1);
    for e in mst {
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        out.push(Merge { left: ra, right: rb, dist: e.dist, size: size[ra] + size[rb] });
        size[next_label] = size[ra] + size[rb];
        parent[ra] = next_label;
        parent[rb] = next_label;
        next_label += 1;
    }
    out
}

/// Row of the condensed tree: a point (`size == 1`) or child cluster leaving `parent` at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Condensed {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

fn bfs(hierarchy: &[Merge], n: usize, root: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut frontier = vec![root];
    while !frontier.is_empty() {
        out.extend_from_slice(&frontier);
        frontier = frontier
            .iter()
            .filter(|&&x| x >= n)
            .flat_map(|&x| {
                let m = hierarchy[x - n];
                [m.left, m.right]
            })
            .collect();
    }
    out
}

fn condense(hierarchy: &[Merge], n: usize, min_cluster_size: usize) -> Vec<Condensed> {
    let root = 2 * hierarchy.len();
    let mut relabel = vec![0usize; root + 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut ignore = vec![false; root + 1];
    let mut out = Vec::new();
    let count = |x: usize| if x >= n { hierarchy[x - n].size } else { 1 };
    for node in bfs(hierarchy, n, root) {
        if ignore[node] || node < n {
            continue;
        }
        let m = hierarchy[node - n];
        let lambda = if m.dist > 0.0 { 1.0 / m.dist } else { f64::INFINITY };
        let (lc, rc) = (count(m.left), count(m.right));
        let parent = relabel[node];
        let fall_out = |sub: usize, out: &mut Vec<Condensed>, ignore: &mut Vec<bool>| {
            for s in bfs(hierarchy, n, sub) {
                if s < n {
                    out.push(Condensed { parent, child: s, lambda, size: 1 });
                }
                ignore[s] = true;
            }
        };
        if lc >= min_cluster_size && rc >= min_cluster_size {
            relabel[m.left] = next_label;
            next_label += 1;
            out.push(Condensed { parent, child: relabel[m.left], lambda, size: lc });
            relabel[m.right] = next_label;
            next_label += 1;
            out.push(Condensed { parent, child: relabel[m.right], lambda, size: rc });
        } else if lc < min_cluster_size && rc < min_cluster_size {
            fall_out(m.left, &mut out, &mut ignore);
            fall_out(m.right, &mut out, &mut ignore);
        } else if lc < min_cluster_size {
            relabel[m.right] = parent;
            fall_out(m.left, &mut out, &mut ignore);
        } else {
            relabel[m.left] = parent;
            fall_out(m.right, &mut out, &mut ignore);
        }
    }
    out
}

/// Stability per cluster id, indexed from the root id `n`.
fn stability(tree: &[Condensed], n: usize) -> Vec<f64> {
    let max_id = tree.iter().map(|r| r.parent.max(r.child)).max().unwrap_or(n);
    let mut birth = vec![f64::NAN; max_id + 1];
    for r in tree {
        birth[r.child] = r.lambda;
    }
    birth[n] = 0.0;
    let max_parent = tree.iter().map(|r| r.parent).max().unwrap_or(n);
    let mut s = vec![0.0; max_parent - n + 1];
    for r in tree {
        s[r.parent - n] += (r.lambda - birth[r.parent]) * r.size as f64;
    }
    s
}

fn select_eom(tree: &[Condensed], n: usize, allow_single_cluster: bool) -> Vec<usize> {
    let mut stab = stability(tree, n);
    let last = n + stab.len() - 1;
    let mut nodes: Vec<usize> = (n..=last).rev().collect();
    if !allow_single_cluster {
        nodes.pop();
    }
    let cluster_rows: Vec<&Condensed> = tree.iter().filter(|r| r.size > 1).collect();
    let mut is_cluster = vec![false; stab.len()];
    for &c in &nodes {
        is_cluster[c - n] = true;
    }
    for &node in &nodes {
        let children: Vec<usize> = cluster_rows.iter().filter(|r| r.parent == node).map(|r| r.child).collect();
        let subtree: f64 = children.iter().map(|&c| stab[c - n]).sum();
        if subtree > stab[node - n] {
            is_cluster[node - n] = false;
            stab[node - n] = subtree;
        } else {
            let mut stack = children;
            while let Some(c) = stack.pop() {
                is_cluster[c - n] = false;
                stack.extend(cluster_rows.iter().filter(|r| r.parent == c).map(|r| r.child));
            }
        }
    }
    (n..=last).filter(|&c| is_cluster[c - n]).collect()
}

/// Flat HDBSCAN labels: `Some(cluster)` numbered by selected-cluster order, `None` for noise.
pub fn hdbscan(points: &[[f64; 2]], params: &HdbscanParams) -> Result<Vec<Option<u32>>, ClusteringError> {
    let n = points.len();
    if params.min_cluster_size < 2 || params.min_samples < 1 {
        return Err(ClusteringError::InvalidParams("min_cluster_size must be ≥ 2 and min_samples ≥ 1".into()));
    }
    if n < params.min_cluster_size || n < params.min_samples {
        return Err(ClusteringError::TooFewPoints { needed: params.min_cluster_size.max(params.min_samples), got: n });
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(ClusteringError::NonFinite);
    }
    if points.iter().all(|p| p == &points[0]) {
        return Ok(vec![Some(0); n]);
    }

    let core = core_distances(points, params.min_samples);
    let hierarchy = single_linkage(prim_mst(points, &core), n);
    let tree = condense(&hierarchy, n, params.min_cluster_size);
    let selected = select_eom(&tree, n, params.allow_single_cluster);

    let max_id = tree.iter().map(|r| r.parent.max(r.child)).max().unwrap_or(n);
    let mut uf: Vec<usize> = (0..=max_id).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    for r in &tree {
        if !selected.contains(&r.child) {
            let (pr, cr) = (find(&mut uf, r.parent), find(&mut uf, r.child));
            uf[cr] = pr;
        }
    }
    Ok((0..n)
        .map(|i| {
            let c = find(&mut uf, i);
            if c == n && !(params.allow_single_cluster && selected == [n]) {
                None
            } else if c < n {
                None
            } else {
                selected.iter().position(|&s| s == c).map(|p| p as u32)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_linkage_chain() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        let core = core_distances(&pts, 1);
        assert_eq!(core, vec![0.0, 0.0, 0.0]);
        let h = single_linkage(prim_mst(&pts, &core), 3);
        assert_eq!(h.len(), 2);
        assert_eq!((h[0].dist, h[0].size), (1.0, 2));
        assert_eq!((h[1].dist, h[1].size), (2.0, 3));
    }

    #[test]
    fn core_distance_counts_self() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        assert_eq!(core_distances(&pts, 2), vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn identical_points_one_cluster() {
        let pts = vec![[1.0, 1.0]; 30];
        let labels = hdbscan(&pts, &HdbscanParams { min_cluster_size: 5, min_samples: 3, allow_single_cluster: false }).unwrap();
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn too_few_points() {
        let pts = vec![[0.0, 0.0], [1.0, 1.0]];
        assert!(matches!(hdbscan(&pts, &HdbscanParams::default()), Err(ClusteringError::TooFewPoints { .. })));
    }
}
