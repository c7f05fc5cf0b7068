//! LargeVis-style 2D layout: perplexity-calibrated kNN graph, then edge-sampling
//! SGD with negative sampling on the objective
//! `Σ w_ij log f(d_ij) + γ Σ_neg log(1 - f(d_ik))`, with `f(d) = 1 / (1 + d²)`.

use std::collections::{BTreeMap, HashMap};

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Serialize};

use super::knn::{knn, Points};
use super::ClusteringError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub n_neighbors: usize,
    pub n_negative_samples: usize,
    /// Weight of the negative term.
    pub gamma: f64,
    pub learning_rate: f64,
    /// One epoch draws as many edge samples as the graph has directed edges.
    pub n_epochs: usize,
    pub perplexity: f64,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            n_neighbors: 15,
            n_negative_samples: 5,
            gamma: 7.0,
            learning_rate: 1.0,
            n_epochs: 200,
            perplexity: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub params: LayoutParams,
    /// `(epoch, loss)` checkpoints; loss is the negated, weight-normalized objective
    /// over a fixed evaluation sample of negatives.
    pub objective: Vec<(usize, f64)>,
}

impl Projection2D {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.objective.first().map(|x| x.1)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.objective.last().map(|x| x.1)
    }

    /// Diagonal of the axis-aligned bounding box.
    pub fn bbox_diagonal(&self) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for c in &self.coords {
            for a in 0..2 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        if self.coords.is_empty() {
            return 0.0;
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }
}

/// Symmetrized edge weights from per-point perplexity calibration.
fn calibrated_edges(graph: &[Vec<(f64, usize)>], perplexity: f64) -> Vec<(usize, usize, f64)> {
    let target = perplexity.ln();
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, row) in graph.iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let d0 = row[0].0;
        let shifted: Vec<f64> = row.iter().map(|&(d, _)| d - d0).collect();
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        let mut probs = vec![0.0; row.len()];
        for _ in 0..200 {
            let mut sum = 0.0;
            for (p, &d) in probs.iter_mut().zip(&shifted) {
                *p = (-beta * d).exp();
                sum += *p;
            }
            let mut entropy = 0.0;
            for (p, &d) in probs.iter_mut().zip(&shifted) {
                *p /= sum;
                entropy += beta * d * *p;
            }
            entropy += sum.ln();
            let gap = entropy - target;
            if gap.abs() < 1e-5 {
                break;
            }
            if gap > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        for (&(_, j), &p) in row.iter().zip(&probs) {
            *sym.entry((i.min(j), i.max(j))).or_insert(0.0) += p;
        }
    }
    let mut edges = Vec::with_capacity(sym.len() * 2);
    for ((a, b), w) in sym {
        if w > 0.0 {
            edges.push((a, b, w));
            edges.push((b, a, w));
        }
    }
    edges
}

fn clip(x: f64) -> f64 {
    x.clamp(-5.0, 5.0)
}

struct Objective {
    samples: Vec<(usize, usize, f64, Vec<usize>)>,
    gamma: f64,
    total_weight: f64,
}

impl Objective {
    fn loss(&self, y: &[[f64; 2]]) -> f64 {
        let sq = |a: usize, b: usize| (y[a][0] - y[b][0]).powi(2) + (y[a][1] - y[b][1]).powi(2);
        let mut obj = 0.0;
        for (i, j, w, negs) in &self.samples {
            obj += w * (-(1.0 + sq(*i, *j)).ln());
            for &k in negs {
                let d2 = sq(*i, k);
                // log(1 - 1/(1+d²)) = log(d² / (1 + d²)), floored to keep coincident points finite.
                obj += self.gamma * w * (d2.max(1e-12) / (1.0 + d2)).ln();
            }
        }
        -obj / self.total_weight
    }
}

/// Lay out `points` in 2D. Bitwise-identical rows receive identical coordinates.
pub fn largevis(points: Points<'_>, ids: &[String], params: &LayoutParams) -> Result<Projection2D, ClusteringError> {
    let n = points.len();
    if n < params.n_neighbors + 1 {
        return Err(ClusteringError::TooFewPoints { needed: params.n_neighbors + 1, got: n });
    }
    if points.data.iter().any(|x| !x.is_finite()) {
        return Err(ClusteringError::NonFinite);
    }

    let mut unique_of = Vec::with_capacity(n);
    let mut first: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        let key: Vec<u32> = points.row(i).iter().map(|x| x.to_bits()).collect();
        let u = *first.entry(key).or_insert_with(|| {
            reps.push(i);
            reps.len() - 1
        });
        unique_of.push(u);
    }
    let u = reps.len();
    let mut rep_data = Vec::with_capacity(u * points.dim);
    for &r in &reps {
        rep_data.extend_from_slice(points.row(r));
    }
    let rep_points = Points { data: &rep_data, dim: points.dim };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut y: Vec<[f64; 2]> = (0..u)
        .map(|_| [(rng.random::<f64>() - 0.5) * 1e-4, (rng.random::<f64>() - 0.5) * 1e-4])
        .collect();
    let mut objective = Vec::new();

    if u > 1 {
        let k = params.n_neighbors.min(u - 1);
        let graph = knn(rep_points, k, params.seed);
        let edges = calibrated_edges(&graph, params.perplexity);
        let mut degree = vec![0.0f64; u];
        for &(i, _, w) in &edges {
            degree[i] += w;
        }
        let edge_dist = WeightedAliasIndex::new(edges.iter().map(|e| e.2).collect::<Vec<_>>())
            .map_err(|e| ClusteringError::Layout(e.to_string()))?;
        let noise_dist = WeightedAliasIndex::new(degree.iter().map(|d| d.powf(0.75)).collect::<Vec<_>>())
            .map_err(|e| ClusteringError::Layout(e.to_string()))?;

        let mut eval_rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
        let samples = edges
            .iter()
            .map(|&(i, j, w)| {
                let negs = (0..params.n_negative_samples)
                    .map(|_| noise_dist.sample(&mut eval_rng))
                    .filter(|&k| k != i && k != j)
                    .collect();
                (i, j, w, negs)
            })
            .collect();
        let eval = Objective { samples, gamma: params.gamma, total_weight: edges.iter().map(|e| e.2).sum() };
        objective.push((0, eval.loss(&y)));

        let per_epoch = edges.len();
        let total = (params.n_epochs * per_epoch) as f64;
        let checkpoint = (params.n_epochs / 20).max(1);
        let mut t = 0usize;
        for epoch in 1..=params.n_epochs {
            for _ in 0..per_epoch {
                let rho = params.learning_rate * (1.0 - t as f64 / total).max(1e-4);
                t += 1;
                let (i, j, _) = edges[edge_dist.sample(&mut rng)];
                let mut acc = [0.0f64; 2];
                let diff = [y[i][0] - y[j][0], y[i][1] - y[j][1]];
                let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                let g = -2.0 / (1.0 + d2);
                for c in 0..2 {
                    let gc = clip(g * diff[c]);
                    acc[c] += gc;
                    y[j][c] -= rho * gc;
                }
                for _ in 0..params.n_negative_samples {
                    let k = noise_dist.sample(&mut rng);
                    if k == i || k == j {
                        continue;
                    }
                    let diff = [y[i][0] - y[k][0], y[i][1] - y[k][1]];
                    let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                    let g = 2.0 * params.gamma / ((0.1 + d2) * (1.0 + d2));
                    for c in 0..2 {
                        let gc = clip(g * diff[c]);
                        acc[c] += gc;
                        y[k][c] -= rho * gc;
                    }
                }
                for c in 0..2 {
                    y[i][c] += rho * acc[c];
                }
            }
            if epoch % checkpoint == 0 || epoch == params.n_epochs {
                objective.push((epoch, eval.loss(&y)));
            }
        }
    } else {
        y[0] = [0.0, 0.0];
    }

    Ok(Projection2D {
        ids: ids.to_vec(),
        coords: unique_of.iter().map(|&r| y[r]).collect(),
        params: *params,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_weights_are_normalized_per_row() {
        let graph = vec![vec![(1.0, 1), (4.0, 2)], vec![(1.0, 0), (1.0, 2)], vec![(1.0, 1), (4.0, 0)]];
        let edges = calibrated_edges(&graph, 1.5);
        let total: f64 = edges.iter().map(|e| e.2).sum();
        // Each row contributes probability mass 1, counted in both directions.
        assert!((total - 6.0).abs() < 1e-9);
    }

    #[test]
    fn two_points() {
        let data = [1.0f32, 0.0, 0.0, 1.0];
        let ids = vec!["a".to_string(), "b".to_string()];
        let p = LayoutParams { n_neighbors: 1, n_epochs: 5, ..Default::default() };
        let proj = largevis(Points { data: &data, dim: 2 }, &ids, &p).unwrap();
        assert!(proj.coords.iter().all(|c| c[0].is_finite() && c[1].is_finite()));
    }
}
