use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sciatlas::clustering::knn::Points;
use sciatlas::clustering::largevis::largevis;
use sciatlas::clustering::{adjusted_rand_index, cluster_hdbscan, same_partition, HdbscanParams, LayoutParams};

fn params(mcs: usize, ms: usize) -> HdbscanParams {
    HdbscanParams { min_cluster_size: mcs, min_samples: ms, allow_single_cluster: false }
}

fn as_ints(labels: &[Option<u32>]) -> Vec<i64> {
    labels.iter().map(|l| l.map_or(-1, i64::from)).collect()
}

#[test]
fn memberships_match_reference_implementation() {
    let fixture: serde_json::Value =
        serde_json::from_str(include_str!("fixtures/hdbscan_reference.json")).unwrap();
    for case in fixture["cases"].as_array().unwrap() {
        let points: Vec<[f64; 2]> = case["points"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| [p[0].as_f64().unwrap(), p[1].as_f64().unwrap()])
            .collect();
        let want: Vec<i64> = case["labels"].as_array().unwrap().iter().map(|l| l.as_i64().unwrap()).collect();
        let p = params(
            case["min_cluster_size"].as_u64().unwrap() as usize,
            case["min_samples"].as_u64().unwrap() as usize,
        );
        let got = as_ints(&cluster_hdbscan(&points, &p).unwrap());
        let noise_match = got.iter().zip(&want).all(|(g, w)| (*g == -1) == (*w == -1));
        let diffs: Vec<(usize, i64, i64)> =
            got.iter().zip(&want).enumerate().filter(|(_, (g, w))| g != w).map(|(i, (g, w))| (i, *g, *w)).collect();
        assert!(noise_match && same_partition(&got, &want), "{}: (index, got, want) {diffs:?}", case["name"]);
    }
}

fn blobs(seed: u64, centers: &[[f64; 2]], sigma: f64, per: usize) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            pts.push([center[0] + normal.sample(&mut rng), center[1] + normal.sample(&mut rng)]);
            truth.push(c);
        }
    }
    (pts, truth)
}

#[test]
fn planted_blobs_recovered() {
    let (pts, truth) = blobs(11, &[[0.0, 0.0], [10.0, 0.0]], 0.1, 100);
    let labels = cluster_hdbscan(&pts, &params(25, 10)).unwrap();
    let distinct: std::collections::BTreeSet<_> = labels.iter().flatten().collect();
    assert_eq!(distinct.len(), 2);
    assert!(adjusted_rand_index(&as_ints(&labels), &truth) >= 0.95);
}

#[test]
fn uniform_scatter_never_splits() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<[f64; 2]> = (0..20).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let labels = cluster_hdbscan(&pts, &params(15, 5)).unwrap();
        let distinct: std::collections::BTreeSet<_> = labels.iter().flatten().collect();
        assert!(distinct.len() <= 1, "seed {seed}");
    }
}

#[test]
fn single_blob_single_cluster() {
    let (pts, _) = blobs(5, &[[0.0, 0.0]], 1.0, 150);
    let p = HdbscanParams { min_cluster_size: 25, min_samples: 1, allow_single_cluster: true };
    let labels = cluster_hdbscan(&pts, &p).unwrap();
    assert!(labels.iter().all(|l| *l == Some(0)), "{labels:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clusters_respect_min_size(seed in 0u64..1000, mcs in 5usize..20, ms in 1usize..8) {
        let (pts, _) = blobs(seed, &[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]], 0.7, 40);
        let labels = cluster_hdbscan(&pts, &params(mcs, ms)).unwrap();
        let mut sizes = std::collections::BTreeMap::new();
        for l in labels.iter().flatten() {
            *sizes.entry(*l).or_insert(0usize) += 1;
        }
        prop_assert!(sizes.values().all(|&s| s >= mcs));
    }

    // With min_samples = 1 all mutual-reachability distances are plain distances,
    // so the hierarchy has no tied merges and must not depend on input order.
    #[test]
    fn reindexing_only_relabels(seed in 0u64..1000, mcs in 5usize..20) {
        let (pts, _) = blobs(seed, &[[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]], 0.7, 40);
        let labels = as_ints(&cluster_hdbscan(&pts, &params(mcs, 1)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 77);
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<[f64; 2]> = perm.iter().map(|&i| pts[i]).collect();
        let relabels = as_ints(&cluster_hdbscan(&shuffled, &params(mcs, 1)).unwrap());
        let original: Vec<i64> = perm.iter().map(|&i| labels[i]).collect();
        prop_assert!(same_partition(&relabels, &original));
        prop_assert!(relabels.iter().zip(&original).all(|(a, b)| (*a == -1) == (*b == -1)));
    }
}

fn layout_blobs(seed: u64) -> (Vec<f32>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 0.05).unwrap();
    let mut data = Vec::new();
    let mut ids = Vec::new();
    for blob in 0..2 {
        for k in 0..50 {
            let mut v = [0.0f32; 16];
            v[blob * 8] = 1.0;
            for x in &mut v {
                *x += normal.sample(&mut rng);
            }
            data.extend_from_slice(&v);
            ids.push(format!("b{blob}-{k}"));
        }
    }
    (data, ids)
}

fn mean_dist(c: &[[f64; 2]], pairs: impl Iterator<Item = (usize, usize)>) -> f64 {
    let d: Vec<f64> = pairs.map(|(i, j)| ((c[i][0] - c[j][0]).powi(2) + (c[i][1] - c[j][1]).powi(2)).sqrt()).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

#[test]
fn layout_separates_blobs_and_lowers_loss() {
    let (data, ids) = layout_blobs(3);
    let p = LayoutParams { seed: 9, ..Default::default() };
    let proj = largevis(Points { data: &data, dim: 16 }, &ids, &p).unwrap();
    let intra = mean_dist(&proj.coords, (0..100).flat_map(|i| (0..100).map(move |j| (i, j))).filter(|(i, j)| i < j && (i / 50 == j / 50)));
    let inter = mean_dist(&proj.coords, (0..50).flat_map(|i| (50..100).map(move |j| (i, j))));
    assert!(inter > intra, "inter {inter} intra {intra}");
    assert!(proj.final_loss().unwrap() < proj.initial_loss().unwrap());
    let again = largevis(Points { data: &data, dim: 16 }, &ids, &p).unwrap();
    assert_eq!(again, proj);
}

#[test]
fn identical_vectors_coincide() {
    let data = vec![0.5f32, 0.5, 0.5, 0.5, 0.5, 0.5];
    let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
    let p = LayoutParams { n_neighbors: 2, n_epochs: 10, ..Default::default() };
    let proj = largevis(Points { data: &data, dim: 2 }, &ids, &p).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let d = ((proj.coords[i][0] - proj.coords[j][0]).powi(2) + (proj.coords[i][1] - proj.coords[j][1]).powi(2)).sqrt();
            assert!(d < 1e-12);
        }
    }
}

#[test]
fn layout_rejects_bad_input() {
    let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
    let p = LayoutParams::default();
    assert!(largevis(Points { data: &[0.0; 6], dim: 2 }, &ids, &p).is_err());
    let p = LayoutParams { n_neighbors: 2, ..Default::default() };
    assert!(largevis(Points { data: &[0.0, 1.0, f32::NAN, 0.0, 1.0, 1.0], dim: 2 }, &ids, &p).is_err());
}
