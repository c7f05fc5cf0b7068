mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sciatlas::atlas::{BipartiteGraph, GraphEdge};
use sciatlas::clustering::{ClusterInfo, ClusterModel};
use sciatlas::embedding::{embed_text, hash_provider, Side, VectorTable, METHOD_INSTRUCTION, PROBLEM_INSTRUCTION};
use sciatlas::extraction::GenClient;
use sciatlas::linkpred::*;

fn graph_from(links: &[(u32, u32)], problems: &[u32], methods: &[u32]) -> BipartiteGraph {
    let edges = links
        .iter()
        .enumerate()
        .map(|(i, &(p, m))| GraphEdge { pub_id: format!("e{i:05}"), problem: p, method: m })
        .collect();
    let pl = problems.iter().map(|&p| (p, format!("problem {p}"))).collect();
    let ml = methods.iter().map(|&m| (m, format!("method {m}"))).collect();
    BipartiteGraph::new(problems.iter().copied().collect(), methods.iter().copied().collect(), edges, pl, ml)
}

fn random_graph(rng: &mut ChaCha8Rng, max_nodes: u32, p: f64) -> BipartiteGraph {
    let np = rng.random_range(1..max_nodes / 2 + 1);
    let nm = rng.random_range(1..max_nodes - np + 1);
    let mut links = Vec::new();
    for a in 0..np {
        for b in 0..nm {
            if rng.random::<f64>() < p {
                links.push((a, b));
            }
        }
    }
    graph_from(&links, &(0..np).collect::<Vec<_>>(), &(0..nm).collect::<Vec<_>>())
}

/// Dense adjacency in problem-then-method order and Σ α^l A^l by naive products.
fn dense_katz(g: &BipartiteGraph, alpha: f64, max_len: usize) -> (Vec<(Side, u32)>, Vec<Vec<f64>>) {
    let nodes: Vec<(Side, u32)> = g
        .problem_nodes
        .iter()
        .map(|&p| (Side::Problem, p))
        .chain(g.method_nodes.iter().map(|&m| (Side::Method, m)))
        .collect();
    let n = nodes.len();
    let pos = |s: Side, id: u32| nodes.iter().position(|&x| x == (s, id)).unwrap();
    let mut a = vec![vec![0.0; n]; n];
    for &(p, m) in &g.links() {
        let (i, j) = (pos(Side::Problem, p), pos(Side::Method, m));
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    let mut power = a.clone();
    let mut out = vec![vec![0.0; n]; n];
    for l in 1..=max_len {
        let f = alpha.powi(l as i32);
        for i in 0..n {
            for j in 0..n {
                out[i][j] += f * power[i][j];
            }
        }
        let mut next = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    next[i][j] += power[i][k] * a[k][j];
                }
            }
        }
        power = next;
    }
    (nodes, out)
}

#[test]
fn katz_matches_dense_powers() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let g = random_graph(&mut rng, 30, 0.2);
        let t = katz_scores(&g, &KatzParams::default()).unwrap();
        let (nodes, dense) = dense_katz(&g, 0.1, 6);
        for (i, &a) in nodes.iter().enumerate() {
            for (j, &b) in nodes.iter().enumerate() {
                let s = t.score(a, b).unwrap();
                assert!((s - dense[i][j]).abs() <= 1e-9, "{a:?} {b:?}: {s} vs {}", dense[i][j]);
            }
        }
    }
}

#[test]
fn katz_truncation_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let g = random_graph(&mut rng, 24, 0.25);
        let dmax = g
            .problem_nodes
            .iter()
            .map(|&p| g.neighbors(Side::Problem, p).len())
            .chain(g.method_nodes.iter().map(|&m| g.neighbors(Side::Method, m).len()))
            .max()
            .unwrap_or(0) as f64;
        for l in 2..6 {
            let short = katz_scores(&g, &KatzParams { max_len: l, ..Default::default() }).unwrap();
            let long = katz_scores(&g, &KatzParams { max_len: l + 2, ..Default::default() }).unwrap();
            let bound = (0.1 * dmax).powi(l as i32 + 1);
            for i in 0..short.n() {
                for j in 0..short.n() {
                    let diff = long.at(i, j) - short.at(i, j);
                    // Tight (equality) when the maximum degree is 1.
                    let strict = dmax < 2.0 || diff < bound || diff == 0.0;
                    assert!(diff >= 0.0 && diff <= bound * (1.0 + 1e-12) && strict, "L={l}: {diff} vs {bound}");
                }
            }
        }
    }
}

#[test]
fn katz_top3_equals_oracle_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let g = random_graph(&mut rng, 30, 0.2);
        let t = katz_scores(&g, &KatzParams::default()).unwrap();
        let (nodes, dense) = dense_katz(&g, 0.1, 6);
        for &p in &g.problem_nodes {
            let i = nodes.iter().position(|&x| x == (Side::Problem, p)).unwrap();
            let mut oracle: Vec<(u32, f64, usize)> = g
                .method_nodes
                .iter()
                .map(|&m| {
                    let j = nodes.iter().position(|&x| x == (Side::Method, m)).unwrap();
                    (m, dense[i][j], g.weight(p, m))
                })
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
            let got = predict_katz(&t, &g, Side::Problem, p, 3).unwrap();
            for (r, (m, s)) in got.iter().enumerate() {
                // Scores agree to rounding; ids agree unless the oracle has a near-tie.
                assert!((s - oracle[r].1).abs() < 1e-12);
                if r + 1 < oracle.len() && (oracle[r].1 - oracle[r + 1].1).abs() > 1e-12 && (r == 0 || (oracle[r - 1].1 - oracle[r].1).abs() > 1e-12) {
                    assert_eq!(*m, oracle[r].0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn katz_relabeling_preserves_scores(seed in 0u64..1000, shift in 1u32..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, 20, 0.3);
        // Reverse the method order and shift problem ids.
        let nm = g.method_nodes.len() as u32;
        let relabel_m = |m: u32| nm - 1 - m;
        let links: Vec<(u32, u32)> = g.links().iter().map(|&(p, m)| (p + shift, relabel_m(m))).collect();
        let h = graph_from(
            &links,
            &g.problem_nodes.iter().map(|p| p + shift).collect::<Vec<_>>(),
            &g.method_nodes.iter().map(|&m| relabel_m(m)).collect::<Vec<_>>(),
        );
        let tg = katz_scores(&g, &KatzParams::default()).unwrap();
        let th = katz_scores(&h, &KatzParams::default()).unwrap();
        for &p in &g.problem_nodes {
            let a = rank_katz(&tg, &g, Side::Problem, p).unwrap();
            let b = rank_katz(&th, &h, Side::Problem, p + shift).unwrap();
            let scores_a: Vec<f64> = a.iter().map(|x| x.1).collect();
            let scores_b: Vec<f64> = b.iter().map(|x| x.1).collect();
            prop_assert_eq!(scores_a, scores_b);
            let by_id: BTreeMap<u32, f64> = b.into_iter().collect();
            for (m, s) in a {
                prop_assert_eq!(by_id[&relabel_m(m)], s);
            }
        }
    }
}

fn biclique_pair() -> BipartiteGraph {
    let mut links = Vec::new();
    for p in 0..5 {
        for m in 0..5 {
            links.push((p, m));
            links.push((p + 5, m + 5));
        }
    }
    graph_from(&links, &(0..10).collect::<Vec<_>>(), &(0..10).collect::<Vec<_>>())
}

fn small_params() -> Node2VecParams {
    Node2VecParams { dim: 32, walks_per_node: 5, walk_length: 30, window: 5, epochs: 3, ..Default::default() }
}

#[test]
fn node2vec_separates_components() {
    let e = train_node2vec(&biclique_pair(), &small_params(), 3).unwrap();
    let (mut within, mut across) = (Vec::new(), Vec::new());
    for p in 0..10u32 {
        for m in 0..10u32 {
            let c = sciatlas::embedding::cosine(e.vector(Side::Problem, p).unwrap(), e.vector(Side::Method, m).unwrap()).unwrap();
            if p / 5 == m / 5 { within.push(c) } else { across.push(c) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&within) > mean(&across), "{} vs {}", mean(&within), mean(&across));
}

#[test]
fn node2vec_ranking_is_cosine_sort() {
    let g = biclique_pair();
    let e = train_node2vec(&g, &small_params(), 1).unwrap();
    for p in 0..10u32 {
        let v = e.vector(Side::Problem, p).unwrap();
        let mut oracle: Vec<(u32, f64)> = (0..10u32)
            .map(|m| {
                let u = e.vector(Side::Method, m).unwrap();
                let dot: f64 = v.iter().zip(u).map(|(a, b)| *a as f64 * *b as f64).sum();
                let na: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = u.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
                (m, dot / (na * nb))
            })
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let got = predict_node2vec(&e, Side::Problem, p, 10).unwrap();
        assert_eq!(got.iter().map(|x| x.0).collect::<Vec<_>>(), oracle.iter().map(|x| x.0).collect::<Vec<_>>());
        assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
    }
    assert!(matches!(predict_node2vec(&e, Side::Method, 99, 3), Err(LinkPredError::UnknownSource { .. })));
}

#[test]
fn node2vec_order_preserving_relabel_is_identical() {
    let g = biclique_pair();
    let links: Vec<(u32, u32)> = g.links().iter().map(|&(p, m)| (3 * p + 1, 2 * m + 7)).collect();
    let h = graph_from(&links, &(0..10).map(|p| 3 * p + 1).collect::<Vec<_>>(), &(0..10).map(|m| 2 * m + 7).collect::<Vec<_>>());
    let a = train_node2vec(&g, &small_params(), 2).unwrap();
    let b = train_node2vec(&h, &small_params(), 2).unwrap();
    assert_eq!(a.data, b.data);
    for p in 0..10u32 {
        let ra: Vec<u32> = rank_node2vec(&a, Side::Problem, p).unwrap().iter().map(|x| 2 * x.0 + 7).collect();
        let rb: Vec<u32> = rank_node2vec(&b, Side::Problem, 3 * p + 1).unwrap().iter().map(|x| x.0).collect();
        assert_eq!(ra, rb);
    }
}

#[test]
fn full_k_recalls_everything() {
    let split = synthetic::BlockModel { per_side: 6, ..Default::default() }.sample(3);
    let e = train_node2vec(&split.train, &small_params(), 0).unwrap();
    for d in Direction::BOTH {
        let n = split.train.nodes(d.target_side()).len();
        let m = split.evaluate(d, n, |s| rank_node2vec(&e, d.source_side(), s).unwrap());
        assert_eq!(m.recall, 1.0);
    }
}

fn info(id: u32, label: &str, centroid: Vec<f32>) -> ClusterInfo {
    ClusterInfo {
        id,
        size: 1,
        label: label.into(),
        label_flag: None,
        top_terms: vec![],
        centroid,
        centroid_2d: [0.0, 0.0],
        merged_from: vec![],
    }
}

#[test]
fn mapping_to_clusters() {
    let provider = hash_provider(4);
    let texts = ["graph neural networks", "random forests", "convolutional filters"];
    let clusters: BTreeMap<u32, ClusterInfo> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| (i as u32 + 10, info(i as u32 + 10, t, embed_text(&provider, METHOD_INSTRUCTION, t).unwrap().values)))
        .collect();
    let model = ClusterModel::new(Side::Method, vec![], vec![], clusters.clone());
    // A sole member's own text maps back to its cluster.
    for (i, t) in texts.iter().enumerate() {
        assert_eq!(map_generation_to_cluster(t, &model, &provider).unwrap().0, i as u32 + 10);
    }
    // Linear-scan oracle on other texts.
    for q in ["graph forests", "neural filters", "random graph convolutional networks"] {
        let v = embed_text(&provider, METHOD_INSTRUCTION, q).unwrap().values;
        let best = clusters
            .values()
            .map(|c| (c.id, sciatlas::embedding::cosine(&v, &c.centroid).unwrap()))
            .fold((u32::MAX, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
        assert_eq!(map_generation_to_cluster(q, &model, &provider).unwrap(), best);
    }
    // Identical centroids tie; the lowest id wins.
    let c = embed_text(&provider, METHOD_INSTRUCTION, "anything").unwrap().values;
    let tied = ClusterModel::new(
        Side::Method,
        vec![],
        vec![],
        BTreeMap::from([(7, info(7, "a", c.clone())), (3, info(3, "b", c.clone())), (5, info(5, "c", c))]),
    );
    assert_eq!(map_generation_to_cluster("other words", &tied, &provider).unwrap().0, 3);
}

#[test]
fn llm_graph_with_mock_returns_heaviest_neighbors() {
    // Problem 0 links methods 2 (x3), 1 (x2), 4 (x1).
    let links = [(0, 2), (0, 2), (0, 2), (0, 1), (0, 1), (0, 4), (1, 3)];
    let g = graph_from(&links, &[0, 1], &[1, 2, 3, 4]);
    let model = common::model(Side::Method, &[("a", Some(1)), ("b", Some(2)), ("c", Some(3)), ("d", Some(4))]);
    let provider = hash_provider(0);
    let out = predict_llm_graph(&GenClient::mock(), &g, Direction::SciToAi, 0, 3, &model, &provider).unwrap();
    assert_eq!(out.mapped, vec![2, 1, 4]);
    let two = predict_llm_graph(&GenClient::mock(), &g, Direction::SciToAi, 0, 2, &model, &provider).unwrap();
    assert_eq!(two.mapped, vec![2, 1]);
    // Method 3 only links problem 1; the remaining candidate pads the list.
    let back = predict_llm_graph(&GenClient::mock(), &g, Direction::AiToSci, 3, 3, &model, &provider).unwrap();
    assert!(back.mapped.len() <= 3);
    assert_eq!(back.mapped[0], 1);
    let unique: BTreeSet<u32> = back.mapped.iter().copied().collect();
    assert_eq!(unique.len(), back.mapped.len());
}

#[test]
fn imitation_nearest_records() {
    let mut set = Vec::new();
    let mut table = VectorTable::new(2, "t", PROBLEM_INSTRUCTION);
    for (id, v, method) in [("b", [1.0, 0.0], "Method B"), ("a", [1.0, 0.0], "Method A"), ("c", [0.0, 1.0], "Method C")] {
        let mut r = common::record(id, true);
        r.method_keyphrase = Some(method.into());
        r.usage = Some(format!("usage {id}"));
        set.push(r);
        table.push(id, &v).unwrap();
    }
    let records = common::extraction_set(set);
    let one = imitation_baseline(&table, &records, &[0.0, 1.0], 1, Direction::SciToAi).unwrap();
    assert_eq!(one[0].text, "Method C, usage c");
    // Duplicate vectors come back in id order.
    let two = imitation_baseline(&table, &records, &[1.0, 0.0], 2, Direction::SciToAi).unwrap();
    assert_eq!(two.iter().map(|p| p.pub_id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
    let back = imitation_baseline(&table, &records, &[1.0, 0.0], 1, Direction::AiToSci).unwrap();
    assert_eq!(back[0].text, "problem a, usage a");
}

#[test]
fn generative_runs_offline_with_mock() {
    let provider = hash_provider(1);
    let ids: Vec<String> = (0..8).map(|i| format!("r{i}")).collect();
    let recs: Vec<_> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut r = common::record(id, true);
            r.method_keyphrase = Some(if i % 2 == 0 { "Graph Neural Networks" } else { "Random Forests" }.into());
            r
        })
        .collect();
    let set = common::extraction_set(recs.clone());
    let embed_side = |side: Side| {
        let mut t = VectorTable::new(provider.dim(), provider.provider_id(), side.instruction());
        for r in &recs {
            let text = if side == Side::Problem { r.problem_text() } else { r.method_text() }.unwrap();
            t.push(&r.pub_id, &embed_text(&provider, side.instruction(), &text).unwrap().values).unwrap();
        }
        t
    };
    let (pv, mv) = (embed_side(Side::Problem), embed_side(Side::Method));
    let assign = |f: fn(usize) -> u32| ids.iter().enumerate().map(|(i, id)| (id.as_str(), Some(f(i)))).collect::<Vec<_>>();
    let mut pm = common::model(Side::Problem, &assign(|i| (i % 3) as u32));
    let mut mm = common::model(Side::Method, &assign(|i| (i % 2) as u32));
    for m in [&mut pm, &mut mm] {
        let side = m.side;
        let vt = if side == Side::Problem { &pv } else { &mv };
        for c in m.clusters.values_mut() {
            c.centroid = vt.get(&format!("r{}", c.id)).unwrap().to_vec();
        }
    }
    let train_ids: BTreeSet<String> = ids[..6].iter().cloned().collect();
    let (train_graph, _) = sciatlas::atlas::build_bipartite(&set, &pm, &mm, Some(&train_ids));
    let view = TrainView {
        graph: &train_graph,
        extractions: &set,
        train_ids: &train_ids,
        problem_model: &pm,
        method_model: &mm,
        problem_vectors: &pv,
        method_vectors: &mv,
    };
    let queries: Vec<_> = ids[6..].iter().map(|id| set.get(id).unwrap()).collect();
    let client = GenClient::mock();
    for d in Direction::BOTH {
        let rag = rag_run(&client, &provider, &view, &queries, d, RagRunParams { k: 3, n_examples: 2 }).unwrap();
        assert_eq!(rag.predictions.len(), 2);
        assert!(rag.predictions.iter().all(|p| p.texts.len() == 3 && !p.targets.is_empty()));
        rag.validate().unwrap();
        let graph = graph_run(&client, &provider, &view, d, 2).unwrap();
        graph.validate().unwrap();
        assert!(graph.predictions.iter().all(|p| p.targets.len() <= 2));
        let imit = imitation_run(&provider, &view, &queries, d, 3).unwrap();
        imit.validate().unwrap();
        assert!(imit.predictions.iter().all(|p| p.texts.len() == 3));
        let bytes = rag.to_jsonl(None);
        assert_eq!(PredictionRun::from_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap(), rag);
    }
    assert_eq!(provider.provider_id(), "hash64-seed1");
}

#[test]
fn structural_runs_exclude_source_and_respect_k() {
    let split = synthetic::BlockModel { per_side: 8, ..Default::default() }.sample(2);
    let t = katz_scores(&split.train, &KatzParams::default()).unwrap();
    let e = train_node2vec(&split.train, &small_params(), 0).unwrap();
    for d in Direction::BOTH {
        for run in [katz_run(&t, &split.train, d, 5).unwrap(), node2vec_run(&e, d, 5).unwrap()] {
            run.validate().unwrap();
            assert_eq!(run.predictions.len(), 16);
            assert!(run.predictions.iter().all(|p| p.targets.len() == 5));
        }
    }
}
