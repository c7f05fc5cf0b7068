//! Graph export: `nodes.tsv` (node_id, side, cluster_id, label, degree),
//! `edges.tsv` (problem_cluster, method_cluster, weight) and `graph.graphml`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{AtlasError, BipartiteGraph};
use crate::embedding::Side;
use crate::io::{write_atomic, Provenance};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExportedNode {
    pub side: Side,
    pub cluster: u32,
    pub label: String,
    pub degree: usize,
}

/// Weighted links and the nodes they touch after thresholding.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExportedGraph {
    pub nodes: BTreeSet<ExportedNode>,
    pub edges: BTreeMap<(u32, u32), usize>,
}

fn node_id(side: Side, cluster: u32) -> String {
    match side {
        Side::Problem => format!("P{cluster}"),
        Side::Method => format!("M{cluster}"),
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl ExportedGraph {
    /// Keep links of weight ≥ `min_edge_weight`, then drop nodes left without links.
    pub fn from_graph(graph: &BipartiteGraph, min_edge_weight: usize) -> Self {
        let edges: BTreeMap<(u32, u32), usize> =
            graph.weights().iter().filter(|(_, &w)| w >= min_edge_weight && w > 0).map(|(&k, &w)| (k, w)).collect();
        let mut degree: BTreeMap<(Side, u32), usize> = BTreeMap::new();
        for &(p, m) in edges.keys() {
            *degree.entry((Side::Problem, p)).or_insert(0) += 1;
            *degree.entry((Side::Method, m)).or_insert(0) += 1;
        }
        let nodes = degree
            .into_iter()
            .map(|((side, cluster), degree)| ExportedNode {
                side,
                cluster,
                label: graph.label(side, cluster).unwrap_or_default().to_string(),
                degree,
            })
            .collect();
        ExportedGraph { nodes, edges }
    }
}

pub fn export_graph(
    graph: &BipartiteGraph,
    min_edge_weight: usize,
    dir: &Path,
    provenance: Option<&Provenance>,
) -> Result<ExportedGraph, AtlasError> {
    let g = ExportedGraph::from_graph(graph, min_edge_weight);
    let header = provenance.map(Provenance::tsv_comment).unwrap_or_default();
    let mut nodes = header.clone();
    nodes.push_str("node_id\tside\tcluster_id\tlabel\tdegree\n");
    for n in &g.nodes {
        nodes.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            node_id(n.side, n.cluster),
            n.side,
            n.cluster,
            n.label.replace(['\t', '\n'], " "),
            n.degree
        ));
    }
    let mut edges = header;
    edges.push_str("problem_cluster\tmethod_cluster\tweight\n");
    for (&(p, m), w) in &g.edges {
        edges.push_str(&format!("{p}\t{m}\t{w}\n"));
    }
    let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    xml.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    if let Some(p) = provenance {
        xml.push_str(&format!(
            "  <!-- config_hash={} seed={} stage_version={} -->\n",
            p.config_hash, p.seed, p.stage_version
        ));
    }
    xml.push_str("  <key id=\"side\" for=\"node\" attr.name=\"side\" attr.type=\"string\"/>\n");
    xml.push_str("  <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n");
    xml.push_str("  <key id=\"degree\" for=\"node\" attr.name=\"degree\" attr.type=\"int\"/>\n");
    xml.push_str("  <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"int\"/>\n");
    xml.push_str("  <graph id=\"atlas\" edgedefault=\"undirected\">\n");
    for n in &g.nodes {
        xml.push_str(&format!(
            "    <node id=\"{}\"><data key=\"side\">{}</data><data key=\"label\">{}</data><data key=\"degree\">{}</data></node>\n",
            node_id(n.side, n.cluster),
            n.side,
            xml_escape(&n.label),
            n.degree
        ));
    }
    for (&(p, m), w) in &g.edges {
        xml.push_str(&format!(
            "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{w}</data></edge>\n",
            node_id(Side::Problem, p),
            node_id(Side::Method, m)
        ));
    }
    xml.push_str("  </graph>\n</graphml>\n");
    write_atomic(&dir.join("nodes.tsv"), nodes.as_bytes())?;
    write_atomic(&dir.join("edges.tsv"), edges.as_bytes())?;
    write_atomic(&dir.join("graph.graphml"), xml.as_bytes())?;
    Ok(g)
}

fn rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).skip(1).map(|l| l.split('\t').collect())
}

/// Read back the tabular export.
pub fn import_graph(dir: &Path) -> Result<ExportedGraph, AtlasError> {
    let bad = |m: String| AtlasError::Format(m);
    let mut g = ExportedGraph::default();
    for f in rows(&fs::read_to_string(dir.join("nodes.tsv"))?) {
        if f.len() != 5 {
            return Err(bad(format!("node row {f:?}")));
        }
        let side = match f[1] {
            "problem" => Side::Problem,
            "method" => Side::Method,
            s => return Err(bad(format!("side {s:?}"))),
        };
        g.nodes.insert(ExportedNode {
            side,
            cluster: f[2].parse().map_err(|_| bad(format!("cluster {:?}", f[2])))?,
            label: f[3].to_string(),
            degree: f[4].parse().map_err(|_| bad(format!("degree {:?}", f[4])))?,
        });
    }
    for f in rows(&fs::read_to_string(dir.join("edges.tsv"))?) {
        let num = |x: &str| x.parse::<u64>().map_err(|_| bad(format!("edge field {x:?}")));
        if f.len() != 3 {
            return Err(bad(format!("edge row {f:?}")));
        }
        g.edges.insert((num(f[0])? as u32, num(f[1])? as u32), num(f[2])? as usize);
    }
    Ok(g)
}
