//! Cluster model and its on-disk form:
//! `<side>_assignments.tsv`, `<side>_labels.tsv`, `<side>_centroids.{f32,json}`,
//! `<side>_coords.tsv` and `<side>_layout.json`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClusteringError, LayoutParams, Projection2D};
use crate::embedding::{Side, VectorTable, PROBLEM_INSTRUCTION};
use crate::io::{fmt_f64, write_atomic, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub id: u32,
    pub size: usize,
    pub label: String,
    pub label_flag: Option<String>,
    pub top_terms: Vec<String>,
    /// Mean embedding of the members.
    pub centroid: Vec<f32>,
    /// Mean 2D layout position of the members.
    pub centroid_2d: [f64; 2],
    /// Ids of clusters folded into this one by merging.
    pub merged_from: Vec<u32>,
}

/// Per-record cluster assignment (`None` is noise) for one side.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub side: Side,
    pub ids: Vec<String>,
    pub assignments: Vec<Option<u32>>,
    pub clusters: BTreeMap<u32, ClusterInfo>,
    index: HashMap<String, usize>,
}

fn centroid_2d(proj: &Projection2D, rows: &[usize]) -> [f64; 2] {
    let mut c = [0.0; 2];
    for &r in rows {
        c[0] += proj.coords[r][0];
        c[1] += proj.coords[r][1];
    }
    let n = rows.len().max(1) as f64;
    [c[0] / n, c[1] / n]
}

impl ClusterModel {
    pub fn new(side: Side, ids: Vec<String>, assignments: Vec<Option<u32>>, clusters: BTreeMap<u32, ClusterInfo>) -> Self {
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        ClusterModel { side, ids, assignments, clusters, index }
    }

    /// Build from flat assignments aligned with `proj.ids`; labels start as `N/A`.
    pub fn from_assignments(
        side: Side,
        proj: &Projection2D,
        assignments: Vec<Option<u32>>,
        vectors: &VectorTable,
    ) -> Result<Self, ClusteringError> {
        if assignments.len() != proj.len() {
            return Err(ClusteringError::Format("assignments and layout differ in length".into()));
        }
        let mut rows: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, a) in assignments.iter().enumerate() {
            if let Some(c) = a {
                rows.entry(*c).or_default().push(i);
            }
        }
        let mut clusters = BTreeMap::new();
        for (c, members) in rows {
            let mut sum = vec![0.0f64; vectors.dim];
            for &r in &members {
                let v = vectors.get(&proj.ids[r]).ok_or_else(|| {
                    ClusteringError::Format(format!("no vector for {}", proj.ids[r]))
                })?;
                for (s, &x) in sum.iter_mut().zip(v) {
                    *s += x as f64;
                }
            }
            let n = members.len() as f64;
            clusters.insert(
                c,
                ClusterInfo {
                    id: c,
                    size: members.len(),
                    label: super::NA_LABEL.into(),
                    label_flag: None,
                    top_terms: Vec::new(),
                    centroid: sum.iter().map(|s| (s / n) as f32).collect(),
                    centroid_2d: centroid_2d(proj, &members),
                    merged_from: Vec::new(),
                },
            );
        }
        Ok(ClusterModel::new(side, proj.ids.clone(), assignments, clusters))
    }

    pub fn assignment(&self, pub_id: &str) -> Option<u32> {
        self.index.get(pub_id).and_then(|&i| self.assignments[i])
    }

    pub fn contains(&self, pub_id: &str) -> bool {
        self.index.contains_key(pub_id)
    }

    pub fn label(&self, cluster: u32) -> Option<&str> {
        self.clusters.get(&cluster).map(|c| c.label.as_str())
    }

    pub fn members(&self, cluster: u32) -> Vec<&str> {
        self.ids
            .iter()
            .zip(&self.assignments)
            .filter(|(_, a)| **a == Some(cluster))
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }

    pub fn cluster_ids(&self) -> Vec<u32> {
        self.clusters.keys().copied().collect()
    }

    /// Apply a cluster-id mapping (old → surviving id) and recompute sizes and centroids.
    pub(crate) fn remap(&self, mapping: &BTreeMap<u32, u32>, proj: &Projection2D) -> ClusterModel {
        let assignments: Vec<Option<u32>> = self.assignments.iter().map(|a| a.map(|c| mapping[&c])).collect();
        let mut clusters: BTreeMap<u32, ClusterInfo> = BTreeMap::new();
        for (old, info) in &self.clusters {
            let new = mapping[old];
            match clusters.get_mut(&new) {
                None => {
                    let mut i = info.clone();
                    i.id = new;
                    clusters.insert(new, i);
                }
                Some(target) => {
                    let (a, b) = (target.size as f64, info.size as f64);
                    for (t, &x) in target.centroid.iter_mut().zip(&info.centroid) {
                        *t = ((*t as f64 * a + x as f64 * b) / (a + b)) as f32;
                    }
                    target.size += info.size;
                    target.merged_from.push(*old);
                    target.merged_from.extend(&info.merged_from);
                    target.merged_from.sort_unstable();
                }
            }
        }
        let proj_index: HashMap<&str, usize> = proj.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        for (c, info) in clusters.iter_mut() {
            let rows: Vec<usize> = self
                .ids
                .iter()
                .zip(&assignments)
                .filter(|(_, a)| **a == Some(*c))
                .filter_map(|(id, _)| proj_index.get(id.as_str()).copied())
                .collect();
            info.centroid_2d = centroid_2d(proj, &rows);
        }
        ClusterModel::new(self.side, self.ids.clone(), assignments, clusters)
    }

    pub fn write(&self, dir: &Path, provenance: Option<&Provenance>) -> Result<(), ClusteringError> {
        let side = self.side.as_str();
        let header = provenance.map(Provenance::tsv_comment).unwrap_or_default();
        let mut a = header.clone();
        a.push_str("pub_id\tside\tcluster_id\n");
        for (id, c) in self.ids.iter().zip(&self.assignments) {
            let c = c.map(|c| c.to_string()).unwrap_or_else(|| "noise".into());
            a.push_str(&format!("{id}\t{side}\t{c}\n"));
        }
        write_atomic(&dir.join(format!("{side}_assignments.tsv")), a.as_bytes())?;

        let mut l = header;
        l.push_str("cluster_id\tlabel\tsize\tx\ty\tflag\tmerged_from\ttop_terms\n");
        for c in self.clusters.values() {
            let merged: Vec<String> = c.merged_from.iter().map(u32::to_string).collect();
            l.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                c.id,
                c.label.replace(['\t', '\n'], " "),
                c.size,
                fmt_f64(c.centroid_2d[0]),
                fmt_f64(c.centroid_2d[1]),
                c.label_flag.as_deref().unwrap_or(""),
                merged.join(","),
                c.top_terms.join("; ")
            ));
        }
        write_atomic(&dir.join(format!("{side}_labels.tsv")), l.as_bytes())?;

        let dim = self.clusters.values().next().map_or(0, |c| c.centroid.len());
        let mut centroids = VectorTable::new(dim, "cluster-centroid", PROBLEM_INSTRUCTION);
        centroids.instruction_id = format!("{side}-centroid");
        centroids.instruction = String::new();
        for c in self.clusters.values() {
            centroids.push(&c.id.to_string(), &c.centroid).map_err(|e| ClusteringError::Format(e.to_string()))?;
        }
        centroids
            .write(dir, &format!("{side}_centroids"), provenance)
            .map_err(|e| ClusteringError::Format(e.to_string()))?;
        Ok(())
    }

    pub fn read(dir: &Path, side: Side) -> Result<Self, ClusteringError> {
        let s = side.as_str();
        let bad = |m: String| ClusteringError::Format(m);
        let mut ids = Vec::new();
        let mut assignments = Vec::new();
        for line in data_lines(&fs::read_to_string(dir.join(format!("{s}_assignments.tsv")))?) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("assignments row {line:?}")));
            }
            ids.push(f[0].to_string());
            assignments.push(if f[2] == "noise" {
                None
            } else {
                Some(f[2].parse().map_err(|_| bad(format!("cluster id {:?}", f[2])))?)
            });
        }
        let centroids = VectorTable::read(dir, &format!("{s}_centroids")).map_err(|e| bad(e.to_string()))?;
        let mut clusters = BTreeMap::new();
        for line in data_lines(&fs::read_to_string(dir.join(format!("{s}_labels.tsv")))?) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(bad(format!("labels row {line:?}")));
            }
            let num = |x: &str| x.parse::<f64>().map_err(|_| bad(format!("number {x:?}")));
            let id: u32 = f[0].parse().map_err(|_| bad(format!("cluster id {:?}", f[0])))?;
            let split = |x: &str, sep: &str| -> Vec<String> {
                if x.is_empty() { Vec::new() } else { x.split(sep).map(str::to_string).collect() }
            };
            clusters.insert(
                id,
                ClusterInfo {
                    id,
                    label: f[1].to_string(),
                    size: f[2].parse().map_err(|_| bad(format!("size {:?}", f[2])))?,
                    centroid_2d: [num(f[3])?, num(f[4])?],
                    label_flag: (!f[5].is_empty()).then(|| f[5].to_string()),
                    merged_from: split(f[6], ",").iter().map(|x| x.parse().unwrap_or(0)).collect(),
                    top_terms: split(f[7], "; "),
                    centroid: centroids.get(&id.to_string()).map(<[f32]>::to_vec).unwrap_or_default(),
                },
            );
        }
        Ok(ClusterModel::new(side, ids, assignments, clusters))
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).skip(1)
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    params: LayoutParams,
    objective: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl Projection2D {
    pub fn write(&self, dir: &Path, side: Side, provenance: Option<&Provenance>) -> Result<(), ClusteringError> {
        let s = side.as_str();
        let mut t = provenance.map(Provenance::tsv_comment).unwrap_or_default();
        t.push_str("pub_id\tx\ty\n");
        for (id, c) in self.ids.iter().zip(&self.coords) {
            t.push_str(&format!("{id}\t{}\t{}\n", fmt_f64(c[0]), fmt_f64(c[1])));
        }
        write_atomic(&dir.join(format!("{s}_coords.tsv")), t.as_bytes())?;
        let meta = LayoutFile { params: self.params, objective: self.objective.clone(), provenance: provenance.cloned() };
        let json = serde_json::to_vec_pretty(&meta).map_err(|e| ClusteringError::Format(e.to_string()))?;
        write_atomic(&dir.join(format!("{s}_layout.json")), &json)?;
        Ok(())
    }

    pub fn read(dir: &Path, side: Side) -> Result<Self, ClusteringError> {
        let s = side.as_str();
        let bad = |m: String| ClusteringError::Format(m);
        let meta: LayoutFile = serde_json::from_slice(&fs::read(dir.join(format!("{s}_layout.json")))?)
            .map_err(|e| bad(e.to_string()))?;
        let mut ids = Vec::new();
        let mut coords = Vec::new();
        for line in data_lines(&fs::read_to_string(dir.join(format!("{s}_coords.tsv")))?) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad(format!("coords row {line:?}")));
            }
            let num = |x: &str| x.parse::<f64>().map_err(|_| bad(format!("number {x:?}")));
            ids.push(f[0].to_string());
            coords.push([num(f[1])?, num(f[2])?]);
        }
        Ok(Projection2D { ids, coords, params: meta.params, objective: meta.objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut table = VectorTable::new(2, "t", PROBLEM_INSTRUCTION);
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            table.push(id, &[i as f32, 1.0]).unwrap();
        }
        let proj = Projection2D {
            ids: table.ids.clone(),
            coords: vec![[0.1, 0.2], [0.30000000000000004, -1.0], [1e-300, 5.0]],
            params: LayoutParams::default(),
            objective: vec![(0, 3.5), (10, 1.25)],
        };
        let mut model = ClusterModel::from_assignments(Side::Problem, &proj, vec![Some(0), Some(0), None], &table).unwrap();
        model.clusters.get_mut(&0).unwrap().label = "Protein Design".into();
        model.clusters.get_mut(&0).unwrap().top_terms = vec!["protein".into(), "design".into()];
        assert_eq!(model.clusters[&0].centroid, vec![0.5, 1.0]);
        let dir = tempfile::tempdir().unwrap();
        model.write(dir.path(), None).unwrap();
        proj.write(dir.path(), Side::Problem, None).unwrap();
        assert_eq!(ClusterModel::read(dir.path(), Side::Problem).unwrap(), model);
        assert_eq!(Projection2D::read(dir.path(), Side::Problem).unwrap(), proj);
        assert_eq!(model.assignment("c"), None);
        assert_eq!(model.assignment("b"), Some(0));
    }
}
