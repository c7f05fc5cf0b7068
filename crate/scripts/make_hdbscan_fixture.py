"""Freeze scikit-learn HDBSCAN memberships for small 2D point sets.

scikit-learn orders MST edges with numpy's unstable argsort, so points whose
mutual-reachability edges tie can land in different clusters depending on the
CPU's sort kernel. The frozen labels run scikit-learn's own MST, single-linkage
and labelling routines with a stable edge sort; the public-API labels are kept
alongside for comparison.
"""
import json
import sys

import numpy as np
import sklearn
from sklearn.cluster import HDBSCAN
from sklearn.cluster._hdbscan._linkage import make_single_linkage, mst_from_data_matrix
from sklearn.cluster._hdbscan._tree import tree_to_labels
from sklearn.metrics import DistanceMetric
from sklearn.neighbors import NearestNeighbors


def stable_labels(points, mcs, ms):
    core = NearestNeighbors(n_neighbors=ms).fit(points).kneighbors(points, ms)[0][:, -1].copy()
    mst = mst_from_data_matrix(points, core, DistanceMetric.get_metric("euclidean"), 1.0)
    mst = mst[np.argsort(mst["distance"], kind="stable")]
    labels, _ = tree_to_labels(make_single_linkage(mst), mcs)
    return labels


def case(name, points, mcs, ms):
    public = HDBSCAN(min_cluster_size=mcs, min_samples=ms, algorithm="kd_tree").fit(points).labels_
    labels = stable_labels(np.ascontiguousarray(points), mcs, ms)
    return {
        "name": name,
        "min_cluster_size": mcs,
        "min_samples": ms,
        "points": [[float(x), float(y)] for x, y in points],
        "labels": [int(l) for l in labels],
        "public_api_labels": [int(l) for l in public],
    }


def main(out):
    rng = np.random.default_rng(20240611)
    centers = np.array([[0.0, 0.0], [4.0, 1.0], [1.5, 5.0]])
    blobs = np.vstack([c + rng.normal(scale=s, size=(n, 2)) for c, s, n in zip(centers, [0.6, 0.9, 0.4], [70, 60, 50])])
    noise = rng.uniform(-3, 8, size=(20, 2))
    mixed = np.vstack([blobs, noise])
    uniform20 = rng.uniform(0, 1, size=(20, 2))
    uneven = np.vstack([rng.normal(scale=0.3, size=(120, 2)), [6, 6] + rng.normal(scale=1.5, size=(80, 2))])
    cases = [
        case("mixed200_m15_s5", mixed, 15, 5),
        case("mixed200_m25_s10", mixed, 25, 10),
        case("mixed200_m8_s3", mixed, 8, 3),
        case("uneven200_m10_s10", uneven, 10, 10),
        case("uniform20_m15_s5", uniform20, 15, 5),
        case("uniform20_m15_s15", uniform20, 15, 15),
    ]
    with open(out, "w") as f:
        json.dump({"reference": f"scikit-learn {sklearn.__version__}", "cases": cases}, f)
        f.write("\n")
    for c in cases:
        ls = c["labels"]
        diff = sum(a != b for a, b in zip(ls, c["public_api_labels"]))
        print(c["name"], "clusters", len(set(ls) - {-1}), "noise", ls.count(-1), "differs from public API at", diff)


if __name__ == "__main__":
    main(sys.argv[1])
