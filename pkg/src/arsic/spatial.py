"""Box distances, type-penalised graphs, Kruskal MSTs and threshold cutting."""
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _accel
from .errors import DisconnectedGraph, EmptyGroup, EmptySample

DEFAULT_PERCENTILE = 75.0


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    raw_distance: float
    weight: float

    def key(self):
        return (self.weight, self.a, self.b)


@dataclass(frozen=True)
class CutEdge:
    edge: Edge
    cluster_a: int
    cluster_b: int


@dataclass(frozen=True)
class Clustering:
    clusters: tuple  # tuple of sorted id tuples, ordered by smallest member
    cut_edges: tuple  # CutEdge, ordered by (cluster_a, cluster_b)

    def cluster_of(self):
        return {i: c for c, members in enumerate(self.clusters) for i in members}


@dataclass(frozen=True)
class ThresholdStats:
    threshold: float
    sample_count: int
    percentile: float
    penalty: float = None

    def to_json(self):
        doc = {"percentile": self.percentile, "threshold": self.threshold, "sample_count": self.sample_count}
        if self.penalty is not None:
            doc["penalty"] = self.penalty
        return doc

    @classmethod
    def from_json(cls, doc):
        return cls(
            threshold=float(doc["threshold"]),
            sample_count=int(doc["sample_count"]),
            percentile=float(doc["percentile"]),
            penalty=None if doc.get("penalty") is None else float(doc["penalty"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def box_distance(a, b):
    dx = max(0.0, a.min_x - b.max_x, b.min_x - a.max_x)
    dy = max(0.0, a.min_y - b.max_y, b.min_y - a.max_y)
    return math.sqrt(dx * dx + dy * dy)


def group_distance(group_a, group_b):
    """Single-linkage distance: the closest pair across the two groups."""
    group_a, group_b = list(group_a), list(group_b)
    if not group_a or not group_b:
        raise EmptyGroup("single-linkage distance needs two non-empty groups")
    return min(box_distance(x, y) for x in group_a for y in group_b)


def box_array(image):
    return np.array([o.box.as_list() for o in image.objects], dtype=np.float64).reshape(-1, 4)


def build_graph(image, penalty):
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    dist = _accel.pairwise_box_distance(box_array(image))
    labels = image.labels
    n = len(labels)
    edges = []
    for a in range(n):
        for b in range(a + 1, n):
            raw = float(dist[a, b])
            w = raw if labels[a] == labels[b] else raw + penalty
            edges.append(Edge(a, b, raw, w))
    return edges


def kruskal_mst(n, edges):
    """Minimum spanning tree, edges returned in acceptance order.

    Ties are broken by ``(weight, a, b)`` so the tree is reproducible.
    """
    if n <= 1:
        return []
    ordered = sorted(edges, key=Edge.key)
    a = np.fromiter((e.a for e in ordered), dtype=np.int64, count=len(ordered))
    b = np.fromiter((e.b for e in ordered), dtype=np.int64, count=len(ordered))
    if len(ordered) and (a.min() < 0 or max(a.max(), b.max()) >= n):
        raise ValueError("edge endpoint out of range")
    chosen = _accel.kruskal_select(n, a, b)
    if len(chosen) != n - 1:
        raise DisconnectedGraph(f"graph on {n} nodes is not connected")
    return [ordered[k] for k in chosen]


def compute_threshold(weights, percentile=DEFAULT_PERCENTILE):
    """Percentile by linear interpolation at rank ``p * (n - 1) / 100`` of the sorted sample."""
    if not 0 < percentile <= 100:
        raise ValueError("percentile must be in (0, 100]")
    sample = sorted(float(w) for w in weights)
    if not sample:
        raise EmptySample("no edge weights to take a percentile of")
    pos = percentile * (len(sample) - 1) / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(sample) - 1)
    frac = pos - lo
    value = sample[lo] + (sample[hi] - sample[lo]) * frac
    return ThresholdStats(threshold=value, sample_count=len(sample), percentile=percentile)


def cut_clusters(mst, n, threshold):
    kept = [e for e in mst if e.weight <= threshold]
    cut = [e for e in mst if e.weight > threshold]
    roots = _accel.component_labels(n, [e.a for e in kept], [e.b for e in kept])
    members = {}
    for node in range(n):
        members.setdefault(int(roots[node]), []).append(node)
    # roots are the smallest member id, so sorting roots orders clusters by smallest member
    clusters = tuple(tuple(members[r]) for r in sorted(members))
    index = {r: i for i, r in enumerate(sorted(members))}
    cut_edges = []
    for e in cut:
        ca, cb = index[int(roots[e.a])], index[int(roots[e.b])]
        cut_edges.append(CutEdge(e, min(ca, cb), max(ca, cb)))
    cut_edges.sort(key=lambda c: (c.cluster_a, c.cluster_b, c.edge.a, c.edge.b))
    return Clustering(clusters, tuple(cut_edges))


def image_mst(image, penalty):
    return kruskal_mst(len(image.objects), build_graph(image, penalty))


def estimate_penalty(images, scale=1.0):
    """Type penalty = ``scale`` times the mean raw MST edge length over the dataset."""
    lengths = [e.raw_distance for img in images for e in image_mst(img, 0.0)]
    if not lengths:
        return 0.0
    return scale * math.fsum(lengths) / len(lengths)


def dataset_threshold(images, penalty, percentile=DEFAULT_PERCENTILE):
    """First pass: pool penalised MST edge weights over all images."""
    weights = [e.weight for img in images for e in image_mst(img, penalty)]
    stats = compute_threshold(weights, percentile)
    return ThresholdStats(stats.threshold, stats.sample_count, stats.percentile, penalty)


def cluster_image(image, penalty, threshold):
    return cut_clusters(image_mst(image, penalty), len(image.objects), threshold)
