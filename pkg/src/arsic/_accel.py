"""Numeric kernels for the spatial stage.

Each kernel has a pure-numpy implementation (``*_np``) and, when numba is
importable, a jitted twin (``*_nb``). The public names point at the jitted
version unless ``ARSIC_DISABLE_NUMBA`` is set to a truthy value, in which
case the numpy path is used everywhere. Both paths must return identical
results; ``tests/test_accel.py`` holds them to that.
"""
import os

import numpy as np

_DISABLE = os.environ.get("ARSIC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

BACKEND = "numba" if (HAVE_NUMBA and not _DISABLE) else "numpy"


def pairwise_box_distance_np(boxes):
    """Closest-point Euclidean distance between every pair of AABBs.

    ``boxes`` is an (n, 4) array of ``min_x, min_y, max_x, max_y``.
    """
    b = np.asarray(boxes, dtype=np.float64)
    dx = np.maximum(0.0, np.maximum(b[:, None, 0] - b[None, :, 2], b[None, :, 0] - b[:, None, 2]))
    dy = np.maximum(0.0, np.maximum(b[:, None, 1] - b[None, :, 3], b[None, :, 1] - b[:, None, 3]))
    return np.sqrt(dx * dx + dy * dy)


def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def kruskal_select_np(n, a, b):
    """Return the indices of edges accepted by Kruskal's algorithm.

    Edges must already be sorted by the caller's tie-breaking key.
    """
    parent = list(range(n))
    rank = [0] * n
    chosen = []
    for k in range(len(a)):
        ra = _find(parent, int(a[k]))
        rb = _find(parent, int(b[k]))
        if ra == rb:
            continue
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1
        chosen.append(k)
        if len(chosen) == n - 1:
            break
    return np.asarray(chosen, dtype=np.int64)


def component_labels_np(n, a, b):
    """Label each node with the smallest node id of its connected component."""
    parent = list(range(n))
    for k in range(len(a)):
        ra = _find(parent, int(a[k]))
        rb = _find(parent, int(b[k]))
        if ra != rb:
            # smaller id always becomes the root
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    return np.asarray([_find(parent, i) for i in range(n)], dtype=np.int64)


if HAVE_NUMBA:

    @njit(cache=True)
    def pairwise_box_distance_nb(boxes):
        n = boxes.shape[0]
        out = np.zeros((n, n), dtype=np.float64)
        for i in range(n):
            for j in range(i + 1, n):
                dx = max(0.0, max(boxes[i, 0] - boxes[j, 2], boxes[j, 0] - boxes[i, 2]))
                dy = max(0.0, max(boxes[i, 1] - boxes[j, 3], boxes[j, 1] - boxes[i, 3]))
                d = np.sqrt(dx * dx + dy * dy)
                out[i, j] = d
                out[j, i] = d
        return out

    @njit(cache=True)
    def _find_nb(parent, i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    @njit(cache=True)
    def kruskal_select_nb(n, a, b):
        parent = np.arange(n)
        rank = np.zeros(n, dtype=np.int64)
        chosen = np.empty(max(n - 1, 0), dtype=np.int64)
        m = 0
        for k in range(a.shape[0]):
            if m == n - 1:
                break
            ra = _find_nb(parent, a[k])
            rb = _find_nb(parent, b[k])
            if ra == rb:
                continue
            if rank[ra] < rank[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            if rank[ra] == rank[rb]:
                rank[ra] += 1
            chosen[m] = k
            m += 1
        return chosen[:m]

    @njit(cache=True)
    def component_labels_nb(n, a, b):
        parent = np.arange(n)
        for k in range(a.shape[0]):
            ra = _find_nb(parent, a[k])
            rb = _find_nb(parent, b[k])
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            out[i] = _find_nb(parent, i)
        return out


def _as_boxes(boxes):
    return np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)


def _as_ids(x):
    return np.ascontiguousarray(x, dtype=np.int64).reshape(-1)


def pairwise_box_distance(boxes):
    boxes = _as_boxes(boxes)
    if BACKEND == "numba":
        return pairwise_box_distance_nb(boxes)
    return pairwise_box_distance_np(boxes)


def kruskal_select(n, a, b):
    if BACKEND == "numba":
        return kruskal_select_nb(int(n), _as_ids(a), _as_ids(b))
    return kruskal_select_np(int(n), _as_ids(a), _as_ids(b))


def component_labels(n, a, b):
    if BACKEND == "numba":
        return component_labels_nb(int(n), _as_ids(a), _as_ids(b))
    return component_labels_np(int(n), _as_ids(a), _as_ids(b))


def warm_up():
    """Trigger JIT compilation once, e.g. before a worker pool starts."""
    boxes = np.array([[0.0, 0.0, 1.0, 1.0], [2.0, 0.0, 3.0, 1.0]])
    pairwise_box_distance(boxes)
    kruskal_select(2, [0], [1])
    component_labels(2, [0], [1])
