"""Independent reference computations used to check the package.

Nothing here imports the code under test.
"""
import itertools
import math
from collections import Counter
from functools import lru_cache

import numpy as np


# box distance: shapely for overlap, dense boundary sampling otherwise


def _segments(box):
    x0, y0, x1, y1 = box
    return [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))]


def _point_to_segments(px, py, segs):
    best = np.full(px.shape, np.inf)
    for (ax, ay), (bx, by) in segs:
        vx, vy = bx - ax, by - ay
        ll = vx * vx + vy * vy
        t = np.zeros_like(px) if ll == 0 else np.clip(((px - ax) * vx + (py - ay) * vy) / ll, 0.0, 1.0)
        best = np.minimum(best, np.hypot(px - (ax + t * vx), py - (ay + t * vy)))
    return best


def boxes_overlap(a, b):
    from shapely.geometry import box as shp_box

    return shp_box(*a).intersects(shp_box(*b))


def sampled_box_distance(a, b, samples=512):
    """Minimum over densely sampled boundary points of ``a`` of their distance to ``b``'s edges.

    Each side of ``a`` is sampled coarsely, then resampled around its best
    point; distance to a convex set is convex along a segment, so the
    refined window always brackets that side's minimum.
    """
    if boxes_overlap(a, b):
        return 0.0
    segs_b = _segments(b)
    best = np.inf
    for (ax, ay), (bx, by) in _segments(a):
        t = np.linspace(0.0, 1.0, samples)
        d = _point_to_segments(ax + t * (bx - ax), ay + t * (by - ay), segs_b)
        k = int(np.argmin(d))
        lo, hi = t[max(k - 1, 0)], t[min(k + 1, samples - 1)]
        t2 = np.linspace(lo, hi, samples)
        d2 = _point_to_segments(ax + t2 * (bx - ax), ay + t2 * (by - ay), segs_b)
        best = min(best, float(d.min()), float(d2.min()))
    return best


# spanning trees via Pruefer sequences


@lru_cache(maxsize=None)
def all_spanning_trees(n):
    """Edge arrays (u, v) of shape (n**(n-2), n-1) for every labelled tree on n nodes."""
    if n < 2:
        return np.zeros((1, 0), dtype=np.int64), np.zeros((1, 0), dtype=np.int64)
    if n == 2:
        return np.array([[0]]), np.array([[1]])
    us, vs = [], []
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for x in seq:
            degree[x] += 1
        u, v = [], []
        for x in seq:
            leaf = next(i for i in range(n) if degree[i] == 1)
            u.append(leaf)
            v.append(x)
            degree[leaf] -= 1
            degree[x] -= 1
        rest = [i for i in range(n) if degree[i] == 1]
        u.append(rest[0])
        v.append(rest[1])
        us.append(u)
        vs.append(v)
    return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


def brute_force_mst_weight(n, weight_matrix):
    """Minimum total weight over all spanning trees; inf entries mean 'no edge'."""
    if n < 2:
        return 0.0
    u, v = all_spanning_trees(n)
    totals = np.asarray(weight_matrix, dtype=np.float64)[u, v].sum(axis=1)
    return float(totals.min())


# percentile


def percentile_linear(sample, p):
    return float(np.percentile(np.asarray(sample, dtype=np.float64), p, method="linear"))


# union-find free component check


def components(n, edges):
    """Connected components by repeated graph search."""
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, comps = set(), []
    for s in range(n):
        if s in seen:
            continue
        stack, comp = [s], set()
        while stack:
            x = stack.pop()
            if x in comp:
                continue
            comp.add(x)
            stack.extend(adj[x] - comp)
        seen |= comp
        comps.append(frozenset(comp))
    return set(comps)


# CIDEr-D written straight from the published definition


def _words(s):
    out, cur = [], []
    for ch in s.lower():
        if ch.isascii() and ch.isalnum():
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def _grams(words, n):
    return Counter(tuple(words[i : i + n]) for i in range(len(words) - n + 1))


def cider_d_reference(candidate, refs, all_ref_sets, sigma=6.0):
    n_images = len(all_ref_sets)
    cw = _words(candidate)
    total = 0.0
    for ref in refs:
        rw = _words(ref)
        per_n = []
        for n in range(1, 5):
            cg, rg = _grams(cw, n), _grams(rw, n)
            vocab = sorted(set(cg) | set(rg))
            if not vocab:
                per_n.append(0.0)
                continue
            df = np.array(
                [sum(1 for rs in all_ref_sets if any(g in _grams(_words(r), n) for r in rs)) for g in vocab],
                dtype=np.float64,
            )
            idf = np.log(n_images) - np.log(np.maximum(df, 1.0))
            c = np.array([cg.get(g, 0) for g in vocab], dtype=np.float64) * idf
            r = np.array([rg.get(g, 0) for g in vocab], dtype=np.float64) * idf
            nc, nr = np.linalg.norm(c), np.linalg.norm(r)
            if nc == 0 or nr == 0:
                per_n.append(0.0)
                continue
            cos = float(np.dot(np.minimum(c, r), r) / (nc * nr))
            per_n.append(cos * math.exp(-((len(cw) - len(rw)) ** 2) / (2 * sigma**2)))
        total += sum(per_n) / 4.0
    return 10.0 * total / len(refs)


# TF-IDF diversity via scikit-learn


def _analyzer(text):
    words = _words(text)
    return words + [" ".join(p) for p in zip(words, words[1:])]


def sklearn_diversity(caption, corpus):
    if not corpus:
        return 1.0
    from sklearn.feature_extraction.text import TfidfVectorizer

    vec = TfidfVectorizer(analyzer=_analyzer, smooth_idf=True, norm="l2", sublinear_tf=False)
    try:
        x = vec.fit_transform(list(corpus) + [caption])
    except ValueError:  # empty vocabulary
        return 1.0
    sims = (x[:-1] @ x[-1].T).toarray().ravel()
    return 1.0 - float(sims.max()) if sims.size else 1.0
