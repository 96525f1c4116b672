import numpy as np
import pytest

from arsic import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


def _random_boxes(rng, n):
    xy = rng.uniform(0, 100, size=(n, 2))
    wh = rng.uniform(0, 15, size=(n, 2))
    return np.hstack([xy, xy + wh])


def test_pairwise_numpy_matches_scalar(rng):
    from arsic.ingest import Box
    from arsic.spatial import box_distance

    boxes = _random_boxes(rng, 12)
    d = _accel.pairwise_box_distance_np(boxes)
    for i in range(12):
        for j in range(12):
            expected = 0.0 if i == j else box_distance(Box(*boxes[i]), Box(*boxes[j]))
            assert d[i, j] == expected


@needs_numba
def test_pairwise_backends_agree(rng):
    for n in (1, 2, 7, 15, 40):
        boxes = _random_boxes(rng, n)
        np.testing.assert_array_equal(_accel.pairwise_box_distance_nb(boxes), _accel.pairwise_box_distance_np(boxes))


@needs_numba
def test_union_find_backends_agree(rng):
    for _ in range(50):
        n = int(rng.integers(1, 12))
        m = int(rng.integers(0, 30))
        a = rng.integers(0, n, size=m).astype(np.int64)
        b = rng.integers(0, n, size=m).astype(np.int64)
        np.testing.assert_array_equal(_accel.kruskal_select_nb(n, a, b), _accel.kruskal_select_np(n, a, b))
        np.testing.assert_array_equal(_accel.component_labels_nb(n, a, b), _accel.component_labels_np(n, a, b))


def test_component_labels_use_smallest_id():
    labels = _accel.component_labels_np(5, np.array([4, 3]), np.array([2, 4]))
    assert labels.tolist() == [0, 1, 2, 2, 2]


def test_backend_flag():
    assert _accel.BACKEND in ("numba", "numpy")
