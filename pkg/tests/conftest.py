import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from arsic.ingest import Box, make_image  # noqa: E402

settings.register_profile("default", deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


def unit_box(cx, cy, half=0.5):
    return Box(cx - half, cy - half, cx + half, cy + half)


def random_image(rng, n, labels=("building", "ship", "small car"), extent=200.0, image_id="img"):
    boxes = []
    for _ in range(n):
        x, y = rng.uniform(0, extent, size=2)
        w, h = rng.uniform(1.0, 20.0, size=2)
        boxes.append((str(rng.choice(labels)), Box(float(x), float(y), float(x + w), float(y + h))))
    return make_image(image_id, boxes)


@pytest.fixture
def rng():
    return np.random.default_rng(20231016)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


# one PASS/FAIL line per acceptance criterion at the end of the run
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or rep.failed:
        prev = _CRITERIA.get(item.nodeid, (marker.args[0], True))
        _CRITERIA[item.nodeid] = (marker.args[0], prev[1] and not rep.failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _CRITERIA.values():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
