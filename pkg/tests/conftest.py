import numpy as np
import pytest
from scipy.spatial import Delaunay

from meshgcn.graph import build_graph


def random_graph(rng, n, features=2, positions=False):
    """Connected planar graph from a Delaunay triangulation of random points."""
    pts = rng.random((n, 2))
    if n >= 3:
        tri = Delaunay(pts).simplices
        pairs = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        pairs.sort(axis=1)
        edges = np.unique(pairs, axis=0)
    elif n == 2:
        edges = np.array([[0, 1]])
    else:
        edges = np.empty((0, 2), dtype=int)
    x = rng.standard_normal((n, features))
    return build_graph(x, edges, pts if positions else None)


def sparse_random_graph(rng, n, p=0.2, features=2):
    """Erdos-Renyi graph; may be disconnected and have isolated nodes."""
    iu = np.triu_indices(n, 1)
    mask = rng.random(iu[0].size) < p
    edges = np.column_stack([iu[0][mask], iu[1][mask]])
    return build_graph(rng.standard_normal((n, features)), edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_graph():
    return random_graph


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(criterion, passed, detail):
    _ACCEPTANCE[criterion] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[c]
        terminalreporter.write_line(f"criterion {c:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
