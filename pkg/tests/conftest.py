"""Shared fixtures: backend switching and random tree ensembles."""
import numpy as np
import pytest

from dnrisk import _accel
from dnrisk.learners import LOGISTIC_MARGIN, PROBABILITY_AVERAGE, Tree, TreeEnsemble

BACKENDS = ["numba", "numpy"] if _accel.NUMBA_AVAILABLE else ["numpy"]

# thresholds and sample values share one coarse grid so that x == threshold
# happens often and the "<= goes left" rule is exercised
GRID = np.round(np.linspace(-2.0, 2.0, 9), 2)


@pytest.fixture(params=BACKENDS)
def backend(request):
    with _accel.use_backend(request.param):
        yield request.param


def random_tree(rng, n_features, max_depth, split_prob=0.8):
    left, right, feat, thr, val, cover = [], [], [], [], [], []

    def build(depth):
        node = len(left)
        for arr, v in ((left, -1), (right, -1), (feat, -1), (thr, 0.0), (val, 0.0), (cover, 0.0)):
            arr.append(v)
        if depth < max_depth and rng.random() < split_prob:
            feat[node] = int(rng.integers(n_features))
            thr[node] = float(rng.choice(GRID))
            lc = build(depth + 1)
            rc = build(depth + 1)
            left[node], right[node] = lc, rc
            cover[node] = cover[lc] + cover[rc]
        else:
            val[node] = float(rng.normal())
            cover[node] = float(rng.integers(1, 30))
        return node

    build(0)
    return Tree(left=np.array(left, dtype=np.int64), right=np.array(right, dtype=np.int64),
                feature=np.array(feat, dtype=np.int64), threshold=np.array(thr),
                value=np.array(val), cover=np.array(cover))


def random_ensemble(rng, max_features=8, max_trees=20, max_depth=4):
    """A random valid ensemble: 1..max_features features, 1..max_trees trees."""
    p = int(rng.integers(1, max_features + 1))
    n_trees = int(rng.integers(1, max_trees + 1))
    depth = int(rng.integers(0, max_depth + 1))
    trees = tuple(random_tree(rng, p, depth) for _ in range(n_trees))
    if rng.random() < 0.5:
        return TreeEnsemble(trees, float(rng.normal()), LOGISTIC_MARGIN, p)
    return TreeEnsemble(trees, 0.0, PROBABILITY_AVERAGE, p)


def random_rows(rng, ens, n):
    return rng.choice(GRID, size=(n, ens.n_features))


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
