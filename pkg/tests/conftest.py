import numpy as np
import pytest

from hpforest.cart import GrowConfig, RegressionTree, _Builder
from hpforest.forest import ForestConfig, _assemble
from hpforest.panel_data import DesignMatrix, build_design
from hpforest.synthetic import simulate_panel

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def synthetic_panel():
    return simulate_panel(seed=2024)


@pytest.fixture(scope="session")
def synthetic_design(synthetic_panel):
    return build_design(synthetic_panel)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def hand_tree(splits, values, p, names=None):
    """Build a tree from preorder specs.

    ``splits`` maps node id -> (feature, threshold); every other id is a leaf
    taking the next entry of ``values``. Node ids follow preorder.
    """
    b = _Builder()
    vals = iter(values)

    def visit():
        i = b.add(0.0, 1)
        if i in splits:
            f, t = splits[i]
            b.feature[i], b.threshold[i] = f, t
            b.left[i] = visit()
            b.right[i] = visit()
        else:
            b.value[i] = next(vals)
        return i

    visit()
    names = names or tuple(f"x{j}" for j in range(p))
    return b.finish(names, GrowConfig(leaf_cap=1))


def model_from_trees(trees, X, y=None):
    """Wrap hand-built trees as a ForestModel whose training stats come from ``X``."""
    X = np.asarray(X, dtype=float)
    y = np.zeros(X.shape[0]) if y is None else np.asarray(y, dtype=float)
    design = DesignMatrix.from_arrays(X, y, trees[0].feature_names)
    return _assemble(trees, ForestConfig(n_trees=len(trees)), design)
