"""CART regression trees.

A node with at most ``leaf_cap`` training rows becomes a leaf. Internal nodes
route ``x`` left iff ``x[feature] <= threshold``. Thresholds are midpoints
between consecutive distinct sorted feature values, and splits minimise the
size-weighted mean of the two children's mean squared errors.

Trees are stored as flat node arrays (preorder, left child first), which keeps
prediction vectorised and makes JSON round trips exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError

LEAF = -1


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    left_count: int
    right_count: int
    weighted_mse: float


@dataclass(frozen=True)
class GrowConfig:
    """Tree-growth hyperparameters.

    ``mtry=None`` resolves to ``max(1, ceil(p / 3))`` once ``p`` is known.
    """

    leaf_cap: int = 10
    mtry: Optional[int] = None
    max_depth: Optional[int] = None

    def __post_init__(self):
        if int(self.leaf_cap) != self.leaf_cap or self.leaf_cap < 1:
            raise ConfigError(f"leaf_cap must be a positive integer, got {self.leaf_cap}")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError(f"mtry must be >= 1, got {self.mtry}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")

    def resolve_mtry(self, p: int) -> int:
        if self.mtry is None:
            return max(1, math.ceil(p / 3))
        if self.mtry > p:
            raise ConfigError(f"mtry={self.mtry} exceeds the number of features ({p})")
        return int(self.mtry)

    def to_dict(self):
        return {"leaf_cap": self.leaf_cap, "mtry": self.mtry, "max_depth": self.max_depth}


@dataclass(frozen=True)
class TreeNode:
    """Nested view of one node. ``feature_index`` is ``None`` for leaves."""

    node_size: int
    prediction: float
    feature_index: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self):
        return self.feature_index is None


@dataclass(frozen=True, eq=False)
class RegressionTree:
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    feature_names: tuple[str, ...]
    grow_config: GrowConfig = field(default_factory=GrowConfig)
    training_row_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self):
        for name, dtype in (("left", np.int64), ("right", np.int64), ("feature", np.int64),
                            ("threshold", float), ("value", float), ("n_node_samples", np.int64),
                            ("training_row_ids", np.int64)):
            a = np.array(getattr(self, name), dtype=dtype)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_nodes(self):
        return len(self.value)

    @property
    def n_features(self):
        return len(self.feature_names)

    @property
    def is_leaf(self):
        return self.left == LEAF

    @property
    def n_leaves(self):
        return int(np.sum(self.is_leaf))

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.left[i] != LEAF:
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    @property
    def root(self) -> TreeNode:
        return self._node(0)

    def _node(self, i) -> TreeNode:
        if self.left[i] == LEAF:
            return TreeNode(int(self.n_node_samples[i]), float(self.value[i]))
        return TreeNode(
            int(self.n_node_samples[i]), float(self.value[i]), int(self.feature[i]),
            float(self.threshold[i]), self._node(self.left[i]), self._node(self.right[i]),
        )

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = _check_X(X, self.n_features)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.left[idx] != LEAF
        while active.any():
            r, node = rows[active], idx[active]
            go_left = X[r, self.feature[node]] <= self.threshold[node]
            idx[r] = np.where(go_left, self.left[node], self.right[node])
            active = self.left[idx] != LEAF
        return idx

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    # -------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        """Nested JSON-ready structure; floats survive a JSON round trip exactly."""

        def node(i):
            d = {"n": int(self.n_node_samples[i]), "prediction": float(self.value[i])}
            if self.left[i] != LEAF:
                d["feature"] = int(self.feature[i])
                d["feature_name"] = self.feature_names[self.feature[i]]
                d["threshold"] = float(self.threshold[i])
                d["children"] = [node(self.left[i]), node(self.right[i])]
            return d

        return {
            "feature_names": list(self.feature_names),
            "grow_config": self.grow_config.to_dict(),
            "training_row_ids": [int(i) for i in self.training_row_ids],
            "root": node(0),
        }

    @classmethod
    def from_dict(cls, d) -> "RegressionTree":
        b = _Builder()

        def visit(nd):
            i = b.add(nd["prediction"], nd["n"])
            if "children" in nd:
                b.feature[i] = nd["feature"]
                b.threshold[i] = nd["threshold"]
                b.left[i] = visit(nd["children"][0])
                b.right[i] = visit(nd["children"][1])
            return i

        visit(d["root"])
        return b.finish(d["feature_names"], GrowConfig(**d["grow_config"]), d.get("training_row_ids", ()))


def _check_X(X, p):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != p:
        raise ValueError(f"expected feature vectors of length {p}, got shape {X.shape}")
    return X


class _Builder:
    def __init__(self):
        self.left, self.right, self.feature, self.threshold, self.value, self.n = [], [], [], [], [], []

    def add(self, value, n):
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.feature.append(LEAF)
        self.threshold.append(math.nan)
        self.value.append(float(value))
        self.n.append(int(n))
        return len(self.value) - 1

    def finish(self, feature_names, config, row_ids=()):
        return RegressionTree(self.left, self.right, self.feature, self.threshold, self.value,
                              self.n, tuple(feature_names), config, np.asarray(row_ids, dtype=np.int64))


# ---------------------------------------------------------------- split search


def node_sse(y) -> float:
    """Sum of squared deviations from the mean, i.e. ``len(y) * MSE(y)``."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return 0.0
    d = y - y.mean()
    return float(np.sum(d * d))


def split_objective(y, mask) -> float:
    """(S_A * MSE(S_A) + S_B * MSE(S_B)) / S for the partition ``mask`` / ``~mask``."""
    y = np.asarray(y, dtype=float)
    return (node_sse(y[mask]) + node_sse(y[~mask])) / y.size


def leaf_value(y) -> float:
    """Mean target; exact when all targets are equal (a plain mean can be off by an ulp)."""
    if np.all(y == y[0]):
        return float(y[0])
    return float(y.mean())


def _midpoint(a, b):
    t = (a + b) / 2.0
    # a and b adjacent floats: the midpoint rounds onto b and would route b left
    return a if t >= b else t


def best_split(X, y, candidate_features: Sequence[int]) -> Optional[SplitCandidate]:
    """Best (feature, threshold) over ``candidate_features``.

    A running-sum sweep over each sorted feature ranks all thresholds; the
    near-optimal ones are then rescored with :func:`split_objective` so the
    returned objective and the tie-breaking (lowest feature, then lowest
    threshold) do not depend on accumulated rounding.
    """
    features = sorted({int(k) for k in candidate_features})
    if not features:
        raise ValueError("candidate feature set is empty")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 2:
        return None

    yc = y - y.mean()
    total_sq = float(yc @ yc)
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    counts_left = np.arange(1, n, dtype=float)[:, None]
    cs = np.cumsum(yc[order], axis=0)
    sum_left = cs[:-1]
    sum_right = cs[-1] - sum_left
    approx = (total_sq - sum_left ** 2 / counts_left - sum_right ** 2 / (n - counts_left)) / n
    approx[~valid] = np.inf
    best_approx = float(approx.min())

    tol = 1e-9 * (total_sq / n) + 1e-12 * abs(best_approx) + 1e-300
    best = None
    for c, col in np.argwhere(approx <= best_approx + tol):
        k = features[col]
        t = _midpoint(xs[c, col], xs[c + 1, col])
        mask = X[:, k] <= t
        key = (split_objective(y, mask), k, t)
        if best is None or key < best[0]:
            best = (key, int(mask.sum()))
    (obj, k, t), n_left = best
    return SplitCandidate(int(k), float(t), n_left, n - n_left, obj)


# ---------------------------------------------------------------- growth


def grow_tree(X, y, config: GrowConfig = GrowConfig(), rng=None, feature_names=None,
              row_ids=None) -> RegressionTree:
    """Grow one tree on all given rows.

    At every node that is eligible to split a fresh subset of ``mtry``
    features is drawn without replacement from ``rng``. Nodes whose targets are
    all equal are not split. Growth is depth-first, left child first, so the
    sequence of draws and therefore the tree is fixed by (rows, config, rng).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, p) with one target per row")
    n, p = X.shape
    if n < 1:
        raise ValueError("cannot grow a tree on zero rows")
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(p))
    if len(feature_names) != p:
        raise ValueError("feature_names must match the number of columns")
    mtry = config.resolve_mtry(p)
    if rng is None:
        rng = np.random.default_rng(0)
    if row_ids is None:
        row_ids = np.arange(n)

    b = _Builder()
    root = b.add(leaf_value(y), n)
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        if idx.size <= config.leaf_cap:
            continue
        if config.max_depth is not None and depth >= config.max_depth:
            continue
        if np.all(yn == yn[0]):
            continue
        feats = rng.choice(p, size=mtry, replace=False) if mtry < p else np.arange(p)
        split = best_split(X[idx], yn, feats)
        if split is None:
            continue
        go_left = X[idx, split.feature_index] <= split.threshold
        li, ri = idx[go_left], idx[~go_left]
        b.feature[node] = split.feature_index
        b.threshold[node] = split.threshold
        b.left[node] = b.add(leaf_value(y[li]), li.size)
        b.right[node] = b.add(leaf_value(y[ri]), ri.size)
        # right pushed first so the left subtree is expanded (and draws from rng) first
        stack.append((b.right[node], ri, depth + 1))
        stack.append((b.left[node], li, depth + 1))
    return b.finish(feature_names, config, row_ids)


def predict_tree(tree: RegressionTree, x) -> float | np.ndarray:
    """Leaf value for one feature vector, or an array of values for a 2-D batch."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.size != tree.n_features:
            raise ValueError(f"expected a feature vector of length {tree.n_features}, got {x.size}")
        return float(tree.predict(x)[0])
    return tree.predict(x)


# ---------------------------------------------------------------- rendering


def render_tree(tree: RegressionTree, max_depth: int = 3) -> str:
    """Indented text rendering, truncated below ``max_depth`` with ``…`` stubs."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    lines = []

    def visit(i, depth, prefix):
        pad = "  " * depth
        if depth >= max_depth:
            lines.append(f"{pad}{prefix}…")
            return
        if tree.left[i] == LEAF:
            lines.append(f"{pad}{prefix}leaf: pred={tree.value[i]:.6g} n={tree.n_node_samples[i]}")
            return
        name = tree.feature_names[tree.feature[i]]
        lines.append(f"{pad}{prefix}{name} <= {tree.threshold[i]:.6g} n={tree.n_node_samples[i]}")
        visit(tree.left[i], depth + 1, "yes: ")
        visit(tree.right[i], depth + 1, "no: ")

    visit(0, 0, "")
    return "\n".join(lines)
