"""Random forest: row-subsampled CART ensembles averaged at prediction time.

Every tree draws its rows and its per-split feature subsets from its own
counter-based (Philox) stream keyed by ``(master_seed, tree_index)``, so a
forest is bit-identical however many workers grow it.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from .cart import GrowConfig, RegressionTree, grow_tree
from .errors import ConfigError, DataError
from .panel_data import DesignMatrix

FORMAT_TAG = "hpforest.forest/1"


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    grow: GrowConfig = field(default_factory=GrowConfig)
    subsample_fraction: float = 2 / 3
    with_replacement: bool = False
    master_seed: int = 42

    def __post_init__(self):
        if int(self.n_trees) != self.n_trees or self.n_trees < 1:
            raise ConfigError(f"n_trees must be a positive integer, got {self.n_trees}")
        if not 0 < self.subsample_fraction <= 1:
            raise ConfigError(f"subsample_fraction must lie in (0, 1], got {self.subsample_fraction}")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")

    def subsample_size(self, n: int) -> int:
        # the epsilon keeps e.g. 0.7 * 10 from rounding up to 8
        return math.ceil(self.subsample_fraction * n - 1e-9)

    def to_dict(self):
        return {
            "n_trees": self.n_trees,
            "grow": self.grow.to_dict(),
            "subsample_fraction": self.subsample_fraction,
            "with_replacement": self.with_replacement,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grow"] = GrowConfig(**d["grow"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    config: ForestConfig
    feature_names: tuple[str, ...]
    n_train: int
    design_hash: str
    feature_means: np.ndarray
    feature_mins: np.ndarray
    feature_maxs: np.ndarray
    target_range: tuple[float, float]

    @property
    def n_features(self):
        return len(self.feature_names)

    def predict(self, X):
        return predict_forest(self, X)


def tree_rng(master_seed: int, tree_index: int) -> np.random.Generator:
    """Independent Philox stream for one tree."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(tree_index)])))


def design_fingerprint(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=float).tobytes())
    h.update(np.ascontiguousarray(y, dtype=float).tobytes())
    return h.hexdigest()[:16]


def fit_tree_at(X, y, config: ForestConfig, tree_index: int, feature_names=None) -> RegressionTree:
    """Grow the ``tree_index``-th tree of a forest fitted with ``config``."""
    n = len(y)
    size = config.subsample_size(n)
    if size < 1:
        raise DataError(f"subsample of {config.subsample_fraction} x {n} rows is empty")
    rng = tree_rng(config.master_seed, tree_index)
    if config.with_replacement:
        rows = np.sort(rng.integers(0, n, size=size))
    elif size == n:
        rows = np.arange(n)
    else:
        rows = np.sort(rng.choice(n, size=size, replace=False))
    return grow_tree(X[rows], y[rows], config.grow, rng, feature_names, row_ids=rows)


def fit_forest(design: DesignMatrix, config: ForestConfig = ForestConfig(), n_jobs: int = 1) -> ForestModel:
    """Fit ``config.n_trees`` trees on subsamples of ``design``.

    ``n_jobs`` is passed to :class:`joblib.Parallel`; it changes wall time only.
    """
    if design.n_rows < 1:
        raise DataError("cannot fit a forest on an empty design")
    config.grow.resolve_mtry(design.n_features)
    X, y = design.X, design.y
    names = design.feature_names
    if n_jobs == 1:
        trees = [fit_tree_at(X, y, config, b, names) for b in range(config.n_trees)]
    else:
        trees = Parallel(n_jobs=n_jobs)(
            delayed(fit_tree_at)(X, y, config, b, names) for b in range(config.n_trees)
        )
    return _assemble(trees, config, design)


def _assemble(trees, config, design):
    X, y = design.X, design.y

    def frozen(a):
        a = np.array(a, dtype=float)
        a.setflags(write=False)
        return a

    return ForestModel(
        trees=tuple(trees),
        config=config,
        feature_names=design.feature_names,
        n_train=design.n_rows,
        design_hash=design_fingerprint(X, y),
        feature_means=frozen(X.mean(axis=0)),
        feature_mins=frozen(X.min(axis=0)),
        feature_maxs=frozen(X.max(axis=0)),
        target_range=(float(y.min()), float(y.max())),
    )


def _exact_mean(P) -> np.ndarray:
    # math.fsum is correctly rounded, so the mean does not depend on tree order.
    # Columns where every tree agrees return that value; fsum(n*v)/n can be off by an ulp.
    mean = np.array([math.fsum(col) for col in P.T]) / P.shape[0]
    agree = np.all(P == P[0], axis=0)
    return np.where(agree, P[0], mean)


def tree_predictions(model: ForestModel, X) -> np.ndarray:
    """(n_trees, n_rows) matrix of per-tree predictions."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected feature vectors of length {model.n_features}, got {X.shape[1]}")
    return np.stack([t.predict(X) for t in model.trees])


def predict_forest(model: ForestModel, x):
    """Mean of the per-tree predictions; a float for one vector, an array for a batch."""
    x = np.asarray(x, dtype=float)
    out = _exact_mean(tree_predictions(model, x))
    return float(out[0]) if x.ndim == 1 else out


def mse_curve(design: DesignMatrix, config: ForestConfig, tree_counts: Sequence[int],
              model: ForestModel | None = None, n_jobs: int = 1) -> list[tuple[int, float]]:
    """In-sample MSE of the first ``m`` trees of one forest, for each ``m``.

    Pass a fitted ``model`` to reuse it; otherwise one forest with
    ``config.n_trees`` trees is fitted.
    """
    counts = [int(m) for m in tree_counts]
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError("tree_counts must be strictly ascending")
    if model is None:
        model = fit_forest(design, config, n_jobs=n_jobs)
    if counts and (counts[0] < 1 or counts[-1] > len(model.trees)):
        raise ValueError(f"tree counts must lie in [1, {len(model.trees)}]")
    P = tree_predictions(model, design.X)
    out = []
    for m in counts:
        err = _exact_mean(P[:m]) - design.y
        out.append((m, float(np.mean(err * err))))
    return out


# ---------------------------------------------------------------- persistence


def forest_to_dict(model: ForestModel) -> dict:
    return {
        "format": FORMAT_TAG,
        "config": model.config.to_dict(),
        "feature_names": list(model.feature_names),
        "n_train": model.n_train,
        "design_hash": model.design_hash,
        "feature_means": model.feature_means.tolist(),
        "feature_mins": model.feature_mins.tolist(),
        "feature_maxs": model.feature_maxs.tolist(),
        "target_range": list(model.target_range),
        "trees": [t.to_dict() for t in model.trees],
    }


def forest_from_dict(d) -> ForestModel:
    if d.get("format") != FORMAT_TAG:
        raise DataError(f"not a serialized forest (format={d.get('format')!r})")

    def frozen(a):
        a = np.array(a, dtype=float)
        a.setflags(write=False)
        return a

    return ForestModel(
        trees=tuple(RegressionTree.from_dict(t) for t in d["trees"]),
        config=ForestConfig.from_dict(d["config"]),
        feature_names=tuple(d["feature_names"]),
        n_train=int(d["n_train"]),
        design_hash=d["design_hash"],
        feature_means=frozen(d["feature_means"]),
        feature_mins=frozen(d["feature_mins"]),
        feature_maxs=frozen(d["feature_maxs"]),
        target_range=tuple(d["target_range"]),
    )


def save_forest(model: ForestModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(forest_to_dict(model), fh)


def load_forest(path) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        return forest_from_dict(json.load(fh))


def with_trees(model: ForestModel, trees) -> ForestModel:
    """Copy of ``model`` holding ``trees`` instead (e.g. reordered or a prefix)."""
    trees = tuple(trees)
    return replace(model, trees=trees, config=replace(model.config, n_trees=len(trees)))
