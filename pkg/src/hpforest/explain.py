"""Interventional Shapley values for forests and the importance reports built on them.

The value of a coalition ``C`` is the forest prediction averaged over a
background sample, with the features in ``C`` pinned at the query point.

For one tree, one leaf and one background point ``z`` the leaf indicator of
the hybrid point depends on each path feature in one of three ways: only
``x`` satisfies the leaf's interval (the feature must come from ``x``), only
``z`` does (it must come from ``z``), or both do (irrelevant). If neither does,
the leaf is unreachable. With ``A``/``B`` the first two sets the indicator is
a unanimity-type game with Shapley values::

    i in A:  (|A|-1)! |B|! / (|A|+|B|)!
    i in B: -|A|! (|B|-1)! / (|A|+|B|)!

Background points are grouped per leaf by the bitmask of path features they
fail, so each leaf costs a handful of array operations over all query rows.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cart import LEAF, RegressionTree
from .errors import ConfigError, DataError
from .forest import ForestModel, predict_forest
from .panel_data import DesignMatrix

MAX_BRUTE_FEATURES = 12


@dataclass(frozen=True, eq=False)
class ShapleyVector:
    phi: np.ndarray
    base_value: float
    prediction: float
    feature_names: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class ShapleyTable:
    """Attributions for many rows: ``phi`` is (rows, features)."""

    phi: np.ndarray
    base_value: float
    predictions: np.ndarray
    feature_names: tuple[str, ...]
    countries: np.ndarray | None = None
    years: np.ndarray | None = None

    def row(self, i) -> ShapleyVector:
        return ShapleyVector(self.phi[i], self.base_value, float(self.predictions[i]), self.feature_names)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["country", "year", *self.feature_names, "base_value", "prediction"])
        for i in range(self.phi.shape[0]):
            key = [self.countries[i] if self.countries is not None else "",
                   int(self.years[i]) if self.years is not None else ""]
            w.writerow(key + [repr(float(v)) for v in self.phi[i]]
                       + [repr(self.base_value), repr(float(self.predictions[i]))])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    feature_names: tuple[str, ...]
    values: np.ndarray
    normalized: bool
    n_rows: int
    period: str = "all"

    def ranking(self) -> list[tuple[str, float]]:
        """Features by decreasing importance; ties keep column order."""
        order = sorted(range(len(self.values)), key=lambda j: (-self.values[j], j))
        return [(self.feature_names[j], float(self.values[j])) for j in order]

    def as_dict(self):
        return dict(zip(self.feature_names, map(float, self.values)))


def _as_array(data, p):
    X = data.X if isinstance(data, DesignMatrix) else np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != p:
        raise ValueError(f"expected {p} features, got {X.shape[1]}")
    return X


# ---------------------------------------------------------------- leaf geometry


def leaf_boxes(tree: RegressionTree):
    """For each leaf: (value, path features, lower bounds, upper bounds).

    A point reaches the leaf iff ``lo < x[f] <= hi`` for every path feature.
    """
    out = []
    stack = [(0, {})]
    while stack:
        node, box = stack.pop()
        if tree.left[node] == LEAF:
            feats = np.array(sorted(box), dtype=np.int64)
            lo = np.array([box[f][0] for f in feats], dtype=float)
            hi = np.array([box[f][1] for f in feats], dtype=float)
            out.append((float(tree.value[node]), feats, lo, hi))
            continue
        f, t = int(tree.feature[node]), float(tree.threshold[node])
        lo, hi = box.get(f, (-math.inf, math.inf))
        left = dict(box)
        left[f] = (lo, min(hi, t))
        right = dict(box)
        right[f] = (max(lo, t), hi)
        stack.append((int(tree.right[node]), right))
        stack.append((int(tree.left[node]), left))
    return out


def _weight_tables(p):
    fact = [math.factorial(i) for i in range(2 * p + 2)]
    w_in = np.zeros((p + 1, p + 1))
    w_out = np.zeros((p + 1, p + 1))
    for k in range(p + 1):
        for b in range(p + 1):
            if k >= 1:
                w_in[k, b] = fact[k - 1] * fact[b] / fact[k + b]
            if b >= 1:
                w_out[k, b] = fact[k] * fact[b - 1] / fact[k + b]
    return w_in, w_out


def tree_shapley(tree: RegressionTree, X, Z, tables=None) -> np.ndarray:
    """(rows, features) interventional Shapley values of a single tree."""
    m, p = X.shape
    nb = Z.shape[0]
    w_in, w_out = tables if tables is not None else _weight_tables(p)
    phi = np.zeros((m, p))
    for value, feats, lo, hi in leaf_boxes(tree):
        d = feats.size
        if d == 0 or value == 0.0:
            continue
        bits = np.int64(1) << np.arange(d, dtype=np.int64)
        in_x = (X[:, feats] > lo) & (X[:, feats] <= hi)
        in_z = (Z[:, feats] > lo) & (Z[:, feats] <= hi)
        fail_masks, counts = np.unique((~in_z).astype(np.int64) @ bits, return_counts=True)
        a_mask = in_x.astype(np.int64) @ bits
        n_out = d - in_x.sum(axis=1)  # |B| is fixed by x once z is admissible
        # z is admissible iff every feature x fails on is one z satisfies
        valid = (fail_masks[None, :] & ~a_mask[:, None]) == 0
        fail_bits = ((fail_masks[:, None] & bits[None, :]) != 0)
        k = fail_bits.sum(axis=1)
        scale = value / nb
        coef_in = valid * w_in[k[None, :], n_out[:, None]] * counts[None, :]
        coef_out = (valid * w_out[k[None, :], n_out[:, None]] * counts[None, :]).sum(axis=1)
        phi[:, feats] += scale * (coef_in @ fail_bits)
        phi[:, feats] -= scale * coef_out[:, None] * ~in_x
    return phi


def shapley_values(model: ForestModel, X, background) -> ShapleyTable:
    """Exact interventional Shapley values of the forest mean for every row of ``X``."""
    p = model.n_features
    Xa = _as_array(X, p)
    Z = _as_array(background, p)
    if Z.shape[0] == 0:
        raise DataError("background sample is empty")
    tables = _weight_tables(p)
    phi = np.zeros((Xa.shape[0], p))
    for tree in model.trees:
        phi += tree_shapley(tree, Xa, Z, tables)
    phi /= len(model.trees)
    base = float(np.mean(predict_forest(model, Z)))
    preds = predict_forest(model, Xa)
    countries = X.countries if isinstance(X, DesignMatrix) else None
    years = X.years if isinstance(X, DesignMatrix) else None
    return ShapleyTable(phi, base, preds, model.feature_names, countries, years)


def shapley_exact(model: ForestModel, x, background) -> ShapleyVector:
    """Interventional Shapley values for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("shapley_exact takes one feature vector; use shapley_values for batches")
    return shapley_values(model, x, background).row(0)


def shapley_brute(model: ForestModel, x, background) -> ShapleyVector:
    """Shapley values by enumerating all 2^p coalitions. Verification oracle."""
    p = model.n_features
    if p > MAX_BRUTE_FEATURES:
        raise ConfigError(f"brute-force Shapley is limited to {MAX_BRUTE_FEATURES} features, got {p}")
    x = np.asarray(x, dtype=float)
    if x.shape != (p,):
        raise ValueError(f"expected a feature vector of length {p}")
    Z = _as_array(background, p)
    if Z.shape[0] == 0:
        raise DataError("background sample is empty")

    masks = np.array(list(itertools.product([False, True], repeat=p)))[:, ::-1]  # row c <-> bitmask c
    hybrid = np.where(masks[:, None, :], x[None, None, :], Z[None, :, :]).reshape(-1, p)
    values = predict_forest(model, hybrid).reshape(len(masks), Z.shape[0]).mean(axis=1)

    fact = [math.factorial(i) for i in range(p + 1)]
    phi = np.zeros(p)
    for c in range(1 << p):
        size = bin(c).count("1")
        for i in range(p):
            if not c >> i & 1:
                w = fact[size] * fact[p - size - 1] / fact[p]
                phi[i] += w * (values[c | 1 << i] - values[c])
    return ShapleyVector(phi, float(values[0]), float(values[-1]), model.feature_names)


# ---------------------------------------------------------------- importances


def background_sample(design: DesignMatrix, size: int | None, seed: int = 0) -> DesignMatrix:
    """Seeded row subsample used as a cheaper Shapley background; ``None`` keeps all rows."""
    if size is None or size >= design.n_rows:
        return design
    rng = np.random.default_rng(seed)
    return design.subset(np.sort(rng.choice(design.n_rows, size=size, replace=False)))


def report_from_phi(table_phi, names, normalize, period, n_rows):
    vals = np.abs(table_phi).mean(axis=0) if n_rows else np.zeros(len(names))
    if normalize:
        total = vals.sum()
        if total > 0:
            vals = vals / total
    return ImportanceReport(tuple(names), vals, normalize, n_rows, period)


def importance(model: ForestModel, rows: DesignMatrix, normalize: bool = False,
               background=None, period: str = "all") -> ImportanceReport:
    """Mean absolute Shapley value of each feature over ``rows``.

    ``background`` defaults to ``rows``. A model with no spread (all
    attributions zero) yields zeros even when ``normalize`` is set.
    """
    if rows.n_rows == 0:
        raise DataError("no rows to explain")
    table = shapley_values(model, rows, rows if background is None else background)
    return report_from_phi(table.phi, model.feature_names, normalize, period, rows.n_rows)


def importance_by_period(model: ForestModel, rows: DesignMatrix,
                         period_filters: Sequence[tuple[int, int]], background=None,
                         table: ShapleyTable | None = None) -> list[ImportanceReport]:
    """One normalized report per inclusive predictor-year range.

    Attributions are computed once against a common background (default:
    all of ``rows``) and then averaged within each period.
    """
    masks = []
    for start, end in period_filters:
        mask = (rows.years >= start) & (rows.years <= end)
        if not mask.any():
            raise DataError(f"period {start}-{end} selects no rows")
        masks.append(mask)
    if table is None:
        table = shapley_values(model, rows, rows if background is None else background)
    return [
        report_from_phi(table.phi[mask], model.feature_names, True, f"{start}-{end}", int(mask.sum()))
        for (start, end), mask in zip(period_filters, masks)
    ]


def importance_csv(reports: Sequence[ImportanceReport]) -> str:
    """Feature-by-period table, rows in the first report's importance order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature"] + [r.period for r in reports])
    order = [name for name, _ in reports[0].ranking()]
    lookup = [r.as_dict() for r in reports]
    for name in order:
        w.writerow([name] + [repr(d[name]) for d in lookup])
    return buf.getvalue()
