"""Partial effects: forest response along one or two features, others at their means.

This is a conditional slice through the fitted surface, not a marginal
partial-dependence average over the sample.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .forest import ForestModel, predict_forest

DEFAULT_GRID_POINTS = 50


@dataclass(frozen=True, eq=False)
class EffectGrid:
    """Responses on a 1-D or 2-D grid.

    ``responses`` has shape ``(len(grids[0]),)`` or ``(len(grids[0]), len(grids[1]))``.
    ``outside_hull`` flags grid points outside the training range of their axis.
    """

    axes: tuple[int, ...]
    axis_names: tuple[str, ...]
    grids: tuple[np.ndarray, ...]
    conditioning: np.ndarray
    responses: np.ndarray
    outside_hull: tuple[np.ndarray, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.axis_names) + ["response"])
        if len(self.axes) == 1:
            for g, r in zip(self.grids[0], self.responses):
                w.writerow([repr(float(g)), repr(float(r))])
        else:
            for i, gi in enumerate(self.grids[0]):
                for j, gj in enumerate(self.grids[1]):
                    w.writerow([repr(float(gi)), repr(float(gj)), repr(float(self.responses[i, j]))])
        return buf.getvalue()


def _index(model: ForestModel, feature) -> int:
    if isinstance(feature, (int, np.integer)):
        if not 0 <= feature < model.n_features:
            raise ConfigError(f"feature index {feature} out of range")
        return int(feature)
    try:
        return model.feature_names.index(feature)
    except ValueError:
        raise ConfigError(f"unknown feature {feature!r}") from None


def default_grid(model: ForestModel, feature, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Evenly spaced points spanning the feature's training range."""
    j = _index(model, feature)
    return np.linspace(model.feature_mins[j], model.feature_maxs[j], points)


def conditioning_vector(model: ForestModel, overrides: Mapping | None = None) -> np.ndarray:
    base = np.array(model.feature_means, dtype=float)
    for feature, value in (overrides or {}).items():
        base[_index(model, feature)] = float(value)
    return base


def _hull(model, j, grid):
    return (grid < model.feature_mins[j]) | (grid > model.feature_maxs[j])


def partial_curve(model: ForestModel, feature, grid: Sequence[float] | None = None,
                  overrides: Mapping | None = None) -> EffectGrid:
    """Forest prediction as ``feature`` sweeps ``grid``, other features at training means.

    ``overrides`` pins selected other features at given values instead.
    """
    j = _index(model, feature)
    overrides = dict(overrides or {})
    if any(_index(model, f) == j for f in overrides):
        raise ConfigError("the axis feature cannot also be overridden")
    grid = default_grid(model, j) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("grid must be nonempty")
    cond = conditioning_vector(model, overrides)
    X = np.repeat(cond[None, :], grid.size, axis=0)
    X[:, j] = grid
    return EffectGrid((j,), (model.feature_names[j],), (grid,), cond,
                      predict_forest(model, X), (_hull(model, j, grid),))


def partial_surface(model: ForestModel, feature_i, feature_j, grid_i=None, grid_j=None,
                    overrides: Mapping | None = None) -> EffectGrid:
    """Response matrix over ``grid_i`` x ``grid_j``; entry ``[a, b]`` uses ``(grid_i[a], grid_j[b])``."""
    i, j = _index(model, feature_i), _index(model, feature_j)
    if i == j:
        raise ConfigError("surface axes must be two different features")
    overrides = dict(overrides or {})
    if any(_index(model, f) in (i, j) for f in overrides):
        raise ConfigError("axis features cannot also be overridden")
    gi = default_grid(model, i) if grid_i is None else np.asarray(grid_i, dtype=float)
    gj = default_grid(model, j) if grid_j is None else np.asarray(grid_j, dtype=float)
    if gi.size == 0 or gj.size == 0:
        raise ConfigError("grids must be nonempty")
    cond = conditioning_vector(model, overrides)
    X = np.repeat(cond[None, :], gi.size * gj.size, axis=0)
    X[:, i] = np.repeat(gi, gj.size)
    X[:, j] = np.tile(gj, gi.size)
    resp = predict_forest(model, X).reshape(gi.size, gj.size)
    return EffectGrid((i, j), (model.feature_names[i], model.feature_names[j]), (gi, gj), cond,
                      resp, (_hull(model, i, gi), _hull(model, j, gj)))


def curve_family(model: ForestModel, feature, family_feature, family_values,
                 grid=None) -> dict[float, EffectGrid]:
    """One curve per value of ``family_feature`` (e.g. inflation at several price/rent levels)."""
    return {float(v): partial_curve(model, feature, grid, {family_feature: v}) for v in family_values}
