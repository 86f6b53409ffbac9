"""Forecast evaluation: RMSE/MAE grids over forest hyperparameters and the final-year scatter."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .baselines import fit_ar1, fit_ols, predict_linear
from .cart import GrowConfig
from .errors import DataError
from .forest import ForestConfig, fit_forest, predict_forest
from .panel_data import DesignMatrix

LEAF_CAPS = (5, 10, 15, 20, 25, 30)
TREE_COUNTS = (50, 100, 200, 500)

CSV_COLUMNS = (
    "leaf_cap", "n_trees",
    "rmse_ar1", "rmse_ols", "rmse_rf",
    "mae_ar1", "mae_ols", "mae_rf",
    "rmse_ratio_ar1", "rmse_ratio_ols", "mae_ratio_ar1", "mae_ratio_ols",
)


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    n: int


def metrics(predictions, actuals) -> Metrics:
    p = np.asarray(predictions, dtype=float).ravel()
    a = np.asarray(actuals, dtype=float).ravel()
    if p.size != a.size:
        raise ValueError(f"length mismatch: {p.size} predictions for {a.size} actuals")
    if p.size == 0:
        raise ValueError("cannot score an empty forecast set")
    err = p - a
    mae = math.fsum(np.abs(err)) / err.size
    rmse = math.sqrt(math.fsum(err * err) / err.size)
    # rounding can leave sqrt a hair below the mean absolute error when all |e| are equal
    return Metrics(max(rmse, mae), mae, int(err.size))


# benchmark errors below this fraction of the target scale are rounding noise
ZERO_ERROR_RTOL = 1e-12


def _ratio(num, den, scale=0.0):
    """``num / den``, or ``None`` when ``den`` is zero up to rounding at ``scale``."""
    return None if den <= ZERO_ERROR_RTOL * scale or den == 0 else num / den


@dataclass(frozen=True)
class GridRow:
    leaf_cap: int
    n_trees: int
    rf: Metrics
    rmse_ratio_ar1: float | None
    rmse_ratio_ols: float | None
    mae_ratio_ar1: float | None
    mae_ratio_ols: float | None


@dataclass(frozen=True)
class GridReport:
    """Benchmark metrics plus one forest row per (leaf_cap, n_trees). ``None`` ratios are undefined."""

    mode: str
    ar1: Metrics
    ols: Metrics
    rows: tuple[GridRow, ...]
    seed: int
    meta: dict = field(default_factory=dict)

    def row(self, leaf_cap, n_trees) -> GridRow:
        for r in self.rows:
            if r.leaf_cap == leaf_cap and r.n_trees == n_trees:
                return r
        raise KeyError((leaf_cap, n_trees))

    def records(self) -> list[dict]:
        out = []
        for r in self.rows:
            out.append({
                "leaf_cap": r.leaf_cap, "n_trees": r.n_trees,
                "rmse_ar1": self.ar1.rmse, "rmse_ols": self.ols.rmse, "rmse_rf": r.rf.rmse,
                "mae_ar1": self.ar1.mae, "mae_ols": self.ols.mae, "mae_rf": r.rf.mae,
                "rmse_ratio_ar1": r.rmse_ratio_ar1, "rmse_ratio_ols": r.rmse_ratio_ols,
                "mae_ratio_ar1": r.mae_ratio_ar1, "mae_ratio_ols": r.mae_ratio_ols,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in self.records():
            w.writerow(["NA" if rec[c] is None else repr(rec[c]) for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"mode": self.mode, "seed": self.seed, "meta": self.meta,
               "n_eval": self.ar1.n, "rows": self.records()}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Fixed-width text table: benchmark metrics on top, one forest row per cell."""

        def f(v):
            return "  n/a" if v is None else f"{v:.3f}"

        head = ("L", "trees", "RMSE AR1", "RMSE OLS", "RMSE RF", "MAE AR1", "MAE OLS", "MAE RF",
                "RMSE/AR1", "RMSE/OLS", "MAE/AR1", "MAE/OLS")
        lines = ["  ".join(f"{h:>8}" for h in head)]
        lines.append("  ".join(f"{v:>8}" for v in ("", "", f(self.ar1.rmse), f(self.ols.rmse), "",
                                                   f(self.ar1.mae), f(self.ols.mae), "", "", "", "", "")))
        for r in self.rows:
            cells = (r.leaf_cap, r.n_trees, "", "", f(r.rf.rmse), "", "", f(r.rf.mae),
                     f(r.rmse_ratio_ar1), f(r.rmse_ratio_ols), f(r.mae_ratio_ar1), f(r.mae_ratio_ols))
            lines.append("  ".join(f"{c:>8}" for c in cells))
        lines.append("Ratios below 1 mean the forest beats the benchmark.")
        return "\n".join(lines) + "\n"


def cell_seed(master_seed: int, leaf_cap: int, n_trees: int) -> int:
    """Forest seed for one grid cell, so any cell can be rerun on its own."""
    ss = np.random.SeedSequence([int(master_seed), int(leaf_cap), int(n_trees)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def cell_config(master_seed, leaf_cap, n_trees, mtry=None, subsample_fraction=2 / 3,
                with_replacement=False) -> ForestConfig:
    return ForestConfig(
        n_trees=n_trees, grow=GrowConfig(leaf_cap=leaf_cap, mtry=mtry),
        subsample_fraction=subsample_fraction, with_replacement=with_replacement,
        master_seed=cell_seed(master_seed, leaf_cap, n_trees),
    )


def _run_grid(mode, train, test, leaf_caps, tree_counts, seed, mtry, subsample_fraction,
              with_replacement, n_jobs, meta):
    if train.n_rows == 0 or test.n_rows == 0:
        raise DataError(f"empty partition: {train.n_rows} train rows, {test.n_rows} test rows")
    ar1 = metrics(predict_linear(fit_ar1(train), test.X), test.y)
    ols = metrics(predict_linear(fit_ols(train), test.X), test.y)
    scale = float(np.max(np.abs(test.y)))
    rows = []
    for leaf_cap in leaf_caps:
        for n_trees in tree_counts:
            cfg = cell_config(seed, leaf_cap, n_trees, mtry, subsample_fraction, with_replacement)
            model = fit_forest(train, cfg, n_jobs=n_jobs)
            rf = metrics(predict_forest(model, test.X), test.y)
            rows.append(GridRow(
                int(leaf_cap), int(n_trees), rf,
                _ratio(rf.rmse, ar1.rmse, scale), _ratio(rf.rmse, ols.rmse, scale),
                _ratio(rf.mae, ar1.mae, scale), _ratio(rf.mae, ols.mae, scale),
            ))
    meta = dict(meta, n_train=train.n_rows, n_test=test.n_rows, mtry=mtry,
                subsample_fraction=subsample_fraction, with_replacement=with_replacement)
    return GridReport(mode, ar1, ols, tuple(rows), int(seed), meta)


def insample_grid(design: DesignMatrix, leaf_caps: Sequence[int] = LEAF_CAPS,
                  tree_counts: Sequence[int] = TREE_COUNTS, seed: int = 42, mtry=None,
                  subsample_fraction: float = 2 / 3, with_replacement: bool = False,
                  n_jobs: int = 1) -> GridReport:
    """Fit and score every model on all rows."""
    return _run_grid("insample", design, design, leaf_caps, tree_counts, seed, mtry,
                     subsample_fraction, with_replacement, n_jobs, {})


def split_masks(design: DesignMatrix, train_end_year: int, test_years: Iterable[int],
                split_on: str = "predictor"):
    """Boolean train/test masks. ``split_on="target"`` shifts the year key by one."""
    if split_on == "predictor":
        key = design.years
    elif split_on == "target":
        key = design.years + 1
    else:
        raise ValueError(f"split_on must be 'predictor' or 'target', got {split_on!r}")
    test_years = np.asarray(sorted(set(int(y) for y in test_years)))
    return key <= train_end_year, np.isin(key, test_years)


def holdout_grid(design: DesignMatrix, train_end_year: int = 2014,
                 test_years: Iterable[int] = range(2015, 2020), leaf_caps: Sequence[int] = LEAF_CAPS,
                 tree_counts: Sequence[int] = TREE_COUNTS, seed: int = 42, split_on: str = "predictor",
                 mtry=None, subsample_fraction: float = 2 / 3, with_replacement: bool = False,
                 n_jobs: int = 1) -> GridReport:
    """Fit on rows up to ``train_end_year``, score on rows in ``test_years``."""
    train_mask, test_mask = split_masks(design, train_end_year, test_years, split_on)
    meta = {"train_end_year": int(train_end_year), "test_years": sorted(set(int(y) for y in test_years)),
            "split_on": split_on}
    return _run_grid("holdout", design.subset(train_mask), design.subset(test_mask), leaf_caps,
                     tree_counts, seed, mtry, subsample_fraction, with_replacement, n_jobs, meta)


def squared_correlation(a, b) -> float | None:
    """Squared Pearson correlation; ``None`` when either side has no variance."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        return None
    return float((da @ db) ** 2 / (saa * sbb))


@dataclass(frozen=True, eq=False)
class ScatterResult:
    countries: tuple[str, ...]
    actual: np.ndarray
    rf_predicted: np.ndarray
    ols_predicted: np.ndarray
    rf_r2: float | None
    ols_r2: float | None
    target_year: int
    train_end_year: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["country", "rf_predicted", "ols_predicted", "actual"])
        for c, rf, ols, act in zip(self.countries, self.rf_predicted, self.ols_predicted, self.actual):
            w.writerow([c, repr(float(rf)), repr(float(ols)), repr(float(act))])
        return buf.getvalue()


def final_year_scatter(design: DesignMatrix, train_end_year: int | None = None, target_year: int = 2019,
                       leaf_cap: int = 10, n_trees: int = 500, seed: int = 42, mtry=None,
                       n_jobs: int = 1) -> ScatterResult:
    """Cross-country forecasts of ``target_year`` growth from the previous year's data.

    Models see only rows whose target year is at most ``train_end_year``
    (default ``target_year - 1``), so nothing dated after that year is used.
    """
    if train_end_year is None:
        train_end_year = target_year - 1
    train = design.subset(design.years + 1 <= train_end_year)
    rows = design.subset(design.years + 1 == target_year)
    if rows.n_rows < 2 or len(set(rows.countries)) < 2:
        raise DataError(f"need rows for at least 2 countries in {target_year}, got {rows.n_rows}")
    if train.n_rows == 0:
        raise DataError(f"no training rows with target year <= {train_end_year}")
    model = fit_forest(train, cell_config(seed, leaf_cap, n_trees, mtry), n_jobs=n_jobs)
    rf = predict_forest(model, rows.X)
    ols = predict_linear(fit_ols(train), rows.X)
    return ScatterResult(
        tuple(str(c) for c in rows.countries), rows.y.copy(), rf, ols,
        squared_correlation(rf, rows.y), squared_correlation(ols, rows.y),
        int(target_year), int(train_end_year),
    )
