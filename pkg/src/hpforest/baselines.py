"""Linear benchmarks: AR(1) on momentum and OLS on all predictors.

Coefficients come from a QR solve; standard errors from the White sandwich
(HC0, or HC1 with the n/(n-k) small-sample factor).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.stats import norm

from .errors import ConfigError, DataError, SingularDesignError
from .panel_data import DesignMatrix

# two-sided normal critical values at 1/5/10%
STAR_LEVELS = tuple((float(norm.ppf(1 - a / 2)), s) for a, s in ((0.01, "***"), (0.05, "**"), (0.10, "*")))


@dataclass(frozen=True, eq=False)
class OlsFit:
    """Least-squares fit. ``coefficients[0]`` is the intercept.

    ``feature_subset`` indexes the design columns that were regressed on, in
    coefficient order. ``f_statistic`` is ``None`` for an intercept-only model.
    """

    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_statistics: np.ndarray
    r2: float
    adj_r2: float
    f_statistic: float | None
    n: int
    k: int
    feature_subset: tuple[int, ...]
    names: tuple[str, ...]
    n_features: int
    cov_type: str = "HC0"

    @property
    def intercept(self):
        return float(self.coefficients[0])


def _design_columns(design: DesignMatrix, subset):
    subset = tuple(design.feature_index(j) for j in subset)
    if len(set(subset)) != len(subset):
        raise ConfigError("feature subset contains duplicates")
    X = np.column_stack([np.ones(design.n_rows)] + [design.X[:, j] for j in subset])
    names = ("constant",) + tuple(design.feature_names[j] for j in subset)
    return X, subset, names


def _check_rank(X, names):
    _, R, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        bad = [names[i] for i in sorted(piv[rank:])]
        raise SingularDesignError(
            f"design is rank deficient ({rank} < {X.shape[1]}); collinear column(s): {', '.join(bad)}",
            columns=bad,
        )


def ols_arrays(X, y, cov_type="HC0"):
    """Coefficients, robust covariance, residuals for a design ``X`` that already holds a constant."""
    n, k = X.shape
    Q, R = np.linalg.qr(X)
    beta = linalg.solve_triangular(R, Q.T @ y)
    resid = y - X @ beta
    # (X'X)^-1 = R^-1 R^-T
    Rinv = linalg.solve_triangular(R, np.eye(k))
    bread = Rinv @ Rinv.T
    meat = (X * (resid ** 2)[:, None]).T @ X
    cov = bread @ meat @ bread
    if cov_type == "HC1":
        cov = cov * n / (n - k)
    elif cov_type != "HC0":
        raise ConfigError(f"unknown cov_type {cov_type!r}; use HC0 or HC1")
    return beta, cov, resid


def fit_ols(design: DesignMatrix, feature_subset: Sequence | None = None, cov_type: str = "HC0") -> OlsFit:
    """OLS of the target on a constant plus ``feature_subset`` (default: every column)."""
    if feature_subset is None:
        feature_subset = range(design.n_features)
    X, subset, names = _design_columns(design, feature_subset)
    y = design.y
    n, k = X.shape
    if n <= k:
        raise DataError(f"need more observations ({n}) than regressors ({k})")
    _check_rank(X, names)
    beta, cov, resid = ols_arrays(X, y, cov_type)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = beta / se

    rss = float(resid @ resid)
    dev = y - y.mean()
    tss = float(dev @ dev)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / (n - k)
    if k == 1:
        f = None
    elif r2 >= 1.0:
        f = math.inf
    else:
        f = (r2 / (k - 1)) / ((1.0 - r2) / (n - k))
    return OlsFit(beta, se, tstat, r2, adj, f, n, k, subset, names, design.n_features, cov_type)


def momentum_index(design: DesignMatrix) -> int:
    for name in ("momentum", "hp_growth"):
        if name in design.feature_names:
            return design.feature_names.index(name)
    raise DataError("design has no momentum column")


def fit_ar1(design: DesignMatrix, cov_type: str = "HC0") -> OlsFit:
    """Regression of next-year growth on a constant and current growth."""
    return fit_ols(design, [momentum_index(design)], cov_type=cov_type)


def predict_linear(fit: OlsFit, x):
    """``intercept + coefficients . x[subset]`` for a full design row or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != fit.n_features:
        raise ValueError(f"expected feature vectors of length {fit.n_features}, got {x.shape[1]}")
    out = fit.coefficients[0] + x[:, list(fit.feature_subset)] @ fit.coefficients[1:]
    return float(out[0]) if single else out


def stars(t) -> str:
    a = abs(t)
    for crit, s in STAR_LEVELS:
        if a >= crit:
            return s
    return ""


def ols_table(fits: dict[str, OlsFit], fmt: str = "text") -> str:
    """Coefficient table with |t| under each coefficient, one column per model.

    ``fmt`` is ``"text"`` or ``"csv"``.
    """
    labels = list(dict.fromkeys(name for f in fits.values() for name in f.names))
    header = ["term"] + list(fits)
    body = []
    for name in labels:
        coef_row, t_row = [name], [""]
        for f in fits.values():
            if name in f.names:
                i = f.names.index(name)
                coef_row.append(f"{f.coefficients[i]:.3f}{stars(f.t_statistics[i])}")
                t_row.append(f"{abs(f.t_statistics[i]):.2f}")
            else:
                coef_row.append("")
                t_row.append("")
        body += [coef_row, t_row]
    body.append(["observations"] + [str(f.n) for f in fits.values()])
    body.append(["R2"] + [f"{f.r2:.3f}" for f in fits.values()])
    body.append(["Adjusted R2"] + [f"{f.adj_r2:.3f}" for f in fits.values()])
    fstats = []
    for f in fits.values():
        if f.f_statistic is None:
            fstats.append("")
        else:
            fstats.append(f"{f.f_statistic:.1f}")
    body.append(["F-statistic"] + fstats)

    if fmt == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows([header] + body)
        return buf.getvalue()
    if fmt != "text":
        raise ConfigError(f"unknown table format {fmt!r}")
    widths = [max(len(r[c]) for r in [header] + body) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if c == 0 else cell.rjust(w) for c, (cell, w) in enumerate(zip(r, widths)))
             for r in [header] + body]
    lines.append(f"t-statistics (absolute) based on {next(iter(fits.values())).cov_type} robust standard errors; "
                 "***/**/* = 1/5/10% significance")
    return "\n".join(lines) + "\n"
