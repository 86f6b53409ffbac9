"""Panel ingestion, supervised design construction and descriptive statistics.

The input is a long-format CSV with one row per (country, year)::

    country,year,hp_growth,cpi,gdp_growth,i_short,i_long,stock_return,
    credit_growth,pop_growth,price_rent,vxo

Empty cells are missing values. :func:`build_design` turns the panel into
supervised rows that pair year-``t`` predictors with year-``t+1`` house-price
growth.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy import stats as _stats

from .errors import DegenerateSampleError, EmptyDesignError, PanelFormatError

TARGET = "hp_growth"

#: Raw predictor columns in CSV order. ``hp_growth`` doubles as the momentum predictor.
PREDICTORS = (
    "hp_growth",
    "cpi",
    "gdp_growth",
    "i_short",
    "i_long",
    "stock_return",
    "credit_growth",
    "pop_growth",
    "price_rent",
    "vxo",
)

#: Names of the 10 baseline features in a design matrix.
FEATURE_NAMES = ("momentum",) + PREDICTORS[1:]

DEFAULT_SCHEMA = PREDICTORS

DEFAULT_COUNTRIES = (
    "BEL", "CAN", "CHE", "DEU", "DNK", "GBR", "JPN",
    "KOR", "NLD", "NOR", "NZL", "SWE", "USA",
)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CountrySeries:
    country_code: str
    years: np.ndarray
    values: Mapping[str, np.ndarray]

    def __post_init__(self):
        years = _frozen(self.years, dtype=np.int64)
        if np.any(np.diff(years) <= 0):
            raise PanelFormatError("years must be strictly increasing", country=self.country_code)
        values = {}
        for name, v in self.values.items():
            v = _frozen(v)
            if v.shape != years.shape:
                raise PanelFormatError(
                    f"variable {name!r} has {v.size} values for {years.size} years",
                    country=self.country_code,
                )
            values[name] = v
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.years)

    def value(self, name, year):
        """Value of ``name`` in ``year``; NaN when the year is absent or missing."""
        idx = np.searchsorted(self.years, year)
        if idx < len(self.years) and self.years[idx] == year:
            return float(self.values[name][idx])
        return math.nan


@dataclass(frozen=True)
class PanelDataset:
    countries: tuple[CountrySeries, ...]
    variable_names: tuple[str, ...] = DEFAULT_SCHEMA
    target: str = TARGET

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "variable_names", tuple(self.variable_names))
        names = set(self.variable_names) | {self.target}
        for s in self.countries:
            if set(s.values) != names:
                raise PanelFormatError("variable set differs from panel schema", country=s.country_code)
        codes = [s.country_code for s in self.countries]
        if len(set(codes)) != len(codes):
            raise PanelFormatError("duplicate country series")

    @property
    def country_codes(self):
        return tuple(s.country_code for s in self.countries)

    def __getitem__(self, code):
        for s in self.countries:
            if s.country_code == code:
                return s
        raise KeyError(code)

    def __len__(self):
        return len(self.countries)


@dataclass(frozen=True)
class DesignRow:
    country: str
    year: int
    features: np.ndarray
    target: float


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Supervised rows: features of year ``t`` and house-price growth of ``t+1``.

    ``years`` holds the predictor year of each row. Arrays are read-only.
    """

    X: np.ndarray
    y: np.ndarray
    countries: np.ndarray
    years: np.ndarray
    feature_names: tuple[str, ...]
    dummy_mode: bool = False

    def __post_init__(self):
        X = _frozen(self.X)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        y = _frozen(self.y)
        countries = _frozen(self.countries, dtype=object)
        years = _frozen(self.years, dtype=np.int64)
        n = X.shape[0]
        if not (y.shape == (n,) and countries.shape == (n,) and years.shape == (n,)):
            raise ValueError("row keys and targets must match the number of rows in X")
        if X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names must match the number of columns in X")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("design cells must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "countries", countries)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_arrays(cls, X, y, feature_names=None, countries=None, years=None):
        """Wrap bare arrays, inventing row keys when none are given."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n, p = X.shape
        if feature_names is None:
            feature_names = tuple(f"x{j}" for j in range(p))
        if countries is None:
            countries = np.array(["UNK"] * n, dtype=object)
        if years is None:
            years = np.arange(n)
        return cls(X, y, countries, years, tuple(feature_names))

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n_rows

    @property
    def rows(self) -> list[DesignRow]:
        return list(self.iter_rows())

    def iter_rows(self) -> Iterator[DesignRow]:
        for i in range(self.n_rows):
            yield DesignRow(str(self.countries[i]), int(self.years[i]), self.X[i], float(self.y[i]))

    def subset(self, mask) -> "DesignMatrix":
        """Rows selected by a boolean mask or an index array, order preserved."""
        idx = np.asarray(mask)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return DesignMatrix(
            self.X[idx], self.y[idx], self.countries[idx], self.years[idx],
            self.feature_names, self.dummy_mode,
        )

    def feature_index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < self.n_features:
                raise IndexError(f"feature index {name} out of range")
            return int(name)
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}; have {', '.join(self.feature_names)}") from None


@dataclass(frozen=True)
class VariableStats:
    mean: float
    sd: float
    min: float
    max: float
    n: int


@dataclass(frozen=True)
class SummaryStats:
    """Descriptive statistics for the target, each predictor and each country.

    ``skewness``/``kurtosis`` are ``None`` when the pooled target has zero
    variance. Kurtosis is the raw standardized fourth moment (3 for a Gaussian).
    """

    target: VariableStats
    skewness: float | None
    kurtosis: float | None
    variables: dict[str, VariableStats] = field(default_factory=dict)
    by_country: dict[str, VariableStats] = field(default_factory=dict)

    def to_rows(self):
        """Flat (section, label, mean, sd, min, max, n) tuples in table order."""
        rows = [("target", TARGET, *_stat_tuple(self.target))]
        rows += [("variable", k, *_stat_tuple(v)) for k, v in self.variables.items()]
        rows += [("country", k, *_stat_tuple(v)) for k, v in self.by_country.items()]
        return rows


def _stat_tuple(s):
    return (s.mean, s.sd, s.min, s.max, s.n)


# ---------------------------------------------------------------- ingestion


def _parse_cell(text, line, country, year, column):
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise PanelFormatError(
            f"non-numeric value {text!r} in column {column!r}", line=line, country=country, year=year
        ) from None
    if not math.isfinite(value):
        raise PanelFormatError(f"non-finite value {text!r} in column {column!r}", line=line,
                               country=country, year=year)
    return value


def load_panel(csv_source, schema: Sequence[str] = DEFAULT_SCHEMA, target: str = TARGET) -> PanelDataset:
    """Read a long-format panel CSV.

    Parameters
    ----------
    csv_source : path, text stream or str
        A filesystem path, an open text stream, or CSV text containing a newline.
    schema : sequence of str
        Predictor column names. The target column is added if absent.
    """
    if isinstance(csv_source, (str, os.PathLike)) and "\n" not in str(csv_source):
        with open(csv_source, newline="", encoding="utf-8") as fh:
            return _read_panel(fh, schema, target)
    if isinstance(csv_source, str):
        csv_source = io.StringIO(csv_source)
    return _read_panel(csv_source, schema, target)


def _read_panel(stream, schema, target):
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise PanelFormatError("empty CSV", line=1) from None
    variables = list(dict.fromkeys(list(schema) + [target]))
    required = ["country", "year"] + variables
    missing = [c for c in required if c not in header]
    if missing:
        raise PanelFormatError(f"header lacks column(s) {', '.join(missing)}", line=1)
    col = {name: header.index(name) for name in required}

    records: dict[str, dict[int, dict[str, float]]] = {}
    seen: dict[tuple[str, int], int] = {}
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) < len(header):
            raise PanelFormatError(f"expected {len(header)} cells, got {len(raw)}", line=lineno)
        country = raw[col["country"]].strip()
        if not country:
            raise PanelFormatError("empty country code", line=lineno)
        year_text = raw[col["year"]].strip()
        try:
            year = int(year_text)
        except ValueError:
            raise PanelFormatError(f"non-integer year {year_text!r}", line=lineno, country=country) from None
        key = (country, year)
        if key in seen:
            raise PanelFormatError(
                f"duplicate row for {country}/{year} (first seen on line {seen[key]})",
                line=lineno, country=country, year=year,
            )
        seen[key] = lineno
        records.setdefault(country, {})[year] = {
            v: _parse_cell(raw[col[v]], lineno, country, year, v) for v in variables
        }

    series = []
    for country in sorted(records):
        by_year = records[country]
        years = sorted(by_year)
        values = {v: [by_year[y][v] for y in years] for v in variables}
        series.append(CountrySeries(country, years, values))
    return PanelDataset(tuple(series), tuple(schema), target)


def write_panel(panel: PanelDataset, path_or_stream) -> None:
    """Write ``panel`` in the long CSV format read by :func:`load_panel`."""
    variables = list(dict.fromkeys(list(panel.variable_names) + [panel.target]))

    def _emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "year"] + variables)
        for s in panel.countries:
            for i, year in enumerate(s.years):
                cells = []
                for v in variables:
                    x = s.values[v][i]
                    cells.append("" if math.isnan(x) else repr(float(x)))
                w.writerow([s.country_code, int(year)] + cells)

    if isinstance(path_or_stream, (str, os.PathLike)):
        with open(path_or_stream, "w", newline="", encoding="utf-8") as fh:
            _emit(fh)
    else:
        _emit(path_or_stream)


# ---------------------------------------------------------------- design


def build_design(panel: PanelDataset, dummy_mode: bool = False) -> DesignMatrix:
    """Pair year-``t`` predictors with year-``t+1`` target growth.

    Rows with any missing predictor or a missing target are dropped. A row
    needs the consecutive year ``t+1`` to be present in the series. With
    ``dummy_mode`` one 0/1 indicator per country (sorted by code) is appended.
    """
    predictors = list(panel.variable_names)
    names = [("momentum" if v == panel.target else v) for v in predictors]
    codes = sorted(panel.country_codes)
    if dummy_mode:
        names += [f"dummy_{c}" for c in codes]

    X_rows, y, keys_c, keys_y = [], [], [], []
    for s in panel.countries:
        block = np.column_stack([s.values[v] for v in predictors]) if predictors else np.empty((len(s), 0))
        tgt = s.values[panel.target]
        for i in range(len(s) - 1):
            if s.years[i + 1] != s.years[i] + 1:
                continue
            feats = block[i]
            if np.isnan(tgt[i + 1]) or np.any(np.isnan(feats)):
                continue
            row = list(feats)
            if dummy_mode:
                row += [1.0 if c == s.country_code else 0.0 for c in codes]
            X_rows.append(row)
            y.append(tgt[i + 1])
            keys_c.append(s.country_code)
            keys_y.append(int(s.years[i]))
    if not y:
        raise EmptyDesignError("no country has two consecutive usable years")
    return DesignMatrix(
        np.array(X_rows, dtype=float), np.array(y), np.array(keys_c, dtype=object),
        np.array(keys_y), tuple(names), dummy_mode,
    )


# ---------------------------------------------------------------- statistics


def _describe(values) -> VariableStats:
    v = np.asarray(values, dtype=float)
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return VariableStats(float(np.mean(v)), sd, float(np.min(v)), float(np.max(v)), int(v.size))


def summary_stats(design: DesignMatrix, panel: PanelDataset | None = None) -> SummaryStats:
    """Descriptive statistics of the estimation sample.

    Pooled moments and per-country statistics refer to the design's target
    (next-year growth); per-variable statistics refer to the design's feature
    columns, so every figure describes the rows models are fitted on. When a
    panel is given, country rows follow the panel's roster order.
    """
    if design.n_rows < 2:
        raise DegenerateSampleError(f"need at least 2 rows, got {design.n_rows}")
    y = design.y
    target = _describe(y)
    if np.ptp(y) == 0:
        skew = kurt = None
    else:
        skew = float(_stats.skew(y, bias=True))
        kurt = float(_stats.kurtosis(y, fisher=False, bias=True))

    variables = {}
    for j, name in enumerate(design.feature_names):
        if name.startswith("dummy_"):
            continue
        variables[name] = _describe(design.X[:, j])

    roster = panel.country_codes if panel is not None else sorted(set(design.countries))
    by_country = {}
    for code in roster:
        mask = design.countries == code
        if mask.any():
            by_country[code] = _describe(y[mask])
    return SummaryStats(target, skew, kurt, variables, by_country)


def silverman_bandwidth(values) -> float:
    """Silverman's rule of thumb, 0.9 * min(sd, IQR/1.34) * n^(-1/5)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise DegenerateSampleError("bandwidth needs at least 2 values")
    sd = np.std(v, ddof=1)
    iqr = np.subtract(*np.percentile(v, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        raise DegenerateSampleError("bandwidth undefined for a constant sample")
    return float(0.9 * spread * v.size ** -0.2)


def kernel_density(values, bandwidth=None, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian kernel density estimate evaluated on ``grid``.

    Returns ``(grid, density)``. ``bandwidth`` defaults to Silverman's rule;
    ``grid`` defaults to 512 points spanning the data +/- 4 bandwidths.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("values must be nonempty")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(v)
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if grid is None:
        grid = np.linspace(v.min() - 4 * bandwidth, v.max() + 4 * bandwidth, 512)
    grid = np.asarray(grid, dtype=float)
    # sorting makes the result independent of input order, bit for bit
    v = np.sort(v)
    z = (grid[:, None] - v[None, :]) / bandwidth
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (v.size * bandwidth * math.sqrt(2 * math.pi))
    return grid, dens
