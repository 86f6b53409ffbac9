"""Seeded synthetic country panel with momentum and threshold effects.

Used for desk-scale checks of the whole pipeline where the real
macro-financial panel is not available. Macro drivers follow country-level
AR(1) processes (volatility is a common global factor); next-year house-price
growth is::

    hp[t+1] = 0.35 * clip(hp[t], -6, 10)
              + 4 * 1[price_rent < 80 and credit_growth > 6] - 4 * 1[price_rent > 105]
              + 3 * 1[0 <= cpi <= 3] - 4 * 1[cpi > 5]
              - 4 * 1[i_short > 5 and price_rent > 90]
              + 3 * 1[hp > 5 and credit_growth > 8]
              + 0.5 + noise

with all drivers dated ``t``.
"""
from __future__ import annotations

import numpy as np

from .panel_data import DEFAULT_COUNTRIES, PREDICTORS, TARGET, CountrySeries, PanelDataset


def _ar1(rng, n, mean, sd, rho, start=None):
    """Stationary AR(1) path with marginal ``sd``."""
    out = np.empty(n)
    innov = sd * np.sqrt(1 - rho ** 2)
    out[0] = mean + sd * rng.standard_normal() if start is None else start
    for t in range(1, n):
        out[t] = mean + rho * (out[t - 1] - mean) + innov * rng.standard_normal()
    return out


def house_price_signal(hp, cpi, credit, i_short, price_rent):
    """Deterministic part of next-year growth given this year's drivers."""
    cheap = price_rent < 80
    return (
        0.35 * np.clip(hp, -6.0, 10.0)
        + 4.0 * (cheap & (credit > 6)) - 4.0 * (price_rent > 105)
        + 3.0 * ((cpi >= 0) & (cpi <= 3)) - 4.0 * (cpi > 5)
        - 4.0 * ((i_short > 5) & (price_rent > 90))
        + 3.0 * ((hp > 5) & (credit > 8))
        + 0.5
    )


def simulate_panel(seed: int = 0, countries=DEFAULT_COUNTRIES, start_year: int = 1988,
                   end_year: int = 2019, noise_sd: float = 1.5) -> PanelDataset:
    """Simulate a complete annual panel (``end_year - start_year`` supervised rows per country)."""
    rng = np.random.default_rng(seed)
    years = np.arange(start_year, end_year + 1)
    n = years.size
    vxo = _ar1(rng, n, 20.0, 7.0, 0.5)
    series = []
    for code in countries:
        cpi = _ar1(rng, n, rng.uniform(1.0, 3.5), 2.0, 0.7)
        gdp = _ar1(rng, n, rng.uniform(1.5, 3.0), 2.0, 0.3)
        i_short = _ar1(rng, n, rng.uniform(2.0, 5.5), 3.0, 0.85)
        i_long = i_short + _ar1(rng, n, 1.0, 0.8, 0.6)
        stock = rng.normal(7.0, 17.0, n)
        credit = _ar1(rng, n, rng.uniform(4.0, 8.0), 4.5, 0.7)
        pop = _ar1(rng, n, rng.uniform(0.2, 1.0), 0.3, 0.8)
        price_rent = _ar1(rng, n, rng.uniform(70.0, 105.0), 22.0, 0.9)
        hp = np.empty(n)
        hp[0] = rng.normal(4.0, 5.0)
        for t in range(n - 1):
            hp[t + 1] = house_price_signal(hp[t], cpi[t], credit[t], i_short[t], price_rent[t]) \
                + noise_sd * rng.standard_normal()
        values = dict(zip(PREDICTORS, (hp, cpi, gdp, i_short, i_long, stock, credit, pop, price_rent, vxo)))
        values[TARGET] = hp
        series.append(CountrySeries(code, years, values))
    return PanelDataset(tuple(series), PREDICTORS, TARGET)
