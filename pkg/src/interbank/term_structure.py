"""
Systemic yield curves implied by survival probabilities.

A zero-recovery claim maturing at ``t`` on a bank that survives with
probability ``P(0, t)`` is fairly priced at the simple annual rate
``R*(t) = P(0, t)**(-1/t) - 1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

CSV_FIELDS = ("bank_id", "maturity_years", "survival_prob", "rate", "accounting_mode", "scenario_id")


@dataclass(frozen=True)
class YieldCurve:
    """Rates ``rates[i, m]`` for bank ``i`` at ``maturities[m]`` (years).

    ``total_default[i, m]`` flags entries with zero survival, where the rate
    is ``+inf``.
    """

    maturities: np.ndarray
    survival: np.ndarray
    rates: np.ndarray
    total_default: np.ndarray

    @property
    def n_banks(self) -> int:
        return self.rates.shape[0]

    def at(self, maturity: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.maturities, maturity, rtol=0, atol=1e-9))
        if idx.size == 0:
            raise KeyError(f"maturity {maturity} not on the curve")
        return self.rates[:, idx[0]]

    def subset(self, maturities) -> "YieldCurve":
        idx = [int(np.flatnonzero(np.isclose(self.maturities, m, rtol=0, atol=1e-9))[0]) for m in maturities]
        return YieldCurve(self.maturities[idx], self.survival[:, idx], self.rates[:, idx], self.total_default[:, idx])


def curve_from_probabilities(P0, maturities) -> YieldCurve:
    """
    Convert survival probabilities into simple annual rates.

    Parameters
    ----------
    P0 : array_like, shape (n, m) or (m,)
        Survival probability of each bank to each maturity.
    maturities : array_like, shape (m,)
        Strictly positive maturities in years.
    """
    P = np.atleast_2d(np.asarray(P0, dtype=float))
    t = np.asarray(maturities, dtype=float)
    if P.shape[1] != t.size:
        raise ValueError(f"{P.shape[1]} probabilities per bank but {t.size} maturities")
    if np.any(t <= 0):
        raise ValueError("maturities must be > 0")
    if np.any((P < 0) | (P > 1)):
        raise ValueError("survival probabilities must lie in [0,1]")
    dead = P == 0
    with np.errstate(divide="ignore"):
        rates = np.where(dead, np.inf, np.power(np.where(dead, 1.0, P), -1.0 / t) - 1.0)
    return YieldCurve(t.copy(), P.copy(), rates, dead)


def probabilities_from_curve(curve: YieldCurve) -> np.ndarray:
    """Invert ``curve_from_probabilities``."""
    with np.errstate(divide="ignore"):
        return np.where(curve.total_default, 0.0, np.power(1.0 + curve.rates, -curve.maturities))


@dataclass(frozen=True)
class ShapeReport:
    """Per-bank shape label and consecutive rate differences."""

    shapes: tuple
    slopes: np.ndarray
    maturities: np.ndarray

    def all(self, label: str) -> bool:
        return all(s == label for s in self.shapes)

    @property
    def overall(self) -> str:
        """``normal`` or ``inverted`` when every bank agrees, else ``mixed``."""
        return self.shapes[0] if len(set(self.shapes)) == 1 else "mixed"


def classify(rates) -> str:
    """``inverted`` if some earlier rate strictly exceeds a later one, else ``normal``."""
    r = np.asarray(rates, dtype=float)
    if r.size < 2:
        raise ValueError("shape needs at least two maturities")
    running_max = np.maximum.accumulate(r)
    return "inverted" if np.any(running_max[:-1] > r[1:]) else "normal"


def shape_diagnostics(curve: YieldCurve, maturities_of_interest=None) -> ShapeReport:
    """Classify each bank's curve on the chosen maturities and list the slopes."""
    c = curve if maturities_of_interest is None else curve.subset(maturities_of_interest)
    if c.maturities.size < 2:
        raise ValueError("shape needs at least two maturities")
    with np.errstate(invalid="ignore"):
        slopes = np.diff(c.rates, axis=1)
    shapes = tuple(classify(row) for row in c.rates)
    return ShapeReport(shapes, slopes, c.maturities)


def format_rate(rate: float) -> str:
    """Percent with four significant digits; ``inf`` for total default."""
    if np.isinf(rate):
        return "inf"
    return f"{100.0 * rate:.4g}"


def curve_rows(curve: YieldCurve, accounting_mode: str, scenario_id: str, bank_ids=None) -> list:
    """CSV-ready dict rows, one per bank and maturity."""
    ids = bank_ids if bank_ids is not None else [str(i + 1) for i in range(curve.n_banks)]
    rows = []
    for i, bid in enumerate(ids):
        for m, t in enumerate(curve.maturities):
            rows.append(
                {
                    "bank_id": bid,
                    "maturity_years": f"{t:.6g}",
                    "survival_prob": repr(float(curve.survival[i, m])),
                    "rate": format_rate(curve.rates[i, m]),
                    "accounting_mode": accounting_mode,
                    "scenario_id": scenario_id,
                }
            )
    return rows


def write_curve_csv(path, rows, fields=CSV_FIELDS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
