"""
Historical price accounting comparators.

Interbank claims are carried at discounted face value until the debtor
actually defaults, so only realized defaults propagate. The resulting
systems bound the mark-to-market solutions from above (single maturity
always; several maturities when ``beta = 0`` and rebalancing ignores
performance).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .clearing_multi import ClearingSolutionMulti, RebalancingStrategy, forward_clearing
from .clearing_single import ClearingSolutionT, _SingleMaps
from .errors import ConvergenceError
from .network import NetworkSpec


class AccountingMode(str, Enum):
    MARK_TO_MARKET = "mtm"
    HISTORICAL = "hpa"


def _indicator_field(tree, tau: np.ndarray) -> list:
    """``P_i(t_l) = 1{tau_i > t_l}`` on every node."""
    out = []
    for l in range(tree.n_steps + 1):
        blk = tree.branching ** (tree.n_steps - l)
        out.append((tau[::blk] > l).astype(float))
    return out


def clear_hpa_single(tree, assets, spec: NetworkSpec, select: str = "greatest", max_iter: int | None = None) -> ClearingSolutionT:
    """Greatest or least single-maturity solution under historical pricing."""
    if select not in ("greatest", "least"):
        raise ValueError(f"select must be 'greatest' or 'least', got {select!r}")
    maps = _SingleMaps(tree, assets, spec)
    start = tree.n_steps + 1 if select == "greatest" else 0
    tau = np.full((tree.n_leaves, tree.n_banks), start, dtype=np.int64)
    cap = max_iter or tree.n_steps * tree.n_banks * tree.n_leaves + 1
    for it in range(1, cap + 1):
        P = _indicator_field(tree, tau)
        K, new_tau = maps.forward(P)
        if np.array_equal(new_tau, tau):
            return ClearingSolutionT(tree, K, P, tau, method=f"hpa-{select}", iterations=it)
        tau = new_tau
    raise ConvergenceError(f"historical-price iteration exceeded the cap {cap}")


def clear_hpa_multi(tree, assets, spec: NetworkSpec, strategy: RebalancingStrategy | None = None) -> ClearingSolutionMulti:
    """Several-maturity solution under historical pricing, built in one forward pass."""
    return forward_clearing(tree, assets, spec, strategy or RebalancingStrategy("alpha0"), mode="hpa")


def hpa_survival(solution) -> np.ndarray:
    """Tree probability of no realized default by each level, shape ``(n, n_steps + 1)``."""
    tau = solution.tau
    return np.stack([(tau > k).mean(axis=0) for k in range(solution.tree.n_steps + 1)], axis=1)


@dataclass
class DominanceReport:
    """Componentwise ``lower <= upper`` verdicts.

    ``first_violation`` maps a component name to ``(level, node, bank)``
    (``(leaf, bank)`` for default times, ``(maturity, level, node, bank)``
    for multi-maturity survival).
    """

    verdicts: dict
    first_violation: dict = field(default_factory=dict)
    descriptive_only: bool = False
    note: str = ""

    @property
    def holds(self) -> bool:
        return all(self.verdicts.values())


def _check_levels(name, lo, hi, verdicts, first, atol, live=None):
    ok = True
    for l, (a, b) in enumerate(zip(lo, hi)):
        viol = a > b + atol
        if live is not None:
            viol &= live[l]
        bad = np.argwhere(viol)
        if bad.size:
            ok = False
            first.setdefault(name, (l, *map(int, bad[0])))
    verdicts[name] = ok


def compare_accounting(
    mtm,
    hpa,
    spec: NetworkSpec | None = None,
    strategy: RebalancingStrategy | None = None,
    atol: float = 1e-12,
) -> DominanceReport:
    """
    Check that the mark-to-market solution lies below the historical one.

    With several maturities, ``K`` and ``V`` are compared only where the
    mark-to-market bank has not defaulted before the level: later balances
    of a defaulted bank are informational and follow no rebalancing rule.

    For several maturities the comparison is a theorem only with zero
    recovery and performance-independent rebalancing; pass ``spec`` and
    ``strategy`` so the report can say whether it is descriptive only.
    """
    if mtm.tree != hpa.tree or type(mtm) is not type(hpa):
        raise ValueError("solutions come from different scenarios")
    verdicts, first = {}, {}
    multi = isinstance(mtm, ClearingSolutionMulti)
    live = [mtm.iota(l) for l in range(mtm.tree.n_steps + 1)] if multi else None
    _check_levels("K", mtm.K, hpa.K, verdicts, first, atol, live)
    descriptive, note = False, ""
    if multi:
        _check_levels("V", mtm.V, hpa.V, verdicts, first, atol, live)
        ok = True
        for k in range(len(mtm.P)):
            for l in range(k + 1):
                bad = np.argwhere(mtm.P[k][l] > hpa.P[k][l] + atol)
                if bad.size:
                    ok = False
                    first.setdefault("P", (k, l, *map(int, bad[0])))
        verdicts["P"] = ok
        if spec is None or strategy is None:
            descriptive, note = True, "preconditions unknown; descriptive only"
        elif spec.recovery_beta > 0 or not strategy.performance_independent:
            descriptive, note = True, "preconditions unmet; descriptive only"
    else:
        _check_levels("P", mtm.P, hpa.P, verdicts, first, atol)
    bad = np.argwhere(mtm.tau > hpa.tau)
    verdicts["tau"] = bad.size == 0
    if bad.size:
        first["tau"] = tuple(map(int, bad[0]))
    return DominanceReport(verdicts, first, descriptive, note)
