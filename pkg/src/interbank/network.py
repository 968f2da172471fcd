"""
Liability structures.

A liability matrix has shape ``(n, n+1)``: row ``i`` is what bank ``i`` owes,
column 0 is owed to society (external creditors) and column ``j >= 1`` is owed
to bank ``j``. Multi-maturity networks stack one such matrix per tree level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NetworkError

SPLIT_TOL = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    """Validated obligations, recovery rate and risk-free rate.

    ``liabilities`` has shape ``(M, n, n+1)``. With ``M == 1`` the single matrix
    is due at the tree's terminal time; otherwise ``M`` equals the number of
    tree levels and entry ``l`` is due at ``t_l``.
    """

    liabilities: np.ndarray
    recovery_beta: float = 0.0
    riskfree_r: float = 0.0

    @property
    def n_banks(self) -> int:
        return self.liabilities.shape[1]

    @property
    def n_maturities(self) -> int:
        return self.liabilities.shape[0]

    @property
    def is_single(self) -> bool:
        return self.n_maturities == 1

    def interbank(self, m: int = 0) -> np.ndarray:
        """``L[i, j]`` owed by bank ``i`` to bank ``j`` (n x n)."""
        return self.liabilities[m, :, 1:]

    def external(self, m: int = 0) -> np.ndarray:
        return self.liabilities[m, :, 0]

    def total_liabilities(self, m: int = 0) -> np.ndarray:
        """``pbar_i = sum_j L_ij + L_i0``."""
        return self.liabilities[m].sum(axis=1)

    def receivables(self, m: int = 0) -> np.ndarray:
        """Interbank claims held by each bank, ``sum_j L_ji``."""
        return self.interbank(m).sum(axis=0)

    def balance_sheet(self) -> "BalanceSheetView":
        return BalanceSheetView(
            total_liabilities=self.liabilities.sum(axis=2),
            interbank_receivables=self.liabilities[:, :, 1:].sum(axis=1),
            external_liability=self.liabilities[:, :, 0].copy(),
        )

    def without_interbank(self) -> "NetworkSpec":
        """Same external obligations, interbank entries zeroed."""
        L = self.liabilities.copy()
        L[:, :, 1:] = 0.0
        return validate(NetworkSpec(L, self.recovery_beta, self.riskfree_r))

    def with_beta(self, beta: float) -> "NetworkSpec":
        return validate(NetworkSpec(self.liabilities, beta, self.riskfree_r))

    @classmethod
    def single(cls, L0, beta: float = 0.0, r: float = 0.0) -> "NetworkSpec":
        L = np.asarray(L0, dtype=float)
        return validate(cls(L[None, :, :], beta, r))

    @classmethod
    def multi(cls, stack, beta: float = 0.0, r: float = 0.0) -> "NetworkSpec":
        return validate(cls(np.asarray(stack, dtype=float), beta, r), multi=True)


@dataclass(frozen=True)
class BalanceSheetView:
    """Per-maturity totals, arrays of shape ``(M, n)``."""

    total_liabilities: np.ndarray
    interbank_receivables: np.ndarray
    external_liability: np.ndarray


def validate(spec: NetworkSpec, multi: bool | None = None) -> NetworkSpec:
    """Check every invariant and return a sealed copy.

    Raises ``NetworkError`` listing each violation with 1-based
    ``(bank, column)`` coordinates and the maturity index.
    """
    L = np.array(spec.liabilities, dtype=float)
    if L.ndim == 2:
        L = L[None]
    problems = []
    if L.ndim != 3 or L.shape[2] != L.shape[1] + 1:
        raise NetworkError(f"liabilities must have shape (M, n, n+1), got {L.shape}")
    if not np.all(np.isfinite(L)):
        problems.append("non-finite entries")
    for m, i, j in zip(*np.nonzero(L < 0)):
        problems.append(f"negative obligation {L[m, i, j]} at maturity {m}, entry ({i + 1},{j})")
    n = L.shape[1]
    for m in range(L.shape[0]):
        for i in range(n):
            if L[m, i, i + 1] != 0:
                problems.append(f"self-dealing at ({i + 1},{i + 1}), maturity {m}")
    beta = float(spec.recovery_beta)
    if not 0.0 <= beta <= 1.0:
        problems.append(f"recovery_beta {beta} outside [0,1]")
    r = float(spec.riskfree_r)
    if r < 0:
        problems.append(f"riskfree_r {r} negative")
    if multi is None:
        multi = L.shape[0] > 1
    if multi and np.any(L[0] != 0):
        problems.append("obligations due at t_0 (maturity 0 must be empty)")
    if problems:
        raise NetworkError("; ".join(problems))
    L.setflags(write=False)
    return NetworkSpec(L, beta, r)


def split_obligations(
    single: NetworkSpec,
    n_steps: int,
    weights=None,
    seed: int | None = None,
) -> NetworkSpec:
    """
    Spread a single-maturity network over tree levels ``1..n_steps``.

    ``weights`` is either a mapping ``{level: fraction}``, a vector of length
    ``n_steps + 1`` indexed by level (entry 0 must be zero), or a full array
    ``(n_steps + 1, n, n+1)`` of per-obligation fractions. Without weights,
    ``seed`` selects the random split: independent uniform draws per
    obligation and level, normalized to sum to one.
    """
    if not single.is_single:
        raise ValueError("split_obligations needs a single-maturity network")
    base = single.liabilities[0]
    n = base.shape[0]
    levels = n_steps + 1
    if weights is None:
        if seed is None:
            raise ValueError("either weights or seed is required")
        rng = np.random.default_rng(seed)
        w = np.zeros((levels, n, n + 1))
        draws = rng.uniform(size=(n_steps, n, n + 1))
        w[1:] = draws / draws.sum(axis=0, keepdims=True)
    else:
        if isinstance(weights, dict):
            w1 = np.zeros(levels)
            for lvl, frac in weights.items():
                if not 0 <= int(lvl) <= n_steps:
                    raise ValueError(f"level {lvl} outside 0..{n_steps}")
                w1[int(lvl)] = float(frac)
            w = np.broadcast_to(w1[:, None, None], (levels, n, n + 1))
        else:
            w = np.asarray(weights, dtype=float)
            if w.ndim == 1:
                if w.size != levels:
                    raise ValueError(f"weights must have {levels} entries (one per level)")
                w = np.broadcast_to(w[:, None, None], (levels, n, n + 1))
            elif w.shape != (levels, n, n + 1):
                raise ValueError(f"weights shape {w.shape} does not match {(levels, n, n + 1)}")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if np.any(w[0] != 0):
            raise ValueError("no obligations may be due at level 0")
        tot = w.sum(axis=0)
        bad = np.abs(tot - 1.0) > SPLIT_TOL
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise ValueError(f"weights for obligation ({i + 1},{j}) sum to {tot[i, j]!r}, not 1")
    stack = w * base[None]
    return NetworkSpec.multi(stack, single.recovery_beta, single.riskfree_r)
