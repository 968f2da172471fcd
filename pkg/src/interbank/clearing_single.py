"""
Clearing with all obligations due at the terminal time ``T``.

Interbank claims are marked to market, ``L_ji (beta + (1 - beta) P_j(t))``
discounted to ``t``, so a bank's net worth ``K_i(t)`` reacts to changes in its
counterparties' survival probabilities before any default is realized. A bank
defaults the first time ``K_i(t) < 0``; ``P_i(t)`` is the conditional
probability that it never does.

The default-time field is the iteration state of every solver here, with
``P`` recomputed exactly from it, so iteration stops on an exact integer
comparison rather than a float tolerance.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, GuardViolation
from .network import NetworkSpec
from .tree import AssetField, TreeSpace

ENUM_GUARD = 2**20
DPP_CELL_CAP = 50_000_000


# ---------------------------------------------------------------------------
# static benchmark


def static_clearing(x, spec: NetworkSpec, select: str = "greatest", return_capital: bool = False):
    """
    Solvency vector of the one-period Gai-Kapadia style system.

    Solves ``P = 1{x + L^T [beta + (1 - beta) P] >= pbar}`` by Picard
    iteration from ``P = 1`` (greatest) or ``P = 0`` (least).

    Parameters
    ----------
    x : array_like
        External assets, one per bank.
    spec : NetworkSpec
        Single-maturity obligations.
    select : {"greatest", "least"}
    return_capital : bool
        Also return the capital ``K = x + L^T[...] - pbar`` at the solution.
    """
    if not spec.is_single:
        raise ValueError("static_clearing needs a single-maturity network")
    if select not in ("greatest", "least"):
        raise ValueError(f"select must be 'greatest' or 'least', got {select!r}")
    x = np.asarray(x, dtype=float)
    Lint = spec.interbank(0)
    pbar = spec.total_liabilities(0)
    beta = spec.recovery_beta
    P = np.ones(spec.n_banks) if select == "greatest" else np.zeros(spec.n_banks)
    for _ in range(spec.n_banks + 2):
        K = x + (beta + (1.0 - beta) * P) @ Lint - pbar
        new = (K >= 0).astype(float)
        if np.array_equal(new, P):
            return (P, K) if return_capital else P
        P = new
    raise ConvergenceError("static clearing did not settle within n + 1 steps")


# ---------------------------------------------------------------------------
# solution container


@dataclass
class ClearingSolutionT:
    """Per-level arrays ``K[l]``, ``P[l]`` of shape ``(b**l, n)`` and leaf default levels.

    ``tau[m, i]`` is the level at which bank ``i`` defaults on leaf path ``m``;
    ``n_steps + 1`` means never.
    """

    tree: TreeSpace
    K: list
    P: list
    tau: np.ndarray
    method: str = "picard"
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def never(self) -> int:
        return self.tree.n_steps + 1

    def defaults(self, level: int) -> np.ndarray:
        """Flags of banks defaulting exactly at ``level`` (node-level array)."""
        blk = self.tree.branching ** (self.tree.n_steps - level)
        return self.tau[::blk] == level

    def iota(self, level: int) -> np.ndarray:
        """``1{tau >= t_l}`` per node at ``level``."""
        blk = self.tree.branching ** (self.tree.n_steps - level)
        return self.tau[::blk] >= level

    def tau_times(self) -> np.ndarray:
        """Default times in years; 'never' maps to ``T + 1``."""
        t = self.tau * self.tree.dt
        return np.where(self.tau == self.never, self.tree.maturity + 1.0, t)

    def default_probability(self) -> np.ndarray:
        return 1.0 - self.P[0][0]

    def same_as(self, other: "ClearingSolutionT", atol: float = 0.0) -> bool:
        if not np.array_equal(self.tau, other.tau):
            return False
        return all(
            np.allclose(a, b, rtol=0, atol=atol) for a, b in zip(self.K + self.P, other.K + other.P)
        )


# ---------------------------------------------------------------------------
# the forward and backward maps


class _SingleMaps:
    """Forward capital map and backward Bayes recursion on a fixed scenario."""

    def __init__(self, tree: TreeSpace, assets: AssetField, spec: NetworkSpec):
        if not spec.is_single:
            raise ValueError("single-maturity solver needs a single-maturity network")
        if spec.n_banks != tree.n_banks:
            raise ValueError("network and tree disagree on the number of banks")
        if assets.tree != tree:
            raise ValueError("asset field was built on a different tree")
        self.tree = tree
        self.assets = assets
        self.beta = spec.recovery_beta
        self.Lint = spec.interbank(0)
        self.pbar = spec.total_liabilities(0)
        self.recv = self.Lint.sum(axis=0)
        r = spec.riskfree_r
        T = tree.maturity
        self.disc = np.exp(-r * (T - tree.times))

    def capital(self, l: int, P_l: np.ndarray) -> np.ndarray:
        """``x + e^{-r(T-t)} (L^T [beta + (1-beta) P] - pbar)`` at every node of level ``l``."""
        claims = self.beta * self.recv + (1.0 - self.beta) * (P_l @ self.Lint)
        return self.assets.level(l) + self.disc[l] * (claims - self.pbar)

    def forward(self, P: list) -> tuple[list, np.ndarray]:
        """Capital at every node and the induced first-passage default levels."""
        tree = self.tree
        never = tree.n_steps + 1
        K = [self.capital(l, P[l]) for l in range(tree.n_steps + 1)]
        tau = np.full((1, tree.n_banks), never, dtype=np.int64)
        for l in range(tree.n_steps + 1):
            if l > 0:
                tau = tree.expand(tau)
            tau = np.where((tau == never) & (K[l] < 0), l, tau)
        return K, tau

    def backward(self, tau: np.ndarray) -> list:
        """``P(t) = P(tau > T | F_t)`` by averaging over successors."""
        tree = self.tree
        P = [None] * (tree.n_steps + 1)
        P[-1] = (tau > tree.n_steps).astype(float)
        for l in range(tree.n_steps - 1, -1, -1):
            P[l] = tree.branch_mean(P[l + 1])
        return P


def _picard(maps: _SingleMaps, tau0: np.ndarray, max_iter: int | None, label: str) -> ClearingSolutionT:
    tree = maps.tree
    cap = max_iter or tree.n_steps * tree.n_banks * tree.n_leaves + 1
    tau = tau0
    P = maps.backward(tau)
    for it in range(1, cap + 1):
        K, new_tau = maps.forward(P)
        if np.array_equal(new_tau, tau):
            return ClearingSolutionT(tree, K, P, tau, method=label, iterations=it)
        tau = new_tau
        P = maps.backward(tau)
    raise ConvergenceError(f"{label}: exceeded the iteration cap {cap}")


def clear_maximal_picard(tree, assets, spec, max_iter: int | None = None) -> ClearingSolutionT:
    """Greatest clearing solution, Picard from 'no bank ever defaults'."""
    maps = _SingleMaps(tree, assets, spec)
    never = np.full((tree.n_leaves, tree.n_banks), tree.n_steps + 1, dtype=np.int64)
    return _picard(maps, never, max_iter, "picard")


def clear_minimal(tree, assets, spec, max_iter: int | None = None) -> ClearingSolutionT:
    """Least clearing solution, Picard from 'every bank defaults at t_0'."""
    maps = _SingleMaps(tree, assets, spec)
    at_zero = np.zeros((tree.n_leaves, tree.n_banks), dtype=np.int64)
    return _picard(maps, at_zero, max_iter, "picard-min")


# ---------------------------------------------------------------------------
# dynamic programming over (node, solvency indicator)


def _code_bits(n: int) -> np.ndarray:
    """Row ``c`` holds the solvency indicator encoded by integer ``c`` (bit i = bank i)."""
    codes = np.arange(2**n)
    return ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)


def clear_maximal_dpp(tree, assets, spec, root_iota=None) -> ClearingSolutionT:
    """
    Greatest clearing solution by backward dynamic programming.

    For every node and every solvency indicator ``iota`` (banks still alive
    on entry) the local greatest fixed point couples the node's capital with
    the branch-averaged continuation survival of the successor states. The
    realized solution is read off forward from ``root_iota`` (all solvent by
    default).
    """
    maps = _SingleMaps(tree, assets, spec)
    n, b, ell = tree.n_banks, tree.branching, tree.n_steps
    n_codes = 2**n
    if tree.n_leaves * n_codes * n > DPP_CELL_CAP:
        raise GuardViolation(
            f"DPP state space {tree.n_leaves} leaves x {n_codes} indicators exceeds {DPP_CELL_CAP} cells"
        )
    bits = _code_bits(n)
    weights = 1 << np.arange(n)
    Ptab, Ktab, nxt = [None] * (ell + 1), [None] * (ell + 1), [None] * (ell + 1)
    for l in range(ell, -1, -1):
        N = tree.level_size(l)
        iota = np.broadcast_to(bits[None], (N, n_codes, n))
        if l < ell:
            children = b * np.arange(N)[:, None] + np.arange(b)[None, :]
        Pt = iota.astype(float)
        for _ in range(n + 2):
            K = _capital_codes(maps, l, Pt)
            alive = iota & (K >= 0)
            code = alive @ weights
            if l == ell:
                new_Pt = alive.astype(float)
            else:
                new_Pt = Ptab[l + 1][children[:, None, :], code[:, :, None]].mean(axis=2)
            if np.array_equal(new_Pt, Pt):
                break
            Pt = new_Pt
        else:
            raise ConvergenceError(f"DPP local fixed point at level {l} did not settle")
        Ptab[l], Ktab[l], nxt[l] = Pt, K, code
    start = (n_codes - 1) if root_iota is None else int(np.asarray(root_iota, dtype=bool) @ weights)
    codes = np.array([start])
    K_out, P_out = [], []
    never = ell + 1
    tau = np.full((1, n), never, dtype=np.int64)
    for l in range(ell + 1):
        if l > 0:
            codes = np.repeat(nxt[l - 1][np.arange(codes.size), codes], b)
            tau = tree.expand(tau)
        idx = np.arange(codes.size)
        K_out.append(Ktab[l][idx, codes])
        P_out.append(Ptab[l][idx, codes])
        entered = bits[codes]
        left = bits[nxt[l][idx, codes]]
        tau = np.where((tau == never) & entered & ~left, l, tau)
    # banks already in default on entry are recorded as defaulting at t_0
    tau = np.where(~bits[start][None, :], 0, tau)
    return ClearingSolutionT(tree, K_out, P_out, tau, method="dpp", iterations=ell + 1)


def _capital_codes(maps: _SingleMaps, l: int, Pt: np.ndarray) -> np.ndarray:
    """Capital for every (node, indicator) pair; ``Pt`` has shape ``(N, codes, n)``."""
    claims = maps.beta * maps.recv + (1.0 - maps.beta) * (Pt @ maps.Lint)
    return maps.assets.level(l)[:, None, :] + maps.disc[l] * (claims - maps.pbar)


# ---------------------------------------------------------------------------
# exhaustive search on tiny trees


def _stopping_times(tree: TreeSpace, l: int = 0) -> np.ndarray:
    """All stopping times of one bank on the subtree below a level-``l`` node.

    Rows are candidates, columns the subtree's leaves (values are levels).
    """
    ell, b = tree.n_steps, tree.branching
    width = b ** (ell - l)
    here = np.full((1, width), l, dtype=np.int64)
    if l == ell:
        return np.vstack([here, np.full((1, 1), ell + 1, dtype=np.int64)])
    sub = _stopping_times(tree, l + 1)
    combos = [np.hstack(rows) for rows in itertools.product(sub, repeat=b)]
    return np.vstack([here] + combos)


def count_stopping_times(tree: TreeSpace) -> int:
    s = 2
    for _ in range(tree.n_steps):
        s = 1 + s**tree.branching
    return s


def enumerate_solutions_small(tree, assets, spec, guard: int = ENUM_GUARD) -> list:
    """
    Every clearing solution, by checking all adapted default-time fields.

    Returns solutions ordered from most to fewest surviving paths.
    """
    maps = _SingleMaps(tree, assets, spec)
    n = tree.n_banks
    per_bank = count_stopping_times(tree)
    total = per_bank**n
    if total > guard:
        raise GuardViolation(f"{total} candidate default fields exceed the guard {guard}")
    st = _stopping_times(tree)
    found = []
    for combo in itertools.product(range(per_bank), repeat=n):
        tau = np.stack([st[c] for c in combo], axis=1)
        P = maps.backward(tau)
        K, new_tau = maps.forward(P)
        if np.array_equal(new_tau, tau):
            found.append(ClearingSolutionT(tree, K, P, tau, method="enumeration"))
    found.sort(key=lambda s: (-(s.tau > tree.n_steps).sum(), tuple(s.tau.ravel())))
    return found


# ---------------------------------------------------------------------------
# volatility decomposition


@dataclass
class VolDecomposition:
    """``theta[l][node, :, j]`` is bank ``j``'s survival loading on discounted assets.

    ``residuals[l]`` holds the branchwise error of the capital dynamics
    identity for the step from level ``l`` to ``l + 1``.
    """

    theta: list
    residuals: list

    @property
    def max_residual(self) -> float:
        return max((float(np.max(np.abs(r))) for r in self.residuals), default=0.0)


def vol_decompose(
    tree,
    assets,
    solution: ClearingSolutionT,
    spec: NetworkSpec,
    all_banks: bool = False,
    rcond_warn: float = 1e-12,
) -> VolDecomposition:
    """
    Write each one-step change in survival probability as ``theta_j^T dx~``.

    On each node ``theta`` solves the ``n x n`` system formed by differencing
    successor values of ``P`` and of discounted assets against the first
    successor. With martingale assets this reproduces the branchwise
    dynamics ``dK~_i = dx~_i + e^{-rT}(1-beta) sum_j L_ji theta_j^T dx~``.

    ``theta_j`` only enters through banks holding claims on ``j``; unless
    ``all_banks`` is set it is reported as zero for banks owing nothing to
    other banks.
    """
    n, b = tree.n_banks, tree.branching
    if b != n + 1:
        raise ValueError("volatility decomposition needs the (n+1)-ary tree")
    r = spec.riskfree_r
    beta = spec.recovery_beta
    Lint = spec.interbank(0)
    dT = math.exp(-r * tree.maturity)
    thetas, residuals = [], []
    for l in range(tree.n_steps):
        N = tree.level_size(l)
        xc = assets.discounted(l + 1).reshape(N, b, n)
        Pc = solution.P[l + 1].reshape(N, b, n)
        X = xc[:, 1:, :] - xc[:, :1, :]
        dP = Pc[:, 1:, :] - Pc[:, :1, :]
        cond = np.linalg.cond(X)
        if np.any(1.0 / cond < rcond_warn):
            warnings.warn(f"ill-conditioned asset differences at level {l}", RuntimeWarning, stacklevel=2)
        theta = np.linalg.solve(X, dP)
        if not all_banks:
            theta = theta * (Lint.sum(axis=1) > 0)
        dx = xc - assets.discounted(l)[:, None, :]
        dPfit = np.einsum("nbk,nkj->nbj", dx, theta)
        Kt_parent = math.exp(-r * l * tree.dt) * solution.K[l]
        Kt_child = math.exp(-r * (l + 1) * tree.dt) * solution.K[l + 1].reshape(N, b, n)
        dK = Kt_child - Kt_parent[:, None, :]
        model = dx + dT * (1.0 - beta) * (dPfit @ Lint)
        thetas.append(theta)
        residuals.append(dK - model)
    return VolDecomposition(thetas, residuals)
