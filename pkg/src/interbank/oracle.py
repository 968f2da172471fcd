"""
Brute-force references used to certify the clearing engines.

Everything here is deliberately written against the leaf-path picture of
the tree: a quantity at level ``l`` is looked up for leaf ``m`` through the
ancestor index ``m // b**(n_steps - l)``, conditional probabilities are leaf
counts inside a block, and no evaluation helper is imported from the engine
modules. Only the ``TreeSpace``/``NetworkSpec`` types and the asset values
are shared.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardViolation

DEFAULT_GUARD = 2**20
RAW_GUARD = 5_000_000


@dataclass
class OracleSolution:
    """A verified fixed point; ``K[l]``/``P[l]`` are node arrays, ``tau`` leaf levels."""

    K: list
    P: list
    tau: np.ndarray

    def leq(self, other: "OracleSolution") -> bool:
        """Componentwise order in (K, P, tau)."""
        return bool(
            np.all(self.tau <= other.tau)
            and all(np.all(a <= b) for a, b in zip(self.K, other.K))
            and all(np.all(a <= b) for a, b in zip(self.P, other.P))
        )


def _block(tree, level):
    return tree.branching ** (tree.n_steps - level)


def adapted_stopping_times(tree) -> np.ndarray:
    """Every stopping time of a single bank, found by filtering all leaf assignments.

    A leaf assignment ``tau`` with values in ``0..n_steps+1`` is kept when, for
    every level ``l``, ``{tau <= l}`` is a union of level-``l`` blocks.
    """
    ell = tree.n_steps
    leaves = tree.n_leaves
    # compare in log space: the raw count can have thousands of digits
    if leaves * math.log(ell + 2) > math.log(RAW_GUARD):
        raise GuardViolation(f"({ell + 2})^{leaves} raw leaf assignments exceed the oracle limit {RAW_GUARD}")
    grid = np.array(list(itertools.product(range(ell + 2), repeat=leaves)), dtype=np.int64)
    keep = np.ones(len(grid), dtype=bool)
    for l in range(ell + 1):
        hit = (grid <= l).reshape(len(grid), -1, _block(tree, l))
        keep &= np.all(hit == hit[:, :, :1], axis=2).all(axis=1)
    return grid[keep]


def enumerate_fixed_points_single(tree, assets, spec, guard: int = DEFAULT_GUARD, chunk: int = 4096) -> list:
    """
    All single-maturity clearing solutions on a tiny tree.

    Candidate default fields are the products of per-bank stopping times;
    each is materialized into ``(K, P, tau)`` and kept when the capital it
    induces triggers exactly the assumed defaults. Solutions are sorted from
    the top of the lattice down.
    """
    if spec.liabilities.shape[0] != 1:
        raise ValueError("single-maturity oracle needs one maturity")
    n = tree.n_banks
    ell = tree.n_steps
    st = adapted_stopping_times(tree)
    total = len(st) ** n
    if total > guard:
        raise GuardViolation(f"{total} candidate default fields exceed the guard {guard}")
    leaves = tree.n_leaves
    L = spec.liabilities[0]
    beta = spec.recovery_beta
    owed = L.sum(axis=1)
    T = ell * tree.dt
    disc = [math.exp(-spec.riskfree_r * (T - l * tree.dt)) for l in range(ell + 1)]
    anc = [np.arange(leaves) // _block(tree, l) for l in range(ell + 1)]
    x_leaf = np.stack([assets.level(l)[anc[l]] for l in range(ell + 1)], axis=1)  # (leaves, ell+1, n)
    idx = np.array(list(itertools.product(range(len(st)), repeat=n)), dtype=np.int64)
    found = []
    for start in range(0, total, chunk):
        sel = idx[start : start + chunk]
        C = len(sel)
        tau = np.stack([st[sel[:, i]] for i in range(n)], axis=2)  # (C, leaves, n)
        surv = (tau > ell).astype(float)
        # P at the level-l ancestor: share of surviving leaves in its block
        P_leaf = np.empty((C, leaves, ell + 1, n))
        for l in range(ell + 1):
            blk = _block(tree, l)
            share = surv.reshape(C, leaves // blk, blk, n).sum(axis=2) / blk
            P_leaf[:, :, l, :] = share[:, anc[l], :]
        recv = np.einsum("cmlj,ji->cmli", beta + (1.0 - beta) * P_leaf, L[:, 1:])
        K_leaf = x_leaf[None] + np.asarray(disc)[None, None, :, None] * (recv - owed)
        neg = K_leaf < 0
        first = np.where(neg.any(axis=2), neg.argmax(axis=2), ell + 1)
        ok = np.all(first == tau, axis=(1, 2))
        for c in np.flatnonzero(ok):
            K = [K_leaf[c, ::_block(tree, l), l, :].copy() for l in range(ell + 1)]
            P = [P_leaf[c, ::_block(tree, l), l, :].copy() for l in range(ell + 1)]
            found.append(OracleSolution(K, P, tau[c].copy()))
    found.sort(key=lambda s: (-int((s.tau > ell).sum()), -float(sum(k.sum() for k in s.K))))
    return found


def lattice_extremes(solutions: list):
    """Greatest and least elements; raises if the set has none (not a lattice)."""
    top = [s for s in solutions if all(o.leq(s) for o in solutions)]
    bot = [s for s in solutions if all(s.leq(o) for o in solutions)]
    if not top or not bot:
        raise ValueError("solution set has no greatest or least element")
    return top[0], bot[0]


# ---------------------------------------------------------------------------
# multi-maturity certification


@dataclass
class Verdict:
    passed: bool
    component: str = ""
    location: tuple = ()
    detail: str = ""
    checked: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self) -> str:
        if self.passed:
            return "PASS"
        return f"FAIL {self.component} at {self.location}: {self.detail}"


def _alpha(kind, params, K, V, rec, x, level):
    """Risk-free fraction re-derived from the strategy definitions."""
    if kind == "alpha0":
        return np.zeros_like(K)
    if kind == "alpha1":
        return np.ones_like(K)
    if kind == "table":
        return np.broadcast_to(np.asarray(params["table"], dtype=float)[level], K.shape).astype(float)
    if kind == "alphaL":
        cash = V + rec
        frac = np.zeros_like(K)
        pos = cash > 0
        frac[pos] = 1.0 - (np.broadcast_to(x, K.shape)[pos] / cash[pos])
        return np.minimum(np.maximum(frac, 0.0), 1.0)
    if kind == "optimal":
        w = np.broadcast_to(np.asarray(params["w"], dtype=float), K.shape[-1:])
        base = w * params["theta_reg"] * (V + rec)
        frac = np.zeros_like(K)
        pos = base > 0
        frac[pos] = 1.0 - K[pos] / base[pos]
        return np.minimum(np.maximum(frac, 0.0), 1.0)
    raise ValueError(f"unknown strategy {kind!r}")


def _mismatch(name, got, want, atol, rtol):
    """First index where ``got`` differs from ``want`` beyond tolerance, else None."""
    gap = np.abs(got - want)
    bad = gap > atol + rtol * np.abs(want)
    if np.any(bad):
        return tuple(int(i) for i in np.argwhere(bad)[0])
    return None


def certify_multi(tree, assets, spec, strategy, candidate, mode: str = "mtm", atol: float = 1e-10, rtol: float = 1e-12) -> Verdict:
    """
    Re-evaluate every component of the several-maturity map on ``candidate``.

    ``mode="hpa"`` uses historical pricing, where survival is the indicator
    of no realized default. Returns ``PASS`` or the first discrepancy, checked
    in the order default times, survival, cash, net worth.
    """
    ell = tree.n_steps
    n = tree.n_banks
    b = tree.branching
    leaves = tree.n_leaves
    L = np.asarray(spec.liabilities, dtype=float)
    beta = float(spec.recovery_beta)
    r = float(spec.riskfree_r)
    dt = tree.dt
    kind = strategy.kind
    params = {"w": strategy.w, "theta_reg": strategy.theta_reg, "table": strategy.table}
    tau = np.asarray(candidate.tau)
    checked = {}

    # tau must be a stopping time with values in 0..ell+1
    if tau.shape != (leaves, n) or tau.min() < 0 or tau.max() > ell + 1:
        return Verdict(False, "tau", (), "shape or range invalid")
    for l in range(ell + 1):
        blk = b ** (ell - l)
        hit = (tau <= l).reshape(leaves // blk, blk, n)
        bad = np.argwhere(np.any(hit != hit[:, :1, :], axis=1))
        if bad.size:
            node, bank = map(int, bad[0])
            return Verdict(False, "tau", (l, node, bank), "default time is not adapted")

    def node_view(leaf_arr, l):
        return leaf_arr[:: b ** (ell - l)]

    K = [np.asarray(k, dtype=float) for k in candidate.K]
    V = [np.asarray(v, dtype=float) for v in candidate.V]

    # default times from K, V
    first = np.full((leaves, n), ell + 1, dtype=np.int64)
    for l in range(ell, -1, -1):
        anc = np.arange(leaves) // b ** (ell - l)
        trig = np.minimum(K[l][anc], V[l][anc]) < 0
        first = np.where(trig, l, first)
    loc = _mismatch("tau", first.astype(float), tau.astype(float), 0.0, 0.0)
    checked["tau"] = loc is None
    if loc is not None:
        return Verdict(False, "tau", loc, f"expected {first[loc]}, candidate has {tau[loc]}", checked)

    # survival probabilities
    for k in range(ell + 1):
        surv_k = (tau > k).astype(float)
        for l in range(k + 1):
            blk = b ** (ell - l)
            if mode == "mtm":
                want = surv_k.reshape(leaves // blk, blk, n).sum(axis=1) / blk
            else:
                want = (node_view(tau, l) > l).astype(float)
            loc = _mismatch("P", np.asarray(candidate.P[k][l], dtype=float), want, 1e-12, 0.0)
            if loc is not None:
                checked["P"] = False
                return Verdict(False, "P", (k, l, *loc), f"expected {want[loc]}, got {candidate.P[k][l][loc]}", checked)
    checked["P"] = True

    tau_nodes = [node_view(tau, l) for l in range(ell + 1)]
    owed = L.sum(axis=2)  # (levels, n)

    def recoveries(l):
        """Value at t_l of recoveries from banks defaulting at t_l."""
        dead_now = (tau_nodes[l] == l).astype(float)
        tot = np.zeros_like(dead_now)
        for k in range(l, ell + 1):
            tot += math.exp(-r * (k - l) * dt) * dead_now @ L[k][:, 1:]
        return beta * tot

    # cash accounts
    for l in range(ell + 1):
        if l == 0:
            want = np.broadcast_to(assets.level(0), V[0].shape).astype(float)
        else:
            prevK, prevV = K[l - 1], V[l - 1]
            rec = recoveries(l - 1)
            solvent = tau_nodes[l - 1] > l - 1
            a = np.where(solvent, _alpha(kind, params, prevK, prevV, rec, assets.level(l - 1), l - 1), 0.0)
            ratio = assets.level(l) / np.repeat(assets.level(l - 1), b, axis=0)
            gross = math.exp(r * dt) * np.repeat(a, b, axis=0) + ratio * (1.0 - np.repeat(a, b, axis=0))
            paid_in = (tau_nodes[l] > l).astype(float) @ L[l][:, 1:]
            want = gross * np.repeat(prevV + rec, b, axis=0) + paid_in - owed[l]
        loc = _mismatch("V", V[l], want, atol, rtol)
        if loc is not None:
            checked["V"] = False
            return Verdict(False, "V", (l, *loc), f"expected {want[loc]!r}, got {V[l][loc]!r}", checked)
    checked["V"] = True

    # net worth
    for l in range(ell + 1):
        dead_now = (tau_nodes[l] == l).astype(float)
        alive_in = (tau_nodes[l] >= l).astype(float)
        want = V[l] + beta * dead_now @ L[l][:, 1:]
        for k in range(l + 1, ell + 1):
            d = math.exp(-r * (k - l) * dt)
            Pk = np.asarray(candidate.P[k][l], dtype=float)
            want = want + d * (((beta + (1.0 - beta) * Pk) * alive_in) @ L[k][:, 1:] - owed[k])
        loc = _mismatch("K", K[l], want, atol, rtol)
        if loc is not None:
            checked["K"] = False
            return Verdict(False, "K", (l, *loc), f"expected {want[loc]!r}, got {K[l][loc]!r}", checked)
    checked["K"] = True
    return Verdict(True, checked=checked)
