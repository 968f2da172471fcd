"""
Clearing with obligations due at several tree levels.

Each bank holds a cash account ``V`` (risky/risk-free mix rebalanced at every
date), marks its future interbank claims to market with the counterparties'
survival probabilities, and defaults the first time ``min(K, V) < 0``.

The solver follows a Picard scheme over default times: a forward sweep
computes cash, net worth and defaults level by level with counterparties'
status taken from the previous iterate, and a backward sweep recomputes
survival probabilities for every maturity. A constructive dynamic-programming
solver is kept as fallback should the sweeps cycle.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, GuardViolation
from .network import NetworkSpec
from .tree import AssetField, TreeSpace

STRATEGY_KINDS = ("alpha0", "alpha1", "alphaL", "optimal", "table")


@dataclass(frozen=True)
class RebalancingStrategy:
    """Fraction of the cash account held in the risk-free asset after each date.

    ``optimal`` is the closed-form capital-adequacy strategy with risk weight
    ``w`` and ratio threshold ``theta_reg``; ``table`` reads fixed fractions
    from ``table[level, bank]``.
    """

    kind: str = "alpha0"
    w: float | tuple = 2.0
    theta_reg: float = 0.08
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if self.kind == "optimal":
            if np.any(np.asarray(self.w) <= 0) or self.theta_reg <= 0:
                raise ValueError("optimal strategy needs w > 0 and theta_reg > 0")
        if self.kind == "table":
            if self.table is None:
                raise ValueError("table strategy needs a table")
            t = np.asarray(self.table, dtype=float)
            if np.any((t < 0) | (t > 1)):
                raise ValueError("table entries must lie in [0,1]")

    @property
    def performance_independent(self) -> bool:
        """True when the fractions ignore K and V."""
        return self.kind in ("alpha0", "alpha1", "table")

    @property
    def label(self) -> str:
        if self.kind == "optimal":
            return f"optimal(w={self.w},theta={self.theta_reg})"
        return self.kind


def capital_ratio_bound(K, V, recoveries, w, theta_reg):
    """Smallest risk-free fraction meeting ``K / (w (1-alpha)(V+rec)) >= theta``.

    ``[1 - K / (w theta (V + rec))]^+``; an empty account gives 0.
    """
    K = np.asarray(K, dtype=float)
    denom = np.asarray(w, dtype=float) * theta_reg * (np.asarray(V, dtype=float) + recoveries)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(denom > 0, 1.0 - K / denom, 0.0)
    return np.clip(raw, 0.0, 1.0)


def eval_strategy(strategy: RebalancingStrategy, level: int, K, V, recoveries, x, solvent=None):
    """Risk-free fractions at one level; arrays are ``(nodes, n)``.

    Entries for banks not in ``solvent`` are 0: defaulted banks are not
    rebalanced.
    """
    K = np.asarray(K, dtype=float)
    shape = K.shape
    kind = strategy.kind
    if kind == "alpha0":
        a = np.zeros(shape)
    elif kind == "alpha1":
        a = np.ones(shape)
    elif kind == "table":
        a = np.broadcast_to(np.asarray(strategy.table, dtype=float)[level], shape).copy()
    elif kind == "alphaL":
        denom = np.asarray(V, dtype=float) + recoveries
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(denom > 0, 1.0 - np.asarray(x) / denom, 0.0)
        a = np.clip(raw, 0.0, 1.0)
    else:
        a = capital_ratio_bound(K, V, recoveries, strategy.w, strategy.theta_reg)
    if solvent is not None:
        a = np.where(solvent, a, 0.0)
    return a


@dataclass
class ClearingSolutionMulti:
    """Adapted processes on the tree; per-level arrays are ``(b**l, n)``.

    ``P[k][l]`` is the survival probability to ``t_k`` seen from level ``l <= k``.
    ``tau`` holds default levels per leaf, ``n_steps + 1`` meaning never.
    ``defaults[l]`` flags banks defaulting exactly at level ``l``.
    """

    tree: TreeSpace
    K: list
    V: list
    P: list
    tau: np.ndarray
    defaults: list
    alpha: list
    recoveries: list
    mode: str = "mtm"
    method: str = "picard"
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    def survival(self, level: int, maturity: int) -> np.ndarray:
        return self.P[maturity][level]

    def survival_at_zero(self) -> np.ndarray:
        """``P_i(0, t_k)`` as an ``(n, n_steps + 1)`` array."""
        return np.stack([self.P[k][0][0] for k in range(self.tree.n_steps + 1)], axis=1)

    def survival_curve(self) -> np.ndarray:
        """Tree probability of ``tau > t_k`` per bank, shape ``(n, n_steps + 1)``.

        Equals ``survival_at_zero`` under mark-to-market accounting; under
        historical pricing it is the realized-default frequency.
        """
        return np.stack([(self.tau > k).mean(axis=0) for k in range(self.tree.n_steps + 1)], axis=1)

    def iota(self, level: int) -> np.ndarray:
        """``1{tau >= t_l}``: solvent going into level ``l``."""
        alive = np.ones((1, self.tree.n_banks), dtype=bool)
        for l in range(level):
            alive = self.tree.expand(alive & ~self.defaults[l])
        return alive

    def default_probability_by(self, level: int) -> np.ndarray:
        """Tree probability that each bank has defaulted at or before ``level``."""
        return (self.tau <= level).mean(axis=0)


class _Layout:
    """Precomputed liability slices and discount factors."""

    def __init__(self, tree: TreeSpace, spec: NetworkSpec):
        if spec.n_maturities != tree.n_steps + 1:
            raise ValueError(
                f"network has {spec.n_maturities} maturities, tree has {tree.n_steps + 1} levels"
            )
        if spec.n_banks != tree.n_banks:
            raise ValueError("network and tree disagree on the number of banks")
        L = spec.liabilities
        self.beta = spec.recovery_beta
        self.r = spec.riskfree_r
        self.lint = L[:, :, 1:]
        self.pbar = L.sum(axis=2)
        self.has_claims = [bool(np.any(self.lint[k])) for k in range(L.shape[0])]
        t = tree.times
        self.disc = np.exp(-self.r * np.clip(t[None, :] - t[:, None], 0.0, None))
        self.n_levels = tree.n_steps + 1

    def future_liabilities(self, l: int) -> np.ndarray:
        out = np.zeros(self.pbar.shape[1])
        for k in range(l + 1, self.n_levels):
            out += self.disc[l, k] * self.pbar[k]
        return out

    def recovery_value(self, l: int, D: np.ndarray) -> np.ndarray:
        """Recoveries owed to each bank from banks defaulting at ``l``, valued at ``t_l``."""
        out = np.zeros(D.shape)
        if self.beta == 0:
            return out
        Df = D.astype(float)
        for k in range(l, self.n_levels):
            if self.has_claims[k]:
                out += self.disc[l, k] * (Df @ self.lint[k])
        return self.beta * out


def _forward_sweep(tree, assets, lay: _Layout, strategy, P, mode, prev_D=None):
    """One forward pass: cash, net worth and defaults given survival probabilities.

    ``P[k][l]`` supplies survival of non-defaulting counterparties in MtM mode;
    HPA mode values them at par until default.
    """
    n = tree.n_banks
    beta = lay.beta
    growth = math.exp(lay.r * tree.dt)
    K_out, V_out, D_out, A_out, R_out = [], [], [], [], []
    alive = np.ones((1, n), dtype=bool)
    if prev_D is not None:
        prev_alive = alive_before(tree, prev_D)
    for l in range(lay.n_levels):
        x_l = assets.level(l)
        if l == 0:
            base = np.broadcast_to(x_l, (1, n)).astype(float)
        else:
            a_prev = tree.expand(A_out[-1])
            carry = tree.expand(V_out[-1] + R_out[-1])
            ret = growth * a_prev + (x_l / tree.expand(assets.level(l - 1))) * (1.0 - a_prev) - 1.0
            base = (1.0 + ret) * carry
            alive = tree.expand(alive & ~D_out[-1])
        fut_const = lay.future_liabilities(l)
        if prev_D is not None:
            K, V, D = _jacobi_node(lay, l, base, fut_const, alive, P, prev_alive[l], prev_D[l])
            rec = lay.recovery_value(l, D)
            solvent = alive & ~D
            a = eval_strategy(strategy, l, K, V, rec, x_l, solvent)
            K_out.append(K), V_out.append(V), D_out.append(D), A_out.append(a), R_out.append(rec)
            continue
        alive_f = alive.astype(float)
        D = np.zeros_like(alive)
        while True:
            keep = alive & ~D
            V = base - lay.pbar[l]
            if lay.has_claims[l]:
                V = V + keep.astype(float) @ lay.lint[l]
            K = V - fut_const
            if beta > 0 and lay.has_claims[l]:
                K = K + beta * (D.astype(float) @ lay.lint[l])
            for k in range(l + 1, lay.n_levels):
                if not lay.has_claims[k]:
                    continue
                if mode == "mtm":
                    mark = alive_f * (beta + (1.0 - beta) * P[k][l] * keep)
                else:
                    mark = alive_f * (beta + (1.0 - beta) * keep)
                K = K + lay.disc[l, k] * (mark @ lay.lint[k])
            new_D = alive & (np.minimum(K, V) < 0)
            if np.array_equal(new_D, D):
                break
            D = new_D
        rec = lay.recovery_value(l, D)
        solvent = alive & ~D
        a = eval_strategy(strategy, l, K, V, rec, x_l, solvent)
        K_out.append(K)
        V_out.append(V)
        D_out.append(D)
        A_out.append(a)
        R_out.append(rec)
    return K_out, V_out, D_out, A_out, R_out


def _jacobi_node(lay, l, base, fut_const, alive, P, cp_alive, cp_D):
    """Own cash and net worth with counterparties' status read from the previous iterate."""
    beta = lay.beta
    V = base - lay.pbar[l]
    if lay.has_claims[l]:
        V = V + (cp_alive & ~cp_D).astype(float) @ lay.lint[l]
    K = V - fut_const
    if beta > 0 and lay.has_claims[l]:
        K = K + beta * (cp_D.astype(float) @ lay.lint[l])
    cp_f = cp_alive.astype(float)
    for k in range(l + 1, lay.n_levels):
        if lay.has_claims[k]:
            K = K + lay.disc[l, k] * ((cp_f * (beta + (1.0 - beta) * P[k][l])) @ lay.lint[k])
    D = alive & (np.minimum(K, V) < 0)
    return K, V, D


def alive_before(tree: TreeSpace, D_levels) -> list:
    """``1{tau >= t_l}`` per level from per-level default flags."""
    out = []
    alive = np.ones((1, tree.n_banks), dtype=bool)
    for l, D in enumerate(D_levels):
        if l > 0:
            alive = tree.expand(alive & ~D_levels[l - 1])
        out.append(alive)
    return out


def default_levels(tree: TreeSpace, D_levels) -> np.ndarray:
    """Per-leaf first default level (``n_steps + 1`` for never) from per-level flags."""
    n = tree.n_banks
    never = tree.n_steps + 1
    tau = np.full((1, n), never, dtype=np.int64)
    for l, D in enumerate(D_levels):
        if l > 0:
            tau = tree.expand(tau)
        tau = np.where((tau == never) & D, l, tau)
    return tau


def survival_from_defaults(tree: TreeSpace, D_levels, mode: str = "mtm"):
    """``P[k][l] = P(tau > t_k | F_{t_l})`` by backward averaging over successors."""
    n_levels = tree.n_steps + 1
    surv = []
    alive = np.ones((1, tree.n_banks), dtype=bool)
    for l in range(n_levels):
        if l > 0:
            alive = tree.expand(alive)
        alive = alive & ~D_levels[l]
        surv.append(alive)
    P = []
    for k in range(n_levels):
        row = [None] * (k + 1)
        row[k] = surv[k].astype(float)
        for l in range(k - 1, -1, -1):
            row[l] = tree.branch_mean(row[l + 1]) if mode == "mtm" else surv[l].astype(float)
        P.append(row)
    return P


def _tau_digest(tau: np.ndarray) -> str:
    return hashlib.blake2b(tau.tobytes(), digest_size=16).hexdigest()


def _check_inputs(tree, assets, spec):
    if assets.tree != tree:
        raise ValueError("asset field was built on a different tree")
    if not math.isclose(assets.r, spec.riskfree_r, rel_tol=0, abs_tol=1e-15):
        raise ValueError(f"asset drift rate {assets.r} differs from network rate {spec.riskfree_r}")
    if spec.n_maturities > 1 and np.any(spec.liabilities[0] != 0):
        raise ValueError("obligations at t_0 are not allowed")


def clear_multi(
    tree: TreeSpace,
    assets: AssetField,
    spec: NetworkSpec,
    strategy: RebalancingStrategy | None = None,
    max_iter: int | None = None,
    dpp_budget: int = 2_000_000,
    sweep: str = "jacobi",
) -> ClearingSolutionMulti:
    """Mark-to-market clearing solution, Picard from 'nobody ever defaults'.

    ``sweep="jacobi"`` reads every counterparty's default status from the
    previous iterate; ``sweep="local"`` instead resolves simultaneous
    defaults at each node by its greatest local fixed point. Falls back to the constructive dynamic-programming solver if the
    default-time field revisits an earlier non-fixed state; the result's
    ``method`` records which path produced it.
    """
    strategy = strategy or RebalancingStrategy("alpha0")
    if sweep not in ("jacobi", "local"):
        raise ValueError(f"sweep must be 'jacobi' or 'local', got {sweep!r}")
    _check_inputs(tree, assets, spec)
    lay = _Layout(tree, spec)
    n = tree.n_banks
    D_levels = [np.zeros((tree.level_size(l), n), dtype=bool) for l in range(lay.n_levels)]
    tau = default_levels(tree, D_levels)
    P = survival_from_defaults(tree, D_levels)
    cap = max_iter or tree.n_steps * n * tree.n_leaves + 1
    seen = {_tau_digest(tau)}
    for it in range(1, cap + 1):
        prev = D_levels if sweep == "jacobi" else None
        K, V, D_new, A, R = _forward_sweep(tree, assets, lay, strategy, P, "mtm", prev)
        tau_new = default_levels(tree, D_new)
        if np.array_equal(tau_new, tau):
            return ClearingSolutionMulti(
                tree, K, V, P, tau, D_new, A, R, mode="mtm", method="picard", iterations=it,
                meta={"strategy": strategy.label},
            )
        digest = _tau_digest(tau_new)
        if digest in seen:
            sol = clear_multi_dpp(tree, assets, spec, strategy, budget=dpp_budget)
            sol.meta["picard_cycle_at"] = it
            return sol
        seen.add(digest)
        tau = tau_new
        D_levels = D_new
        P = survival_from_defaults(tree, D_new)
    raise ConvergenceError(f"Picard sweeps exceeded the cap of {cap}")


def forward_clearing(tree, assets, spec, strategy, mode="hpa") -> ClearingSolutionMulti:
    """Single forward construction used for historical-price accounting."""
    _check_inputs(tree, assets, spec)
    lay = _Layout(tree, spec)
    K, V, D, A, R = _forward_sweep(tree, assets, lay, strategy, None, mode)
    P = survival_from_defaults(tree, D, mode="hpa")
    tau = default_levels(tree, D)
    return ClearingSolutionMulti(
        tree, K, V, P, tau, D, A, R, mode="hpa", method="forward", iterations=1,
        meta={"strategy": strategy.label},
    )


# ---------------------------------------------------------------------------
# constructive dynamic programming (fallback)


class _DPP:
    """Greatest local fixed points over (node, solvency set, carried cash).

    Each call resolves the node's defaults jointly with the continuation
    survival probabilities of its subtree. States are memoized on their exact
    inputs; ``budget`` caps the number of subtree evaluations.
    """

    def __init__(self, tree, assets, lay: _Layout, strategy, budget):
        self.tree = tree
        self.assets = assets
        self.lay = lay
        self.strategy = strategy
        self.budget = budget
        self.calls = 0
        self.memo = {}

    def solve(self, l, node, iota, base):
        key = (l, node, iota.tobytes(), base.tobytes())
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.calls += 1
        if self.calls > self.budget:
            raise GuardViolation(f"dynamic-programming fallback exceeded {self.budget} state evaluations")
        lay, tree = self.lay, self.tree
        n = tree.n_banks
        last = l == lay.n_levels - 1
        cont = None if last else {k: np.ones(n) for k in range(l + 1, lay.n_levels)}
        seen = set()
        cap = 4 * (n + 2) * lay.n_levels + 16
        for _ in range(cap):
            K, V, D = self._local_defaults(l, iota, base, cont)
            if last:
                break
            rec = lay.recovery_value(l, D[None])[0]
            new_cont = self._continuation(l, node, K, V, rec, iota & ~D)
            if all(np.array_equal(new_cont[k], cont[k]) for k in cont):
                break
            sig = b"".join(new_cont[k].tobytes() for k in sorted(new_cont))
            if sig in seen:
                raise ConvergenceError(f"local fixed point at level {l}, node {node} cycles")
            seen.add(sig)
            cont = new_cont
        else:
            raise ConvergenceError(f"local fixed point at level {l}, node {node} did not settle")
        probs = {l: (iota & ~D).astype(float)}
        if cont is not None:
            probs.update(cont)
        out = (K, V, D, probs)
        self.memo[key] = out
        return out

    def _local_defaults(self, l, iota, base, cont):
        """Greatest set of simultaneous defaults at a node for fixed continuation values."""
        lay = self.lay
        beta = lay.beta
        iota_f = iota.astype(float)
        fut_const = lay.future_liabilities(l)
        D = np.zeros_like(iota)
        while True:
            keep = iota & ~D
            V = base - lay.pbar[l] + keep.astype(float) @ lay.lint[l]
            K = V - fut_const + beta * (D.astype(float) @ lay.lint[l])
            if cont is not None:
                for k in range(l + 1, lay.n_levels):
                    if lay.has_claims[k]:
                        mark = iota_f * (beta + (1.0 - beta) * cont[k] * keep)
                        K = K + lay.disc[l, k] * (mark @ lay.lint[k])
            new_D = iota & (np.minimum(K, V) < 0)
            if np.array_equal(new_D, D):
                return K, V, D
            D = new_D

    def _continuation(self, l, node, K, V, rec, solvent):
        """Branch-averaged survival to every later maturity, children solved recursively."""
        tree, lay = self.tree, self.lay
        a = eval_strategy(self.strategy, l, K[None], V[None], rec[None], self.assets.level(l)[node][None], solvent[None])[0]
        growth = math.exp(lay.r * tree.dt)
        x_l = self.assets.level(l)[node]
        acc = {k: np.zeros(tree.n_banks) for k in range(l + 1, lay.n_levels)}
        for child in tree.successors(l, node):
            x_c = self.assets.level(l + 1)[child]
            ret = growth * a + (x_c / x_l) * (1.0 - a) - 1.0
            base = (1.0 + ret) * (V + rec)
            _, _, _, probs = self.solve(l + 1, child, solvent.copy(), base)
            for k in acc:
                acc[k] += probs[k]
        b = tree.branching
        return {k: v / b for k, v in acc.items()}

    def realize(self):
        """Walk the tree forward from the root, reading off the chosen states."""
        tree, lay = self.tree, self.lay
        n = tree.n_banks
        growth = math.exp(lay.r * tree.dt)
        K_out, V_out, D_out, A_out, R_out = [], [], [], [], []
        P_nodes = [[None] * tree.level_size(l) for l in range(lay.n_levels)]
        states = [(np.ones(n, dtype=bool), np.asarray(self.assets.level(0)[0], dtype=float))]
        for l in range(lay.n_levels):
            Ks, Vs, Ds, As, Rs, nxt = [], [], [], [], [], []
            for node, (iota, base) in enumerate(states):
                K, V, D, probs = self.solve(l, node, iota, base)
                P_nodes[l][node] = probs
                rec = lay.recovery_value(l, D[None])[0]
                solvent = iota & ~D
                a = eval_strategy(self.strategy, l, K[None], V[None], rec[None], self.assets.level(l)[node][None], solvent[None])[0]
                Ks.append(K), Vs.append(V), Ds.append(D), As.append(a), Rs.append(rec)
                if l + 1 < lay.n_levels:
                    x_l = self.assets.level(l)[node]
                    for child in tree.successors(l, node):
                        x_c = self.assets.level(l + 1)[child]
                        ret = growth * a + (x_c / x_l) * (1.0 - a) - 1.0
                        nxt.append((solvent.copy(), (1.0 + ret) * (V + rec)))
            K_out.append(np.array(Ks)), V_out.append(np.array(Vs)), D_out.append(np.array(Ds))
            A_out.append(np.array(As)), R_out.append(np.array(Rs))
            states = nxt
        P = []
        for k in range(lay.n_levels):
            P.append([np.array([P_nodes[l][i][k] for i in range(tree.level_size(l))]) for l in range(k + 1)])
        return K_out, V_out, D_out, A_out, R_out, P


def clear_multi_dpp(tree, assets, spec, strategy=None, budget: int = 2_000_000) -> ClearingSolutionMulti:
    """Constructive solution by backward dynamic programming with forward realization."""
    strategy = strategy or RebalancingStrategy("alpha0")
    _check_inputs(tree, assets, spec)
    lay = _Layout(tree, spec)
    dpp = _DPP(tree, assets, lay, strategy, budget)
    K, V, D, A, R, P = dpp.realize()
    tau = default_levels(tree, D)
    return ClearingSolutionMulti(
        tree, K, V, P, tau, D, A, R, mode="mtm", method="dpp", iterations=dpp.calls,
        meta={"strategy": strategy.label},
    )
