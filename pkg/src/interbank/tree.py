"""
Multinomial event trees and correlated geometric random walks on them.

Nodes are stored level-major: level ``l`` holds ``b**l`` nodes and the
children of node ``i`` are ``b*i, ..., b*i + b - 1`` (0-based), so every
per-level quantity is a flat array of shape ``(b**l, n)`` and conditional
expectations are plain reshapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardViolation

DEFAULT_NODE_CAP = 50_000_000


@dataclass(frozen=True)
class TreeSpace:
    """Finite filtered probability space of a ``b``-ary tree with equal branch weights."""

    n_banks: int
    n_steps: int
    dt: float
    branching: int

    @property
    def maturity(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def branch_prob(self) -> float:
        return 1.0 / self.branching

    @property
    def n_leaves(self) -> int:
        return self.branching**self.n_steps

    @property
    def total_nodes(self) -> int:
        return sum(self.level_size(l) for l in range(self.n_steps + 1))

    def level_size(self, level: int) -> int:
        return self.branching**level

    def node_prob(self, level: int) -> float:
        return float(self.branching) ** (-level)

    def successors(self, level: int, node: int) -> range:
        """0-based indices at ``level + 1`` of the children of ``node``."""
        if not 0 <= level < self.n_steps:
            raise IndexError(f"level {level} has no successors")
        if not 0 <= node < self.level_size(level):
            raise IndexError(f"node {node} out of range at level {level}")
        b = self.branching
        return range(b * node, b * node + b)

    def successors_1based(self, level: int, node: int) -> list[int]:
        """Successors in 1-based numbering: ``b(i-1) + {1, ..., b}``."""
        return [j + 1 for j in self.successors(level, node - 1)]

    def ancestor(self, level: int, node: int, at_level: int) -> int:
        return node // self.branching ** (level - at_level)

    def branch_mean(self, child_values: np.ndarray) -> np.ndarray:
        """Average over the ``b`` children of each parent (axis 0 is the child level)."""
        b = self.branching
        return child_values.reshape(child_values.shape[0] // b, b, *child_values.shape[1:]).mean(axis=1)

    def expand(self, parent_values: np.ndarray) -> np.ndarray:
        """Repeat each parent's value onto its children."""
        return np.repeat(parent_values, self.branching, axis=0)

    def expand_to(self, values: np.ndarray, from_level: int, to_level: int) -> np.ndarray:
        return np.repeat(values, self.branching ** (to_level - from_level), axis=0)


def build_tree(
    n_banks: int,
    n_steps: int,
    dt: float,
    branching: int | None = None,
    max_nodes: int = DEFAULT_NODE_CAP,
) -> TreeSpace:
    """
    Build the ``(n+1)``-ary tree for ``n_banks`` banks.

    ``branching`` defaults to ``n_banks + 1``; other values are only useful
    for hand-built asset fields such as binomial toy examples.
    """
    if n_banks < 1:
        raise ValueError("n_banks must be >= 1")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    b = n_banks + 1 if branching is None else int(branching)
    if b < 2:
        raise ValueError("branching must be >= 2")
    # geometric sum, computed in exact integers
    total = (b ** (n_steps + 1) - 1) // (b - 1)
    if total > max_nodes:
        raise GuardViolation(
            f"tree with branching {b} and {n_steps} steps has {total} nodes, cap is {max_nodes}"
        )
    return TreeSpace(n_banks=n_banks, n_steps=n_steps, dt=float(dt), branching=b)


def vol_matrix(variances, correlation) -> np.ndarray:
    """
    Symmetric square root ``sigma`` of the covariance ``C`` (``sigma @ sigma == C``).

    ``correlation`` is either a scalar (equicorrelation) or a full matrix.
    """
    var = np.atleast_1d(np.asarray(variances, dtype=float))
    n = var.size
    if np.isscalar(correlation) or np.ndim(correlation) == 0:
        corr = np.full((n, n), float(correlation))
        np.fill_diagonal(corr, 1.0)
    else:
        corr = np.asarray(correlation, dtype=float)
    sd = np.sqrt(var)
    cov = corr * np.outer(sd, sd)
    w, q = np.linalg.eigh(cov)
    if w.min() <= 0:
        raise ValueError(f"covariance is not positive definite (smallest eigenvalue {w.min():.3e})")
    return (q * np.sqrt(w)) @ q.T


def make_perturbations(sigma) -> np.ndarray:
    """
    Branch perturbations ``eps`` of shape ``(n, n+1)`` with zero mean and identity covariance.

    Negated rows 2..n+1 of the Householder reflection sending ``e_1`` to the
    constant unit vector, scaled by ``sqrt(n+1)``. The reflection commutes
    with permutations of the banks, so symmetric inputs yield symmetric
    trees; branch 0 is the common down-move ``(-1, ..., -1)``.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    n = sigma.shape[0]
    if sigma.shape != (n, n):
        raise ValueError(f"sigma must be square, got shape {sigma.shape}")
    rank = np.linalg.matrix_rank(sigma)
    if rank < n:
        raise ValueError(f"sigma is singular: rank {rank} < {n} (rank deficiency {n - rank})")
    m = n + 1
    u = np.full(m, 1.0 / math.sqrt(m))
    v = -u
    v[0] += 1.0
    h = np.eye(m) - 2.0 * np.outer(v, v) / (v @ v)
    return -math.sqrt(m) * h[1:, :]


@dataclass(frozen=True)
class AssetField:
    """External asset values ``x(t, omega)`` on every node of a tree."""

    tree: TreeSpace
    values: tuple
    r: float = 0.0
    x0: np.ndarray | None = None
    sigma: np.ndarray | None = None
    eps_tilde: np.ndarray | None = None
    factors: np.ndarray | None = field(default=None, repr=False)

    def level(self, l: int) -> np.ndarray:
        return self.values[l]

    def discounted(self, l: int) -> np.ndarray:
        return math.exp(-self.r * l * self.tree.dt) * self.values[l]

    @classmethod
    def from_levels(cls, tree: TreeSpace, levels, r: float = 0.0) -> "AssetField":
        """Wrap explicit per-level arrays (each of shape ``(b**l, n)``)."""
        vals = []
        for l, arr in enumerate(levels):
            a = np.asarray(arr, dtype=float).reshape(tree.level_size(l), tree.n_banks)
            if not np.all(a > 0):
                raise ValueError(f"asset values must be positive (level {l})")
            a.setflags(write=False)
            vals.append(a)
        if len(vals) != tree.n_steps + 1:
            raise ValueError(f"expected {tree.n_steps + 1} levels, got {len(vals)}")
        return cls(tree=tree, values=tuple(vals), r=float(r), x0=vals[0][0].copy())


def branch_factors(sigma, r: float, dt: float, renormalize: bool = True) -> np.ndarray:
    """Gross one-step growth factors, shape ``(n, n+1)``: bank ``k`` on branch ``j``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    eps = make_perturbations(sigma)
    cov_diag = np.einsum("ik,ik->k", sigma, sigma)
    shocks = sigma.T @ eps
    f = np.exp((r - 0.5 * cov_diag)[:, None] * dt + shocks * math.sqrt(dt))
    if renormalize:
        f *= math.exp(r * dt) / f.mean(axis=1, keepdims=True)
    return f


def grow_assets(tree: TreeSpace, x0, sigma, r: float = 0.0, renormalize: bool = True) -> AssetField:
    """
    Geometric random walk on ``tree``.

    On branch ``j`` bank ``k`` grows by
    ``exp((r - C_kk/2) dt + sigma_k . eps_j sqrt(dt))`` with ``C = sigma @ sigma``.
    With ``renormalize`` each bank's factors are rescaled so their branch
    average is exactly ``exp(r dt)`` (discounted assets become martingales).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    n = tree.n_banks
    if x0.shape != (n,):
        raise ValueError(f"x0 must have {n} entries")
    if not np.all(x0 > 0):
        raise ValueError("x0 must be strictly positive")
    if tree.branching != n + 1:
        raise ValueError("grow_assets needs the (n+1)-ary tree")
    f = branch_factors(sigma, r, tree.dt, renormalize)
    step = f.T  # (b, n)
    levels = [x0[None, :].copy()]
    for _ in range(tree.n_steps):
        prev = levels[-1]
        nxt = (prev[:, None, :] * step[None, :, :]).reshape(-1, n)
        levels.append(nxt)
    for a in levels:
        a.setflags(write=False)
    return AssetField(
        tree=tree,
        values=tuple(levels),
        r=float(r),
        x0=x0,
        sigma=sigma,
        eps_tilde=make_perturbations(sigma),
        factors=f,
    )


def discount(value, t_from: float, t_to: float, r: float):
    """Bring an amount due at ``t_from`` back to ``t_to <= t_from``."""
    if t_from < t_to:
        raise ValueError(f"negative horizon: t_from={t_from} < t_to={t_to}")
    return value * math.exp(-r * (t_from - t_to))
