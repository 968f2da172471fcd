from pathlib import Path

import numpy as np
import pytest

from interbank.network import NetworkSpec, split_obligations
from interbank.tree import AssetField, build_tree, grow_assets, vol_matrix

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion: int, title: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[criterion] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        line = f"[{k}] {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def two_state():
    """Two banks, one step, two equally likely terminal states."""
    tree = build_tree(2, 1, 1.0, branching=2)
    assets = AssetField.from_levels(tree, [[1.6, 1.6], [[1.9, 1.3], [1.3, 1.9]]])
    spec = NetworkSpec.single([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    return tree, assets, spec


@pytest.fixture(scope="session")
def sample_path():
    """Symmetric two-bank monthly scenario with one maturity at T = 1."""
    tree = build_tree(2, 12, 1 / 12)
    assets = grow_assets(tree, [1.5, 1.5], vol_matrix([0.25, 0.25], 0.5))
    spec = NetworkSpec.single([[0.5, 0.0, 1.0], [0.5, 1.0, 0.0]])
    return tree, assets, spec


def leverage_spec(lam: float) -> NetworkSpec:
    lbar = lam - 1.5
    L = np.array([[0.5, 0.0, lbar], [0.5, lbar, 0.0]])
    return split_obligations(NetworkSpec.single(L), 12, weights={3: 1 / 3, 6: 1 / 3, 12: 1 / 3})


@pytest.fixture(scope="session")
def leverage_tree():
    tree = build_tree(2, 12, 1 / 12)
    assets = grow_assets(tree, [1.5, 1.5], vol_matrix([0.25, 0.25], 0.5))
    return tree, assets


def random_single(rng, n_max=3, ell_max=4, dt=0.25, beta=None):
    """Random single-maturity instance small enough for exhaustive checks."""
    n = int(rng.integers(1, n_max + 1))
    ell = int(rng.integers(1, ell_max + 1))
    if n == 3:
        ell = min(ell, 3)
    tree = build_tree(n, ell, dt)
    assets = grow_assets(tree, rng.uniform(0.8, 2.0, n), vol_matrix(rng.uniform(0.05, 0.6, n), rng.uniform(-0.4, 0.8) if n > 1 else 0.0))
    L = rng.uniform(0.0, 1.2, (n, n + 1)) * (rng.uniform(size=(n, n + 1)) < 0.7)
    for i in range(n):
        L[i, i + 1] = 0.0
    b = float(rng.choice([0.0, 0.3])) if beta is None else beta
    return tree, assets, NetworkSpec.single(L, b)


def random_multi(rng, n_max=2, ell_max=3, beta=0.0):
    n = int(rng.integers(1, n_max + 1))
    ell = int(rng.integers(1, ell_max + 1))
    tree = build_tree(n, ell, 0.25)
    assets = grow_assets(tree, rng.uniform(0.8, 2.0, n), vol_matrix(rng.uniform(0.05, 0.6, n), rng.uniform(-0.4, 0.8) if n > 1 else 0.0))
    st = rng.uniform(0.0, 0.8, (ell + 1, n, n + 1)) * (rng.uniform(size=(ell + 1, n, n + 1)) < 0.6)
    st[0] = 0.0
    for i in range(n):
        st[:, i, i + 1] = 0.0
    return tree, assets, NetworkSpec.multi(st, beta)
