import math

import numpy as np
import pytest

from interbank.clearing_single import (
    clear_maximal_dpp,
    clear_maximal_picard,
    clear_minimal,
    enumerate_solutions_small,
    static_clearing,
    vol_decompose,
)
from interbank.errors import GuardViolation
from interbank.network import NetworkSpec
from interbank.tree import build_tree, grow_assets, vol_matrix

from conftest import random_single


def test_static_no_liabilities():
    s = NetworkSpec.single(np.zeros((2, 3)))
    assert np.array_equal(static_clearing([1.0, 1.0], s), [1.0, 1.0])


def test_static_extremes_at_terminal_state():
    s = NetworkSpec.single([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    P, K = static_clearing([1.9, 1.3], s, "greatest", return_capital=True)
    assert np.array_equal(P, [1, 1]) and np.allclose(K, [0.9, 0.3])
    P, K = static_clearing([1.9, 1.3], s, "least", return_capital=True)
    assert np.array_equal(P, [0, 0]) and np.allclose(K, [-0.1, -0.7])


def test_static_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(50):
        L = rng.uniform(0, 1, (3, 4))
        np.fill_diagonal(L[:, 1:], 0.0)
        s = NetworkSpec.single(L, float(rng.choice([0.0, 0.5])))
        x = rng.uniform(0.2, 2.0, 3)
        fixed = []
        for code in range(8):
            P = np.array([(code >> i) & 1 for i in range(3)], dtype=float)
            K = x + (s.recovery_beta + (1 - s.recovery_beta) * P) @ s.interbank() - s.total_liabilities()
            if np.array_equal((K >= 0).astype(float), P):
                fixed.append(P)
        top = static_clearing(x, s, "greatest")
        bot = static_clearing(x, s, "least")
        assert all(np.all(f <= top) and np.all(bot <= f) for f in fixed)


def test_maximal_two_state(two_state):
    tree, assets, spec = two_state
    sol = clear_maximal_picard(tree, assets, spec)
    assert np.allclose(sol.K[0][0], [0.6, 0.6], atol=1e-12)
    assert np.allclose(sol.P[0][0], [1, 1])
    assert np.all(sol.tau == sol.never)
    assert np.allclose(sol.tau_times(), 2.0)


def test_minimal_two_state(two_state):
    tree, assets, spec = two_state
    sol = clear_minimal(tree, assets, spec)
    assert np.allclose(sol.K[0][0], [-0.4, -0.4], atol=1e-12)
    assert all(np.all(p == 0) for p in sol.P)
    assert np.all(sol.tau == 0)


def test_dpp_matches_picard_two_state(two_state):
    tree, assets, spec = two_state
    assert clear_maximal_dpp(tree, assets, spec).same_as(clear_maximal_picard(tree, assets, spec), atol=1e-12)


def test_dpp_all_predefaulted(sample_path):
    tree = build_tree(2, 3, 0.25)
    assets = grow_assets(tree, [1.5, 1.5], vol_matrix([0.25, 0.25], 0.5))
    spec = NetworkSpec.single([[0.5, 0, 1], [0.5, 1, 0]], beta=0.4)
    sol = clear_maximal_dpp(tree, assets, spec, root_iota=np.zeros(2, dtype=bool))
    assert all(np.all(p == 0) for p in sol.P)
    for l in range(tree.n_steps + 1):
        d = math.exp(-spec.riskfree_r * (tree.maturity - l * tree.dt))
        want = assets.level(l) - d * (spec.total_liabilities() - spec.recovery_beta * spec.receivables())
        assert np.allclose(sol.K[l], want, atol=1e-12)


def test_enumeration_four_solutions(two_state):
    tree, assets, spec = two_state
    sols = enumerate_solutions_small(tree, assets, spec)
    assert len(sols) == 4
    p0 = sorted(tuple(s.P[0][0].tolist()) for s in sols)
    assert p0 == [(0.0, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)]
    mixed = [s for s in sols if np.allclose(s.P[0][0], 0.5)]
    # one of the two symmetric solutions: both banks survive state 1, default in state 2
    s = next(m for m in mixed if m.tau[0, 0] == m.never)
    assert np.allclose(s.K[0][0], [0.1, 0.1], atol=1e-12)
    assert np.allclose(s.K[1], [[0.9, 0.3], [-0.7, -0.1]], atol=1e-12)
    assert np.allclose(s.tau_times(), [[2, 2], [1, 1]])


def test_enumeration_unique_without_liabilities():
    tree = build_tree(2, 1, 1.0)
    assets = grow_assets(tree, [1.0, 1.0], vol_matrix([0.1, 0.1], 0.0))
    assert len(enumerate_solutions_small(tree, assets, NetworkSpec.single(np.zeros((2, 3))))) == 1


def test_enumeration_guard():
    tree = build_tree(2, 3, 0.25)
    assets = grow_assets(tree, [1.0, 1.0], vol_matrix([0.1, 0.1], 0.0))
    with pytest.raises(GuardViolation):
        enumerate_solutions_small(tree, assets, NetworkSpec.single(np.zeros((2, 3))), guard=1000)


def test_extremes_bracket_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(15):
        tree = build_tree(2, 1, 1.0)
        assets = grow_assets(tree, rng.uniform(0.5, 2, 2), vol_matrix(rng.uniform(0.1, 0.8, 2), rng.uniform(-0.5, 0.8)))
        L = rng.uniform(0, 1.5, (2, 3))
        L[0, 1] = L[1, 2] = 0
        spec = NetworkSpec.single(L)
        sols = enumerate_solutions_small(tree, assets, spec)
        mx, mn = clear_maximal_picard(tree, assets, spec), clear_minimal(tree, assets, spec)
        assert sols[0].same_as(mx, atol=1e-12)
        assert any(s.same_as(mn, atol=1e-12) for s in sols)
        for s in sols:
            assert np.all(mn.tau <= s.tau) and np.all(s.tau <= mx.tau)


def test_dpp_matches_picard_random():
    rng = np.random.default_rng(5)
    for _ in range(30):
        tree, assets, spec = random_single(rng, n_max=3, ell_max=3)
        assert clear_maximal_dpp(tree, assets, spec).same_as(clear_maximal_picard(tree, assets, spec), atol=1e-12)


def test_decoupled_system():
    tree = build_tree(2, 3, 0.25)
    assets = grow_assets(tree, [1.0, 1.2], vol_matrix([0.2, 0.3], 0.4), r=0.02)
    spec = NetworkSpec.single([[0.7, 0, 0], [0.9, 0, 0]], r=0.02)
    sol = clear_maximal_picard(tree, assets, spec)
    for l in range(4):
        d = math.exp(-0.02 * (tree.maturity - l * tree.dt))
        assert np.allclose(sol.K[l], assets.level(l) - d * np.array([0.7, 0.9]), atol=1e-12)


def test_sample_path_scenario(sample_path):
    tree, assets, spec = sample_path
    mx = clear_maximal_picard(tree, assets, spec)
    mn = clear_minimal(tree, assets, spec)
    assert mx.P[0][0][0] == pytest.approx(mx.P[0][0][1], abs=1e-15)
    for a, b in zip(mn.P, mx.P):
        assert np.all(a <= b)
    assert np.all(mn.tau <= mx.tau)


def test_recovery_monotone(sample_path):
    tree = build_tree(2, 6, 1 / 6)
    assets = grow_assets(tree, [1.5, 1.5], vol_matrix([0.25, 0.25], 0.5))
    base = NetworkSpec.single([[0.5, 0, 1], [0.5, 1, 0]])
    prev = None
    for beta in np.linspace(0, 1, 6):
        p = clear_maximal_picard(tree, assets, base.with_beta(beta)).P[0][0]
        if prev is not None:
            assert np.all(p >= prev - 1e-15)
        prev = p


def test_markov_collision():
    # identical asset moves on two branches make their subtrees share states
    tree = build_tree(2, 2, 1.0, branching=3)
    lvl1 = np.array([[1.2, 1.0], [1.2, 1.0], [0.9, 1.4]])
    lvl2 = np.concatenate([v * np.array([[1.1, 0.9], [0.9, 1.2], [1.0, 0.8]]) for v in lvl1])
    from interbank.tree import AssetField

    assets = AssetField.from_levels(tree, [[1.1, 1.05], lvl1, lvl2])
    spec = NetworkSpec.single([[0.6, 0, 0.5], [0.4, 0.6, 0]])
    sol = clear_maximal_picard(tree, assets, spec)
    assert np.allclose(sol.K[1][0], sol.K[1][1]) and np.array_equal(sol.iota(1)[0], sol.iota(1)[1])
    assert np.allclose(sol.K[2][0:3], sol.K[2][3:6]) and np.allclose(sol.P[2][0:3], sol.P[2][3:6])


def test_vol_decomposition(sample_path):
    tree, assets, spec = sample_path
    sol = clear_maximal_picard(tree, assets, spec)
    dec = vol_decompose(tree, assets, sol, spec)
    assert dec.max_residual <= 1e-10
    nonet = spec.without_interbank()
    dec0 = vol_decompose(tree, assets, clear_maximal_picard(tree, assets, nonet), nonet)
    assert dec0.max_residual <= 1e-10
    assert all(np.all(t == 0) for t in dec0.theta)


def test_theta_zero_where_successors_healthy(sample_path):
    tree, assets, spec = sample_path
    sol = clear_maximal_picard(tree, assets, spec)
    dec = vol_decompose(tree, assets, sol, spec)
    for l in range(tree.n_steps):
        healthy = np.all(sol.P[l + 1].reshape(-1, 3, 2) == 1, axis=(1, 2))
        assert np.allclose(dec.theta[l][healthy], 0.0, atol=1e-12)
