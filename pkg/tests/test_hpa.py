import numpy as np
import pytest

from interbank.clearing_multi import RebalancingStrategy, clear_multi
from interbank.clearing_single import clear_maximal_picard
from interbank.hpa import clear_hpa_multi, clear_hpa_single, compare_accounting, hpa_survival
from interbank.network import NetworkSpec
from interbank.term_structure import curve_from_probabilities
from interbank.tree import build_tree, grow_assets, vol_matrix

from conftest import leverage_spec, random_multi, random_single


def test_two_state_greatest(two_state):
    tree, assets, spec = two_state
    h = clear_hpa_single(tree, assets, spec)
    assert np.allclose(h.K[0][0], [0.6, 0.6]) and np.allclose(h.P[0][0], [1, 1])
    assert np.all(h.tau == h.never)


def test_no_interbank_equals_mtm(sample_path):
    tree, assets, spec = sample_path
    s = spec.without_interbank()
    a, b = clear_maximal_picard(tree, assets, s), clear_hpa_single(tree, assets, s)
    assert np.array_equal(a.tau, b.tau)
    assert all(np.allclose(x, y) for x, y in zip(a.K, b.K))


def test_sample_path_capital_dominance(sample_path):
    tree, assets, spec = sample_path
    rep = compare_accounting(clear_maximal_picard(tree, assets, spec), clear_hpa_single(tree, assets, spec))
    assert rep.holds and not rep.first_violation


def test_identical_solutions(sample_path):
    tree, assets, spec = sample_path
    s = clear_maximal_picard(tree, assets, spec)
    assert compare_accounting(s, s).holds


def test_single_dominance_random():
    rng = np.random.default_rng(21)
    for _ in range(30):
        tree, assets, spec = random_single(rng)
        rep = compare_accounting(clear_maximal_picard(tree, assets, spec), clear_hpa_single(tree, assets, spec))
        assert rep.holds, rep.first_violation


def test_multi_dominance_random():
    rng = np.random.default_rng(22)
    s = RebalancingStrategy("alpha0")
    for _ in range(20):
        tree, assets, spec = random_multi(rng)
        rep = compare_accounting(clear_multi(tree, assets, spec, s), clear_hpa_multi(tree, assets, spec, s), spec, s)
        assert rep.holds and not rep.descriptive_only, rep.first_violation


def test_descriptive_flag():
    rng = np.random.default_rng(23)
    tree, assets, spec = random_multi(rng, beta=0.3)
    s = RebalancingStrategy("alpha0")
    rep = compare_accounting(clear_multi(tree, assets, spec, s), clear_hpa_multi(tree, assets, spec, s), spec, s)
    assert rep.descriptive_only and "preconditions unmet" in rep.note


def test_multi_no_network_equals_mtm(leverage_tree):
    tree, assets = leverage_tree
    spec = leverage_spec(1.5)
    s = RebalancingStrategy("optimal")
    a, b = clear_multi(tree, assets, spec, s), clear_hpa_multi(tree, assets, spec, s)
    assert np.array_equal(a.tau, b.tau)
    assert all(np.allclose(x, y) for x, y in zip(a.V, b.V))


def test_hpa_rerun_is_identical(leverage_tree):
    tree, assets = leverage_tree
    s = RebalancingStrategy("optimal")
    a = clear_hpa_multi(tree, assets, leverage_spec(2.0), s)
    b = clear_hpa_multi(tree, assets, leverage_spec(2.0), s)
    assert np.array_equal(a.tau, b.tau) and all(np.array_equal(x, y) for x, y in zip(a.K, b.K))


def test_hpa_low_leverage_yields(leverage_tree):
    tree, assets = leverage_tree
    h = clear_hpa_multi(tree, assets, leverage_spec(1.5), RebalancingStrategy("optimal"))
    r = 100 * curve_from_probabilities(hpa_survival(h)[:, [3, 6, 12]], [0.25, 0.5, 1.0]).rates
    assert np.all(r[:, :2] == 0)
    assert np.all((r[:, 2] >= 0.12 - 0.005) & (r[:, 2] <= 0.20 + 0.005))


def test_mismatched_scenarios(two_state, sample_path):
    with pytest.raises(ValueError):
        compare_accounting(clear_maximal_picard(*two_state), clear_maximal_picard(*sample_path))


def test_dominance_ignores_post_default_balances():
    # both banks fail at t0 under MtM and at t1 under HPA; with alpha1 only the
    # surviving HPA banks move to the risk-free asset, so later balances diverge
    tree = build_tree(2, 3, 0.1)
    assets = grow_assets(tree, [1.0, 2.0], vol_matrix([0.5, 0.5], 0.0))
    L = np.zeros((4, 2, 3))
    L[1, 0] = [0.6, 0.0, 0.6]
    L[2, 1] = L[3, 1] = [0.6, 0.6, 0.0]
    spec = NetworkSpec.multi(L)
    s = RebalancingStrategy("alpha1")
    m, h = clear_multi(tree, assets, spec, s), clear_hpa_multi(tree, assets, spec, s)
    assert np.all(m.defaults[0]) and np.all(h.defaults[1])
    assert np.any(m.V[1] > h.V[1])
    assert compare_accounting(m, h, spec, s).holds
