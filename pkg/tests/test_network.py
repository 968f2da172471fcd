import numpy as np
import pytest

from interbank.errors import NetworkError
from interbank.network import NetworkSpec, split_obligations, validate


def test_empty_network_is_valid():
    s = NetworkSpec.single(np.zeros((3, 4)))
    assert np.all(s.total_liabilities() == 0)


def test_self_dealing_rejected_with_coordinates():
    with pytest.raises(NetworkError, match=r"self-dealing at \(1,1\)"):
        NetworkSpec.single([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])


def test_negative_and_bad_beta_rejected():
    with pytest.raises(NetworkError, match="negative"):
        NetworkSpec.single([[0.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
    with pytest.raises(NetworkError, match="recovery_beta"):
        NetworkSpec.single(np.zeros((2, 3)), beta=1.5)


def test_sample_network_totals():
    s = NetworkSpec.single([[0.5, 0, 1], [0.5, 1, 0]])
    assert np.allclose(s.total_liabilities(), [1.5, 1.5])
    assert np.allclose(s.receivables(), [1.0, 1.0])
    assert np.allclose(s.without_interbank().interbank(), 0.0)


def test_validate_idempotent():
    s = NetworkSpec.single([[0.5, 0, 1], [0.5, 1, 0]], beta=0.2)
    assert np.array_equal(validate(validate(s)).liabilities, s.liabilities)


def test_thirds_split():
    lbar = 0.7
    s = split_obligations(NetworkSpec.single([[0.5, 0, lbar], [0.5, lbar, 0]]), 12, weights={3: 1 / 3, 6: 1 / 3, 12: 1 / 3})
    assert s.n_maturities == 13
    for l in range(13):
        want = lbar / 3 if l in (3, 6, 12) else 0.0
        assert s.liabilities[l, 0, 2] == pytest.approx(want, abs=1e-15)


def test_all_mass_first_maturity():
    base = NetworkSpec.single([[0.5, 0, 1], [0.5, 1, 0]])
    s = split_obligations(base, 4, weights=[0, 1, 0, 0, 0])
    assert np.allclose(s.liabilities[1], base.liabilities[0])
    assert np.allclose(s.liabilities[2:], 0.0)


@pytest.mark.parametrize("seed", [0, 1, 2024])
def test_random_split_conserves(seed):
    base = NetworkSpec.single([[0.5, 0, 1], [0.5, 1, 0]])
    s = split_obligations(base, 12, seed=seed)
    assert np.allclose(s.liabilities.sum(axis=0), base.liabilities[0], rtol=0, atol=1e-12)
    assert np.all(s.liabilities[0] == 0)
    again = split_obligations(base, 12, seed=seed)
    assert np.array_equal(s.liabilities, again.liabilities)


def test_weights_must_sum_to_one():
    base = NetworkSpec.single([[0.5, 0, 1], [0.5, 1, 0]])
    with pytest.raises((ValueError, NetworkError)):
        split_obligations(base, 4, weights={1: 0.5, 2: 0.4})
