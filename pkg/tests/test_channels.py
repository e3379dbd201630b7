import numpy as np
import pytest
from hypothesis import given, strategies as st

from treebroadcast.channels import (build_channel, bsc, custom_noise, erasure_noise, mix_noise,
                                    power_noise, qsym, second_eigenvalue, stationary_distribution)
from treebroadcast.errors import NegativeEntry, NonErgodic, RowSumError

from conftest import ergodic_matrices, random_stochastic


def test_bsc_is_valid_and_ergodic():
    ch = build_channel([[0.7, 0.3], [0.3, 0.7]])
    assert ch.ergodic and ch.q == 2
    np.testing.assert_allclose(ch.v, [0.5, 0.5])


def test_row_sum_error():
    with pytest.raises(RowSumError):
        build_channel([[0.7, 0.2], [0.3, 0.7]])


def test_negative_entry():
    with pytest.raises(NegativeEntry):
        build_channel([[1.2, -0.2], [0.3, 0.7]])


def test_periodic_chain_flagged_not_fatal():
    ch = build_channel([[0, 1], [1, 0]])
    assert not ch.ergodic
    with pytest.raises(NonErgodic):
        stationary_distribution(ch)


def test_reducible_chain_flagged():
    assert not build_channel([[1, 0], [0.5, 0.5]]).ergodic


def test_stationary_examples():
    np.testing.assert_allclose(stationary_distribution(build_channel([[0.9, 0.1], [0.3, 0.7]])),
                               [0.75, 0.25], atol=1e-12)
    np.testing.assert_allclose(stationary_distribution(qsym(4, 0.3)), np.full(4, 0.25), atol=1e-12)


def test_second_eigenvalue_examples():
    assert second_eigenvalue(bsc(0.1)) == pytest.approx(0.8, abs=1e-12)
    assert second_eigenvalue(build_channel([[0.9, 0.1], [0.3, 0.7]])) == pytest.approx(0.6, abs=1e-12)
    assert second_eigenvalue(qsym(3, 0.2)) == pytest.approx(0.7, abs=1e-12)


def test_complex_spectrum_uses_modulus():
    # rotation-like 3-cycle mixed with identity: eigenvalues 1 and a complex pair
    cyc = np.roll(np.eye(3), 1, axis=1)
    m = 0.5 * np.eye(3) + 0.5 * cyc
    expected = sorted(abs(np.linalg.eigvals(m)))[-2]
    assert second_eigenvalue(build_channel(m)) == pytest.approx(expected, abs=1e-12)


def test_power_noise_examples():
    ch = bsc(0.3)
    np.testing.assert_array_equal(power_noise(ch, 0).N, np.eye(2))
    np.testing.assert_allclose(power_noise(ch, 1).N, ch.M)
    np.testing.assert_allclose(power_noise(ch, 2).N, [[0.58, 0.42], [0.42, 0.58]], atol=1e-15)


def test_mix_noise_examples():
    np.testing.assert_allclose(mix_noise([0.5, 0.5], 0).N, np.eye(2))
    np.testing.assert_allclose(mix_noise([0.2, 0.8], 1).N, [[0.2, 0.8], [0.2, 0.8]])
    np.testing.assert_allclose(mix_noise([0.5, 0.5], 0.4).N, [[0.8, 0.2], [0.2, 0.8]])
    assert not mix_noise([1.0, 0.0], 0.5).nondegenerate


def test_erasure_noise_examples():
    np.testing.assert_allclose(erasure_noise(2, 0.25).N, [[0.75, 0, 0.25], [0, 0.75, 0.25]])
    np.testing.assert_allclose(erasure_noise(3, 0).N, np.hstack([np.eye(3), np.zeros((3, 1))]))
    np.testing.assert_allclose(erasure_noise(2, 1).N[:, -1], 1)
    assert erasure_noise(3, 0.5).b == 4


def test_custom_noise_validated():
    with pytest.raises(RowSumError):
        custom_noise([[0.5, 0.4], [0.5, 0.5]])


@given(ergodic_matrices(), st.integers(0, 8), st.integers(0, 8))
def test_power_noise_composes(m, j, k):
    ch = build_channel(m)
    np.testing.assert_allclose(power_noise(ch, j + k).N,
                               power_noise(ch, j).N @ np.linalg.matrix_power(m, k), atol=1e-12)


@given(ergodic_matrices())
def test_stationary_fixed_point_and_positive(m):
    ch = build_channel(m)
    v = stationary_distribution(ch)
    assert np.max(np.abs(v @ m - v)) <= 1e-10
    assert np.all(v > 0) and abs(v.sum() - 1) < 1e-12
    assert ch.lambda2 < 1


@given(ergodic_matrices(), st.integers(1, 5))
def test_second_eigenvalue_of_power(m, k):
    # Dirichlet matrices are diagonalizable with probability one
    ch = build_channel(m)
    chk = build_channel(np.linalg.matrix_power(m, k))
    assert chk.lambda2 == pytest.approx(ch.lambda2 ** k, abs=1e-9)


@given(ergodic_matrices(), st.floats(0, 1), st.integers(0, 5))
def test_noise_rows_sum_to_one(m, eps, k):
    ch = build_channel(m)
    nu = np.random.default_rng(k).dirichlet(np.ones(ch.q))
    for noise in (power_noise(ch, k), mix_noise(nu, eps), erasure_noise(ch.q, eps)):
        assert np.max(np.abs(noise.N.sum(axis=1) - 1)) <= 1e-12
        assert np.all(noise.N >= 0)


def test_channel_is_immutable():
    ch = bsc(0.3)
    with pytest.raises(ValueError):
        ch.M[0, 0] = 1.0


def test_large_q_stationary(rng):
    m = random_stochastic(rng, 70, floor=1e-4)
    v = build_channel(m).v
    assert np.max(np.abs(v @ m - v)) <= 1e-10
