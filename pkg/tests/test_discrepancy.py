import numpy as np
import pytest
from hypothesis import given, strategies as st

from treebroadcast.certify import kstar
from treebroadcast.channels import build_channel, bsc, identity_noise, qsym
from treebroadcast.discrepancy import (build_contraction_norm, discrepancy_constants,
                                       discrepancy_mc, discrepancy_of_atoms, moment_bound_constant,
                                       moment_tensor, norm_from_gram, pair_constants, project_q,
                                       restricted_matrix, t_coefficients, tensorization_delta)
from treebroadcast.errors import DivergentSeries
from treebroadcast.exact import AtomSet, level_atoms
from treebroadcast.trees import bary_tree, validate_antichain

from conftest import ergodic_matrices

PAIR = AtomSet([[0.6, 0.4], [0.4, 0.6]])


def defective_channel(lam=0.2, c=0.2):
    """Uniform-stationary 3-state chain whose action on v_perp is a Jordan block."""
    u = np.linalg.qr(np.array([[1.0, 1, 1], [1, -1, 0], [1, 1, -2]]).T)[0][:, 1:]
    a = np.array([[lam, c], [0.0, lam]])
    return build_channel(np.full((3, 3), 1 / 3) + u @ a @ u.T)


def test_project_q_examples():
    v = np.array([0.2, 0.3, 0.5])
    np.testing.assert_allclose(project_q(v, np.ones(3)), 0, atol=1e-15)
    b = np.array([1.0, 1.0, -1.0])
    np.testing.assert_allclose(project_q(v, b), b)
    np.testing.assert_allclose(project_q([0.5, 0.5], [2.0, 0.0]), [1.0, -1.0])


def test_norm_examples():
    norm = build_contraction_norm(bsc(0.3), 0.41)
    assert norm.alpha == 0.41 and norm.alpha_measured == pytest.approx(0.4)
    with pytest.raises(DivergentSeries):
        build_contraction_norm(defective_channel(), 0.2)
    with pytest.raises(DivergentSeries):
        build_contraction_norm(bsc(0.3), 0.39)


def test_defective_channel_above_spectral_radius():
    ch = defective_channel()
    assert ch.lambda2 == pytest.approx(0.2)
    norm = build_contraction_norm(ch, 0.25)
    assert norm.alpha_measured <= 0.25 * (1 + 1e-9)


def test_random_q4_norm_contracts(rng):
    m = rng.dirichlet(np.ones(4), size=4)
    ch = build_channel(m)
    alpha = ch.lambda2 + 0.05
    norm = build_contraction_norm(ch, alpha)
    np.linalg.cholesky(norm.P)
    b = project_q(ch.v, rng.normal(size=(1000, 4)))
    assert np.all(norm.norm(b @ m.T) <= alpha * norm.norm(b) + 1e-9)


def test_t_coefficients_examples():
    norm = norm_from_gram([0.5, 0.5], [[1.0], [-1.0]], [[1.0]])
    np.testing.assert_allclose(t_coefficients(norm), 0.25 * np.array([[1, -1], [-1, 1]]))
    assert norm.sum_abs_t == pytest.approx(1.0)
    default = build_contraction_norm(bsc(0.3), 0.4)
    assert default.sum_abs_t == pytest.approx(4.0)


@given(ergodic_matrices())
def test_t_identities(m):
    ch = build_channel(m)
    norm = build_contraction_norm(ch, min(0.999, ch.lambda2 + 0.05) if ch.q > 2 else ch.lambda2)
    t = t_coefficients(norm)
    np.testing.assert_allclose(t, t.T, atol=1e-12)
    assert abs(t.sum()) <= 1e-10 * max(1, np.abs(t).sum())
    np.testing.assert_allclose(t @ np.ones(ch.q), 0, atol=1e-10 * max(1, np.abs(t).max()))
    b = np.random.default_rng(0).normal(size=(20, ch.q))
    np.testing.assert_allclose(np.einsum("ni,ij,nj->n", b, t, b), norm.sq(b),
                               rtol=1e-9, atol=1e-12)


def test_discrepancy_examples():
    norm = build_contraction_norm(bsc(0.3), 0.4)
    assert discrepancy_of_atoms(AtomSet([[0.3, 0.3], [0.7, 0.7]]), norm) == 0
    assert discrepancy_of_atoms(PAIR, norm) == pytest.approx(1 / 6, rel=1e-12)
    after = discrepancy_of_atoms(PAIR.apply(bsc(0.3).M), norm)
    assert after == pytest.approx(0.025765, abs=5e-7)
    assert after <= 0.16 / 6


def test_discrepancy_infinite_on_support_mismatch():
    norm = build_contraction_norm(bsc(0.3), 0.4)
    assert discrepancy_of_atoms(AtomSet([[1.0, 0.0], [0.0, 1.0]]), norm) == np.inf


def test_moment_tensor_examples():
    mt = moment_tensor(PAIR)
    assert mt.moments[0, 0, 1] == pytest.approx((1.8 + 0.5333333333333333) / 2)
    for k in range(2):
        assert mt.moments[k, 1 - k, k] == 1.0 and mt.moments[1 - k, k, k] == 1.0
    same = moment_tensor(AtomSet([[0.2, 0.2, 0.2], [0.8, 0.8, 0.8]]))
    np.testing.assert_allclose(same.moments, 1.0)


def test_moment_bound_constant_examples():
    norm = build_contraction_norm(bsc(0.3), 0.4)
    const = moment_bound_constant(norm)
    assert const.C_pairs[0, 1] == pytest.approx(1.0)
    assert const.C_pairs[0, 0] == 0 and const.C == pytest.approx(2.0)
    d = discrepancy_of_atoms(PAIR, norm)
    assert abs(moment_tensor(PAIR).moments[0, 0, 1] - 1) <= const.C * d + 1e-12


def test_tensorization_examples():
    assert tensorization_delta(1, 0.1, 2.0, 8.0) == pytest.approx(0.5)
    assert tensorization_delta(2, 0.1, 2.0, 8.0) == pytest.approx(0.00625)
    deltas = [tensorization_delta(b, 0.1, 2.0, 8.0) for b in range(2, 8)]
    assert all(a > b for a, b in zip(deltas, deltas[1:]))
    with pytest.raises(ValueError):
        tensorization_delta(2, 0.0, 2.0, 8.0)


def test_discrepancy_mc_examples():
    t = bary_tree(2, 2)
    s = validate_antichain(t, t.level(2))
    flat = build_channel(np.full((3, 3), 1 / 3))
    est = discrepancy_mc(t, flat, identity_noise(3), s, build_contraction_norm(flat, 0.1), 1000, 1)
    assert est.mean == 0 and est.stderr == 0
    ch = bsc(0.3)
    norm = build_contraction_norm(ch, 0.4)
    exact = discrepancy_of_atoms(level_atoms(ch, identity_noise(2), 2, 2)[2], norm)
    est = discrepancy_mc(t, ch, identity_noise(2), s, norm, 50_000, seed=3)
    assert abs(est.mean - exact) <= 3 * est.stderr
    assert discrepancy_mc(t, ch, identity_noise(2), s, norm, 50_000, seed=3) == est


@given(ergodic_matrices(qs=(2, 3, 4)), st.floats(0.1, 10.0))
def test_norm_scaling_leaves_kstar_unchanged(m, scale):
    ch = build_channel(m)
    alpha = ch.lambda2 if ch.q == 2 else min(0.999, 1.2 * ch.lambda2 + 1e-3)
    norm = build_contraction_norm(ch, alpha)
    scaled = norm_from_gram(norm.v, norm.U, scale * norm.P, norm.alpha)
    a, b = discrepancy_constants(norm, 2, 0.1), discrepancy_constants(scaled, 2, 0.1)
    assert b.delta == pytest.approx(scale * a.delta, rel=1e-9)
    assert kstar(ch, norm, a.delta) == kstar(ch, scaled, b.delta)


def test_restricted_matrix_intertwines(rng):
    m = rng.dirichlet(np.ones(4), size=4)
    ch = build_channel(m)
    norm = build_contraction_norm(ch, ch.lambda2 + 0.05)
    a = restricted_matrix(ch, norm.U)
    x = rng.normal(size=3)
    np.testing.assert_allclose(m @ (norm.U @ x), norm.U @ (a @ x), atol=1e-12)
    assert pair_constants(norm).shape == (4, 4)
