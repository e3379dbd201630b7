import itertools

import numpy as np
import pytest

from treebroadcast.channels import bsc, erasure_noise, identity_noise, mix_noise, qsym
from treebroadcast.errors import ZeroLikelihood
from treebroadcast.exact import atoms_tv, enumerate_oracle, level_atoms, reconstruction_error
from treebroadcast.inference import (census_separation, likelihood_vector, likelihood_vectors,
                                     reconstruction_error_mc, root_posterior, second_eigenfunction,
                                     tv_mc)
from treebroadcast.trees import bary_tree, spherical_tree, subtree, validate_antichain


def level(tree, d):
    return validate_antichain(tree, tree.level(d))


def test_likelihood_examples():
    t = bary_tree(2, 1)
    s = level(t, 1)
    np.testing.assert_allclose(likelihood_vector(t, bsc(0.3), identity_noise(2), s, [0, 0]),
                               [0.49, 0.09])
    t = bary_tree(2, 3)
    s = level(t, 3)
    g = likelihood_vector(t, qsym(3, 0.4), erasure_noise(3, 0.2), s, [3] * 8)
    np.testing.assert_allclose(g, np.full(3, 0.2 ** 8), rtol=1e-12)


@pytest.mark.parametrize("tree", [bary_tree(2, 2), bary_tree(2, 3), spherical_tree([3, 2])])
def test_likelihood_matches_oracle_for_every_string(tree):
    ch = qsym(3, 0.35) if tree.n < 15 else bsc(0.2)
    noise = erasure_noise(ch.q, 0.3)
    s = level(tree, tree.height)
    oracle = enumerate_oracle(tree, ch, noise, s)
    taus = np.array(list(itertools.product(range(noise.b), repeat=len(s))))
    g, logs = likelihood_vectors(tree, ch, noise, s, taus)
    np.testing.assert_allclose(g * np.exp(logs)[:, None], oracle.g, rtol=1e-12, atol=1e-300)


def test_subtree_factorisation():
    t = bary_tree(2, 3)
    ch = qsym(3, 0.3)
    noise = mix_noise([0.2, 0.3, 0.5], 0.4)
    s = level(t, 3)
    tau = np.array([0, 1, 2, 0, 1, 1, 2, 0])
    whole = likelihood_vector(t, ch, noise, s, tau)
    # children of the root are nodes 1 and 2; their leaves are the first and last four
    parts = []
    for child, cols in ((1, slice(0, 4)), (2, slice(4, 8))):
        sub = subtree(t, child)
        parts.append(likelihood_vector(sub, ch, noise, level(sub, 2), tau[cols]))
    np.testing.assert_allclose(whole, (ch.M @ parts[0]) * (ch.M @ parts[1]), rtol=1e-12)


def test_deep_tree_does_not_underflow():
    t = bary_tree(2, 13)
    s = level(t, 13)
    tau = np.zeros(len(s), dtype=np.int64)
    g, logs = likelihood_vectors(t, bsc(0.3), erasure_noise(2, 0.5), s, tau[None, :])
    assert np.all(np.isfinite(g)) and np.isfinite(logs[0]) and logs[0] < -700
    post = root_posterior(g[0], [0.5, 0.5])
    assert post.sum() == pytest.approx(1.0) and post[0] > 0.5


def test_root_posterior_examples():
    np.testing.assert_allclose(root_posterior([0.49, 0.09], [0.5, 0.5]), [0.49 / 0.58, 0.09 / 0.58])
    np.testing.assert_allclose(root_posterior([0.2, 0.2, 0.2], [0.1, 0.3, 0.6]), [0.1, 0.3, 0.6])
    np.testing.assert_allclose(root_posterior([0.3, 0.1], [1.0, 0.0]), [1.0, 0.0])
    with pytest.raises(ZeroLikelihood):
        root_posterior([0.0, 0.4], [1.0, 0.0])


def test_tv_mc_examples():
    t = bary_tree(2, 1)
    s = level(t, 1)
    ch = bsc(0.3)
    zero = tv_mc(t, ch, identity_noise(2), s, 1, 1, 1000, seed=1)
    assert zero.mean == 0 and zero.stderr == 0
    est = tv_mc(t, ch, identity_noise(2), s, 0, 1, 20_000, seed=2)
    assert abs(est.mean - 0.4) <= 3 * est.stderr
    again = tv_mc(t, ch, identity_noise(2), s, 0, 1, 20_000, seed=2)
    assert again == est


@pytest.mark.parametrize("ch,noise,arity,depth", [
    (bsc(0.2), erasure_noise(2, 0.3), 2, 3),
    (qsym(3, 0.4), mix_noise([0.2, 0.3, 0.5], 0.5), 2, 2),
    (qsym(3, 0.3), identity_noise(3), 3, 2),
])
def test_tv_mc_agrees_with_exact(ch, noise, arity, depth):
    t = bary_tree(arity, depth)
    s = level(t, depth)
    exact = atoms_tv(level_atoms(ch, noise, arity, depth)[depth], 0, 1)
    est = tv_mc(t, ch, noise, s, 0, 1, 20_000, seed=5, streams=3)
    assert abs(est.mean - exact) <= 4 * est.stderr


def test_reconstruction_examples():
    t = bary_tree(2, 3)
    s = level(t, 3)
    assert reconstruction_error_mc(t, bsc(0.0), identity_noise(2), s, 2000, seed=1,
                                  prior=[0.5, 0.5]).mean == 0
    ch = qsym(3, 2 / 3)  # identical rows
    est = reconstruction_error_mc(t, ch, identity_noise(3), s, 20_000, seed=2)
    assert abs(est.mean - (1 - 1 / 3)) <= 3 * est.stderr
    t2 = bary_tree(2, 2)
    s2 = level(t2, 2)
    ch = bsc(0.3)
    oracle = enumerate_oracle(t2, ch, identity_noise(2), s2)
    exact = 1 - np.sum(np.max(oracle.g * ch.v, axis=1))
    est = reconstruction_error_mc(t2, ch, identity_noise(2), s2, 20_000, seed=3)
    assert abs(est.mean - exact) <= 3 * est.stderr


@pytest.mark.parametrize("ch", [bsc(0.2), qsym(3, 0.3), qsym(4, 0.5)])
def test_reconstruction_error_lower_bound(ch):
    atoms = level_atoms(ch, erasure_noise(ch.q, 0.2), 2, 3)[3]
    err = reconstruction_error(atoms, ch.v)
    spread = sum(atoms_tv(atoms, i, 0) for i in range(ch.q))
    assert err >= 1 - np.max(ch.v) * (1 + 2 * spread) - 1e-12


def test_median_of_means_option():
    t = bary_tree(2, 3)
    s = level(t, 3)
    est = tv_mc(t, bsc(0.2), identity_noise(2), s, 0, 1, 5000, seed=4, median_of_means=True)
    plain = tv_mc(t, bsc(0.2), identity_noise(2), s, 0, 1, 5000, seed=4)
    assert est.stderr == plain.stderr and abs(est.mean - plain.mean) < 4 * plain.stderr


def test_second_eigenfunction():
    phi, cplx = second_eigenfunction(bsc(0.3))
    assert not cplx
    np.testing.assert_allclose(np.abs(phi), [1, 1])
    np.testing.assert_allclose(bsc(0.3).M @ phi, 0.4 * phi, atol=1e-12)


def test_census_uninformative_channel():
    res = census_separation(bary_tree(2, 4), bsc(0.5), identity_noise(2), 20_000, seed=1, level=4)
    assert res.z[(0, 1)] < 0.05


def test_census_below_threshold_small_and_decreasing():
    tree = bary_tree(2, 8)
    ch, noise = bsc(0.3), mix_noise([0.5, 0.5], 0.9)
    zs = [census_separation(tree, ch, noise, 100_000, seed=7, level=n).z[(0, 1)] for n in (1, 3, 8)]
    assert zs[-1] < 1
    assert zs[0] > zs[1] > zs[2]
