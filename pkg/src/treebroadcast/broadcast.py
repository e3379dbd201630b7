"""Forward sampling of the broadcast chain and of noisy antichain observations.

Every node draws from its own counter-based generator keyed by
``(seed, purpose, stream, node)``, so the draws for a node do not depend on
the order in which the tree is traversed or on how samples are batched
across streams.
"""

from __future__ import annotations

import numpy as np

from .channels import Channel, NoiseChannel
from .trees import Antichain, Tree

RNG_ID = f"numpy-{np.__version__}/Philox4x32-10/SeedSequence(seed,[purpose,stream,node])"

_ROOT, _EDGE, _NOISE = 0, 1, 2


def node_rng(seed: int, purpose: int, stream: int, node: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose, int(stream), int(node)))
    return np.random.Generator(np.random.Philox(ss))


def split_samples(n_samples: int, streams: int) -> list[int]:
    """Deterministic near-even split of ``n_samples`` over ``streams``."""
    if streams < 1:
        raise ValueError("streams must be positive")
    base, extra = divmod(int(n_samples), int(streams))
    return [base + (s < extra) for s in range(streams)]


def _cumulative(rows: np.ndarray) -> np.ndarray:
    cum = np.cumsum(rows, axis=1)
    return cum / cum[:, -1:]


def _draw(cum: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    out = (u[:, None] >= cum[states]).sum(axis=1)
    return np.minimum(out, cum.shape[1] - 1)


def sample_configuration(tree: Tree, channel: Channel, root_state, seed: int,
                         n_samples: int = 1, stream: int = 0, root_prior=None) -> np.ndarray:
    """Sample node states, shape ``(n_samples, tree.n)``.

    ``root_state=None`` draws the root from ``root_prior`` (default: the
    stationary vector), which gives the mixture of the per-root measures.
    """
    q = channel.q
    sigma = np.empty((n_samples, tree.n), dtype=np.min_scalar_type(q))
    if root_state is None:
        prior = channel.v if root_prior is None else np.asarray(root_prior, dtype=float)
        u = node_rng(seed, _ROOT, stream, 0).random(n_samples)
        sigma[:, 0] = _draw(_cumulative(prior[None, :]), np.zeros(n_samples, np.int64), u)
    else:
        if not 0 <= int(root_state) < q:
            raise ValueError(f"root state {root_state} outside 0..{q - 1}")
        sigma[:, 0] = int(root_state)
    cum = _cumulative(np.asarray(channel.M))
    for x in tree.bfs_order[1:]:
        u = node_rng(seed, _EDGE, stream, x).random(n_samples)
        sigma[:, x] = _draw(cum, sigma[:, tree.parents[x]], u)
    return sigma


def observe_antichain(sigma: np.ndarray, antichain: Antichain, noise: NoiseChannel,
                      seed: int, stream: int = 0) -> np.ndarray:
    """Pass each antichain member's state through ``noise``; columns follow ``antichain.members``."""
    sigma = np.atleast_2d(sigma)
    cum = _cumulative(np.asarray(noise.N))
    tau = np.empty((sigma.shape[0], len(antichain.members)), dtype=np.min_scalar_type(noise.b))
    for col, x in enumerate(antichain.members):
        u = node_rng(seed, _NOISE, stream, x).random(sigma.shape[0])
        tau[:, col] = _draw(cum, sigma[:, x], u)
    return tau


def sample_observation(tree: Tree, channel: Channel, noise: NoiseChannel, antichain: Antichain,
                       root_state, seed: int, n_samples: int = 1, streams: int = 1,
                       return_roots: bool = False, root_prior=None):
    """Sample noisy antichain observations, merging streams in stream order."""
    taus, roots = [], []
    for s, count in enumerate(split_samples(n_samples, streams)):
        sigma = sample_configuration(tree, channel, root_state, seed, count, stream=s,
                                     root_prior=root_prior)
        taus.append(observe_antichain(sigma, antichain, noise, seed, stream=s))
        roots.append(sigma[:, 0])
    tau = np.concatenate(taus)
    if return_roots:
        return tau, np.concatenate(roots)
    return tau
