"""Belief-propagation likelihoods and Monte Carlo estimators.

All estimators draw the root from the stationary vector ``v`` and evaluate
densities ``f_i = g_i / (v . g)`` with respect to the stationary mixture,
so the per-node rescaling used to avoid underflow cancels out.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass

import numpy as np

from .broadcast import (RNG_ID, observe_antichain, sample_configuration, sample_observation,
                        split_samples)
from .channels import Channel, NoiseChannel, complement_basis
from .errors import NonErgodic, ZeroLikelihood
from .trees import Antichain, Tree, validate_antichain

CHUNK = 8192
MOM_BLOCKS = 16
CSV_COLUMNS = ("estimator", "instance", "n_samples", "mean", "stderr", "seed", "streams")


@dataclass(frozen=True)
class McEstimate:
    estimator: str
    mean: float
    stderr: float
    n_samples: int
    seed: int
    streams: int = 1
    instance: str = ""
    rng: str = RNG_ID

    def row(self) -> list[str]:
        return [self.estimator, self.instance, str(self.n_samples), f"{self.mean:.17g}",
                f"{self.stderr:.17g}", str(self.seed), str(self.streams)]

    def as_dict(self) -> dict:
        return asdict(self)


def instance_hash(tree: Tree, channel: Channel, noise: NoiseChannel, antichain: Antichain) -> str:
    h = hashlib.sha256()
    for part in (tree.parents, channel.M, noise.N, np.asarray(antichain.members)):
        h.update(np.ascontiguousarray(part).tobytes())
    return h.hexdigest()[:16]


def likelihood_vectors(tree: Tree, channel: Channel, noise: NoiseChannel, antichain: Antichain,
                       tau) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled likelihoods for a batch of observations.

    Returns ``(g, log_scale)`` with ``g`` of shape ``(n, q)``, max entry 1 per
    row, so that the true likelihood vector is ``g * exp(log_scale)``.
    """
    tau = np.atleast_2d(np.asarray(tau))
    m_t = np.asarray(channel.M).T
    n_t = np.asarray(noise.N)
    col = {x: c for c, x in enumerate(antichain.members)}
    n = tau.shape[0]
    out_g = np.empty((n, channel.q))
    out_log = np.empty(n)
    for lo in range(0, n, CHUNK):
        block = tau[lo:lo + CHUNK]
        msgs, logs = {}, np.zeros(len(block))
        for x in antichain.members:
            msgs[x] = n_t[:, block[:, col[x]]].T
        for y in reversed(antichain.inside):
            acc = None
            for c in tree.children[y]:
                part = msgs.pop(c) @ m_t
                acc = part if acc is None else acc * part
            scale = acc.max(axis=1)
            scale = np.where(scale > 0, scale, 1.0)
            msgs[y] = acc / scale[:, None]
            logs += np.log(scale)
        g = msgs[0]
        scale = g.max(axis=1)
        scale = np.where(scale > 0, scale, 1.0)
        out_g[lo:lo + CHUNK] = g / scale[:, None]
        out_log[lo:lo + CHUNK] = logs + np.log(scale)
    return out_g, out_log


def likelihood_vector(tree: Tree, channel: Channel, noise: NoiseChannel, antichain: Antichain,
                      tau) -> np.ndarray:
    """``g_i = P(tau | root = i)`` for a single observation ``tau``."""
    g, log_scale = likelihood_vectors(tree, channel, noise, antichain, np.asarray(tau)[None, :])
    return g[0] * np.exp(log_scale[0])


def root_posterior(g, prior) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    prior = np.asarray(prior, dtype=float)
    joint = prior * g
    total = joint.sum()
    if not total > 0:
        raise ZeroLikelihood("observation has zero probability under the prior")
    return joint / total


def _require_ergodic(channel: Channel) -> None:
    if not channel.ergodic:
        raise NonErgodic(f"channel {channel.name} is not ergodic")


def _summarise(values: np.ndarray, name: str, seed: int, streams: int, instance: str,
               median_of_means: bool) -> McEstimate:
    n = len(values)
    stderr = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    if median_of_means:
        blocks = np.array_split(values, MOM_BLOCKS)
        mean = float(np.median([b.mean() for b in blocks if len(b)]))
    else:
        mean = float(values.mean())
    return McEstimate(name, mean, stderr, n, int(seed), int(streams), instance)


def stationary_densities(tree, channel, noise, antichain, n_samples, seed, streams=1):
    """Sample from the stationary mixture; return ``(f, roots)`` with ``f = g / (v . g)``."""
    tau, roots = sample_observation(tree, channel, noise, antichain, None, seed, n_samples,
                                    streams, return_roots=True)
    g, _ = likelihood_vectors(tree, channel, noise, antichain, tau)
    return g / (g @ channel.v)[:, None], roots


def tv_mc(tree: Tree, channel: Channel, noise: NoiseChannel, antichain: Antichain, i: int, j: int,
          n_samples: int, seed: int, streams: int = 1, median_of_means: bool = False) -> McEstimate:
    """Unbiased estimate of ``1/2 * integral |f_i - f_j|`` under the stationary mixture."""
    _require_ergodic(channel)
    inst = instance_hash(tree, channel, noise, antichain)
    if i == j:
        return McEstimate("tv", 0.0, 0.0, int(n_samples), int(seed), int(streams), inst)
    f, _ = stationary_densities(tree, channel, noise, antichain, n_samples, seed, streams)
    return _summarise(0.5 * np.abs(f[:, i] - f[:, j]), "tv", seed, streams, inst, median_of_means)


def reconstruction_error_mc(tree: Tree, channel: Channel, noise: NoiseChannel,
                            antichain: Antichain, n_samples: int, seed: int, streams: int = 1,
                            median_of_means: bool = False, prior=None) -> McEstimate:
    """Error rate of the MAP root guess (lowest state wins ties).

    The root is drawn from ``prior``, by default the stationary vector; a
    non-ergodic channel must be given an explicit prior.
    """
    if prior is None:
        _require_ergodic(channel)
        prior = channel.v
    prior = np.asarray(prior, dtype=float)
    tau, roots = sample_observation(tree, channel, noise, antichain, None, seed, n_samples,
                                    streams, return_roots=True, root_prior=prior)
    g, _ = likelihood_vectors(tree, channel, noise, antichain, tau)
    guess = np.argmax(g * prior, axis=1)
    return _summarise((guess != roots).astype(float), "reconstruction_error", seed, streams,
                      instance_hash(tree, channel, noise, antichain), median_of_means)


def second_eigenfunction(channel: Channel) -> tuple[np.ndarray, bool]:
    """Right eigenvector of ``M`` for the second eigenvalue, max-abs 1.

    Returns ``(phi, was_complex)``; for a complex pair the real part is used.
    """
    u = complement_basis(channel.v)
    vals, vecs = np.linalg.eig(u.T @ np.asarray(channel.M) @ u)
    k = int(np.argmax(np.abs(vals)))
    phi = u @ vecs[:, k]
    was_complex = bool(abs(vals[k].imag) > 1e-12)
    phi = phi.real if was_complex else np.real_if_close(phi).real
    if not np.any(phi):
        phi = (u @ vecs[:, k]).imag
    phi = phi / np.max(np.abs(phi))
    # fixed sign so the statistic is reproducible across LAPACK builds
    if phi[int(np.argmax(np.abs(phi)))] < 0:
        phi = -phi
    return phi, was_complex


@dataclass(frozen=True)
class CensusResult:
    level: int
    z: dict
    means: np.ndarray
    stds: np.ndarray
    n_samples: int
    seed: int
    streams: int
    complex_eigenvector: bool


def census_separation(tree: Tree, channel: Channel, noise: NoiseChannel, n_samples: int,
                      seed: int, level: int, streams: int = 1) -> CensusResult:
    """Separation of the level-``n`` census statistic between root states.

    ``s(tau) = sum over x in L_n of h(tau(x))`` with ``h`` the least-squares
    solution of ``N h = phi`` for the second eigenfunction ``phi``. For each
    pair ``z = |E_i s - E_j s| / sqrt((var_i + var_j) / 2)``.
    """
    trunc = tree.truncate(level)
    leaves = trunc.level(level)
    if len(leaves) == 0:
        raise ValueError(f"tree has no nodes at depth {level}")
    antichain = validate_antichain(trunc, leaves)
    phi, was_complex = second_eigenfunction(channel)
    h = np.linalg.pinv(np.asarray(noise.N)) @ phi
    q = channel.q
    means, stds = np.empty(q), np.empty(q)
    for i in range(q):
        parts = []
        for s, count in enumerate(split_samples(n_samples, streams)):
            sigma = sample_configuration(trunc, channel, i, seed, count, stream=i * streams + s)
            tau = observe_antichain(sigma, antichain, noise, seed, stream=i * streams + s)
            parts.append(h[tau].sum(axis=1))
        stat = np.concatenate(parts)
        means[i], stds[i] = stat.mean(), stat.std(ddof=1)
    z = {}
    for i in range(q):
        for j in range(i + 1, q):
            pooled = np.sqrt(0.5 * (stds[i] ** 2 + stds[j] ** 2))
            gap = abs(means[i] - means[j])
            z[(i, j)] = float(gap / pooled) if pooled > 0 else (0.0 if gap == 0 else float("inf"))
    return CensusResult(level, z, means, stds, int(n_samples), int(seed), int(streams),
                        was_complex)
