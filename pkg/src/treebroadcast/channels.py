"""Markov transition matrices and leaf observation channels.

States are 0-based throughout: a ``q``-state chain uses ``0..q-1`` and the
erasure symbol of :func:`erasure_noise` is ``q``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.linalg import null_space
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import NegativeEntry, NonErgodic, RowSumError

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10
_POWER_ITERATION_MIN_Q = 65


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_stochastic(m: np.ndarray) -> None:
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    neg = np.argwhere(m < 0)
    if len(neg):
        i, j = neg[0]
        raise NegativeEntry(f"entry ({i}, {j}) = {m[i, j]!r} is negative")
    sums = m.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if len(bad):
        raise RowSumError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")


def is_ergodic(m: np.ndarray) -> bool:
    """Irreducible and aperiodic, judged on the support digraph of ``m``."""
    support = (np.asarray(m) > 0).astype(np.int8)
    n_comp, _ = connected_components(support, directed=True, connection="strong")
    if n_comp != 1:
        return False
    # period = gcd of level[u] + 1 - level[w] over all support edges u -> w
    order, preds = breadth_first_order(support, 0, directed=True)
    level = np.zeros(len(support), dtype=np.int64)
    for node in order[1:]:
        level[node] = level[preds[node]] + 1
    period = 0
    for u, w in np.argwhere(support):
        period = gcd(period, int(level[u] + 1 - level[w]))
        if period == 1:
            return True
    return period == 1


def _solve_stationary(m: np.ndarray) -> np.ndarray:
    q = len(m)
    if q >= _POWER_ITERATION_MIN_Q:
        v = np.full(q, 1.0 / q)
        for _ in range(100_000):
            nxt = v @ m
            if np.max(np.abs(nxt - v)) < 1e-15:
                v = nxt
                break
            v = nxt
        return v / v.sum()
    a = np.vstack([m.T - np.eye(q), np.ones((1, q))])
    rhs = np.zeros(q + 1)
    rhs[-1] = 1.0
    v, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    v = np.where(np.abs(v) < 1e-15, 0.0, v)
    return v / v.sum()


def complement_basis(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of ``{b : v.b = 0}``."""
    return null_space(np.asarray(v, dtype=float)[None, :])


def _second_eigenvalue(m: np.ndarray, v: np.ndarray) -> float:
    u = complement_basis(v)
    restricted = u.T @ m @ u
    if restricted.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(restricted))))


@dataclass(frozen=True)
class Channel:
    """A validated ``q x q`` transition matrix.

    ``v`` is the stationary row vector and ``lambda2`` the modulus of the
    second-largest eigenvalue. Non-ergodic chains can be built but carry
    ``ergodic=False``; certificate code refuses them.
    """

    M: np.ndarray
    v: np.ndarray
    lambda2: float
    ergodic: bool
    name: str = field(default="custom", compare=False)

    @property
    def q(self) -> int:
        return self.M.shape[0]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.M).tobytes()).hexdigest()[:16]


def build_channel(entries, name: str = "custom") -> Channel:
    m = np.array(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {m.shape}")
    if m.shape[0] < 2:
        raise ValueError("need at least two states")
    _check_stochastic(m)
    v = _solve_stationary(m)
    return Channel(
        M=_frozen(m),
        v=_frozen(v),
        lambda2=_second_eigenvalue(m, v),
        ergodic=is_ergodic(m),
        name=name,
    )


def bsc(delta: float) -> Channel:
    """Binary symmetric channel with flip probability ``delta``."""
    return build_channel([[1 - delta, delta], [delta, 1 - delta]], name=f"bsc({delta!r})")


def qsym(q: int, delta: float) -> Channel:
    """q-ary symmetric channel: stay with ``1 - delta``, else uniform over the rest."""
    m = np.full((q, q), delta / (q - 1))
    np.fill_diagonal(m, 1 - delta)
    return build_channel(m, name=f"qsym({q}, {delta!r})")


def stationary_distribution(channel: Channel) -> np.ndarray:
    if not channel.ergodic:
        raise NonErgodic(f"channel {channel.name} is not ergodic")
    return channel.v


def second_eigenvalue(channel: Channel) -> float:
    return channel.lambda2


@dataclass(frozen=True)
class NoiseChannel:
    """Leaf observation channel: a ``q x b`` stochastic matrix plus its origin."""

    kind: str  # "extra-steps" | "mix" | "erasure" | "custom"
    N: np.ndarray
    params: dict = field(default_factory=dict, compare=False)

    @property
    def q(self) -> int:
        return self.N.shape[0]

    @property
    def b(self) -> int:
        return self.N.shape[1]

    @property
    def nondegenerate(self) -> bool:
        nu = self.params.get("nu")
        return nu is not None and bool(np.all(np.asarray(nu) > 0))

    def describe(self) -> str:
        if self.kind == "extra-steps":
            return f"extra-steps(k={self.params['k']})"
        if self.kind == "mix":
            nu = ",".join(repr(float(x)) for x in self.params["nu"])
            return f"mix(eps={self.params['eps']!r}, nu=[{nu}])"
        if self.kind == "erasure":
            return f"erasure(eps={self.params['eps']!r})"
        return "custom"


def power_noise(channel: Channel, k: int) -> NoiseChannel:
    if k < 0:
        raise ValueError("k must be nonnegative")
    n = np.linalg.matrix_power(np.asarray(channel.M), int(k))
    return NoiseChannel("extra-steps", _frozen(n), {"k": int(k)})


def mix_noise(nu, eps: float) -> NoiseChannel:
    nu = np.asarray(nu, dtype=float)
    if nu.ndim != 1 or np.any(nu < 0) or abs(nu.sum() - 1) > ROW_TOL:
        raise ValueError("nu must be a probability vector")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    n = (1 - eps) * np.eye(len(nu)) + eps * np.tile(nu, (len(nu), 1))
    return NoiseChannel("mix", _frozen(n), {"eps": float(eps), "nu": _frozen(nu)})


def erasure_noise(q: int, eps: float) -> NoiseChannel:
    if q < 2:
        raise ValueError("need at least two states")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    n = np.zeros((q, q + 1))
    n[np.arange(q), np.arange(q)] = 1 - eps
    n[:, q] = eps
    return NoiseChannel("erasure", _frozen(n), {"eps": float(eps)})


def custom_noise(entries) -> NoiseChannel:
    n = np.array(entries, dtype=float)
    _check_stochastic(n)
    return NoiseChannel("custom", _frozen(n), {})


def identity_noise(q: int) -> NoiseChannel:
    """Noise-free observation, written as zero extra steps."""
    return NoiseChannel("extra-steps", _frozen(np.eye(q)), {"k": 0})
