"""The chi-square-type discrepancy of a vector of measures and its constants.

Coordinates on ``v_perp = {b : v.b = 0}``
-----------------------------------------
The default basis is the *difference basis* ``U = (I - 1 v)[:, :q-1]``: the
vector ``Q b`` has coordinates ``x_i = b_i - b_q``. A Euclidean norm on
``v_perp`` is a Gram matrix ``P`` in these coordinates, ``||Qb||^2 = x' P x``.
For ``q = 2`` the default is ``P = [1]``, i.e. ``||Qb||^2 = (b_1 - b_2)^2``.

The contraction norm for a target factor ``alpha`` above the spectral radius
of ``M`` on ``v_perp`` is

    P = sum_k alpha^(-2k) (A^k)' A^k,   A = M restricted to v_perp,

which satisfies ``A' P A = alpha^2 (P - I)``, so ``||M b|| <= alpha ||b||``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .channels import Channel
from .errors import DivergentSeries, NonErgodic
from .exact import AtomSet
from .inference import McEstimate, _summarise, instance_hash, stationary_densities

SERIES_TOL = 1e-12
MAX_DOUBLINGS = 64
ETA_CAP = 1.0


def project_q(v, b) -> np.ndarray:
    """``Q b = b - (v.b) 1``; rows of a 2-D ``b`` are projected independently."""
    v = np.asarray(v, dtype=float)
    b = np.asarray(b, dtype=float)
    return b - (b @ v)[..., None]


def difference_basis(v) -> np.ndarray:
    q = len(v)
    return (np.eye(q) - np.outer(np.ones(q), v))[:, : q - 1]


@dataclass(frozen=True)
class ContractionNorm:
    v: np.ndarray
    U: np.ndarray
    P: np.ndarray
    alpha: float
    eps_slack: float = 0.0
    alpha_measured: float = float("nan")
    coords: np.ndarray = field(init=False, repr=False)
    T: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        q = len(v)
        proj = np.eye(q) - np.outer(np.ones(q), v)
        coords = np.linalg.pinv(self.U) @ proj
        object.__setattr__(self, "coords", coords)
        t = coords.T @ self.P @ coords
        object.__setattr__(self, "T", 0.5 * (t + t.T))

    @property
    def q(self) -> int:
        return len(self.v)

    @property
    def sum_abs_t(self) -> float:
        return float(np.abs(self.T).sum())

    def sq(self, b) -> np.ndarray:
        """``||Q b||^2`` for a vector or a stack of row vectors."""
        x = np.asarray(b, dtype=float) @ self.coords.T
        return np.maximum(np.einsum("...i,ij,...j->...", x, self.P, x), 0.0)

    def norm(self, b) -> np.ndarray:
        return np.sqrt(self.sq(b))


def norm_from_gram(v, U, P, alpha: float = float("nan"), eps_slack: float = 0.0) -> ContractionNorm:
    return ContractionNorm(np.asarray(v, float), np.asarray(U, float),
                           np.atleast_2d(np.asarray(P, float)), float(alpha), float(eps_slack))


def restricted_matrix(channel: Channel, U=None) -> np.ndarray:
    """Matrix of ``M`` acting on ``v_perp`` in the coordinates of ``U``."""
    U = difference_basis(channel.v) if U is None else U
    return np.linalg.pinv(U) @ np.asarray(channel.M) @ U


def certified_factor(A: np.ndarray, P: np.ndarray) -> float:
    """Smallest ``a`` with ``x'A'PAx <= a^2 x'Px``: generalized top eigenvalue."""
    top = eigh(A.T @ P @ A, P, eigvals_only=True)[-1]
    return float(np.sqrt(max(top, 0.0)))


def _series(A: np.ndarray, alpha: float) -> np.ndarray:
    """``sum_k (A/alpha)^k' (A/alpha)^k`` by repeated doubling."""
    scaled = A / alpha
    power = scaled.copy()
    total = np.eye(len(A))
    for _ in range(MAX_DOUBLINGS):
        total = total + power.T @ total @ power
        power = power @ power
        c = np.linalg.norm(power, 2)
        if not np.isfinite(total).all() or not np.isfinite(c):
            break
        if c < 1 and c * c / (1 - c * c) <= SERIES_TOL:
            return total
    raise DivergentSeries(f"series for alpha={alpha!r} did not converge")


def build_contraction_norm(channel: Channel, target_alpha: float,
                           eps_slack: float = 0.0) -> ContractionNorm:
    """Euclidean norm on ``v_perp`` in which ``M`` contracts by ``target_alpha``."""
    if not channel.ergodic:
        raise NonErgodic(f"channel {channel.name} is not ergodic")
    if not 0 <= target_alpha < 1:
        raise ValueError("target_alpha must lie in [0, 1)")
    U = difference_basis(channel.v)
    A = restricted_matrix(channel, U)
    if channel.q == 2:
        # one-dimensional: M acts as multiplication by lambda2 in every norm
        P = np.eye(1)
        if abs(A[0, 0]) > target_alpha + 1e-12:
            raise DivergentSeries(f"target {target_alpha!r} below |lambda2| = {abs(A[0, 0])!r}")
    elif not np.any(A):
        P = np.eye(len(A))
    else:
        rho = float(np.max(np.abs(np.linalg.eigvals(A))))
        if target_alpha <= rho * (1 + 1e-12):
            raise DivergentSeries(f"target {target_alpha!r} not above spectral radius {rho!r}")
        P = _series(A, target_alpha)
    measured = certified_factor(A, P)
    if measured > target_alpha * (1 + 1e-9) + 1e-12:
        raise DivergentSeries(f"certified factor {measured!r} exceeds target {target_alpha!r}")
    return ContractionNorm(np.asarray(channel.v, float), U, P, float(target_alpha),
                           float(eps_slack), measured)


def t_coefficients(norm: ContractionNorm) -> np.ndarray:
    """Symmetric ``T`` with ``||Q b||^2 = b' T b``."""
    return norm.T


def _phi(g: np.ndarray, norm: ContractionNorm) -> np.ndarray:
    """Per-atom ``||Q g||^2 * sum_k v_k / g_k`` with the infinity convention."""
    sq = norm.sq(g)
    flat = np.all(g == g[:, :1], axis=1)
    sq = np.where(flat, 0.0, sq)
    with np.errstate(divide="ignore"):
        inv = np.where(g > 0, norm.v / np.where(g > 0, g, 1.0), np.inf)
    weight = inv.sum(axis=1)
    return np.where(sq > 0, sq * weight, 0.0)


def discrepancy_of_atoms(atoms: AtomSet, norm: ContractionNorm, reference=None) -> float:
    """Discrepancy of the measure vector held in ``atoms``.

    With ``reference`` (a probability vector over root states) the integral
    is taken against that mixture of the measures instead of counting
    measure on observation strings; the value is the same either way.
    """
    g, w = atoms.g, atoms.w
    if reference is None:
        return float(np.sum(w * _phi(g, norm)))
    mass = g @ np.asarray(reference, dtype=float)
    keep = mass > 0
    f = g[keep] / mass[keep, None]
    return float(np.sum(w[keep] * mass[keep] * _phi(f, norm)))


@dataclass(frozen=True)
class MomentTensor:
    moments: np.ndarray
    finite: bool


def moment_tensor(atoms: AtomSet) -> MomentTensor:
    """``(i, j, k) -> sum w g_i g_j / g_k``; entries with ``i == k`` or ``j == k`` are 1."""
    g, w = atoms.g, atoms.w
    q = atoms.q
    out = np.empty((q, q, q))
    for k in range(q):
        gk = g[:, k]
        num = g[:, :, None] * g[:, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(gk[:, None, None] > 0, num / np.where(gk > 0, gk, 1.0)[:, None, None],
                             np.where(num > 0, np.inf, 0.0))
        out[:, :, k] = np.tensordot(w, ratio, axes=1)
        out[k, :, k] = 1.0
        out[:, k, k] = 1.0
    return MomentTensor(out, bool(np.isfinite(out).all()))


@dataclass(frozen=True)
class DiscrepancyConstants:
    C_pairs: np.ndarray
    C: float
    C_tilde: float
    delta: float = float("nan")
    arity: int = 0
    eps: float = float("nan")


def pair_constants(norm: ContractionNorm) -> np.ndarray:
    """``C_ij``: dual norm of ``b -> b_i - b_j`` on ``(v_perp, ||.||)``."""
    q = norm.q
    p_inv = np.linalg.inv(norm.P)
    out = np.zeros((q, q))
    for i in range(q):
        for j in range(q):
            if i != j:
                c = norm.U[i] - norm.U[j]
                out[i, j] = np.sqrt(max(float(c @ p_inv @ c), 0.0))
    return out


def moment_bound_constant(norm: ContractionNorm) -> DiscrepancyConstants:
    """``C = max C_ij^2 / v_k``, bounding every ``|moment(i,j,k) - 1|`` by ``C * D``."""
    pairs = pair_constants(norm)
    c = float(np.max(pairs) ** 2 / np.min(norm.v))
    return DiscrepancyConstants(pairs, c, c * norm.sum_abs_t)


def tensorization_delta(arity: int, eps: float, C: float, C_tilde: float,
                        eta_cap: float = ETA_CAP) -> float:
    """Largest ``delta`` for which tensoring ``arity`` vectors inflates ``D`` by at most ``1 + eps``.

    With ``eta = C * delta`` every moment lies in ``[1 - eta, 1 + eta]`` and the
    product expansion error is at most ``sum |x_r - 1| * ((1 + eta)^(B-1) - 1)``,
    so ``eta`` solves ``(1 + eta)^(B-1) - 1 = eps / C_tilde``. For ``B = 1``
    there is nothing to bound and ``eta = eta_cap``.
    """
    if arity < 1:
        raise ValueError("arity must be at least 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    if arity == 1:
        eta = eta_cap
    else:
        eta = (1 + eps / C_tilde) ** (1.0 / (arity - 1)) - 1
    return float(eta / C)


def discrepancy_constants(norm: ContractionNorm, arity: int, eps: float) -> DiscrepancyConstants:
    base = moment_bound_constant(norm)
    delta = tensorization_delta(arity, eps, base.C, base.C_tilde)
    return DiscrepancyConstants(base.C_pairs, base.C, base.C_tilde, delta, arity, eps)


def discrepancy_mc(tree, channel: Channel, noise, antichain, norm: ContractionNorm,
                   n_samples: int, seed: int, streams: int = 1,
                   median_of_means: bool = False) -> McEstimate:
    """Average of ``||Q f||^2 sum_k v_k / f_k`` over the stationary mixture."""
    if not channel.ergodic:
        raise NonErgodic(f"channel {channel.name} is not ergodic")
    f, _ = stationary_densities(tree, channel, noise, antichain, n_samples, seed, streams)
    return _summarise(_phi(f, norm), "discrepancy", seed, streams,
                      instance_hash(tree, channel, noise, antichain), median_of_means)
