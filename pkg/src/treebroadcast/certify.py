"""Checkable certificates that leaf information about the root decays away.

A certificate fixes a contraction norm with factor ``alpha`` and a slack
``eps`` with ``B (1 + eps) alpha^2 <= 1 - eps``, the tensorization threshold
``delta``, and a noise level at which the single-leaf discrepancy is below
``delta``. From there the discrepancy of the level-``n`` observation shrinks
by ``1 - eps`` per level; :func:`verify_decay` checks this with the exact
engine and logs the values.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field

import numpy as np

from .channels import (Channel, NoiseChannel, build_channel, erasure_noise, mix_noise,
                       power_noise)
from .discrepancy import (ContractionNorm, build_contraction_norm, certified_factor,
                          discrepancy_of_atoms, moment_bound_constant, norm_from_gram,
                          restricted_matrix, tensorization_delta)
from .errors import (AboveThreshold, BoundViolation, CertificateFailure, DegenerateNu,
                     NonErgodic, RatioViolation, ZeroEntry)
from .exact import DEFAULT_BUDGET, antichain_atoms, leaf_atoms, level_atoms, max_tv
from .trees import Antichain, Tree, explicit_tree, local_sums, validate_antichain

VERSION = 1
REGIMES = ("extra-steps", "mix", "erasure")
FEASIBILITY_TOL = 1e-12
LOG_TOL = 1e-10
ALPHA_FLOOR = 1e-3
KSTAR_MAX = 100_000


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _vec(xs) -> str:
    return ",".join(_fmt(x) for x in np.ravel(xs))


def _mat(m) -> str:
    return "; ".join(_vec(row) for row in np.atleast_2d(m))


def _parse_vec(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",") if x.strip()])


def _parse_mat(text: str) -> np.ndarray:
    return np.array([_parse_vec(row) for row in text.split(";")])


def choose_slack(lambda2: float, growth: float, q: int) -> tuple[float, float, float]:
    """Pick ``(eps, alpha, eps_max)`` with ``growth (1 + eps) alpha^2 <= 1 - eps``.

    For ``q = 2`` the contraction on ``v_perp`` is exact, so ``alpha = |lambda2|``.
    Otherwise ``alpha = |lambda2| (1 + eps / 4)`` and ``eps_max`` is found by
    bisection. The chosen ``eps`` is half of ``eps_max``.
    """
    lam = abs(float(lambda2))
    if growth * lam * lam >= 1 - FEASIBILITY_TOL:
        raise AboveThreshold(f"growth * lambda2^2 = {growth * lam * lam!r} is not below 1")
    if q == 2:
        a2 = growth * lam * lam
        eps_max = (1 - a2) / (1 + a2)
        return eps_max / 2, lam, eps_max
    base = lam if lam > 1e-9 else ALPHA_FLOOR

    def alpha_of(eps):
        return base * (1 + eps / 4)

    def gap(eps):
        return growth * (1 + eps) * alpha_of(eps) ** 2 - (1 - eps)

    lo, hi = 0.0, 1.0
    if gap(lo) >= 0:
        raise AboveThreshold("no slack available at the floor contraction factor")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) <= 0:
            lo = mid
        else:
            hi = mid
    eps = lo / 2
    return eps, alpha_of(eps), lo


def reporting_norm(channel: Channel, growth: float = 1.0) -> ContractionNorm:
    """Norm used to report ``D`` outside a certificate, also above the threshold.

    Below the threshold this is the certificate's norm; above it ``alpha`` is
    only required to exceed ``|lambda2|``.
    """
    try:
        eps, alpha, _ = choose_slack(channel.lambda2, growth, channel.q)
    except AboveThreshold:
        lam = abs(channel.lambda2)
        eps = 0.0
        alpha = lam if channel.q == 2 else min(0.5 * (1 + lam), max(1.25 * lam, ALPHA_FLOOR))
    return build_contraction_norm(channel, alpha, eps)


def kstar(channel: Channel, norm: ContractionNorm, delta: float) -> int:
    """Smallest ``r >= 1`` whose rows of ``M^r`` have discrepancy at most ``delta``."""
    if not channel.ergodic:
        raise NonErgodic(f"channel {channel.name} is not ergodic")
    for r in range(1, KSTAR_MAX + 1):
        if discrepancy_of_atoms(leaf_atoms(power_noise(channel, r)), norm) <= delta:
            return r
    raise CertificateFailure(f"no r <= {KSTAR_MAX} reaches delta={delta!r}")


def epsstar_mix(channel: Channel, nu, norm: ContractionNorm, delta: float) -> float:
    """Smallest mixing weight at which the single-leaf bound drops to ``delta``.

    Solves ``((e + (1 - e)/m)^2 / e - 1) * sum|t| = delta`` for its smaller
    root, ``m = min nu``.
    """
    nu = np.asarray(nu, dtype=float)
    m = float(nu.min())
    if m <= 0:
        raise DegenerateNu("nu must give every state positive mass")
    s = 1.0 / m
    ratio = 1.0 + delta / norm.sum_abs_t
    b = 2 * s * (s - 1) + ratio
    disc = ratio * ratio + 4 * s * (s - 1) * ratio
    root = 2 * s * s / (b + np.sqrt(disc))
    return float(max(root, 0.0))


def epsstar_mix_bound(eps: float, m: float, sum_abs_t: float) -> float:
    return ((eps + (1 - eps) / m) ** 2 / eps - 1) * sum_abs_t


def epsstar_erasure(channel: Channel, norm: ContractionNorm, delta: float) -> float:
    """Erasure probability at which the bound on ``D(M mu^0)`` reaches ``delta``."""
    m = float(np.min(channel.M))
    if m <= 0:
        raise ZeroEntry("erasure certificates need every entry of M to be positive")
    q = channel.q
    return float(max(1.0 - delta / (norm.sum_abs_t * (q * q / m - 1)), 0.0))


@dataclass(frozen=True)
class Certificate:
    kind: str  # "bary" | "tree"
    channel: Channel
    growth: float  # arity B, or the branching bound g for general trees
    regime: str
    norm: ContractionNorm
    eps_slack: float
    C: float
    C_tilde: float
    delta: float
    delta_initial: float
    threshold: float
    nu: np.ndarray | None = None
    max_degree: int = 0
    tree: Tree | None = None
    antichains: tuple = ()
    decay_log: tuple = ()
    checks: tuple = ()
    notes: tuple = field(default=())

    @property
    def decay_ratio(self) -> float:
        return 1.0 - self.eps_slack

    @property
    def threshold_name(self) -> str:
        return {"extra-steps": "kstar", "mix": "epsstar_mix", "erasure": "epsstar_erasure"}[self.regime]

    @property
    def definition(self) -> str:
        return "level-antichains" if self.kind == "bary" else "all-antichains"

    def feasible(self) -> bool:
        a2 = self.norm.alpha ** 2
        return self.growth * (1 + self.eps_slack) * a2 <= 1 - self.eps_slack + FEASIBILITY_TOL

    def noise(self) -> NoiseChannel:
        return threshold_noise(self.channel, self.regime, self.threshold, self.nu)


def threshold_noise(channel: Channel, regime: str, value: float, nu=None) -> NoiseChannel:
    if regime == "extra-steps":
        return power_noise(channel, int(value))
    if regime == "mix":
        return mix_noise(nu, value)
    if regime == "erasure":
        return erasure_noise(channel.q, value)
    raise ValueError(f"unknown regime {regime!r}")


def _preconditions(channel: Channel, growth: float, regime: str, nu) -> None:
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}")
    if not channel.ergodic:
        raise NonErgodic(f"channel {channel.name} is not ergodic")
    if growth * channel.lambda2 ** 2 >= 1 - FEASIBILITY_TOL:
        raise AboveThreshold(
            f"growth * lambda2^2 = {growth * channel.lambda2 ** 2:.6g} is not below 1")
    if regime == "erasure" and np.min(channel.M) <= 0:
        raise ZeroEntry("erasure certificates need every entry of M to be positive")
    if regime == "mix":
        if nu is None:
            raise ValueError("mix regime needs nu")
        if np.min(nu) <= 0:
            raise DegenerateNu("nu must give every state positive mass")


def _threshold(channel, regime, nu, norm, delta_initial) -> float:
    if regime == "extra-steps":
        return float(kstar(channel, norm, delta_initial))
    if regime == "mix":
        return epsstar_mix(channel, nu, norm, delta_initial)
    return epsstar_erasure(channel, norm, delta_initial)


def _delta_for_degrees(eps, C, C_tilde, degrees) -> float:
    return min(tensorization_delta(b, eps, C, C_tilde) for b in degrees)


def _degrees(kind: str, max_degree: int):
    # only B itself occurs on the B-ary tree; a general tree may have any degree up to K
    return (max_degree,) if kind == "bary" else range(1, max_degree + 1)


def _assemble(kind, channel, growth, regime, nu, max_degree, **extra) -> Certificate:
    nu = None if nu is None else np.asarray(nu, dtype=float)
    _preconditions(channel, growth, regime, nu)
    eps, alpha, _ = choose_slack(channel.lambda2, growth, channel.q)
    norm = build_contraction_norm(channel, alpha, eps)
    base = moment_bound_constant(norm)
    delta = _delta_for_degrees(eps, base.C, base.C_tilde, _degrees(kind, max_degree))
    delta_initial = delta
    if regime == "erasure":
        # the single-leaf bound is applied one level up, before tensoring max_degree copies
        delta_initial = delta / (max_degree * (1 + eps))
    value = _threshold(channel, regime, nu, norm, delta_initial)
    return Certificate(kind, channel, float(growth), regime, norm, eps, base.C, base.C_tilde,
                       delta, delta_initial, value, nu, max_degree, **extra)


def certify_bary(channel: Channel, arity: int, regime: str, nu=None) -> Certificate:
    """Certificate for the B-ary tree (level antichains)."""
    if arity < 1:
        raise ValueError("arity must be positive")
    return _assemble("bary", channel, arity, regime, nu, int(arity))


def verify_decay(cert: Certificate, depth: int, budget: int = DEFAULT_BUDGET) -> Certificate:
    """Exact discrepancies of levels ``0..depth`` at the certified noise level.

    Raises :class:`RatioViolation` if a level fails to shrink by the
    certified ratio once the discrepancy is below ``delta``.
    """
    if cert.kind != "bary":
        raise ValueError("verify_decay applies to B-ary certificates")
    if not cert.feasible():
        raise CertificateFailure("certificate slack inequality does not hold")
    levels = level_atoms(cert.channel, cert.noise(), int(cert.growth), depth, budget)
    d = [discrepancy_of_atoms(a, cert.norm) for a in levels]
    tv = [max_tv(a) for a in levels]
    _check_decay(cert, d)
    return dataclasses.replace(cert, decay_log=tuple(zip(range(depth + 1), d, tv)))


def _check_decay(cert: Certificate, d) -> None:
    start = 1 if cert.regime == "erasure" else 0
    if len(d) > start and not d[start] <= cert.delta * (1 + 1e-12):
        raise BoundViolation(f"level {start} discrepancy {d[start]!r} exceeds delta {cert.delta!r}")
    for n in range(start, len(d) - 1):
        if not d[n + 1] <= cert.decay_ratio * d[n] + LOG_TOL:
            raise RatioViolation(
                f"level {n + 1}: D={d[n + 1]!r} > {cert.decay_ratio!r} * {d[n]!r}")


def empirical_threshold(cert: Certificate, depth: int, grid=None,
                        budget: int = DEFAULT_BUDGET) -> dict:
    """Smallest noise level on ``grid`` whose exact log passes the decay checks.

    Reported as evidence only; it is not a certified value.
    """
    if grid is None:
        grid = range(0, int(cert.threshold) + 1) if cert.regime == "extra-steps" \
            else np.linspace(0.0, cert.threshold, 41)
    for value in grid:
        noise = threshold_noise(cert.channel, cert.regime, value, cert.nu)
        levels = level_atoms(cert.channel, noise, int(cert.growth), depth, budget)
        d = [discrepancy_of_atoms(a, cert.norm) for a in levels]
        try:
            _check_decay(cert, d)
        except CertificateFailure:
            continue
        return {"value": float(value), "certified": False, "log": d}
    return {"value": float(cert.threshold), "certified": True, "log": None}


def certify_finite_tree(channel: Channel, tree: Tree, antichains, regime: str, g: float,
                        nu=None, budget: int = DEFAULT_BUDGET) -> Certificate:
    """Check the per-node discrepancy bounds on an explicit finite tree.

    For each antichain ``S`` and each ``y`` in ``S`` and ``Ins(S)``:
    ``D(mu^{y,S}) <= delta * sum over x in S cap T(y) of r^(|x| - |y|)``
    with ``r = (1 + eps) alpha^2``. In the erasure regime the observation is
    taken on the children of ``S``.
    """
    if g <= 0:
        raise ValueError("g must be positive")
    antichains = tuple(a if isinstance(a, Antichain) else validate_antichain(tree, a)
                       for a in antichains)
    cert = _assemble("tree", channel, g, regime, nu, tree.max_degree, tree=tree,
                     antichains=antichains)
    checks = _tree_checks(cert, budget)
    return dataclasses.replace(cert, checks=checks)


def _tree_checks(cert: Certificate, budget: int) -> tuple:
    r = (1 + cert.eps_slack) * cert.norm.alpha ** 2
    noise = cert.noise()
    rows = []
    for idx, s in enumerate(cert.antichains):
        observed = s
        if cert.regime == "erasure":
            kids = [c for x in s.members for c in cert.tree.children[x]]
            if len(kids) == 0 or any(not cert.tree.children[x] for x in s.members):
                raise BoundViolation(f"antichain {idx} has a member without children")
            observed = validate_antichain(cert.tree, kids)
        atoms = antichain_atoms(cert.tree, cert.channel, noise, observed, budget)
        sums = local_sums(cert.tree, s, 1.0 / r) if r > 0 else \
            {y: float(y in s.members) for y in (*s.members, *s.inside)}
        for y in sorted(sums, key=lambda x: (cert.tree.depth[x], x)):
            d = discrepancy_of_atoms(atoms[y], cert.norm)
            bound = cert.delta * sums[y]
            if not d <= bound * (1 + 1e-12) + 1e-300:
                raise BoundViolation(
                    f"antichain {idx}, node {y}: D={d!r} exceeds bound {bound!r}")
            rows.append((idx, int(y), int(cert.tree.depth[y]), d, bound))
    return tuple(rows)


# --- serialization -------------------------------------------------------

def dumps(cert: Certificate, header: tuple = ()) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["certificate"] = {"version": str(VERSION), "kind": cert.kind,
                         "definition": cert.definition}
    cp["channel"] = {"q": str(cert.channel.q), "matrix": _mat(cert.channel.M),
                     "v": _vec(cert.channel.v), "lambda2": _fmt(cert.channel.lambda2),
                     "digest": cert.channel.digest()}
    if cert.kind == "bary":
        cp["tree"] = {"arity": str(int(cert.growth))}
    else:
        tree_sec = {"g": _fmt(cert.growth), "max_degree": str(cert.max_degree),
                    "parents": ",".join(str(int(p)) for p in cert.tree.parents),
                    "digest": cert.tree.digest()}
        for i, s in enumerate(cert.antichains):
            tree_sec[f"antichain_{i}"] = ",".join(str(x) for x in s.members)
        cp["tree"] = tree_sec
    regime = {"regime": cert.regime}
    if cert.nu is not None:
        regime["nu"] = _vec(cert.nu)
    cp["regime"] = regime
    cp["norm"] = {"basis": _mat(cert.norm.U), "gram": _mat(cert.norm.P),
                  "alpha": _fmt(cert.norm.alpha), "alpha_measured": _fmt(cert.norm.alpha_measured),
                  "eps_slack": _fmt(cert.eps_slack), "sum_abs_t": _fmt(cert.norm.sum_abs_t)}
    cp["constants"] = {"C": _fmt(cert.C), "C_tilde": _fmt(cert.C_tilde), "delta": _fmt(cert.delta),
                       "delta_initial": _fmt(cert.delta_initial)}
    cp["threshold"] = {"name": cert.threshold_name, "value": _fmt(cert.threshold)}
    log = {"ratio": _fmt(cert.decay_ratio)}
    for n, d, tv in cert.decay_log:
        log[f"level_{n}"] = f"{_fmt(d)},{_fmt(tv)}"
    for k, (idx, y, depth, d, bound) in enumerate(cert.checks):
        log[f"check_{k}"] = f"{idx},{y},{depth},{_fmt(d)},{_fmt(bound)}"
    cp["decay-log"] = log
    buf = io.StringIO()
    buf.write(f"# treebroadcast certificate v{VERSION}\n")
    for line in header:
        buf.write(f"# {line}\n")
    cp.write(buf)
    return buf.getvalue()


def dump(cert: Certificate, path, header: tuple = ()) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cert, header))


@dataclass
class Verification:
    ok: bool
    failures: list
    checks: list

    def __bool__(self) -> bool:
        return self.ok


def _close(a: float, b: float, rtol: float = 1e-9) -> bool:
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(a - b) <= rtol * max(abs(a), abs(b)) + 1e-300


def verify_text(text: str, budget: int = DEFAULT_BUDGET) -> Verification:
    """Re-derive every number in a certificate file from its own data."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    failures, checks = [], []

    def check(name, ok, detail=""):
        checks.append((name, bool(ok), detail))
        if not ok:
            failures.append(f"{name}: {detail}")

    if int(cp["certificate"]["version"]) != VERSION:
        return Verification(False, ["unsupported certificate version"], checks)
    kind = cp["certificate"]["kind"]
    channel = build_channel(_parse_mat(cp["channel"]["matrix"]))
    check("lambda2", _close(channel.lambda2, float(cp["channel"]["lambda2"]), 1e-8),
          f"recomputed {channel.lambda2!r}")
    check("ergodic", channel.ergodic)
    regime = cp["regime"]["regime"]
    nu = _parse_vec(cp["regime"]["nu"]) if "nu" in cp["regime"] else None
    if kind == "bary":
        growth = float(cp["tree"]["arity"])
        max_degree = int(growth)
    else:
        growth = float(cp["tree"]["g"])
        max_degree = int(cp["tree"]["max_degree"])
    sec = cp["norm"]
    norm = norm_from_gram(channel.v, _parse_mat(sec["basis"]), _parse_mat(sec["gram"]),
                          float(sec["alpha"]), float(sec["eps_slack"]))
    eps, alpha = norm.eps_slack, norm.alpha
    check("slack", growth * (1 + eps) * alpha ** 2 <= 1 - eps + FEASIBILITY_TOL,
          f"{growth} (1 + {eps}) {alpha}^2 vs 1 - {eps}")
    check("basis", np.allclose(channel.v @ norm.U, 0.0, atol=1e-12), "basis not inside v_perp")
    try:
        np.linalg.cholesky(norm.P)
        spd = True
    except np.linalg.LinAlgError:
        spd = False
    check("gram_spd", spd)
    if not spd:
        return Verification(False, failures, checks)
    factor = certified_factor(restricted_matrix(channel, norm.U), norm.P)
    check("contraction", factor <= alpha * (1 + 1e-9) + 1e-12, f"factor {factor!r} > {alpha!r}")
    base = moment_bound_constant(norm)
    consts = cp["constants"]
    check("C", _close(base.C, float(consts["C"])), f"recomputed {base.C!r}")
    check("C_tilde", _close(base.C_tilde, float(consts["C_tilde"])), f"recomputed {base.C_tilde!r}")
    delta = _delta_for_degrees(eps, base.C, base.C_tilde, _degrees(kind, max_degree))
    check("delta", _close(delta, float(consts["delta"])), f"recomputed {delta!r}")
    delta_initial = delta / (max_degree * (1 + eps)) if regime == "erasure" else delta
    check("delta_initial", _close(delta_initial, float(consts["delta_initial"])),
          f"recomputed {delta_initial!r}")
    value = float(cp["threshold"]["value"])
    expected = _threshold(channel, regime, nu, norm, delta_initial)
    check("threshold", _close(value, expected, 1e-9), f"recomputed {expected!r}")
    cert = Certificate(kind, channel, growth, regime, norm, eps, base.C, base.C_tilde, delta,
                       delta_initial, value, nu, max_degree)
    log = cp["decay-log"]
    if kind == "bary":
        logged = sorted((int(k.split("_")[1]), v) for k, v in log.items() if k.startswith("level_"))
        if logged:
            depth = logged[-1][0]
            levels = level_atoms(channel, cert.noise(), int(growth), depth, budget)
            d = [discrepancy_of_atoms(a, norm) for a in levels]
            for n, text_val in logged:
                stored = _parse_vec(text_val)
                check(f"level_{n}", _close(d[n], stored[0]) and _close(max_tv(levels[n]), stored[1]),
                      f"recomputed D={d[n]!r}")
            try:
                _check_decay(cert, d)
                check("decay", True)
            except CertificateFailure as exc:
                check("decay", False, str(exc))
    else:
        parents = [int(p) for p in cp["tree"]["parents"].split(",")]
        tree = explicit_tree(parents)
        check("max_degree", tree.max_degree == max_degree)
        antichains = []
        i = 0
        while f"antichain_{i}" in cp["tree"]:
            members = [int(x) for x in cp["tree"][f"antichain_{i}"].split(",")]
            antichains.append(validate_antichain(tree, members))
            i += 1
        cert = dataclasses.replace(cert, tree=tree, antichains=tuple(antichains))
        try:
            rows = _tree_checks(cert, budget)
            check("node_bounds", True, f"{len(rows)} nodes")
        except CertificateFailure as exc:
            rows = ()
            check("node_bounds", False, str(exc))
        stored = [_parse_vec(v) for k, v in log.items() if k.startswith("check_")]
        check("node_count", len(stored) == len(rows) or not rows,
              f"{len(stored)} logged vs {len(rows)} recomputed")
        for row, st in zip(rows, stored):
            if not (_close(row[3], st[3]) and _close(row[4], st[4])):
                check(f"node_{row[0]}_{row[1]}", False, "logged value differs")
    return Verification(not failures, failures, checks)


def verify_file(path, budget: int = DEFAULT_BUDGET) -> Verification:
    with open(path) as fh:
        return verify_text(fh.read(), budget)
