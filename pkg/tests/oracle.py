"""Independent comparison helpers shared by the engine and acceptance tests."""

from collections import defaultdict

import numpy as np

from treebroadcast.exact import AtomSet

MATCH_DIGITS = 9


def class_masses(atoms: AtomSet, digits: int = MATCH_DIGITS) -> dict:
    """Per-state mass of each likelihood-vector class, keyed by rounded g."""
    out = defaultdict(lambda: np.zeros(atoms.q))
    for g, w in zip(atoms.g, atoms.w):
        key = tuple(float(f"{x:.{digits}g}") for x in g)
        out[key] += w * g
    return out


def per_state_tv_gap(a: AtomSet, b: AtomSet) -> float:
    """max_i of 1/2 sum over classes |a-mass_i - b-mass_i|."""
    ma, mb = class_masses(a), class_masses(b)
    total = np.zeros(a.q)
    for key in set(ma) | set(mb):
        total += np.abs(ma.get(key, 0.0) - mb.get(key, 0.0))
    return float(0.5 * total.max())


def discrepancy_direct(measures: np.ndarray, v, gram_sq) -> float:
    """The definition with the stationary mixture as reference, one term per string.

    ``measures`` has one row per observation string and one column per root
    state; ``gram_sq(F)`` returns the squared norm of ``Q f`` for each row.
    """
    v = np.asarray(v, float)
    mass = measures @ v
    keep = mass > 0
    f = measures[keep] / mass[keep, None]
    sq = gram_sq(f)
    flat = np.all(f == f[:, :1], axis=1)
    live = (sq > 0) & ~flat
    if np.any(live & np.any(f == 0, axis=1)):
        return float("inf")
    f, sq, m = f[live], sq[live], mass[keep][live]
    return float(np.sum(m * sq * np.sum(v / f, axis=1)))
