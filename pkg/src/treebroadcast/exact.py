"""Exact likelihood-vector atoms for the vector of leaf-observation measures.

An :class:`AtomSet` stores the measures ``(mu_1, ..., mu_q)`` of an
observation as a list of atoms ``(g, w)``: ``g[i]`` is the probability of one
observation string under root state ``i`` and ``w`` counts the strings that
share that exact likelihood vector. Every functional computed downstream
(discrepancy, total variation, moments) depends on the measures only through
this distribution, so atoms with equal ``g`` are merged.
"""

from __future__ import annotations

import csv
import itertools
import math
from typing import Sequence

import numpy as np

from .channels import Channel, NoiseChannel
from .errors import AtomBudgetExceeded, CapExceeded
from .trees import Antichain, Tree

DEFAULT_BUDGET = 1_000_000
MERGE_DIGITS = 12
_ZERO_EXP = -(1 << 30)


def _merge_keys(g: np.ndarray, digits: int) -> np.ndarray:
    """Integer keys equal for rows that agree to ``digits`` significant digits."""
    pos = g > 0
    safe = np.where(pos, g, 1.0)
    exp = np.floor(np.log10(safe)).astype(np.int64)
    mant = np.rint(safe / 10.0 ** exp * 10 ** (digits - 1)).astype(np.int64)
    # a mantissa rounding up to 10**digits belongs to the next decade
    carry = mant >= 10 ** digits
    exp = np.where(carry, exp + 1, exp)
    mant = np.where(carry, mant // 10, mant)
    exp = np.where(pos, exp, _ZERO_EXP)
    mant = np.where(pos, mant, 0)
    return np.concatenate([exp, mant], axis=1)


def merge_atoms(g: np.ndarray, w: np.ndarray, digits: int = MERGE_DIGITS):
    """Merge equal likelihood vectors; returns ``(g, w, moved)`` sorted by key.

    Representatives are weight-averaged so ``sum(w * g)`` is preserved.
    ``moved`` bounds ``0.5 * sum w |g - representative|`` per state.
    """
    keep = (w > 0) & np.any(g > 0, axis=1)
    g, w = g[keep], w[keep]
    if len(g) == 0:
        return g, w, 0.0
    _, first, inverse = np.unique(_merge_keys(g, digits), axis=0, return_index=True,
                                  return_inverse=True)
    inverse = inverse.ravel()
    n_groups = len(first)
    if n_groups == len(g):
        order = first
        return g[order], w[order], 0.0
    w_out = np.bincount(inverse, weights=w, minlength=n_groups)
    g_out = np.empty((n_groups, g.shape[1]))
    for i in range(g.shape[1]):
        g_out[:, i] = np.bincount(inverse, weights=w * g[:, i], minlength=n_groups) / w_out
    moved = 0.5 * float(np.max(np.sum(w[:, None] * np.abs(g - g_out[inverse]), axis=0)))
    return g_out, w_out, moved


class AtomSet:
    """Weighted likelihood-vector atoms for a vector of ``q`` probability measures."""

    __slots__ = ("g", "w", "merge_error")

    def __init__(self, g, w=None, merge: bool = True, digits: int = MERGE_DIGITS,
                 merge_error: float = 0.0):
        g = np.atleast_2d(np.asarray(g, dtype=float))
        w = np.ones(len(g)) if w is None else np.asarray(w, dtype=float).ravel()
        if len(w) != len(g):
            raise ValueError("one weight per atom")
        if np.any(g < 0) or np.any(w < 0):
            raise ValueError("atoms must be nonnegative")
        if merge:
            g, w, moved = merge_atoms(g, w, digits)
            if digits != MERGE_DIGITS:
                merge_error += moved
        else:
            keep = (w > 0) & np.any(g > 0, axis=1)
            g, w = g[keep], w[keep]
        g.setflags(write=False)
        w.setflags(write=False)
        self.g, self.w, self.merge_error = g, w, float(merge_error)

    @property
    def q(self) -> int:
        return self.g.shape[1]

    def __len__(self) -> int:
        return len(self.w)

    def totals(self) -> np.ndarray:
        """``sum w * g_i`` per state; each is 1 for probability measures."""
        return self.w @ self.g

    def measure(self, i: int) -> np.ndarray:
        return self.w * self.g[:, i]

    def apply(self, matrix) -> "AtomSet":
        """Atomwise ``g -> matrix @ g``."""
        return AtomSet(self.g @ np.asarray(matrix, dtype=float).T, self.w)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["w"] + [f"g_{i + 1}" for i in range(self.q)])
            for wi, gi in zip(self.w, self.g):
                out.writerow([f"{wi:.17g}"] + [f"{x:.17g}" for x in gi])

    @classmethod
    def from_csv(cls, path) -> "AtomSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(data[:, 1:], data[:, 0])

    def __repr__(self) -> str:
        return f"AtomSet(q={self.q}, atoms={len(self)})"


def leaf_atoms(noise: NoiseChannel) -> AtomSet:
    """One atom per observation symbol: ``g = column of N``."""
    return AtomSet(np.asarray(noise.N).T)


def _multiset_product(atoms: AtomSet, r: int, budget: int):
    m = len(atoms)
    count = math.comb(m + r - 1, r)
    if count > budget:
        raise AtomBudgetExceeded(f"{count} multiset combinations exceed budget {budget}")
    if r == 1:
        return atoms.g, atoms.w
    flat = np.fromiter(itertools.chain.from_iterable(
        itertools.combinations_with_replacement(range(m), r)), dtype=np.int64, count=count * r)
    idx = flat.reshape(count, r)
    g = np.prod(atoms.g[idx], axis=1)
    w = np.prod(atoms.w[idx], axis=1)
    # multinomial r! / prod(run lengths!) as a product of running counts
    run = np.ones(count)
    denom = np.ones(count)
    for p in range(1, r):
        run = np.where(idx[:, p] == idx[:, p - 1], run + 1, 1.0)
        denom *= run
    return g, w * (math.factorial(r) / denom)


def recursion_step(children: Sequence[AtomSet], channel: Channel | np.ndarray,
                   budget: int = DEFAULT_BUDGET, digits: int = MERGE_DIGITS) -> AtomSet:
    """Parent atoms from child atoms: tensor product of ``M`` applied to each child.

    Children passed as the *same object* are treated as exchangeable and
    enumerated as multisets with multinomial weights.
    """
    if not children:
        raise ValueError("need at least one child")
    m = np.asarray(channel.M if isinstance(channel, Channel) else channel, dtype=float)
    q = children[0].q
    if any(c.q != q for c in children):
        raise ValueError("children disagree on q")
    groups: dict[int, list] = {}
    for c in children:
        groups.setdefault(id(c), [c, 0])[1] += 1
    g_acc, w_acc = np.ones((1, q)), np.ones(1)
    error = sum(c.merge_error for c in children)
    for child, r in groups.values():
        pushed = AtomSet(child.g @ m.T, child.w, digits=digits)
        g_grp, w_grp = _multiset_product(pushed, r, budget)
        size = len(g_acc) * len(g_grp)
        if size > budget:
            raise AtomBudgetExceeded(f"{size} product atoms exceed budget {budget}")
        g_acc = (g_acc[:, None, :] * g_grp[None, :, :]).reshape(size, q)
        w_acc = (w_acc[:, None] * w_grp[None, :]).ravel()
        g_acc, w_acc, moved_mass = merge_atoms(g_acc, w_acc, digits)
        if digits != MERGE_DIGITS:
            error += moved_mass
    return AtomSet(g_acc, w_acc, merge=False, merge_error=error)


def atoms_tv(atoms: AtomSet, i: int, j: int) -> float:
    """Total variation ``1/2 sum |mu_i - mu_j|`` between two root states."""
    if i == j:
        return 0.0
    return 0.5 * float(np.sum(atoms.w * np.abs(atoms.g[:, i] - atoms.g[:, j])))


def max_tv(atoms: AtomSet) -> float:
    q = atoms.q
    return max((atoms_tv(atoms, i, j) for i in range(q) for j in range(i + 1, q)), default=0.0)


def reconstruction_error(atoms: AtomSet, prior) -> float:
    """Bayes error of the MAP root guess, root drawn from ``prior``."""
    prior = np.asarray(prior, dtype=float)
    return float(1.0 - np.sum(atoms.w * np.max(atoms.g * prior, axis=1)))


def shape_keys(tree: Tree, antichain: Antichain) -> dict[int, int]:
    """Canonical ids of the antichain-truncated subtrees ``T(y)``."""
    table: dict[tuple, int] = {(): 0}
    keys = {x: 0 for x in antichain.members}
    for y in reversed(antichain.inside):
        sig = tuple(sorted(keys[c] for c in tree.children[y]))
        keys[y] = table.setdefault(sig, len(table))
    return keys


def antichain_atoms(tree: Tree, channel: Channel, noise: NoiseChannel, antichain: Antichain,
                    budget: int = DEFAULT_BUDGET) -> dict[int, AtomSet]:
    """Atoms of the observation on ``S cap T(y)`` for every ``y`` in ``S`` and ``Ins(S)``.

    Isomorphic sibling subtrees share one AtomSet, which lets
    :func:`recursion_step` use multiset enumeration for them.
    """
    keys = shape_keys(tree, antichain)
    by_key = {0: leaf_atoms(noise)}
    out = {x: by_key[0] for x in antichain.members}
    for y in reversed(antichain.inside):
        k = keys[y]
        if k not in by_key:
            by_key[k] = recursion_step([out[c] for c in tree.children[y]], channel, budget)
        out[y] = by_key[k]
    return out


def level_atoms(channel: Channel, noise: NoiseChannel, arity: int, depth: int,
                budget: int = DEFAULT_BUDGET) -> list[AtomSet]:
    """Atoms of the noisy level-``n`` observation on the B-ary tree, ``n = 0..depth``."""
    levels = [leaf_atoms(noise)]
    for _ in range(depth):
        levels.append(recursion_step([levels[-1]] * arity, channel, budget))
    return levels


def enumerate_oracle(tree: Tree, channel: Channel, noise: NoiseChannel, antichain: Antichain,
                     cap: int = DEFAULT_BUDGET) -> AtomSet:
    """Brute-force observation law: one unmerged atom per observation string.

    Sums the joint weight of every assignment of states to ``Ins(S)``; given
    those states the antichain members are independent, each observed
    through ``M N`` from its parent (or ``N`` when the root itself is in S).
    Strings are in lexicographic order over ``antichain.members``.
    """
    m = np.asarray(channel.M)
    n_mat = np.asarray(noise.N)
    q, b = n_mat.shape
    members = list(antichain.members)
    n_strings = b ** len(members)
    if n_strings > cap:
        raise CapExceeded(f"{b}^{len(members)} observation strings exceed cap {cap}")
    inside = list(antichain.inside)
    pos = {x: i for i, x in enumerate(inside)}
    mn = m @ n_mat
    inner_edges = [(pos[p], pos[c]) for p, c in antichain.inside_edges if c in pos]
    measures = np.zeros((n_strings, q))
    for root in range(q):
        if not inside:
            measures[:, root] = n_mat[root]
            continue
        free = len(inside) - 1
        configs = np.indices((q,) * free).reshape(free, -1).T if free else np.zeros((1, 0), int)
        sigma = np.concatenate([np.full((len(configs), 1), root), configs], axis=1)
        weight = np.ones(len(sigma))
        for pi, ci in inner_edges:
            weight = weight * m[sigma[:, pi], sigma[:, ci]]
        factors = [mn[sigma[:, pos[int(tree.parents[x])]]] for x in members]
        chunk = max(1, (1 << 22) // n_strings)
        total = np.zeros(n_strings)
        for lo in range(0, len(sigma), chunk):
            hi = lo + chunk
            acc = weight[lo:hi, None]
            for f in factors:
                acc = (acc[:, :, None] * f[lo:hi, None, :]).reshape(len(acc), -1)
            total += acc.sum(axis=0)
        measures[:, root] = total
    return AtomSet(measures, merge=False)
