"""Rooted trees, antichains (minimal cutsets) and cutset sums.

Nodes are indexed ``0..n-1`` with node 0 the root. Trees built here are in
breadth-first order, so a depth-``d`` truncation of a B-ary or spherically
symmetric tree keeps the node indices of every shallower truncation.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CapExceeded, CycleError, NotACutset, NotFoundWithinCap, NotMinimal

DEFAULT_NODE_CAP = 2_000_000
TIE_RTOL = 1e-12


class Tree:
    """An immutable rooted tree given by its parent array."""

    def __init__(self, parents: Sequence[int], depth_offset: int = 0, origin=None,
                 cap: int = DEFAULT_NODE_CAP):
        parents = np.asarray(parents, dtype=np.int64)
        n = len(parents)
        if n == 0:
            raise ValueError("a tree needs at least the root")
        if n > cap:
            raise CapExceeded(f"{n} nodes exceed the cap of {cap}")
        if parents[0] != -1:
            raise ValueError("node 0 must be the root (parent -1)")
        if n > 1 and (parents[1:].min() < 0 or parents[1:].max() >= n):
            raise ValueError("parent index out of range")
        children: list[list[int]] = [[] for _ in range(n)]
        for x in range(1, n):
            children[parents[x]].append(x)
        depth = np.full(n, -1, dtype=np.int64)
        depth[0] = 0
        order = [0]
        queue = deque([0])
        while queue:
            x = queue.popleft()
            for c in children[x]:
                depth[c] = depth[x] + 1
                order.append(c)
                queue.append(c)
        if len(order) != n:
            raise CycleError("parent array contains a cycle or an unreachable node")
        self.parents = parents
        self.children = [tuple(c) for c in children]
        self.depth = depth
        self.bfs_order = np.asarray(order, dtype=np.int64)
        self.depth_offset = int(depth_offset)
        self.origin = np.arange(n) if origin is None else np.asarray(origin)
        for arr in (self.parents, self.depth, self.bfs_order, self.origin):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.parents)

    @property
    def height(self) -> int:
        return int(self.depth.max())

    @property
    def max_degree(self) -> int:
        return max(len(c) for c in self.children)

    @property
    def leaves(self) -> np.ndarray:
        return np.array([x for x in range(self.n) if not self.children[x]], dtype=np.int64)

    def level(self, d: int) -> np.ndarray:
        return np.flatnonzero(self.depth == d)

    def is_ancestor(self, a: int, x: int) -> bool:
        """True when ``a`` lies on the path from the root to ``x`` (inclusive)."""
        while x != -1:
            if x == a:
                return True
            x = int(self.parents[x])
        return False

    def truncate(self, d: int) -> "Tree":
        keep = self.bfs_order[self.depth[self.bfs_order] <= d]
        index = {int(x): i for i, x in enumerate(keep)}
        parents = [-1] + [index[int(self.parents[x])] for x in keep[1:]]
        return Tree(parents, self.depth_offset, self.origin[keep])

    def edges(self):
        return [(int(self.parents[x]), x) for x in range(1, self.n)]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.parents).tobytes()).hexdigest()[:16]

    def __repr__(self) -> str:
        return f"Tree(n={self.n}, height={self.height}, max_degree={self.max_degree})"


@dataclass(frozen=True)
class TreeSpec:
    """Declarative tree description: ``bary``, ``explicit`` or ``spherical``."""

    kind: str
    arity: int = 0
    depth: int = 0
    parents: tuple = ()
    levels: tuple = ()


def bary_tree(arity: int, depth: int, cap: int = DEFAULT_NODE_CAP) -> Tree:
    if arity < 1 or depth < 0:
        raise ValueError("need arity >= 1 and depth >= 0")
    return spherical_tree([arity] * depth, cap=cap)


def spherical_tree(children_per_level: Sequence[int], cap: int = DEFAULT_NODE_CAP) -> Tree:
    """Every node at depth ``j`` has ``children_per_level[j]`` children."""
    total, width = 1, 1
    for c in children_per_level:
        if c < 1:
            raise ValueError("children per level must be positive")
        width *= c
        total += width
        if total > cap:
            raise CapExceeded(f"tree would exceed the cap of {cap} nodes")
    parents = [-1]
    start, width = 0, 1
    for c in children_per_level:
        parents.extend(np.repeat(np.arange(start, start + width), c).tolist())
        start, width = start + width, width * c
    return Tree(parents, cap=cap)


def explicit_tree(parents: Sequence[int], cap: int = DEFAULT_NODE_CAP) -> Tree:
    parents = [-1 if p is None else int(p) for p in parents]
    return Tree(parents, cap=cap)


def build_tree(spec: TreeSpec, cap: int = DEFAULT_NODE_CAP) -> Tree:
    if spec.kind == "bary":
        return bary_tree(spec.arity, spec.depth, cap)
    if spec.kind == "spherical":
        return spherical_tree(spec.levels, cap)
    if spec.kind == "explicit":
        return explicit_tree(spec.parents, cap)
    raise ValueError(f"unknown tree kind {spec.kind!r}")


def read_parent_file(path) -> Tree:
    """Read ``child parent`` lines; node 0 is the root and has no line."""
    edges = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'child parent'")
            child, parent = int(parts[0]), int(parts[1])
            if child == 0 or child in edges:
                raise ValueError(f"{path}:{lineno}: node {child} given a second parent")
            edges[child] = parent
    n = len(edges) + 1
    if sorted(edges) != list(range(1, n)):
        raise ValueError(f"{path}: nodes must be numbered 1..{n - 1}")
    return explicit_tree([-1] + [edges[c] for c in range(1, n)])


def write_parent_file(tree: Tree, path) -> None:
    with open(path, "w") as fh:
        for child in range(1, tree.n):
            fh.write(f"{child} {tree.parents[child]}\n")


def subtree(tree: Tree, y: int) -> Tree:
    """The subtree T(y) rooted at ``y``, reindexed breadth-first."""
    keep = [y]
    for x in keep:
        keep.extend(tree.children[x])
    index = {x: i for i, x in enumerate(keep)}
    parents = [-1] + [index[int(tree.parents[x])] for x in keep[1:]]
    return Tree(parents, depth_offset=tree.depth_offset + int(tree.depth[y]),
                origin=tree.origin[np.asarray(keep)])


@dataclass(frozen=True)
class Antichain:
    members: tuple
    inside: tuple
    inside_edges: tuple = field(repr=False)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def _covered(tree: Tree, members: set) -> np.ndarray:
    """covered[x] is true when some ancestor-or-self of x is a member."""
    covered = np.zeros(tree.n, dtype=bool)
    for x in tree.bfs_order:
        p = tree.parents[x]
        covered[x] = x in members or (p >= 0 and covered[p])
    return covered


def validate_antichain(tree: Tree, nodes: Iterable[int]) -> Antichain:
    members = {int(x) for x in nodes}
    if not members:
        raise NotACutset("empty set")
    if min(members) < 0 or max(members) >= tree.n:
        raise ValueError("node index out of range")
    covered = _covered(tree, members)
    missed = [int(x) for x in tree.leaves if not covered[x]]
    if missed:
        raise NotACutset(f"path to leaf {missed[0]} avoids the set")
    for x in members:
        p = tree.parents[x]
        if p >= 0 and covered[p]:
            raise NotMinimal(f"node {x} lies below another member")
    inside = tuple(int(x) for x in tree.bfs_order if not covered[x])
    inside_set = set(inside)
    inside_edges = tuple((p, c) for p, c in tree.edges() if p in inside_set)
    return Antichain(tuple(sorted(members)), inside, inside_edges)


def cutset_sum(tree: Tree, antichain: Antichain | Iterable[int], lam: float) -> float:
    members = np.fromiter(antichain, dtype=np.int64)
    return float(np.sum(float(lam) ** (-tree.depth[members].astype(float))))


def min_antichain_sum(tree: Tree, lam: float) -> tuple[float, Antichain]:
    """Minimise the cutset sum over all antichains of a finite tree.

    Bottom-up: ``value(x) = min(lam**-|x|, sum of children's values)``. On a
    tie the shallower cut (at ``x`` itself) wins.
    """
    value = np.empty(tree.n)
    cut = np.zeros(tree.n, dtype=bool)
    own = float(lam) ** (-tree.depth.astype(float))
    for x in tree.bfs_order[::-1]:
        kids = tree.children[x]
        if not kids:
            value[x], cut[x] = own[x], True
            continue
        below = float(sum(value[c] for c in kids))
        if own[x] <= below * (1 + TIE_RTOL):
            value[x], cut[x] = own[x], True
        else:
            value[x] = below
    members, stack = [], [0]
    while stack:
        x = stack.pop()
        if cut[x]:
            members.append(x)
        else:
            stack.extend(tree.children[x])
    return float(value[0]), validate_antichain(tree, members)


def local_sums(tree: Tree, antichain: Antichain, g: float) -> dict[int, float]:
    """``sum over x in S cap T(y) of g**-(|x|-|y|)`` for every y in S and Ins(S)."""
    out = {x: 1.0 for x in antichain.members}
    for y in reversed(antichain.inside):
        out[y] = sum(out[c] for c in tree.children[y]) / g
    return out


@dataclass(frozen=True)
class GoodAntichain:
    depth: int
    tree: Tree
    antichain: Antichain
    total: float
    max_local: float


class TreeFamily:
    """An infinite tree given by a truncation rule ``depth -> Tree``."""

    def __init__(self, truncation: Callable[[int], Tree], name: str = "family",
                 max_depth: int | None = None):
        self._truncation = truncation
        self.name = name
        self.max_depth = max_depth

    def truncate(self, d: int) -> Tree:
        if self.max_depth is not None:
            d = min(d, self.max_depth)
        return self._truncation(d)

    @classmethod
    def bary(cls, arity: int) -> "TreeFamily":
        return cls(lambda d: bary_tree(arity, d), name=f"bary({arity})")

    @classmethod
    def periodic(cls, pattern: Sequence[int]) -> "TreeFamily":
        """Spherically symmetric tree repeating ``pattern`` level after level."""
        pattern = list(pattern)
        return cls(lambda d: spherical_tree([pattern[j % len(pattern)] for j in range(d)]),
                   name=f"periodic({pattern})")

    @classmethod
    def finite(cls, tree: Tree) -> "TreeFamily":
        return cls(tree.truncate, name=f"finite({tree.digest()})", max_depth=tree.height)


def good_antichain_sequence(family, g: float, eps, depth_cap: int = 30) -> list[GoodAntichain]:
    """For each target in ``eps`` find an antichain with small ``g``-cutset sum.

    The truncation is deepened until the DP minimiser at ``lam = g`` has
    total at most the target; the per-node sums of the same antichain are
    then checked to be at most 1.
    """
    if g <= 1:
        raise ValueError("g must exceed 1")
    if isinstance(family, Tree):
        family = TreeFamily.finite(family)
    targets = [float(eps)] if np.isscalar(eps) else [float(e) for e in eps]
    last = depth_cap if family.max_depth is None else min(depth_cap, family.max_depth)
    found, depth = [], 0
    for target in targets:
        while True:
            tree = family.truncate(depth)
            total, s = min_antichain_sum(tree, g)
            if total <= target:
                break
            if depth >= last:
                raise NotFoundWithinCap(
                    f"deepest truncation (depth {depth}) still has min cutset sum "
                    f"{total:.6g} > {target:.6g} at g={g}")
            depth += 1
        sums = local_sums(tree, s, g)
        max_local = max(sums.values())
        if max_local > 1 + 1e-12:
            raise AssertionError(f"per-node cutset sum {max_local} exceeds 1")
        found.append(GoodAntichain(depth, tree, s, total, max_local))
    return found


def branching_number_bounds(tree: Tree, eps: float = 0.5, hi: float = 1e6) -> tuple[float, float]:
    """DP-derived interval for the branching number seen in a finite truncation.

    ``lower`` is the largest lam at which the root alone minimises the cutset
    sum; ``upper`` the smallest lam at which the minimum drops to ``eps``.
    Nothing is extrapolated beyond the given tree.
    """

    def value(lam):
        return min_antichain_sum(tree, lam)[0]

    def bisect(pred, lo, up):
        for _ in range(200):
            mid = 0.5 * (lo + up)
            if pred(mid):
                up = mid
            else:
                lo = mid
            if up - lo <= 1e-12 * up:
                break
        return up

    if tree.height == 0:
        return 0.0, float("inf")
    lower = bisect(lambda lam: value(lam) < 1 - 1e-12, 1e-9, hi)
    upper = bisect(lambda lam: value(lam) <= eps, 1e-9, hi)
    return lower, upper
