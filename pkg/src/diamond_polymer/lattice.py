"""Recursive diamond graphs D_n: edges, directed paths and small-depth oracles.

D_0 is a single edge between the roots A and B.  D_n is obtained from D_1
(b parallel branches of s segments) by replacing every edge with a copy of
D_{n-1}.  An edge of D_n is addressed by the sequence of (branch, segment)
pairs that leads to it, coarsest level first; a directed path is a tree of
branch choices with one subtree per segment.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

DEFAULT_ENUMERATION_CAP = 10**7

EdgeId = tuple[tuple[int, int], ...]


class EnumerationCapExceeded(ValueError):
    """Raised when an exhaustive enumeration would exceed the configured cap."""

    def __init__(self, cap: int, actual: int):
        self.cap = cap
        self.actual = actual
        super().__init__(f"enumeration cap {cap} exceeded: {actual} items required")


class DepthMismatchError(ValueError):
    pass


class UnequalBranchingError(ValueError):
    """Raised by analyses that are only valid on lattices with b == s."""

    def __init__(self, b: int, s: int):
        self.b = b
        self.s = s
        super().__init__(f"analysis requires b == s, got b={b}, s={s}")


@dataclass(frozen=True)
class LatticeParams:
    b: int
    s: int
    n: int

    def __post_init__(self):
        for name, lo in (("b", 2), ("s", 2), ("n", 0)):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {value!r}")
            if value < lo:
                raise ValueError(f"{name} must be >= {lo}, got {value}")

    def require_equal_branching(self) -> None:
        if self.b != self.s:
            raise UnequalBranchingError(self.b, self.s)

    def with_depth(self, n: int) -> "LatticeParams":
        return LatticeParams(self.b, self.s, n)


@dataclass(frozen=True)
class DirectedPath:
    """Branch-choice tree of a directed path.

    ``branch`` is None only for the unique path of D_0.  Otherwise it is the
    1-based branch taken at the top level and ``children`` holds one path of
    depth n-1 per segment of that branch.
    """

    branch: int | None = None
    children: tuple["DirectedPath", ...] = ()

    @property
    def depth(self) -> int:
        if self.branch is None:
            return 0
        return 1 + self.children[0].depth


TRIVIAL_PATH = DirectedPath()


def edge_count(params: LatticeParams) -> int:
    return (params.b * params.s) ** params.n


def path_count(params: LatticeParams) -> int:
    """Exact number of directed paths, b**((s**n - 1) / (s - 1))."""
    b, s, n = params.b, params.s, params.n
    return b ** ((s**n - 1) // (s - 1))


def log10_path_count(params: LatticeParams) -> float:
    b, s, n = params.b, params.s, params.n
    return (s**n - 1) // (s - 1) * math.log10(b)


def iter_edges(params: LatticeParams) -> Iterator[EdgeId]:
    """All edge addresses of D_n in lexicographic order."""
    pairs = [(i, j) for i in range(1, params.b + 1) for j in range(1, params.s + 1)]
    return itertools.product(pairs, repeat=params.n)


def edge_index(address: EdgeId, params: LatticeParams) -> int:
    """Position of an edge in :func:`iter_edges` order (row-major over pairs)."""
    idx = 0
    for i, j in address:
        idx = idx * params.b * params.s + (i - 1) * params.s + (j - 1)
    return idx


def _paths_at_depth(b: int, s: int, n: int) -> Iterator[DirectedPath]:
    if n == 0:
        yield TRIVIAL_PATH
        return
    sub = list(_paths_at_depth(b, s, n - 1))
    for i in range(1, b + 1):
        for combo in itertools.product(sub, repeat=s):
            yield DirectedPath(i, combo)


def enumerate_paths(
    params: LatticeParams, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[DirectedPath]:
    """Yield every directed path of D_n exactly once.

    Raises EnumerationCapExceeded before yielding anything if the number of
    paths is larger than ``cap``.
    """
    total = path_count(params)
    if total > cap:
        raise EnumerationCapExceeded(cap, total)
    return _paths_at_depth(params.b, params.s, params.n)


def path_edges(path: DirectedPath, params: LatticeParams) -> list[EdgeId]:
    if path.depth != params.n:
        raise DepthMismatchError(
            f"path has depth {path.depth} but lattice depth is {params.n}"
        )
    out: list[EdgeId] = []

    def walk(p: DirectedPath, prefix: EdgeId) -> None:
        if p.branch is None:
            out.append(prefix)
            return
        for j, child in enumerate(p.children, start=1):
            walk(child, prefix + ((p.branch, j),))

    walk(path, ())
    return out


def sample_path(params: LatticeParams, rng: np.random.Generator) -> DirectedPath:
    """Uniform draw from the path set; branch choices are independent and uniform."""

    def draw(n: int) -> DirectedPath:
        if n == 0:
            return TRIVIAL_PATH
        branch = int(rng.integers(1, params.b + 1))
        return DirectedPath(branch, tuple(draw(n - 1) for _ in range(params.s)))

    return draw(params.n)


def expected_shared_edges(params: LatticeParams) -> float:
    """Mean number of edges shared by two independent uniform paths.

    Two paths overlap below the top level only if they pick the same branch
    (probability 1/b), in which case each of the s segments contributes an
    independent depth n-1 overlap: E_n = (s/b) E_{n-1}, E_0 = 1.
    """
    value = Fraction(1)
    for _ in range(params.n):
        value = value * params.s / params.b
    return float(value)


def shared_edges_by_enumeration(
    params: LatticeParams, cap: int = DEFAULT_ENUMERATION_CAP
) -> float:
    """Brute-force average of |p ∩ q| over all ordered pairs of paths.

    Uses sum over pairs of |p ∩ q| = sum over edges of c_e**2, where c_e is
    the number of paths through edge e, so the cost is linear in the number
    of paths.
    """
    counts: Counter[EdgeId] = Counter()
    total = 0
    for path in enumerate_paths(params, cap):
        counts.update(path_edges(path, params))
        total += 1
    pair_sum = sum(c * c for c in counts.values())
    return float(Fraction(pair_sum, total * total))
