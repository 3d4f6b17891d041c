"""Nearest-neighbour geometry on Z^d: boundaries, shells and parity classes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterable, Iterator

Site = tuple[int, ...]


def l1(site: Site) -> int:
    return sum(abs(c) for c in site)


def origin(d: int) -> Site:
    return (0,) * d


@dataclass(frozen=True)
class LatticeRegion:
    """A finite set of sites kept in lexicographic order."""

    sites: tuple[Site, ...]

    def __init__(self, sites: Iterable[Site] = ()):
        canon = sorted({tuple(int(c) for c in s) for s in sites})
        dims = {len(s) for s in canon}
        if len(dims) > 1:
            raise ValueError(f"mixed dimensions in region: {sorted(dims)}")
        object.__setattr__(self, "sites", tuple(canon))

    def __iter__(self) -> Iterator[Site]:
        return iter(self.sites)

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, site) -> bool:
        return tuple(site) in self._lookup

    @property
    def _lookup(self) -> frozenset:
        cached = self.__dict__.get("_set")
        if cached is None:
            cached = frozenset(self.sites)
            object.__setattr__(self, "_set", cached)
        return cached

    @property
    def dim(self) -> int | None:
        return len(self.sites[0]) if self.sites else None

    def __or__(self, other: "LatticeRegion") -> "LatticeRegion":
        return LatticeRegion(self.sites + other.sites)

    def __and__(self, other: "LatticeRegion") -> "LatticeRegion":
        return LatticeRegion(s for s in self.sites if s in other)

    def __sub__(self, other: "LatticeRegion") -> "LatticeRegion":
        return LatticeRegion(s for s in self.sites if s not in other)

    def index(self, site: Site) -> int:
        return self.sites.index(tuple(site))

    def to_record(self) -> list[list[int]]:
        return [list(s) for s in self.sites]

    @classmethod
    def from_record(cls, rec: list[list[int]]) -> "LatticeRegion":
        return cls(tuple(s) for s in rec)


def neighbors(i: Site) -> LatticeRegion:
    out = []
    for axis in range(len(i)):
        for step in (-1, 1):
            j = list(i)
            j[axis] += step
            out.append(tuple(j))
    return LatticeRegion(out)


def are_neighbors(i: Site, j: Site) -> bool:
    return sum(abs(a - b) for a, b in zip(i, j)) == 1


def outer_boundary(region: LatticeRegion) -> LatticeRegion:
    out = set()
    for i in region:
        out.update(j for j in neighbors(i) if j not in region)
    return LatticeRegion(out)


@lru_cache(maxsize=None)
def box(d: int, radius: int) -> LatticeRegion:
    """Centred L-infinity ball of the given radius."""
    rng = range(-radius, radius + 1)
    return LatticeRegion(itertools.product(rng, repeat=d))


def sphere_count(d: int, m: int) -> int:
    """Number of points of Z^d with L1 norm exactly m."""
    if m == 0:
        return 1
    return sum(2 ** k * comb(d, k) * comb(m - 1, k - 1) for k in range(1, min(d, m) + 1))


def shell_bound(d: int, k: int) -> int:
    """Untruncated cardinality of the k-th shell."""
    return sum(sphere_count(d, m) for m in range(k % 2, k + 1, 2))


@dataclass(frozen=True)
class Shell:
    k: int
    region: LatticeRegion

    def __iter__(self):
        return iter(self.region)

    def __len__(self):
        return len(self.region)


@lru_cache(maxsize=None)
def _shell(k: int, d: int, sites: tuple[Site, ...]) -> Shell:
    members = LatticeRegion(s for s in sites if l1(s) <= k and (l1(s) - k) % 2 == 0)
    if shell_bound(d, k) > (2 * d) ** k:
        raise AssertionError(f"shell {k} exceeds the (2d)^k cardinality bound")
    for a, b in itertools.combinations(members.sites, 2):
        if are_neighbors(a, b):
            raise AssertionError(f"shell {k} contains adjacent sites {a}, {b}")
    return Shell(k, members)


def shell(k: int, region: LatticeRegion) -> Shell:
    """k-fold outer boundary of the origin, intersected with region.

    Uses the closed form {|j|_1 <= k, |j|_1 = k mod 2}; the iterated
    boundary agrees with it exactly.
    """
    if k < 0:
        raise ValueError("shell index must be >= 0")
    if not len(region):
        return Shell(k, LatticeRegion())
    return _shell(k, region.dim, region.sites)


def shell_by_iteration(k: int, d: int) -> LatticeRegion:
    current = LatticeRegion([origin(d)])
    for _ in range(k):
        current = outer_boundary(current)
    return current


def parity_classes(region: LatticeRegion) -> tuple[LatticeRegion, LatticeRegion]:
    if region.dim is None or origin(region.dim) not in region:
        raise ValueError("region must contain the origin")
    even = LatticeRegion(s for s in region if l1(s) % 2 == 0)
    return even, region - even
