"""Hypercubic lattice geometry: sites, nearest-neighbour bonds, point groups.

Sites are integer coordinate tuples. Nothing in here touches floating point.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

Site = tuple[int, ...]
Bond = tuple[Site, Site]

_NAMES = {1: "chain", 2: "square", 3: "cubic"}


@dataclass(frozen=True)
class LatticeSpec:
    """A d-dimensional hypercubic lattice (chain, square or cubic)."""

    dimension: int

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.dimension!r}")

    @classmethod
    def from_name(cls, name: str | int) -> "LatticeSpec":
        if isinstance(name, int):
            return cls(name)
        for dim, label in _NAMES.items():
            if name == label:
                return cls(dim)
        raise ValueError(f"unknown lattice {name!r}; expected one of {sorted(_NAMES.values())}")

    @property
    def name(self) -> str:
        return _NAMES[self.dimension]

    @property
    def coordination(self) -> int:
        return 2 * self.dimension

    @cached_property
    def point_group(self) -> "PointGroup":
        return PointGroup.hypercubic(self.dimension)


@dataclass(frozen=True)
class PointGroup:
    """Signed axis permutations, stored as integer matrices of shape (|G|, d, d)."""

    elements: np.ndarray

    @classmethod
    def hypercubic(cls, dimension: int) -> "PointGroup":
        mats = []
        for perm in itertools.permutations(range(dimension)):
            for signs in itertools.product((1, -1), repeat=dimension):
                m = np.zeros((dimension, dimension), dtype=np.int64)
                for row, (col, sgn) in enumerate(zip(perm, signs)):
                    m[row, col] = sgn
                mats.append(m)
        # identity first, the rest in generation order
        mats.sort(key=lambda m: not np.array_equal(m, np.eye(dimension, dtype=np.int64)))
        elements = np.stack(mats)
        elements.setflags(write=False)
        return cls(elements)

    def __len__(self) -> int:
        return len(self.elements)

    def apply(self, index: int, site: Site) -> Site:
        return tuple(int(v) for v in self.elements[index] @ np.asarray(site, dtype=np.int64))


def neighbor_offsets(spec: LatticeSpec) -> list[Site]:
    """Unit offsets in the order +x, -x, +y, -y, +z, -z."""
    out = []
    for axis in range(spec.dimension):
        for sgn in (1, -1):
            v = [0] * spec.dimension
            v[axis] = sgn
            out.append(tuple(v))
    return out


def _check_site(spec: LatticeSpec, site) -> Site:
    site = tuple(int(c) for c in site)
    if len(site) != spec.dimension:
        raise ValueError(f"site {site} does not have {spec.dimension} coordinates")
    return site


def bonds_within(spec: LatticeSpec, sites: Iterable[Site]) -> list[Bond]:
    """All nearest-neighbour pairs with both ends in ``sites``, smaller endpoint first."""
    members = {_check_site(spec, s) for s in sites}
    bonds = []
    for a in sorted(members):
        for axis in range(spec.dimension):
            b = a[:axis] + (a[axis] + 1,) + a[axis + 1:]
            if b in members:
                bonds.append((a, b))
    bonds.sort()
    return bonds


def is_connected(spec: LatticeSpec, sites: Iterable[Site]) -> bool:
    members = {_check_site(spec, s) for s in sites}
    if not members:
        raise ValueError("empty cluster")
    offsets = neighbor_offsets(spec)
    start = next(iter(members))
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for off in offsets:
            b = tuple(x + dx for x, dx in zip(a, off))
            if b in members and b not in seen:
                seen.add(b)
                stack.append(b)
    return len(seen) == len(members)
