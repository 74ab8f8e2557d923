"""Exact time evolution on small periodic tori, the conventional baseline."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import quantum
from .nlce import ObservableSpec, PairCorrelator, Propagation, SiteMagnetization
from .quantum import InitialStateSpec, ModelSpec, ResourceLimitError

DEFAULT_TORUS_CAP = 18
DEFAULT_ED_DENSE_CAP = 10


@dataclass(frozen=True)
class TorusSpec:
    """Periodic box; ``double_wraps`` keeps both copies of an extent-2 wrap bond."""

    extents: tuple[int, ...]
    double_wraps: bool = False
    site_cap: int = DEFAULT_TORUS_CAP

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extents)
        object.__setattr__(self, "extents", ext)
        if not 1 <= len(ext) <= 3:
            raise ValueError("torus must be 1-, 2- or 3-dimensional")
        if min(ext) < 2:
            raise ValueError(f"torus extents must all be >= 2, got {ext}")
        if self.n_sites > self.site_cap:
            raise ResourceLimitError(f"{self.name} torus has {self.n_sites} sites, cap is {self.site_cap}")

    @classmethod
    def parse(cls, text: str, **kw) -> "TorusSpec":
        return cls(tuple(int(p) for p in text.lower().split("x")), **kw)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.extents))

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def name(self) -> str:
        return "x".join(map(str, self.extents))


def build_torus(spec: TorusSpec, lattice=None):
    """Sites (row-major coordinate tuples) and nearest-neighbour bonds (index pairs).

    Bonds are sorted. A wrap along an extent-2 axis joins the same pair as
    the direct bond and is dropped unless ``double_wraps`` is set.
    """
    if lattice is not None and lattice.dimension != spec.dimension:
        raise ValueError(f"{spec.name} torus does not fit a {lattice.dimension}D lattice")
    ext = spec.extents
    sites = list(itertools.product(*(range(e) for e in ext)))
    index = {s: k for k, s in enumerate(sites)}
    bonds = []
    for s in sites:
        for axis in range(len(ext)):
            nb = list(s)
            nb[axis] = (nb[axis] + 1) % ext[axis]
            a, b = sorted((index[s], index[tuple(nb)]))
            bonds.append((a, b))
    bonds.sort()
    if not spec.double_wraps:
        bonds = sorted(set(bonds))
    return sites, bonds


def _wrap(site, ext):
    return tuple(c % e for c, e in zip(site, ext))


def torus_states(model: ModelSpec, init: InitialStateSpec, spec: TorusSpec, grid,
                 prop: Propagation | None = None) -> np.ndarray:
    prop = prop or Propagation(dense_cap=DEFAULT_ED_DENSE_CAP, site_cap=spec.site_cap)
    sites, bonds = build_torus(spec)
    H = quantum.hamiltonian_from_bonds(model, len(sites), bonds, site_cap=max(prop.site_cap, spec.site_cap))
    psi0 = quantum.product_state(init, len(sites))
    return prop.evolve(H, psi0, quantum.as_times(grid))


def pair_sites(spec: TorusSpec, r) -> list[tuple[int, int]]:
    """(i, j) index pairs with j at i + r under periodic wrapping, one per base site."""
    r = tuple(int(c) for c in r)
    if len(r) != spec.dimension:
        raise ValueError(f"separation {r} does not match a {spec.dimension}D torus")
    sites, _ = build_torus(spec)
    index = {s: k for k, s in enumerate(sites)}
    out = []
    for s in sites:
        j = index[_wrap(tuple(a + b for a, b in zip(s, r)), spec.extents)]
        if j == index[s]:
            raise ValueError(f"separation {r} wraps onto the same site on {spec.name}")
        out.append((index[s], j))
    return out


def observe(states: np.ndarray, spec: TorusSpec, obs: ObservableSpec) -> np.ndarray:
    """Site-averaged magnetisation, or the pair correlator averaged over base sites."""
    if isinstance(obs, SiteMagnetization):
        return quantum.site_expectations(states, obs.alpha).mean(axis=-1)
    pairs = pair_sites(spec, obs.r)
    one = quantum.site_expectations(states, obs.alpha)
    other = one if obs.beta == obs.alpha else quantum.site_expectations(states, obs.beta)
    vals = []
    for i, j in pairs:
        v = quantum.expect_pair(states, i, j, obs.alpha, obs.beta)
        if obs.connected:
            v = v - one[:, i] * other[:, j]
        vals.append(v)
    return np.mean(vals, axis=0)


def ed_series(model: ModelSpec, init: InitialStateSpec, spec: TorusSpec, obs: ObservableSpec,
              grid, prop: Propagation | None = None) -> np.ndarray:
    states = torus_states(model, init, spec, grid, prop)
    return observe(states, spec, obs)


def ed_size_series(model, init, tori, obs, grid, prop: Propagation | None = None) -> dict[int, np.ndarray]:
    """ED results keyed by site count, for Delta tables over system size."""
    out = {}
    for spec in tori:
        if spec.n_sites in out:
            raise ValueError(f"two tori with {spec.n_sites} sites")
        out[spec.n_sites] = ed_series(model, init, spec, obs, grid, prop)
    return dict(sorted(out.items()))


__all__ = ["TorusSpec", "build_torus", "torus_states", "pair_sites", "observe", "ed_series",
           "ed_size_series", "PairCorrelator", "SiteMagnetization"]
