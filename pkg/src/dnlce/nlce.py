"""Linked-cluster expansion of quench dynamics.

Single-site observables use the extensive cluster property
``P(c) = sum_{i in c} <sigma_i^alpha>_c(t)``; the lattice value per site is
``sum_c L(c) W(c)`` over free clusters. Pair correlators use doubly-rooted,
pinned clusters and the correlator measured on the cluster alone.
"""
from __future__ import annotations

import contextlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import quantum
from .clusters import ClusterSet, PairClusterSet, key_from_code, min_pair_size
from .lattice import LatticeSpec
from .quantum import InitialStateSpec, ModelSpec

PAULI = ("x", "y", "z")


class ClusterSolveError(RuntimeError):
    pass


class ClosureError(KeyError):
    pass


@dataclass(frozen=True)
class SiteMagnetization:
    alpha: str = "x"

    def __post_init__(self):
        if self.alpha not in PAULI:
            raise ValueError(f"unknown Pauli component {self.alpha!r}")


@dataclass(frozen=True)
class PairCorrelator:
    alpha: str
    beta: str
    r: tuple[int, ...]
    connected: bool = True

    def __post_init__(self):
        if self.alpha not in PAULI or self.beta not in PAULI:
            raise ValueError("Pauli components must be x, y or z")
        object.__setattr__(self, "r", tuple(int(c) for c in self.r))
        if not any(self.r):
            raise ValueError("pair separation must be nonzero")


ObservableSpec = Union[SiteMagnetization, PairCorrelator]


@dataclass(frozen=True)
class Propagation:
    """How cluster dynamics is solved. ``method`` is auto, dense, krylov or mp."""

    method: str = "auto"
    dense_cap: int = quantum.DEFAULT_DENSE_CAP
    site_cap: int = quantum.DEFAULT_SITE_CAP
    krylov_dim: int = 40
    krylov_dt_max: float = 1.0
    krylov_tol: float = 1e-12
    mp_dps: int = 50

    def __post_init__(self):
        if self.method not in ("auto", "dense", "krylov", "mp"):
            raise ValueError(f"unknown propagation method {self.method!r}")

    def context(self):
        """Arithmetic precision context for everything downstream of an mp solve."""
        if self.method != "mp":
            return contextlib.nullcontext()
        import mpmath

        return mpmath.workdps(self.mp_dps)

    def evolve(self, H, psi0, times):
        if self.method == "mp":
            return quantum.evolve_mp(H, psi0, times, dps=self.mp_dps)
        return quantum.evolve(H, psi0, times, method=self.method, dense_cap=self.dense_cap,
                              krylov={"m": self.krylov_dim, "dt_max": self.krylov_dt_max,
                                      "tol": self.krylov_tol})


@dataclass
class OrderSeries:
    """Truncated expansion ``<A>^(n)(t)`` for consecutive orders n."""

    times: np.ndarray
    orders: dict[int, np.ndarray]
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return max(self.orders)

    def __getitem__(self, n: int) -> np.ndarray:
        return self.orders[n]


# --------------------------------------------------------------------------
# per-cluster properties


def _solve_sites(model, init, sites, spec, times, prop):
    H = quantum.build_hamiltonian(model, spec, sites, site_cap=prop.site_cap)
    if prop.method == "mp":
        psi0 = quantum.product_state(init, len(sites), dps=prop.mp_dps)
    else:
        # diagonal H is propagated exactly, so keep the state in extended precision
        psi0 = quantum.product_state(init, len(sites), extended=H.is_diagonal)
    return prop.evolve(H, psi0, times)


def site_property(model: ModelSpec, init: InitialStateSpec, alpha: str, sites, spec: LatticeSpec,
                  times, prop: Propagation = Propagation()) -> np.ndarray:
    """Extensive property: sum over cluster sites of <sigma^alpha_i>(t)."""
    states = _solve_sites(model, init, sites, spec, times, prop)
    return quantum.site_expectations(states, alpha).sum(axis=-1)


def pair_property(model: ModelSpec, init: InitialStateSpec, obs: PairCorrelator, sites, spec,
                  times, prop: Propagation = Propagation()) -> np.ndarray:
    """<sigma_0^a sigma_r^b>_c(t), minus <sigma_0^a>_c <sigma_r^b>_c when connected.

    A root missing from the cluster stays in the initial product state.
    """
    sites = sorted(tuple(int(c) for c in s) for s in sites)
    origin = (0,) * len(obs.r)
    n_t = len(times)
    have0, have1 = origin in sites, obs.r in sites
    if not (have0 or have1):
        return np.zeros(n_t)
    states = _solve_sites(model, init, sites, spec, times, prop)
    one = quantum.site_expectations(states, obs.alpha)
    other = quantum.site_expectations(states, obs.beta)
    if have0 and have1:
        i0, i1 = sites.index(origin), sites.index(obs.r)
        full = quantum.expect_pair(states, i0, i1, obs.alpha, obs.beta)
        return full - one[:, i0] * other[:, i1] if obs.connected else full
    if obs.connected:
        return np.zeros(n_t)
    if have0:
        return one[:, sites.index(origin)] * init.single_site(obs.beta)
    return init.single_site(obs.alpha) * other[:, sites.index(obs.r)]


def cluster_property(model, init, obs: ObservableSpec, record, grid, spec: LatticeSpec | None = None,
                     prop: Propagation = Propagation()) -> np.ndarray:
    """Property time series of one cluster record (ClusterRecord or PairClusterRecord)."""
    times = quantum.as_times(grid)
    sites = record.sites if hasattr(record, "roots") else record.shape.sites
    if spec is None:
        spec = LatticeSpec(len(sites[0]))
    if isinstance(obs, SiteMagnetization):
        return site_property(model, init, obs.alpha, sites, spec, times, prop)
    return pair_property(model, init, obs, sites, spec, times, prop)


def _solve_chunk(job):
    model, init, obs, spec, times, prop, chunk = job
    with prop.context():
        return _solve_rows(model, init, obs, spec, times, prop, chunk)


def _solve_rows(model, init, obs, spec, times, prop, chunk):
    out = []
    for cid, sites in chunk:
        try:
            if isinstance(obs, SiteMagnetization):
                out.append(site_property(model, init, obs.alpha, sites, spec, times, prop))
            else:
                out.append(pair_property(model, init, obs, sites, spec, times, prop))
        except Exception as exc:
            raise ClusterSolveError(f"cluster {cid}: {exc}") from exc
    return out


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def solve_properties(model, init, obs: ObservableSpec, clusters: Sequence[tuple[str, list]],
                     spec: LatticeSpec, grid, prop: Propagation = Propagation(),
                     workers: int = 1, chunk_size: int = 64) -> np.ndarray:
    """Farm independent cluster solves; rows come back in input order.

    ``clusters`` is a sequence of ``(id, sites)``. The result does not depend
    on ``workers``: each row is computed by the same code on the same input.
    """
    times = quantum.as_times(grid)
    chunks = [list(clusters[i:i + chunk_size]) for i in range(0, len(clusters), chunk_size)]
    jobs = [(model, init, obs, spec, times, prop, c) for c in chunks]
    if workers <= 1 or len(jobs) <= 1:
        rows = [r for job in jobs for r in _solve_chunk(job)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [r for part in pool.map(_solve_chunk, jobs) for r in part]
    if not rows:
        return np.zeros((0, len(times)))
    return np.stack(rows)


# --------------------------------------------------------------------------
# weights and sums


def compute_weights(properties: np.ndarray, records) -> np.ndarray:
    """W(c) = P(c) - sum over proper subclusters s of M(s, c) W(s), in size order.

    ``properties`` rows follow the record order; only the first
    ``len(properties)`` records are processed.
    """
    P = np.asarray(properties)
    W = np.empty_like(P)
    K = len(P)
    if isinstance(records, ClusterSet):
        for c in range(K):
            idx, cnt = records.subcluster_entries(c)
            if len(idx) and idx.max() >= K:
                missing = int(idx[idx >= K][0])
                raise ClosureError(f"no property for subcluster key {key_from_code(records.codes[missing]).hex()}")
            if len(idx):
                W[c] = P[c] - cnt.astype(P.dtype if P.dtype != object else np.int64) @ W[idx]
            else:
                W[c] = P[c]
        return W
    if isinstance(records, PairClusterSet):
        for c in range(K):
            subs = records.records[c].rooted_subclusters
            if subs and max(subs) >= K:
                raise ClosureError(f"no property for rooted subcluster {records.records[max(subs)].sites}")
            W[c] = P[c] - W[list(subs)].sum(axis=0) if subs else P[c]
        return W
    raise TypeError(f"unsupported record container {type(records).__name__}")


def replay_identity(properties: np.ndarray, weights: np.ndarray, records) -> np.ndarray:
    """P(c) rebuilt as W(c) + sum_s M(s, c) W(s); should equal the properties."""
    out = np.empty_like(weights)
    for c in range(len(weights)):
        if isinstance(records, ClusterSet):
            idx, cnt = records.subcluster_entries(c)
            out[c] = weights[c] + (cnt @ weights[idx] if len(idx) else 0)
        else:
            subs = list(records.records[c].rooted_subclusters)
            out[c] = weights[c] + (weights[subs].sum(axis=0) if subs else 0)
    return out


def order_sums(weights: np.ndarray, records, n_max: int, times=None, label: str = "") -> OrderSeries:
    """Cumulative truncated sums for orders 1..n_max.

    Free clusters are weighted by their lattice constant; pinned pair clusters
    enter once each. Per-size partial sums are added in ascending size order.
    """
    K = len(weights)
    if isinstance(records, ClusterSet):
        sizes = records.sizes[:K]
        factors = records.lattice_constants[:K]
    else:
        sizes = records.sizes[:K]
        factors = np.ones(K, dtype=np.int64)
    if K and sizes.max() < n_max and (not isinstance(records, ClusterSet) or records.n_max < n_max):
        raise ValueError(f"weights only cover clusters up to {sizes.max()} sites")
    n_t = weights.shape[1] if weights.ndim == 2 else len(times)
    running = np.zeros(n_t, dtype=weights.dtype if weights.dtype in (object, np.longdouble) else float)
    orders = {}
    for n in range(1, n_max + 1):
        sel = np.nonzero(sizes == n)[0]
        if len(sel):
            running = running + (factors[sel].astype(running.dtype)[:, None] * weights[sel]).sum(axis=0)
        orders[n] = running.astype(float) if running.dtype == np.longdouble else running.copy()
    return OrderSeries(np.asarray(times) if times is not None else np.arange(n_t, dtype=float),
                       orders, label)


# --------------------------------------------------------------------------
# pipelines


def run_site_expansion(model: ModelSpec, init: InitialStateSpec, alpha: str, n_max: int, grid,
                       cluster_set: ClusterSet, prop: Propagation = Propagation(),
                       workers: int = 1) -> OrderSeries:
    if cluster_set.n_max < n_max:
        raise ValueError(f"cluster set covers {cluster_set.n_max} sites, need {n_max}")
    times = quantum.as_times(grid)
    K = cluster_set.upto(n_max)
    clusters = [(key_from_code(cluster_set.codes[i]).hex(), cluster_set.sites(i).tolist())
                for i in range(K)]
    P = solve_properties(model, init, SiteMagnetization(alpha), clusters, cluster_set.spec,
                         times, prop, workers)
    with prop.context():
        W = compute_weights(P, cluster_set)
        series = order_sums(W, cluster_set, n_max, times, label=f"<sigma^{alpha}>")
    series.meta.update(kind="site", alpha=alpha, clusters=K)
    return series


def run_pair_expansion(model: ModelSpec, init: InitialStateSpec, alpha: str, beta: str, r,
                       connected: bool, n_max: int, grid, pair_set: PairClusterSet,
                       prop: Propagation = Propagation(), workers: int = 1, *,
                       convention: str = "connected", cluster_set: ClusterSet | None = None
                       ) -> OrderSeries:
    """Doubly-rooted expansion of a two-point function at separation ``r``.

    ``convention="subtract_after"`` (connected only) expands the full
    correlator and subtracts the product of the two single-site series after
    truncation; it needs ``cluster_set``.
    """
    r = tuple(int(c) for c in r)
    if tuple(pair_set.r) != r:
        raise ValueError(f"pair set is for r={pair_set.r}, requested {r}")
    if pair_set.n_max < n_max:
        raise ValueError(f"pair set covers {pair_set.n_max} sites, need {n_max}")
    if convention not in ("connected", "subtract_after"):
        raise ValueError(f"unknown pair convention {convention!r}")
    times = quantum.as_times(grid)
    if convention == "subtract_after" and connected:
        if cluster_set is None:
            raise ValueError("subtract_after needs a site cluster set")
        full = run_pair_expansion(model, init, alpha, beta, r, False, n_max, times, pair_set,
                                  prop, workers)
        ma = run_site_expansion(model, init, alpha, n_max, times, cluster_set, prop, workers)
        mb = ma if beta == alpha else run_site_expansion(model, init, beta, n_max, times,
                                                         cluster_set, prop, workers)
        with prop.context():
            orders = {n: full[n] - ma[n] * mb[n] for n in range(1, n_max + 1)}
        return OrderSeries(times, orders, full.label, dict(full.meta, convention=convention))
    obs = PairCorrelator(alpha, beta, r, connected)
    K = int(np.searchsorted(pair_set.sizes, n_max, side="right"))
    clusters = [(str(i), list(pair_set.records[i].sites)) for i in range(K)]
    P = solve_properties(model, init, obs, clusters, pair_set.spec, times, prop, workers)
    if K == 0:
        P = np.zeros((0, len(times)))
    with prop.context():
        W = compute_weights(P, pair_set)
        series = order_sums(W, pair_set, n_max, times,
                            label=f"<sigma_0^{alpha} sigma_r^{beta}>{'_c' if connected else ''}")
    series.meta.update(kind="pair", r=r, connected=connected, convention=convention,
                       min_size=min_pair_size(r), clusters=K)
    return series
