"""Spin-1/2 Hamiltonians on small clusters and their real-time propagation.

Basis convention: bit k of a basis index is the z projection of site k
(0 = up, 1 = down), where site k is the k-th entry of the cluster's sorted
site list. Pauli normalisation throughout (eigenvalues +-1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import kernels
from .kernels._numpy import lanczos_generic
from .lattice import LatticeSpec, bonds_within

DEFAULT_SITE_CAP = 20
DEFAULT_DENSE_CAP = 12


class ResourceLimitError(RuntimeError):
    pass


class PropagationError(RuntimeError):
    pass


class KrylovConvergenceError(PropagationError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Transverse-field Ising (``J``, ``h``) or XXZ (``Jperp``, ``Jz``)."""

    variant: str
    J: float = 0.0
    h: float = 0.0
    Jperp: float = 0.0
    Jz: float = 0.0

    def __post_init__(self):
        if self.variant not in ("ising", "xxz"):
            raise ValueError(f"unknown model variant {self.variant!r}")

    @classmethod
    def ising(cls, J: float = 1.0, h: float = 0.0) -> "ModelSpec":
        return cls("ising", J=float(J), h=float(h))

    @classmethod
    def xxz(cls, Jperp: float = 1.0, Jz: float = 0.0) -> "ModelSpec":
        return cls("xxz", Jperp=float(Jperp), Jz=float(Jz))


@dataclass(frozen=True)
class InitialStateSpec:
    """Uniform product state, each spin cos(theta/2)|up> + e^{i phi} sin(theta/2)|down>."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")

    @property
    def spinor(self) -> np.ndarray:
        return np.array([math.cos(self.theta / 2),
                         np.exp(1j * self.phi) * math.sin(self.theta / 2)])

    def single_site(self, alpha: str) -> float:
        """<sigma^alpha> of one spin in this state."""
        st, ct = math.sin(self.theta), math.cos(self.theta)
        return {"x": st * math.cos(self.phi), "y": st * math.sin(self.phi), "z": ct}[alpha]


@dataclass(frozen=True)
class TimeGrid:
    t_values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_values, dtype=float)
        if t.ndim != 1 or len(t) == 0 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing and start at 0")
        object.__setattr__(self, "t_values", t)

    @classmethod
    def uniform(cls, t_max: float, n_points: int = 201) -> "TimeGrid":
        return cls(np.linspace(0.0, float(t_max), int(n_points)))

    def __len__(self) -> int:
        return len(self.t_values)


def as_times(grid) -> np.ndarray:
    return grid.t_values if isinstance(grid, TimeGrid) else TimeGrid(grid).t_values


@dataclass
class HermitianOperator:
    """Real-symmetric spin Hamiltonian ``diag + sum_k coefs[k] X_k``.

    ``X_k`` flips the bits in ``masks[k]``; when ``cond_i[k] >= 0`` it only
    acts on basis states whose bits ``cond_i[k]`` and ``cond_j[k]`` differ
    (flip-flop exchange). ``sectors`` optionally lists basis-index blocks the
    operator does not mix (total magnetisation for XXZ).
    """

    n_sites: int
    diagonal: np.ndarray
    masks: np.ndarray
    coefs: np.ndarray
    cond_i: np.ndarray
    cond_j: np.ndarray
    sectors: list[np.ndarray] | None = None
    _csr: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.diagonal)

    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            states = np.arange(self.dim, dtype=np.int64)
            rows, cols, vals = [states], [states], [self.diagonal]
            for mask, c, i, j in zip(self.masks, self.coefs, self.cond_i, self.cond_j):
                r = states if i < 0 else states[((states >> i) ^ (states >> j)) & 1 == 1]
                rows.append(r)
                cols.append(r ^ mask)
                vals.append(np.full(len(r), c))
            self._csr = sp.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.dim, self.dim))
        return self._csr

    def dense(self) -> np.ndarray:
        return self.csr().toarray()

    @property
    def is_diagonal(self) -> bool:
        return len(self.masks) == 0

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return kernels.apply_flips(v, self.diagonal, self.masks, self.coefs, self.cond_i, self.cond_j)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        m = self.csr()
        diff = m - m.conj().T
        return diff.nnz == 0 or float(abs(diff).max()) <= tol


def hamiltonian_from_bonds(model: ModelSpec, n_sites: int, bonds, *,
                           site_cap: int = DEFAULT_SITE_CAP) -> HermitianOperator:
    """Model Hamiltonian on ``n_sites`` spins coupled on ``bonds`` (index pairs)."""
    if n_sites > site_cap:
        raise ResourceLimitError(f"{n_sites} sites exceeds the configured cap of {site_cap}")
    bonds = np.asarray(bonds, dtype=np.int64).reshape(-1, 2)
    dim = 1 << n_sites
    sectors = None
    if model.variant == "ising":
        diag = -model.J * kernels.zz_diagonal(n_sites, bonds)
        if model.h != 0.0:
            masks = np.int64(1) << np.arange(n_sites, dtype=np.int64)
            coefs = np.full(n_sites, -model.h)
        else:
            masks, coefs = np.zeros(0, np.int64), np.zeros(0)
        ci = cj = np.full(len(masks), -1, dtype=np.int64)
    else:
        diag = -model.Jz * kernels.zz_diagonal(n_sites, bonds)
        if model.Jperp != 0.0 and len(bonds):
            # sigma^x sigma^x + sigma^y sigma^y = 2 (flip-flop)
            masks = (np.int64(1) << bonds[:, 0]) | (np.int64(1) << bonds[:, 1])
            coefs = np.full(len(bonds), -2.0 * model.Jperp)
            ci, cj = bonds[:, 0].copy(), bonds[:, 1].copy()
        else:
            masks, coefs = np.zeros(0, np.int64), np.zeros(0)
            ci = cj = np.zeros(0, np.int64)
        pops = _popcount(np.arange(dim))
        order = np.argsort(pops, kind="stable")
        splits = np.cumsum(np.bincount(pops, minlength=n_sites + 1))[:-1]
        sectors = np.split(order, splits)
    return HermitianOperator(n_sites, diag, masks, coefs.astype(np.float64),
                             np.ascontiguousarray(ci), np.ascontiguousarray(cj), sectors)


def build_hamiltonian(model: ModelSpec, spec: LatticeSpec, sites: Sequence, *,
                      site_cap: int = DEFAULT_SITE_CAP) -> HermitianOperator:
    """Hamiltonian of ``model`` restricted to ``sites``: every lattice bond between them."""
    sites = sorted(tuple(int(c) for c in s) for s in sites)
    if len(sites) > site_cap:
        raise ResourceLimitError(f"{len(sites)} sites exceeds the configured cap of {site_cap}")
    index = {s: k for k, s in enumerate(sites)}
    bonds = [(index[a], index[b]) for a, b in bonds_within(spec, sites)]
    return hamiltonian_from_bonds(model, len(sites), bonds, site_cap=site_cap)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64).copy()
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x >>= 1
    return c


def product_state(init: InitialStateSpec, n: int, *, dps: int | None = None,
                  extended: bool = False) -> np.ndarray:
    """Uniform product state.

    With ``dps`` an object array of mpc at that precision; with ``extended``
    a clongdouble vector.
    """
    if n < 1:
        raise ValueError("need at least one site")
    if dps is not None:
        import mpmath

        with mpmath.workdps(dps):
            th, ph = mpmath.mpf(init.theta) / 2, mpmath.mpf(init.phi)
            spinor = np.array([mpmath.mpc(mpmath.cos(th)), mpmath.expj(ph) * mpmath.sin(th)], dtype=object)
            psi = spinor
            for _ in range(n - 1):
                psi = np.kron(spinor, psi)
        return psi
    if extended:
        th, ph = np.longdouble(init.theta) / 2, np.longdouble(init.phi)
        spinor = np.array([np.cos(th), (np.cos(ph) + 1j * np.sin(ph)) * np.sin(th)], dtype=np.clongdouble)
    else:
        spinor = init.spinor
    psi = spinor
    for _ in range(n - 1):
        psi = np.kron(spinor, psi)
    return psi if extended else psi.astype(np.complex128)


# --------------------------------------------------------------------------
# propagation


def _as_operator(H) -> HermitianOperator | np.ndarray:
    if isinstance(H, HermitianOperator):
        return H
    H = np.asarray(H)
    if not np.allclose(H, H.conj().T, atol=1e-12, rtol=0):
        raise PropagationError("Hamiltonian is not hermitian")
    return H


def _spectral(block: np.ndarray, psi: np.ndarray, times: np.ndarray) -> np.ndarray:
    try:
        evals, evecs = np.linalg.eigh(block)
    except np.linalg.LinAlgError as exc:
        raise PropagationError(f"eigensolver failed: {exc}") from exc
    coeff = evecs.conj().T @ psi
    phases = np.exp(-1j * np.outer(times, evals))  # (T, k)
    return (phases * coeff) @ evecs.T


def _diagonal_phases(diag: np.ndarray, times: np.ndarray) -> np.ndarray:
    """exp(-i E t) for a diagonal Hamiltonian, (T, dim), in clongdouble.

    E t reaches tens of radians, and its float64 rounding would otherwise
    dominate the error of every expectation value.
    """
    arg = np.outer(times.astype(np.longdouble), diag.astype(np.longdouble))
    return np.cos(arg) - 1j * np.sin(arg)


def evolve_dense(H, psi0: np.ndarray, grid) -> np.ndarray:
    """psi(t) = V exp(-i D t) V^dag psi0 for every grid time; returns (T, dim)."""
    times = as_times(grid)
    H = _as_operator(H)
    extended = np.asarray(psi0).dtype == np.clongdouble
    psi0 = np.asarray(psi0, dtype=np.clongdouble if extended else np.complex128)
    if isinstance(H, HermitianOperator):
        if H.dim != len(psi0):
            raise ValueError("state and Hamiltonian dimensions differ")
        if not H.is_hermitian():
            raise PropagationError("Hamiltonian is not hermitian")
        if H.is_diagonal:
            # each basis state only picks up a phase; clongdouble input stays extended
            out = psi0 * _diagonal_phases(H.diagonal, times)
            return out if extended else out.astype(np.complex128)
        psi0 = psi0.astype(np.complex128)
        if H.sectors is None:
            return _spectral(H.dense(), psi0, times)
        full = H.dense()
        out = np.zeros((len(times), H.dim), dtype=np.complex128)
        for idx in H.sectors:
            if np.any(psi0[idx]):
                out[:, idx] = _spectral(full[np.ix_(idx, idx)], psi0[idx], times)
        return out
    if H.shape[0] != len(psi0):
        raise ValueError("state and Hamiltonian dimensions differ")
    return _spectral(H, psi0, times)


@dataclass
class KrylovInfo:
    steps: int = 0
    matvecs: int = 0
    max_krylov_dim: int = 0
    max_norm_drift: float = 0.0
    max_error_estimate: float = 0.0


def evolve_krylov(H, psi0: np.ndarray, grid, m: int = 40, dt_max: float = 1.0,
                  tol: float = 1e-12, *, reorth: bool = False, max_halvings: int = 8,
                  return_info: bool = False):
    """Time-stepped Lanczos propagation; returns (T, dim) states.

    Each step aims at ``dt_max`` (or the next grid time) and halves the step
    when ``m`` Lanczos vectors do not reach the local error ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    times = as_times(grid)
    if isinstance(H, HermitianOperator):
        def step(v, tau):
            return kernels.lanczos_expm(v, H.diagonal, H.masks, H.coefs, H.cond_i, H.cond_j,
                                        tau, m, tol, reorth)
        dim = H.dim
    else:
        mat = sp.csr_matrix(_as_operator(H))

        def step(v, tau):
            return lanczos_generic(mat.dot, v, tau, m, tol, reorth)
        dim = mat.shape[0]
    psi = np.asarray(psi0, dtype=np.complex128).copy()
    if len(psi) != dim:
        raise ValueError("state and Hamiltonian dimensions differ")
    info = KrylovInfo()
    out = np.empty((len(times), dim), dtype=np.complex128)
    out[0] = psi
    t_now = 0.0
    for k in range(1, len(times)):
        while t_now < times[k]:
            tau = min(dt_max, times[k] - t_now)
            for _ in range(max_halvings + 1):
                nxt, kdim, err = step(psi, tau)
                info.matvecs += kdim
                if kdim:
                    info.max_krylov_dim = max(info.max_krylov_dim, kdim)
                    info.max_error_estimate = max(info.max_error_estimate, float(err))
                    break
                tau /= 2
            else:
                raise KrylovConvergenceError(
                    f"Krylov propagation did not converge with m={m} at step {tau:.3g}; "
                    "use a smaller dt_max or a larger Krylov dimension")
            norm = np.linalg.norm(nxt)
            info.max_norm_drift = max(info.max_norm_drift, abs(norm - 1.0))
            psi = nxt / norm
            info.steps += 1
            t_now = times[k] if times[k] - (t_now + tau) < 1e-14 else t_now + tau
        out[k] = psi
    return (out, info) if return_info else out


def evolve(H: HermitianOperator, psi0, grid, *, method: str = "auto",
           dense_cap: int = DEFAULT_DENSE_CAP, krylov: dict | None = None) -> np.ndarray:
    if method == "auto":
        method = "dense" if H.n_sites <= dense_cap or H.is_diagonal else "krylov"
    if method == "dense":
        return evolve_dense(H, psi0, grid)
    if method == "krylov":
        return evolve_krylov(H, psi0, grid, **(krylov or {}))
    raise ValueError(f"unknown propagation method {method!r}")


def evolve_mp(H, psi0, grid, dps: int = 50) -> np.ndarray:
    """Spectral propagation in mpmath arithmetic; returns an object array of mpc.

    For tiny clusters only; used where float64 cancellation would swamp a
    signal (high-order short-time power laws).
    """
    import mpmath

    times = as_times(grid)
    if isinstance(H, HermitianOperator) and H.is_diagonal:
        with mpmath.workdps(dps):
            psi = [mpmath.mpmathify(z) for z in np.asarray(psi0)]
            out = np.empty((len(times), H.dim), dtype=object)
            for ti, t in enumerate(times):
                tt = mpmath.mpf(float(t))
                phase = {e: mpmath.expj(-mpmath.mpf(float(e)) * tt) for e in np.unique(H.diagonal)}
                out[ti] = [phase[e] * p for e, p in zip(H.diagonal, psi)]
        return out
    dense = H.dense() if isinstance(H, HermitianOperator) else np.asarray(H)
    if np.iscomplexobj(dense) and np.any(dense.imag):
        raise PropagationError("high-precision propagation supports real symmetric H only")
    with mpmath.workdps(dps):
        A = mpmath.matrix(dense.real.tolist())
        evals, Q = mpmath.eigsy(A)
        n = A.rows
        psi = [mpmath.mpmathify(z) for z in np.asarray(psi0)]
        coeff = [mpmath.fsum(Q[a, k] * psi[a] for a in range(n)) for k in range(n)]
        out = np.empty((len(times), n), dtype=object)
        for ti, t in enumerate(times):
            tt = mpmath.mpf(float(t))
            ph = [mpmath.expj(-evals[k] * tt) * coeff[k] for k in range(n)]
            for a in range(n):
                out[ti, a] = mpmath.fsum(Q[a, k] * ph[k] for k in range(n))
    return out


# --------------------------------------------------------------------------
# observables


def apply_pauli(psi: np.ndarray, i: int, alpha: str) -> np.ndarray:
    """sigma^alpha_i applied to ``psi`` (last axis is the basis index)."""
    dim = psi.shape[-1]
    idx = np.arange(dim, dtype=np.int64)
    sign = 1 - 2 * ((idx >> i) & 1)
    if alpha == "x":
        return psi[..., idx ^ (1 << i)]
    if alpha == "y":
        return (-1j * sign) * psi[..., idx ^ (1 << i)]
    if alpha == "z":
        return sign * psi
    raise ValueError(f"unknown Pauli component {alpha!r}")


def _n_sites(psi) -> int:
    dim = np.shape(psi)[-1]
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


def _check_index(i: int, n: int) -> None:
    if not 0 <= i < n:
        raise IndexError(f"site index {i} out of range for {n} sites")


def _braket(psi, phi):
    val = (np.conj(psi) * phi).sum(axis=-1)
    return val


def _real(val, what: str):
    if val.dtype == object:
        return np.array([v.real for v in np.ravel(val)], dtype=object).reshape(np.shape(val))
    if np.max(np.abs(np.imag(val)), initial=0.0) > 1e-12:
        raise PropagationError(f"{what} has a non-negligible imaginary part")
    return np.real(val)


def expect_single(psi, i: int, alpha: str):
    psi = np.asarray(psi)
    _check_index(i, _n_sites(psi))
    val = _real(_braket(psi, apply_pauli(psi, i, alpha)), "<sigma>")
    return val if val.ndim else val[()]


def expect_pair(psi, i: int, j: int, alpha: str, beta: str):
    psi = np.asarray(psi)
    n = _n_sites(psi)
    _check_index(i, n)
    _check_index(j, n)
    if i == j:
        raise ValueError("pair expectation needs two distinct sites")
    phi = apply_pauli(apply_pauli(psi, j, beta), i, alpha)
    val = _real(_braket(psi, phi), "<sigma sigma>")
    return val if val.ndim else val[()]


def site_expectations(states: np.ndarray, alpha: str) -> np.ndarray:
    """(T, n) array of <sigma^alpha_i>(t), through the selected kernel backend."""
    states = np.atleast_2d(states)
    n = _n_sites(states)
    if states.dtype == object:
        return np.stack([expect_single(states, i, alpha) for i in range(n)], axis=-1)
    if states.dtype == np.clongdouble:
        return kernels._numpy.site_expectations(states, n, alpha)
    return kernels.site_expectations(states, n, alpha)


def energy(H: HermitianOperator, states: np.ndarray) -> np.ndarray:
    states = np.atleast_2d(states)
    return np.array([np.vdot(s, H.matvec(s)).real for s in states])
