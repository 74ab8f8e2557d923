"""Convergence diagnostics, power-law fits and the exact Ising (h = 0) solution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quantum
from .lattice import LatticeSpec
from .nlce import OrderSeries


class FitError(ValueError):
    pass


@dataclass
class DeltaTable:
    """``deltas[n][k] = |O_n(t_k) - O_{n-1}(t_k)|``; ``values`` holds the O_n used."""

    times: np.ndarray
    deltas: dict[int, np.ndarray]
    values: dict[int, np.ndarray] = field(default_factory=dict)
    interpolated: tuple[int, ...] = ()

    def at(self, t: float) -> dict[int, float]:
        """Deltas at time ``t`` (linear in t between grid points)."""
        return {n: float(np.interp(t, self.times, d)) for n, d in self.deltas.items()}


def _values_of(series) -> dict[int, np.ndarray]:
    if isinstance(series, OrderSeries):
        return {int(n): np.asarray(v, dtype=float) for n, v in series.orders.items()}
    return {int(n): np.asarray(v, dtype=float) for n, v in dict(series).items()}


def interpolate_sizes(values: dict[int, np.ndarray]) -> tuple[dict[int, np.ndarray], tuple[int, ...]]:
    """Fill every integer size between the smallest and largest computed one, linearly in N."""
    sizes = sorted(values)
    out, filled = {}, []
    for a, b in zip(sizes, sizes[1:]):
        for n in range(a, b):
            w = (n - a) / (b - a)
            out[n] = values[a] if w == 0 else (1 - w) * values[a] + w * values[b]
            if w:
                filled.append(n)
    out[sizes[-1]] = values[sizes[-1]]
    return out, tuple(filled)


def delta_table(series, times=None) -> DeltaTable:
    """Deltas between consecutive orders (OrderSeries) or consecutive sizes.

    A plain mapping ``{size: values}`` is treated as ED data: missing integer
    sizes are filled by linear interpolation in the site count first.
    """
    values = _values_of(series)
    if len(values) < 2:
        raise ValueError("need at least two orders or sizes")
    if times is None:
        times = series.times if isinstance(series, OrderSeries) else np.arange(len(next(iter(values.values()))))
    filled: tuple[int, ...] = ()
    if not isinstance(series, OrderSeries):
        values, filled = interpolate_sizes(values)
    ns = sorted(values)
    deltas = {n: np.abs(values[n] - values[m]) for m, n in zip(ns, ns[1:])}
    return DeltaTable(np.asarray(times, dtype=float), deltas, values, filled)


@dataclass(frozen=True)
class ConvergenceTime:
    t_star: float
    converged: bool


def convergence_time(table: DeltaTable | OrderSeries, epsilon: float, n: int | None = None):
    """Largest grid time up to which Delta_n stays <= epsilon.

    Returns one :class:`ConvergenceTime` for order ``n``, or a dict over all
    orders when ``n`` is None. ``converged`` is False when Delta_n(0) already
    exceeds epsilon (then t* = 0).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if isinstance(table, OrderSeries):
        table = delta_table(table)

    def one(d):
        bad = np.nonzero(~(d <= epsilon))[0]
        if not len(bad):
            return ConvergenceTime(float(table.times[-1]), True)
        if bad[0] == 0:
            return ConvergenceTime(0.0, False)
        return ConvergenceTime(float(table.times[bad[0] - 1]), True)

    if n is not None:
        return one(table.deltas[n])
    return {k: one(d) for k, d in table.deltas.items()}


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    prefactor: float
    residual: float
    n_samples: int
    window: tuple[float, float]


def leading_power(times, values, window=(0.01, 0.05)) -> PowerFit:
    """Least-squares slope of log|value| against log t inside ``window``.

    The values must be nonzero and of one sign across the window; the
    prefactor carries that sign.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < 2:
        raise FitError(f"fewer than two samples in window {window}")
    tw, vw = t[sel], v[sel]
    if tw[0] <= 0:
        raise FitError("window must exclude t <= 0")
    if np.any(vw == 0) or not (np.all(vw > 0) or np.all(vw < 0)):
        raise FitError("series is zero or changes sign inside the fit window")
    x, y = np.log(tw), np.log(np.abs(vw))
    A = np.vstack([x, np.ones_like(x)]).T
    (p, c), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return PowerFit(float(p), float(np.sign(vw[0]) * np.exp(c)), rms, int(sel.sum()), (lo, hi))


def ising_h0_exact(lattice: LatticeSpec | str | int, theta: float, J: float, grid,
                   alpha: str = "x", phi: float = 0.0) -> np.ndarray:
    """<sigma^alpha>(t) on the infinite lattice for H = -J sum zz from a uniform product state.

    Each neighbour contributes an independent phase factor
    ``a = cos 2Jt - i cos(theta) sin 2Jt``, so
    ``<sigma^x> + i <sigma^y> = sin(theta) e^{i phi} a^z`` with z the coordination.
    """
    spec = lattice if isinstance(lattice, LatticeSpec) else LatticeSpec.from_name(lattice)
    t = quantum.as_times(grid)
    z = spec.coordination
    a = np.cos(2 * J * t) - 1j * np.cos(theta) * np.sin(2 * J * t)
    plus = np.sin(theta) * np.exp(1j * phi) * a ** z
    if alpha == "x":
        return plus.real
    if alpha == "y":
        return plus.imag
    if alpha == "z":
        return np.full(len(t), np.cos(theta))
    raise ValueError(f"unknown Pauli component {alpha!r}")


def star_oracle(lattice: LatticeSpec | str | int, theta: float, J: float, grid,
                alpha: str = "x", phi: float = 0.0) -> np.ndarray:
    """Centre-site <sigma^alpha>(t) on the (z+1)-site star, by direct diagonalisation."""
    spec = lattice if isinstance(lattice, LatticeSpec) else LatticeSpec.from_name(lattice)
    z = spec.coordination
    H = quantum.hamiltonian_from_bonds(quantum.ModelSpec.ising(J, 0.0), z + 1,
                                       [(0, k) for k in range(1, z + 1)])
    psi0 = quantum.product_state(quantum.InitialStateSpec(theta, phi), z + 1)
    states = quantum.evolve_dense(H, psi0, quantum.as_times(grid))
    return quantum.site_expectations(states, alpha)[:, 0]
