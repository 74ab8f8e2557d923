"""Time the numba kernels against the pure-numpy fallback on the same inputs.

Usage: python benchmarks/bench_backends.py [--sites 12] [--repeat 5]

Each kernel runs once untimed so numba compilation is excluded, then the best
of ``--repeat`` runs is reported for both backends together with the largest
difference between their outputs.
"""
import argparse
import timeit

import numpy as np

from dnlce import clusters, kernels, quantum
from dnlce.kernels import _numba, _numpy
from dnlce.lattice import LatticeSpec
from dnlce.quantum import InitialStateSpec, ModelSpec


def _strip(coords):
    """A 2-wide strip of ``len(coords)`` sites, as adjacency bitmasks."""
    n = len(coords)
    adj = np.zeros(n, dtype=np.int64)
    for a in range(n):
        for b in range(n):
            if np.abs(coords[a] - coords[b]).sum() == 1:
                adj[a] |= 1 << b
    return adj


def cases(n_sites: int):
    square = LatticeSpec.from_name("square")
    fixed = clusters.enumerate_fixed_arrays(square, 8)[8]
    transforms = square.point_group.elements
    coords = np.array([(i // 2, i % 2) for i in range(n_sites)], dtype=np.int64)
    adj = _strip(coords)
    masks = _numpy.connected_subsets(adj)
    bonds = np.array([(a, b) for a in range(n_sites) for b in range(a + 1, n_sites)
                      if np.abs(coords[a] - coords[b]).sum() == 1], dtype=np.int64)
    H = quantum.hamiltonian_from_bonds(ModelSpec.xxz(1.0, 0.15), n_sites, bonds)
    Hi = quantum.hamiltonian_from_bonds(ModelSpec.ising(1.0, 1.0), n_sites, bonds)
    psi = quantum.product_state(InitialStateSpec(1.0, 0.4), n_sites)
    states = np.tile(psi, (8, 1))
    ops = (H.diagonal, H.masks, H.coefs, H.cond_i, H.cond_j)
    iops = (Hi.diagonal, Hi.masks, Hi.coefs, Hi.cond_i, Hi.cond_j)
    return {
        "canonical_codes (2725 fixed 8-ominoes)": ("canonical_codes", (fixed, transforms)),
        f"connected_subsets ({n_sites}-site strip)": ("connected_subsets", (adj,)),
        f"subset_codes ({len(masks)} subsets)": ("subset_codes", (coords, masks, transforms)),
        f"zz_diagonal (2^{n_sites})": ("zz_diagonal", (n_sites, bonds)),
        f"site_expectations x (8 x 2^{n_sites})": ("site_expectations", (states, n_sites, "x")),
        f"apply_flips XXZ (2^{n_sites})": ("apply_flips", (psi,) + ops),
        f"lanczos_expm TFI tau=0.5 (2^{n_sites})": ("lanczos_expm", (psi,) + iops + (0.5, 40, 1e-12, False)),
    }


def _diff(a, b) -> float:
    if isinstance(a, tuple):
        return max(_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        return float("inf")
    return float(np.abs(a - b).max()) if a.size else 0.0


def run(n_sites: int, repeat: int) -> list[tuple[str, float, float, float]]:
    rows = []
    for label, (name, args) in cases(n_sites).items():
        fast, slow = getattr(_numba, name), getattr(_numpy, name)
        out_fast, out_slow = fast(*args), slow(*args)
        if name == "lanczos_expm":
            # the Krylov dimension may differ by one step from round-off; compare states
            out_fast, out_slow = out_fast[0], out_slow[0]
        t_fast = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat))
        t_slow = min(timeit.repeat(lambda: slow(*args), number=1, repeat=repeat))
        rows.append((label, t_fast, t_slow, _diff(out_fast, out_slow)))
    return rows


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sites", type=int, default=12, help="cluster size for the spin kernels")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':48s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s} {'max diff':>9s}")
    for label, t_fast, t_slow, diff in run(args.sites, args.repeat):
        print(f"{label:48s} {1e3 * t_fast:11.3f} {1e3 * t_slow:11.3f} {t_slow / t_fast:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
