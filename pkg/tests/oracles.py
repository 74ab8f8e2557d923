"""Independent reference implementations used only by the tests.

Nothing here imports the enumeration, Hamiltonian or weight code under test.
"""
from __future__ import annotations

import itertools
from functools import reduce
from math import comb

import numpy as np
from scipy.linalg import expm

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
ID2 = np.eye(2, dtype=complex)


# -- lattice animals ---------------------------------------------------------


def _connected(cells: frozenset) -> bool:
    start = next(iter(cells))
    seen, stack = {start}, [start]
    while stack:
        c = stack.pop()
        for axis in range(len(c)):
            for step in (-1, 1):
                nb = c[:axis] + (c[axis] + step,) + c[axis + 1:]
                if nb in cells and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return len(seen) == len(cells)


def bounding_box_fixed(n: int, dimension: int = 2) -> set[frozenset]:
    """Fixed animals of size n: connected n-subsets of each box that touch every face."""
    out = set()
    for ext in itertools.product(range(1, n + 1), repeat=dimension):
        if sum(ext) - dimension + 1 > n or np.prod(ext) < n:
            continue
        box = list(itertools.product(*(range(e) for e in ext)))
        for combo in itertools.combinations(box, n):
            arr = np.array(combo)
            if np.any(arr.min(axis=0) != 0) or np.any(arr.max(axis=0) != np.array(ext) - 1):
                continue
            cells = frozenset(combo)
            if _connected(cells):
                out.add(cells)
    return out


def _normalise(cells) -> tuple:
    arr = np.array(sorted(cells))
    arr = arr - arr.min(axis=0)
    return tuple(sorted(map(tuple, arr.tolist())))


def symmetry_images(cells, dimension: int):
    for perm in itertools.permutations(range(dimension)):
        for signs in itertools.product((1, -1), repeat=dimension):
            yield _normalise(tuple(signs[a] * c[perm[a]] for a in range(dimension)) for c in cells)


def free_classes(fixed: set[frozenset], dimension: int = 2) -> dict[tuple, int]:
    """Canonical representative -> number of fixed animals in its class."""
    classes: dict[tuple, int] = {}
    for cells in fixed:
        rep = min(symmetry_images(cells, dimension))
        classes[rep] = classes.get(rep, 0) + 1
    return classes


def perimeter(cells, dimension: int) -> int:
    s = set(map(tuple, cells))
    out = set()
    for c in s:
        for axis in range(dimension):
            for step in (-1, 1):
                nb = c[:axis] + (c[axis] + step,) + c[axis + 1:]
                if nb not in s:
                    out.add(nb)
    return len(out)


def perimeter_order_sum(sizes, lattice_constants, properties, perimeters, n: int) -> np.ndarray:
    """Order-n lattice sum of a property that is additive over non-touching pieces.

    Expanding each cluster weight by inclusion-exclusion over its connected
    subsets, the coefficient of P(K) in the order-n sum counts ways to grow K
    by up to n - |K| perimeter sites with alternating sign, which collapses
    to a binomial in the perimeter size.
    """
    total = np.zeros(np.shape(properties)[1])
    for k, L, P, b in zip(sizes, lattice_constants, properties, perimeters):
        if k <= n:
            total = total + L * P * (-1) ** (n - k) * comb(b - 1, n - k)
    return total


# -- spins -------------------------------------------------------------------


def site_operator(op: np.ndarray, i: int, n: int) -> np.ndarray:
    """Embed a one-site operator; site 0 is the least significant basis bit."""
    return reduce(np.kron, [op if k == i else ID2 for k in reversed(range(n))])


def kron_hamiltonian(model: str, n: int, bonds, J=1.0, h=0.0, Jperp=1.0, Jz=0.0) -> np.ndarray:
    H = np.zeros((2 ** n, 2 ** n), dtype=complex)
    Z = [site_operator(PAULI["z"], i, n) for i in range(n)]
    X = [site_operator(PAULI["x"], i, n) for i in range(n)]
    Y = [site_operator(PAULI["y"], i, n) for i in range(n)]
    for a, b in bonds:
        if model == "ising":
            H -= J * Z[a] @ Z[b]
        else:
            H -= Jz * Z[a] @ Z[b] + Jperp * (X[a] @ X[b] + Y[a] @ Y[b])
    if model == "ising":
        for i in range(n):
            H -= h * X[i]
    return H


def kron_product_state(theta: float, phi: float, n: int) -> np.ndarray:
    spinor = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)])
    return reduce(np.kron, [spinor] * n)


def expm_evolve(H: np.ndarray, psi0: np.ndarray, times) -> np.ndarray:
    return np.array([expm(-1j * H * t) @ psi0 for t in times])


def expect(psi: np.ndarray, op: np.ndarray) -> float:
    return float(np.real(np.vdot(psi, op @ psi)))
