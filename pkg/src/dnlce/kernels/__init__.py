"""Hot inner loops, with a numba backend and a pure-numpy fallback.

The backend is picked once at import time from ``DNLCE_BACKEND``
(``numba`` or ``numpy``). ``numba`` is the default when it imports cleanly.
Both modules expose the same functions with the same signatures and are
checked against each other in the test suite.
"""
import os

from . import _numpy

BACKEND_ENV = "DNLCE_BACKEND"


def _select():
    wanted = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if wanted not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {wanted!r}")
    if wanted == "numba":
        try:
            from . import _numba
        except ImportError:  # numba missing: degrade silently to numpy
            return "numpy", _numpy
        return "numba", _numba
    return "numpy", _numpy


BACKEND, _impl = _select()

canonical_codes = _impl.canonical_codes
subset_codes = _impl.subset_codes
connected_subsets = _impl.connected_subsets
zz_diagonal = _impl.zz_diagonal
site_expectations = _impl.site_expectations
apply_flips = _impl.apply_flips
lanczos_expm = _impl.lanczos_expm

# Shape codes pack (w-1, h-1, d-1) into bits 56.. and an occupancy mask of the
# bounding box into the low 48 bits.
MASK_BITS = 48


def decode_shape(code: int, dimension: int):
    """Inverse of the shape code: sorted list of site tuples."""
    code = int(code)
    dims = [((code >> (56 - 4 * a)) & 0xF) + 1 for a in range(3)]
    mask = code & ((1 << MASK_BITS) - 1)
    w, h, _ = dims
    sites = []
    bit = 0
    while mask:
        if mask & 1:
            x = bit % w
            y = (bit // w) % h
            z = bit // (w * h)
            sites.append((x, y, z)[:dimension])
        mask >>= 1
        bit += 1
    return sorted(sites)
