"""Vectorised numpy versions of the kernels."""
import numpy as np

_SHIFTS = np.array([56, 52, 48], dtype=np.int64)


def _codes_from_points(pts):
    """pts: (..., n, d) nonnegative-after-shift integer coordinates -> (...,) codes."""
    pts = pts - pts.min(axis=-2, keepdims=True)
    d = pts.shape[-1]
    ext = pts.max(axis=-2) + 1  # (..., d)
    idx = np.zeros(pts.shape[:-1], dtype=np.int64)
    stride = np.ones(pts.shape[:-2], dtype=np.int64)
    code = np.zeros(pts.shape[:-2], dtype=np.int64)
    for a in range(d):
        idx += pts[..., a] * stride[..., None]
        stride = stride * ext[..., a]
        code |= (ext[..., a] - 1) << _SHIFTS[a]
    if np.any(stride > 48) or np.any(ext > 16):
        raise OverflowError("cluster bounding box too large for shape code")
    mask = (np.int64(1) << idx).sum(axis=-1)
    return code | mask


def canonical_codes(coords, transforms):
    """Minimal shape code over the point-group orbit, and the orbit size.

    coords: (K, n, d) int64; transforms: (G, d, d) int64.
    """
    coords = np.asarray(coords, dtype=np.int64)
    if coords.shape[0] == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    imgs = np.einsum("gab,knb->kgna", transforms, coords)
    codes = _codes_from_points(imgs)  # (K, G)
    codes.sort(axis=1)
    orbit = 1 + (np.diff(codes, axis=1) != 0).sum(axis=1)
    return codes[:, 0].copy(), orbit.astype(np.int64)


def _popcount(x):
    x = np.asarray(x, dtype=np.int64).copy()
    c = np.zeros_like(x)
    while np.any(x):
        c += x & 1
        x >>= 1
    return c


def subset_codes(coords, masks, transforms):
    """Canonical code of each site subset ``masks`` of a cluster with sites ``coords``."""
    coords = np.asarray(coords, dtype=np.int64)
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros(len(masks), dtype=np.int64)
    sizes = _popcount(masks)
    n = coords.shape[0]
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    for k in np.unique(sizes):
        sel = np.nonzero(sizes == k)[0]
        # row-major nonzero order keeps sites in index order
        cols = np.nonzero(bits[sel])[1].reshape(len(sel), k)
        out[sel] = canonical_codes(coords[cols], transforms)[0]
    return out


def connected_subsets(adj):
    """All nonempty connected vertex subsets of the graph with adjacency bitmasks ``adj``."""
    adj = np.asarray(adj, dtype=np.int64)
    n = len(adj)
    masks = np.arange(1, 1 << n, dtype=np.int64)
    reach = masks & -masks
    for _ in range(n):
        grown = reach.copy()
        for i in range(n):
            grown |= np.where((reach >> i) & 1, adj[i], 0)
        grown &= masks
        if np.array_equal(grown, reach):
            break
        reach = grown
    return masks[reach == masks]


def zz_diagonal(n, bonds):
    """Sum over bonds of s_i s_j for every basis state, s = +1 for bit 0."""
    states = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n, dtype=np.float64)
    for i, j in np.asarray(bonds, dtype=np.int64).reshape(-1, 2):
        out += 1.0 - 2.0 * (((states >> i) ^ (states >> j)) & 1)
    return out


def site_expectations(states, n, alpha):
    """Per-site <sigma^alpha_i> for each row of ``states`` (T, 2^n): returns (T, n)."""
    states = np.atleast_2d(states)
    idx = np.arange(1 << n, dtype=np.int64)
    prob = (states.conj() * states).real
    out = np.empty((states.shape[0], n), dtype=prob.dtype)
    for i in range(n):
        bit = (idx >> i) & 1
        if alpha == "z":
            out[:, i] = prob @ (1.0 - 2.0 * bit)
        else:
            partner = states[:, idx ^ (1 << i)]
            amp = states.conj() * partner
            if alpha == "x":
                out[:, i] = amp.real.sum(axis=1)
            elif alpha == "y":
                # (sigma^y psi)[a] = -i s_a psi[a ^ m]
                out[:, i] = (amp * (-1j) * (1.0 - 2.0 * bit)).real.sum(axis=1)
            else:
                raise ValueError(f"unknown Pauli component {alpha!r}")
    return out


def apply_flips(psi, diag, masks, coefs, ci, cj):
    """H psi for H = diag + sum_k coefs[k] X_k; X_k flips ``masks[k]``, restricted to
    states whose bits ci[k], cj[k] differ when ci[k] >= 0."""
    psi = np.asarray(psi)
    idx = np.arange(len(psi), dtype=np.int64)
    out = diag * psi
    for mask, c, i, j in zip(masks, coefs, ci, cj):
        term = c * psi[idx ^ mask]
        if i >= 0:
            term = np.where(((idx >> i) ^ (idx >> j)) & 1, term, 0)
        out = out + term
    return out


def lanczos_generic(matvec, psi, tau, m, tol, reorth=False):
    """exp(-i H tau) psi by Lanczos, optionally with full reorthogonalisation.

    Returns (result, krylov_dim, error_estimate); krylov_dim is 0 when ``m``
    vectors did not bring the error estimate below ``tol``.
    """
    import scipy.linalg

    nv = np.linalg.norm(psi)
    basis = np.empty((m + 1, len(psi)), dtype=np.complex128)
    basis[0] = psi / nv
    alpha = np.zeros(m)
    beta = np.zeros(m)
    for j in range(m):
        w = matvec(basis[j])
        alpha[j] = np.vdot(basis[j], w).real
        w = w - alpha[j] * basis[j]
        if j:
            w -= beta[j - 1] * basis[j - 1]
        if reorth:
            w -= basis[:j + 1].T @ (basis[:j + 1].conj() @ w)
        b = np.linalg.norm(w)
        if j:
            evals, evecs = scipy.linalg.eigh_tridiagonal(alpha[:j + 1], beta[:j])
        else:
            evals, evecs = alpha[:1], np.ones((1, 1))
        coeff = evecs @ (np.exp(-1j * evals * tau) * evecs[0])
        err = b * abs(coeff[j])
        if b < 1e-13 or err < tol:
            return nv * (coeff @ basis[:j + 1]), j + 1, float(err)
        beta[j] = b
        basis[j + 1] = w / b
    return np.zeros_like(basis[0]), 0, np.inf


def lanczos_expm(psi, diag, masks, coefs, ci, cj, tau, m, tol, reorth):
    return lanczos_generic(lambda v: apply_flips(v, diag, masks, coefs, ci, cj),
                           psi, tau, m, tol, reorth)
