"""numba versions of the kernels. Loop-level twins of ``_numpy``."""
import numpy as np
from numba import njit


@njit(cache=True)
def _code(pts, k, tf, buf):
    # pts: (>=k, d) site coordinates; tf: (d, d); buf: (>=k, d) scratch
    d = pts.shape[1]
    for s in range(k):
        for a in range(d):
            v = 0
            for b in range(d):
                v += tf[a, b] * pts[s, b]
            buf[s, a] = v
    code = np.int64(0)
    stride = np.int64(1)
    lo = np.zeros(3, np.int64)
    ext = np.ones(3, np.int64)
    for a in range(d):
        mn = buf[0, a]
        mx = buf[0, a]
        for s in range(1, k):
            if buf[s, a] < mn:
                mn = buf[s, a]
            if buf[s, a] > mx:
                mx = buf[s, a]
        lo[a] = mn
        ext[a] = mx - mn + 1
        if ext[a] > 16:
            return np.int64(-1)
        code |= (ext[a] - 1) << (56 - 4 * a)
        stride *= ext[a]
    if stride > 48:
        return np.int64(-1)
    for s in range(k):
        idx = np.int64(0)
        mul = np.int64(1)
        for a in range(d):
            idx += (buf[s, a] - lo[a]) * mul
            mul *= ext[a]
        code |= np.int64(1) << idx
    return code


@njit(cache=True)
def _canonical(pts, k, transforms, buf, scratch):
    g = transforms.shape[0]
    for t in range(g):
        scratch[t] = _code(pts, k, transforms[t], buf)
    best = scratch[0]
    for t in range(1, g):
        if scratch[t] < best:
            best = scratch[t]
    return best


@njit(cache=True)
def _canonical_codes(coords, transforms):
    kk, n, d = coords.shape
    g = transforms.shape[0]
    codes = np.empty(kk, np.int64)
    orbit = np.empty(kk, np.int64)
    buf = np.empty((n, d), np.int64)
    scratch = np.empty(g, np.int64)
    for c in range(kk):
        codes[c] = _canonical(coords[c], n, transforms, buf, scratch)
        srt = np.sort(scratch)
        cnt = 1
        for t in range(1, g):
            if srt[t] != srt[t - 1]:
                cnt += 1
        orbit[c] = cnt
    return codes, orbit


def canonical_codes(coords, transforms):
    coords = np.ascontiguousarray(coords, dtype=np.int64)
    codes, orbit = _canonical_codes(coords, np.ascontiguousarray(transforms, dtype=np.int64))
    if np.any(codes < 0):
        raise OverflowError("cluster bounding box too large for shape code")
    return codes, orbit


@njit(cache=True)
def _subset_codes(coords, masks, transforms):
    n, d = coords.shape
    out = np.empty(len(masks), np.int64)
    pts = np.empty((n, d), np.int64)
    buf = np.empty((n, d), np.int64)
    scratch = np.empty(transforms.shape[0], np.int64)
    for m in range(len(masks)):
        mask = masks[m]
        k = 0
        for i in range(n):
            if (mask >> i) & 1:
                for a in range(d):
                    pts[k, a] = coords[i, a]
                k += 1
        out[m] = _canonical(pts, k, transforms, buf, scratch)
    return out


def subset_codes(coords, masks, transforms):
    out = _subset_codes(
        np.ascontiguousarray(coords, dtype=np.int64),
        np.ascontiguousarray(masks, dtype=np.int64),
        np.ascontiguousarray(transforms, dtype=np.int64),
    )
    if np.any(out < 0):
        raise OverflowError("cluster bounding box too large for shape code")
    return out


@njit(cache=True)
def _connected_subsets(adj):
    # Wernicke's ESU: each connected set is grown from its smallest vertex,
    # extension restricted to exclusive neighbours, so it is emitted once.
    n = len(adj)
    cap = 64
    out = np.empty(cap, np.int64)
    cnt = 0
    st_set = np.empty(n + 1, np.int64)
    st_ext = np.empty(n + 1, np.int64)
    st_nb = np.empty(n + 1, np.int64)
    for v in range(n):
        above = ~((np.int64(1) << (v + 1)) - 1)
        top = 0
        st_set[0] = np.int64(1) << v
        st_ext[0] = adj[v] & above
        st_nb[0] = adj[v] | st_set[0]
        if cnt == cap:
            cap *= 2
            tmp = np.empty(cap, np.int64)
            tmp[:cnt] = out[:cnt]
            out = tmp
        out[cnt] = st_set[0]
        cnt += 1
        while top >= 0:
            ext = st_ext[top]
            if ext == 0:
                top -= 1
                continue
            wbit = ext & -ext
            st_ext[top] = ext ^ wbit
            w = 0
            while (wbit >> w) != 1:
                w += 1
            s2 = st_set[top] | wbit
            e2 = st_ext[top] | (adj[w] & ~st_nb[top] & above)
            nb2 = st_nb[top] | adj[w]
            if cnt == cap:
                cap *= 2
                tmp = np.empty(cap, np.int64)
                tmp[:cnt] = out[:cnt]
                out = tmp
            out[cnt] = s2
            cnt += 1
            top += 1
            st_set[top] = s2
            st_ext[top] = e2
            st_nb[top] = nb2
    return np.sort(out[:cnt])


def connected_subsets(adj):
    return _connected_subsets(np.ascontiguousarray(adj, dtype=np.int64))


@njit(cache=True)
def _zz_diagonal(n, bonds):
    dim = 1 << n
    out = np.zeros(dim)
    for a in range(dim):
        acc = 0.0
        for b in range(bonds.shape[0]):
            if ((a >> bonds[b, 0]) ^ (a >> bonds[b, 1])) & 1:
                acc -= 1.0
            else:
                acc += 1.0
        out[a] = acc
    return out


def zz_diagonal(n, bonds):
    return _zz_diagonal(n, np.ascontiguousarray(np.asarray(bonds, dtype=np.int64).reshape(-1, 2)))


@njit(cache=True)
def _site_expectations(states, n, which):
    # compensated (Neumaier) summation: expansion weights amplify round-off
    # in cluster properties by orders of magnitude
    nt, dim = states.shape
    out = np.zeros((nt, n))
    for t in range(nt):
        for i in range(n):
            m = 1 << i
            acc = 0.0
            comp = 0.0
            for a in range(dim):
                psi = states[t, a]
                s = 1.0 - 2.0 * ((a >> i) & 1)
                if which == 2:
                    x = s * (psi.real * psi.real + psi.imag * psi.imag)
                else:
                    v = psi.conjugate() * states[t, a ^ m]
                    x = v.real if which == 0 else s * v.imag
                y = acc + x
                if abs(acc) >= abs(x):
                    comp += (acc - y) + x
                else:
                    comp += (x - y) + acc
                acc = y
            out[t, i] = acc + comp
    return out


def site_expectations(states, n, alpha):
    which = {"x": 0, "y": 1, "z": 2}.get(alpha)
    if which is None:
        raise ValueError(f"unknown Pauli component {alpha!r}")
    states = np.ascontiguousarray(np.atleast_2d(states), dtype=np.complex128)
    return _site_expectations(states, n, which)


@njit(cache=True)
def _apply(psi, diag, masks, coefs, ci, cj, out):
    dim = len(psi)
    for a in range(dim):
        out[a] = diag[a] * psi[a]
    for k in range(len(masks)):
        m = masks[k]
        c = coefs[k]
        if ci[k] < 0:
            for a in range(dim):
                out[a] += c * psi[a ^ m]
        else:
            i = ci[k]
            j = cj[k]
            for a in range(dim):
                if ((a >> i) ^ (a >> j)) & 1:
                    out[a] += c * psi[a ^ m]
    return out


def apply_flips(psi, diag, masks, coefs, ci, cj):
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    return _apply(psi, diag, masks, coefs, ci, cj, np.empty_like(psi))


@njit(cache=True)
def lanczos_expm(psi, diag, masks, coefs, ci, cj, tau, m, tol, reorth):
    """exp(-i H tau) psi; returns (result, krylov_dim, error_estimate), krylov_dim 0 on failure.

    The error estimate is checked every third step and at the last one.
    """
    dim = len(psi)
    nv = 0.0
    for a in range(dim):
        nv += psi[a].real ** 2 + psi[a].imag ** 2
    nv = np.sqrt(nv)
    basis = np.empty((m + 1, dim), np.complex128)
    for a in range(dim):
        basis[0, a] = psi[a] / nv
    alpha = np.zeros(m)
    beta = np.zeros(m)
    w = np.empty(dim, np.complex128)
    result = np.zeros(dim, np.complex128)
    for j in range(m):
        _apply(basis[j], diag, masks, coefs, ci, cj, w)
        a_j = 0.0
        for a in range(dim):
            a_j += (basis[j, a].conjugate() * w[a]).real
        alpha[j] = a_j
        b2 = 0.0
        bprev = beta[j - 1] if j > 0 else 0.0
        for a in range(dim):
            v = w[a] - a_j * basis[j, a]
            if j > 0:
                v -= bprev * basis[j - 1, a]
            w[a] = v
        for k in range(j + 1 if reorth else 0):
            ov = 0j
            for a in range(dim):
                ov += basis[k, a].conjugate() * w[a]
            for a in range(dim):
                w[a] -= ov * basis[k, a]
        for a in range(dim):
            b2 += w[a].real ** 2 + w[a].imag ** 2
        b = np.sqrt(b2)
        if b >= 1e-13 and j % 3 != 2 and j != m - 1:
            beta[j] = b
            for a in range(dim):
                basis[j + 1, a] = w[a] / b
            continue
        T = np.zeros((j + 1, j + 1))
        for k in range(j + 1):
            T[k, k] = alpha[k]
            if k < j:
                T[k, k + 1] = beta[k]
                T[k + 1, k] = beta[k]
        evals, evecs = np.linalg.eigh(T)
        coeff = np.zeros(j + 1, np.complex128)
        for k in range(j + 1):
            ph = np.exp(-1j * evals[k] * tau) * evecs[0, k]
            for r in range(j + 1):
                coeff[r] += evecs[r, k] * ph
        err = b * abs(coeff[j])
        if b < 1e-13 or err < tol:
            for k in range(j + 1):
                c = coeff[k] * nv
                for a in range(dim):
                    result[a] += c * basis[k, a]
            return result, j + 1, err
        beta[j] = b
        for a in range(dim):
            basis[j + 1, a] = w[a] / b
    return result, 0, np.inf
