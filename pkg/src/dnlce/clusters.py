"""Connected lattice clusters: enumeration, symmetry reduction, subcluster tables.

Fixed clusters (distinct up to translation) are grown with Redelmeier's
algorithm. Free clusters (distinct up to translation and the lattice point
group) are identified by an integer shape code, the minimum over the orbit
of a bounding-box occupancy encoding (see :mod:`dnlce.kernels`).

The bulk containers :class:`ClusterSet` and :class:`PairClusterSet` keep
everything in flat arrays, since a square-lattice set to 12 sites holds
~85k free shapes and several million subcluster entries. Individual
:class:`ClusterRecord` objects are materialised on indexing.
"""
from __future__ import annotations

import hashlib
import io
import json
import sys
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import kernels
from .lattice import LatticeSpec, Site, is_connected

FORMAT_VERSION = 1
MAGIC = b"DNLCE-CLUSTERS\n"

# Largest cluster whose bounding box always fits the 48-bit shape code.
MAX_SITES = {1: 12, 2: 12, 3: 9}

CanonicalKey = bytes


class ClusterSetError(Exception):
    """Base class for cluster-set file problems."""


class FormatVersionError(ClusterSetError):
    pass


class ChecksumError(ClusterSetError):
    pass


class TruncatedFileError(ClusterSetError):
    pass


class LatticeMismatchError(ClusterSetError):
    pass


def _check_n_max(spec: LatticeSpec, n_max: int) -> int:
    n_max = int(n_max)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    cap = MAX_SITES[spec.dimension]
    if n_max > cap:
        raise ValueError(f"n_max={n_max} exceeds the {cap}-site cap for the {spec.name} lattice")
    return n_max


@dataclass(frozen=True, order=True)
class ClusterShape:
    """Sorted, translation-normalised site tuple (componentwise minimum at the origin)."""

    sites: tuple[Site, ...]

    @classmethod
    def from_sites(cls, sites) -> "ClusterShape":
        pts = [tuple(int(c) for c in s) for s in sites]
        if not pts:
            raise ValueError("empty cluster")
        lo = [min(p[a] for p in pts) for a in range(len(pts[0]))]
        norm = sorted({tuple(c - m for c, m in zip(p, lo)) for p in pts})
        if len(norm) != len(pts):
            raise ValueError("duplicate sites")
        return cls(tuple(norm))

    def __len__(self) -> int:
        return len(self.sites)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.sites, dtype=np.int64)


def key_from_code(code: int) -> CanonicalKey:
    return int(code).to_bytes(8, "big")


def code_from_key(key: CanonicalKey) -> int:
    return int.from_bytes(key, "big")


def canonical_key(spec: LatticeSpec, shape: ClusterShape) -> CanonicalKey:
    coords = shape.as_array()[None]
    code, _ = kernels.canonical_codes(coords, spec.point_group.elements)
    return key_from_code(code[0])


# --------------------------------------------------------------------------
# fixed enumeration


def enumerate_fixed_arrays(spec: LatticeSpec, n_max: int) -> dict[int, np.ndarray]:
    """Fixed clusters as ``{size: int64 array (count, size, d)}``, translation-normalised.

    Redelmeier's algorithm: the origin is the smallest cell in (z, y, x)
    lexicographic order, and cells below it are never added. Cells are
    packed into one integer with x as the least significant digit, so that
    order is plain integer order.
    """
    n_max = _check_n_max(spec, n_max)
    d = spec.dimension
    base = 2 * n_max + 1
    strides = [base**a for a in range(d)]
    # every axis offset by n_max so digits stay in [0, base)
    origin = sum(n_max * st for st in strides)
    offsets = []
    for s in strides:
        offsets += [s, -s]
    found: list[list[tuple[int, ...]]] = [[] for _ in range(n_max + 1)]
    poly: list[int] = []
    seen = {origin}

    def grow(untried: list[int]) -> None:
        while untried:
            cell = untried.pop()
            poly.append(cell)
            found[len(poly)].append(tuple(poly))
            if len(poly) < n_max:
                new = []
                for off in offsets:
                    nb = cell + off
                    if nb >= origin and nb not in seen:
                        seen.add(nb)
                        new.append(nb)
                grow(untried + new)
                seen.difference_update(new)
            poly.pop()

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 100 + 4 * n_max))
    try:
        grow([origin])
    finally:
        sys.setrecursionlimit(limit)

    out = {}
    for n in range(1, n_max + 1):
        cells = np.asarray(found[n], dtype=np.int64).reshape(-1, n)
        coords = np.empty(cells.shape + (d,), dtype=np.int64)
        rest = cells.copy()
        for a in range(d):
            coords[..., a] = rest % base
            rest //= base
        coords -= coords.min(axis=1, keepdims=True)
        # sort sites inside each shape lexicographically (x, y, z)
        keys = np.zeros(cells.shape, dtype=np.int64)
        for a in range(d):
            keys = keys * base + coords[..., a]
        order = np.argsort(keys, axis=1)
        coords = np.take_along_axis(coords, order[..., None], axis=1)
        out[n] = coords
    return out


def enumerate_fixed(spec: LatticeSpec, n_max: int) -> dict[int, set[ClusterShape]]:
    arrays = enumerate_fixed_arrays(spec, n_max)
    return {
        n: {ClusterShape(tuple(map(tuple, shape.tolist()))) for shape in arr}
        for n, arr in arrays.items()
    }


# --------------------------------------------------------------------------
# free clusters and subcluster tables


@dataclass(frozen=True)
class ClusterRecord:
    shape: ClusterShape
    size: int
    lattice_constant: int
    subclusters: Mapping[CanonicalKey, int]

    @property
    def key(self) -> CanonicalKey:
        return key_from_code(self.code)

    code: int = 0


@dataclass
class ClusterSet:
    """All free clusters up to ``n_max`` with lattice constants and subcluster tables.

    Records are sorted by (size, canonical code). Subcluster multiplicities
    are a CSR table: record ``c`` has entries ``sub_index[indptr[c]:indptr[c+1]]``
    (indices of smaller records) with counts ``sub_count[...]``.
    """

    spec: LatticeSpec
    n_max: int
    sizes: np.ndarray
    codes: np.ndarray
    lattice_constants: np.ndarray
    site_ptr: np.ndarray
    coords: np.ndarray
    indptr: np.ndarray
    sub_index: np.ndarray
    sub_count: np.ndarray
    fixed_counts: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __len__(self) -> int:
        return len(self.sizes)

    def sites(self, i: int) -> np.ndarray:
        return self.coords[self.site_ptr[i]:self.site_ptr[i + 1]].astype(np.int64)

    def shape(self, i: int) -> ClusterShape:
        return ClusterShape(tuple(map(tuple, self.sites(i).tolist())))

    def subcluster_entries(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.sub_index[lo:hi], self.sub_count[lo:hi]

    def __getitem__(self, i: int) -> ClusterRecord:
        idx, cnt = self.subcluster_entries(i)
        subs = {key_from_code(self.codes[j]): int(c) for j, c in zip(idx, cnt)}
        return ClusterRecord(
            shape=self.shape(i),
            size=int(self.sizes[i]),
            lattice_constant=int(self.lattice_constants[i]),
            subclusters=subs,
            code=int(self.codes[i]),
        )

    def __iter__(self) -> Iterator[ClusterRecord]:
        for i in range(len(self)):
            yield self[i]

    def index_of_code(self, code: int) -> int:
        hits = np.nonzero(self.codes == code)[0]
        if len(hits) == 0:
            raise KeyError(f"shape code {code} not in cluster set")
        return int(hits[0])

    def index_of(self, key: CanonicalKey) -> int:
        return self.index_of_code(code_from_key(key))

    def upto(self, n: int) -> int:
        """Number of leading records with size <= n."""
        return int(np.searchsorted(self.sizes, n, side="right"))

    def free_counts(self) -> np.ndarray:
        return np.bincount(self.sizes, minlength=self.n_max + 1)[1:]

    def equals(self, other: "ClusterSet") -> bool:
        names = ("sizes", "codes", "lattice_constants", "site_ptr", "coords",
                 "indptr", "sub_index", "sub_count", "fixed_counts")
        return (self.spec == other.spec and self.n_max == other.n_max
                and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in names))


def _adjacency(coords: np.ndarray) -> np.ndarray:
    diff = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=-1)
    adj = (diff == 1).astype(np.int64)
    return (adj << np.arange(len(coords), dtype=np.int64)).sum(axis=1)


def subcluster_multiplicities(spec: LatticeSpec, shape: ClusterShape) -> dict[CanonicalKey, int]:
    """Count connected proper site subsets of ``shape`` by free shape."""
    coords = shape.as_array()
    masks = kernels.connected_subsets(_adjacency(coords))
    full = (1 << len(coords)) - 1
    masks = masks[masks != full]
    codes = kernels.subset_codes(coords, masks, spec.point_group.elements)
    uniq, counts = np.unique(codes, return_counts=True)
    return {key_from_code(c): int(k) for c, k in zip(uniq, counts)}


def reduce_to_free(spec: LatticeSpec, fixed, *, with_subclusters: bool = True) -> ClusterSet:
    """Quotient fixed clusters by the point group and build subcluster tables.

    ``fixed`` is the output of :func:`enumerate_fixed_arrays` or
    :func:`enumerate_fixed`.
    """
    G = spec.point_group.elements
    d = spec.dimension
    n_max = max(fixed)
    sizes, codes, lcs, coords = [], [], [], []
    fixed_counts = np.zeros(n_max, dtype=np.int64)
    for n in sorted(fixed):
        arr = fixed[n]
        if not isinstance(arr, np.ndarray):
            arr = np.asarray([s.sites for s in sorted(arr)], dtype=np.int64).reshape(-1, n, d)
        fixed_counts[n - 1] = len(arr)
        c, orbit = kernels.canonical_codes(arr, G)
        uniq, first, counts = np.unique(c, return_index=True, return_counts=True)
        if not np.array_equal(counts, orbit[first]):
            raise AssertionError("orbit sizes disagree with fixed-cluster counts")
        for code, lc in zip(uniq, counts):
            sizes.append(n)
            codes.append(int(code))
            lcs.append(int(lc))
            coords.extend(kernels.decode_shape(code, d))
    sizes = np.asarray(sizes, dtype=np.int64)
    site_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    cs = ClusterSet(
        spec=spec,
        n_max=n_max,
        sizes=sizes,
        codes=np.asarray(codes, dtype=np.int64),
        lattice_constants=np.asarray(lcs, dtype=np.int64),
        site_ptr=site_ptr,
        coords=np.asarray(coords, dtype=np.int8).reshape(-1, d),
        indptr=np.zeros(len(sizes) + 1, dtype=np.int64),
        sub_index=np.zeros(0, dtype=np.int32),
        sub_count=np.zeros(0, dtype=np.int32),
        fixed_counts=fixed_counts,
    )
    if with_subclusters:
        _fill_subclusters(cs)
    return cs


def _fill_subclusters(cs: ClusterSet) -> None:
    G = cs.spec.point_group.elements
    order = np.argsort(cs.codes)
    sorted_codes = cs.codes[order]
    indptr = np.zeros(len(cs) + 1, dtype=np.int64)
    idx_parts, cnt_parts = [], []
    for i in range(len(cs)):
        coords = cs.sites(i)
        n = len(coords)
        if n > 1:
            masks = kernels.connected_subsets(_adjacency(coords))
            masks = masks[masks != (1 << n) - 1]
            sub = kernels.subset_codes(coords, masks, G)
            pos = np.searchsorted(sorted_codes, sub)
            if np.any(pos >= len(sorted_codes)) or np.any(sorted_codes[np.minimum(pos, len(sorted_codes) - 1)] != sub):
                raise AssertionError("subcluster shape missing from the cluster set")
            uniq, counts = np.unique(order[pos], return_counts=True)
            idx_parts.append(uniq.astype(np.int32))
            cnt_parts.append(counts.astype(np.int32))
            indptr[i + 1] = indptr[i] + len(uniq)
        else:
            indptr[i + 1] = indptr[i]
    cs.indptr = indptr
    cs.sub_index = np.concatenate(idx_parts) if idx_parts else np.zeros(0, np.int32)
    cs.sub_count = np.concatenate(cnt_parts) if cnt_parts else np.zeros(0, np.int32)


def build_cluster_set(spec: LatticeSpec, n_max: int) -> ClusterSet:
    return reduce_to_free(spec, enumerate_fixed_arrays(spec, n_max))


# --------------------------------------------------------------------------
# doubly-rooted clusters


@dataclass(frozen=True)
class PairClusterRecord:
    """Fixed cluster pinned so that root 0 sits at the origin and root 1 at ``r``."""

    sites: tuple[Site, ...]
    roots: tuple[Site, Site]
    rooted_subclusters: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def root_indices(self) -> tuple[int, int]:
        return self.sites.index(self.roots[0]), self.sites.index(self.roots[1])


@dataclass
class PairClusterSet:
    spec: LatticeSpec
    r: Site
    n_max: int
    records: list[PairClusterRecord]

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> PairClusterRecord:
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray([rec.size for rec in self.records], dtype=np.int64)

    def equals(self, other: "PairClusterSet") -> bool:
        return (self.spec == other.spec and tuple(self.r) == tuple(other.r)
                and self.n_max == other.n_max and self.records == other.records)


def min_pair_size(r: Sequence[int]) -> int:
    return int(sum(abs(int(c)) for c in r)) + 1


def enumerate_pair_clusters(spec: LatticeSpec, r, n_max: int,
                            fixed: dict[int, np.ndarray] | None = None) -> PairClusterSet:
    r = tuple(int(c) for c in r)
    if len(r) != spec.dimension:
        raise ValueError(f"separation {r} does not match lattice dimension {spec.dimension}")
    if not any(r):
        raise ValueError("r = 0: use single-site expansion")
    n_max = _check_n_max(spec, n_max)
    if fixed is None or max(fixed) < n_max:
        fixed = enumerate_fixed_arrays(spec, n_max)
    origin = (0,) * spec.dimension
    rvec = np.asarray(r, dtype=np.int64)
    clusters: list[tuple[Site, ...]] = []
    for n in range(min_pair_size(r), n_max + 1):
        arr = fixed[n]
        for p in range(n):
            shifted = arr - arr[:, p:p + 1, :]
            hit = (shifted == rvec).all(axis=-1).any(axis=-1)
            for shape in shifted[hit]:
                clusters.append(tuple(sorted(map(tuple, shape.tolist()))))
    clusters.sort(key=lambda s: (len(s), s))
    index = {c: i for i, c in enumerate(clusters)}
    records = []
    for sites in clusters:
        coords = np.asarray(sites, dtype=np.int64)
        n = len(sites)
        i0, i1 = sites.index(origin), sites.index(r)
        need = (1 << i0) | (1 << i1)
        subs = []
        if n > min_pair_size(r):
            masks = kernels.connected_subsets(_adjacency(coords))
            for m in masks[(masks & need) == need]:
                m = int(m)
                if m == (1 << n) - 1:
                    continue
                key = tuple(sites[k] for k in range(n) if (m >> k) & 1)
                subs.append(index[key])
        records.append(PairClusterRecord(sites, (origin, r), tuple(sorted(subs))))
    return PairClusterSet(spec, r, n_max, records)


# --------------------------------------------------------------------------
# persistence
#
# Layout: MAGIC line, one JSON header line, ``payload_bytes`` of an .npz
# archive, then a trailer line ``sha256:<hex>\n`` hashing everything before it.


def _write(path, header: dict, arrays: dict) -> None:
    buf = io.BytesIO()
    np.savez_compressed(buf, **arrays)
    payload = buf.getvalue()
    header = dict(header, format_version=FORMAT_VERSION, payload_bytes=len(payload))
    body = MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + payload
    digest = hashlib.sha256(body).hexdigest()
    with open(path, "wb") as fh:
        fh.write(body + b"\nsha256:" + digest.encode() + b"\n")


def _read(path, expect_spec: LatticeSpec | None, kind: str):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        if len(raw) < len(MAGIC) and MAGIC.startswith(raw):
            raise TruncatedFileError(f"{path}: truncated header")
        raise ClusterSetError(f"{path}: not a cluster-set file")
    nl = raw.find(b"\n", len(MAGIC))
    if nl < 0:
        raise TruncatedFileError(f"{path}: truncated header")
    try:
        header = json.loads(raw[len(MAGIC):nl])
    except json.JSONDecodeError as exc:
        raise ChecksumError(f"{path}: corrupted header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: format version {header.get('format_version')!r}, expected {FORMAT_VERSION}")
    if header.get("kind") != kind:
        raise ClusterSetError(f"{path}: holds a {header.get('kind')!r} set, expected {kind!r}")
    start = nl + 1
    end = start + int(header["payload_bytes"])
    trailer = raw[end:]
    if len(raw) < end or not trailer.startswith(b"\nsha256:") or len(trailer) < 8 + 64 + 1:
        raise TruncatedFileError(f"{path}: file is truncated")
    digest = trailer[8:8 + 64].decode(errors="replace")
    if hashlib.sha256(raw[:end]).hexdigest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch")
    spec = LatticeSpec(int(header["lattice"]["dimension"]))
    if expect_spec is not None and spec != expect_spec:
        raise LatticeMismatchError(
            f"{path}: file is for the {spec.name} lattice, requested {expect_spec.name}")
    with np.load(io.BytesIO(raw[start:end])) as npz:
        arrays = {k: npz[k] for k in npz.files}
    return header, spec, arrays


def save_cluster_set(cs: ClusterSet, path) -> None:
    header = {
        "kind": "site",
        "lattice": {"dimension": cs.spec.dimension, "name": cs.spec.name},
        "n_max": cs.n_max,
        "record_count": len(cs),
    }
    arrays = {k: getattr(cs, k) for k in ("sizes", "codes", "lattice_constants", "site_ptr",
                                         "coords", "indptr", "sub_index", "sub_count",
                                         "fixed_counts")}
    _write(path, header, arrays)


def load_cluster_set(path, spec: LatticeSpec | None = None) -> ClusterSet:
    header, spec, a = _read(path, spec, "site")
    if len(a["sizes"]) != header["record_count"]:
        raise ClusterSetError(f"{path}: record count mismatch")
    return ClusterSet(spec=spec, n_max=int(header["n_max"]), **a)


def save_pair_set(ps: PairClusterSet, path) -> None:
    sizes = ps.sizes
    coords = np.asarray([s for rec in ps.records for s in rec.sites], dtype=np.int64)
    subs = [rec.rooted_subclusters for rec in ps.records]
    indptr = np.concatenate([[0], np.cumsum([len(s) for s in subs])]).astype(np.int64)
    flat = np.asarray([i for s in subs for i in s], dtype=np.int64)
    header = {
        "kind": "pair",
        "lattice": {"dimension": ps.spec.dimension, "name": ps.spec.name},
        "n_max": ps.n_max,
        "r": list(ps.r),
        "record_count": len(ps),
    }
    _write(path, header, {"sizes": sizes, "coords": coords.reshape(-1, ps.spec.dimension),
                          "indptr": indptr, "subs": flat})


def load_pair_set(path, spec: LatticeSpec | None = None) -> PairClusterSet:
    header, spec, a = _read(path, spec, "pair")
    r = tuple(int(c) for c in header["r"])
    origin = (0,) * spec.dimension
    ptr = np.concatenate([[0], np.cumsum(a["sizes"])])
    records = []
    for i in range(len(a["sizes"])):
        sites = tuple(map(tuple, a["coords"][ptr[i]:ptr[i + 1]].tolist()))
        subs = tuple(int(x) for x in a["subs"][a["indptr"][i]:a["indptr"][i + 1]])
        records.append(PairClusterRecord(sites, (origin, r), subs))
    if len(records) != header["record_count"]:
        raise ClusterSetError(f"{path}: record count mismatch")
    return PairClusterSet(spec, r, int(header["n_max"]), records)


def check_connected(spec: LatticeSpec, shape: ClusterShape) -> bool:
    return is_connected(spec, shape.sites)
