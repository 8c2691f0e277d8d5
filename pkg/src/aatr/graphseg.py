"""Stage I: region adjacency graph over supervoxels and recursive normalized cuts.

Edge affinity between 26-adjacent supervoxels ``i`` and ``j``::

    w = [S <= 0.25] * exp(-(I_i - I_j)^2 / sigma^2) * exp(-S^2 / 0.25)

with ``I`` the mean smoothed intensity, ``sigma`` the width of the global
threat density range and ``S`` the fraction of shared boundary faces on
which the edge indicator drops below 0.5.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .preprocess import AtParams, _diff, at_smooth
from .supervoxel import GLOBAL_RANGE_MHU, SlicParams, SupervoxelSet, filter_supervoxels, slic3d
from .volume import LabelMap, Volume

log = logging.getLogger(__name__)

EDGE_LEVEL = 0.5  # v below this marks a distinct edge
CROSSING_COS = 0.5  # min |cos| between the u gradient and a face normal for the edge to cross it
BOUNDARY_GATE = 0.25
BOUNDARY_SCALE = 0.25

_FACE_OFFSETS = [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
_HALF26 = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
           if (dx, dy, dz) > (0, 0, 0)]


@dataclass(frozen=True, eq=False)
class Rag:
    """Undirected weighted graph; node ``k`` is supervoxel id ``k + 1``."""

    mean_mhu: np.ndarray
    voxel_count: np.ndarray
    edges: np.ndarray  # (E, 2) node indices with i < j
    weight: np.ndarray
    boundary: np.ndarray
    sigma: float = GLOBAL_RANGE_MHU[1] - GLOBAL_RANGE_MHU[0]

    @property
    def n(self) -> int:
        return int(self.mean_mhu.size)

    def dense(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        if self.edges.size:
            i, j = self.edges[:, 0], self.edges[:, 1]
            W[i, j] = self.weight
            W[j, i] = self.weight
        return W


@dataclass(frozen=True, eq=False)
class CandidateBlob:
    bag_id: str
    voxels: np.ndarray  # sorted flat indices into the bag volume
    dims: tuple[int, int, int]
    mean_mhu: float = float("nan")

    @property
    def size(self) -> int:
        return int(self.voxels.size)

    def mask(self) -> np.ndarray:
        m = np.zeros(int(np.prod(self.dims)), dtype=bool)
        m[self.voxels] = True
        return m.reshape(self.dims)


def _shifted(a: np.ndarray, off):
    src, dst = [], []
    for d, n in zip(off, a.shape):
        if d >= 0:
            src.append(slice(0, n - d))
            dst.append(slice(d, n))
        else:
            src.append(slice(-d, n))
            dst.append(slice(0, n + d))
    return tuple(src), tuple(dst)


def _gradient_cos(u: np.ndarray, spacing):
    """Per axis, |du/dx_k| / |grad u| with the smoothing stage's central differences."""
    g = [_diff(u, ax, h) for ax, h in enumerate(spacing)]
    norm = np.sqrt(sum(c * c for c in g))
    with np.errstate(invalid="ignore", divide="ignore"):
        return [np.where(norm > 0, np.abs(c) / norm, 0.0) for c in g]


def _contacts(labels: np.ndarray, v: np.ndarray, cos=None):
    """Per adjacent label pair: face count, distinct faces, 26-contacts, distinct 26-contacts.

    With ``cos`` (from ``_gradient_cos``) a face only counts as distinct when
    the edge crosses it, i.e. the gradient has a component along the face
    normal.  Otherwise a thin sheet, whose surface voxels all carry low v,
    would look cut between every pair of its own supervoxels.
    """
    n = int(labels.max()) + 1
    keys, is_face, distinct = [], [], []
    for off in _HALF26:
        s, d = _shifted(labels, off)
        a, b = labels[s], labels[d]
        m = (a != b) & (a > 0) & (b > 0)
        if not m.any():
            continue
        a, b = a[m].astype(np.int64), b[m].astype(np.int64)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys.append(lo * n + hi)
        edge = np.minimum(v[s][m], v[d][m]) < EDGE_LEVEL
        face = off in _FACE_OFFSETS
        if face and cos is not None:
            ax = _FACE_OFFSETS.index(off)
            edge &= np.maximum(cos[ax][s][m], cos[ax][d][m]) >= CROSSING_COS
        distinct.append(edge)
        is_face.append(np.full(edge.size, face))
    if not keys:
        z = np.zeros(0, dtype=np.int64)
        return z.reshape(0, 2), z, z, z, z
    keys = np.concatenate(keys)
    is_face = np.concatenate(is_face)
    distinct = np.concatenate(distinct)
    uniq, inv = np.unique(keys, return_inverse=True)
    m = uniq.size
    faces = np.bincount(inv, weights=is_face, minlength=m).astype(np.int64)
    faces_d = np.bincount(inv, weights=is_face & distinct, minlength=m).astype(np.int64)
    cont = np.bincount(inv, minlength=m).astype(np.int64)
    cont_d = np.bincount(inv, weights=distinct, minlength=m).astype(np.int64)
    pairs = np.stack([uniq // n, uniq % n], axis=1)
    return pairs, faces, faces_d, cont, cont_d


def _fraction(faces, faces_d, cont, cont_d):
    # face-sharing pairs use faces; pairs touching only along edges/corners fall back to 26-contacts
    faces = np.asarray(faces, dtype=np.float64)
    return np.where(faces > 0, faces_d / np.maximum(faces, 1), cont_d / np.maximum(cont, 1))


def boundary_fraction(labels, i: int, j: int, v: np.ndarray, u=None, spacing=(1.0, 1.0, 1.0)) -> float:
    """Fraction of the faces shared by supervoxels ``i`` and ``j`` that are distinct edges.

    A face is distinct when min(v) over its two voxels is below 0.5 and, if
    the smoothed volume ``u`` is given, the edge crosses the face.
    """
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    if i == j:
        raise ValueError("boundary_fraction needs two distinct supervoxels")
    sub = np.where(lab == i, 1, np.where(lab == j, 2, 0))
    cos = None if u is None else _gradient_cos(np.asarray(getattr(u, "data", u), np.float64),
                                               getattr(u, "spacing_mm", spacing))
    pairs, faces, faces_d, cont, cont_d = _contacts(sub, np.asarray(v), cos)
    if pairs.shape[0] == 0:
        raise ValueError(f"supervoxels {i} and {j} are not adjacent (no shared boundary)")
    return float(_fraction(faces, faces_d, cont, cont_d)[0])


def edge_weight(delta_i, s, sigma: float):
    delta_i = np.asarray(delta_i, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    gate = s <= BOUNDARY_GATE
    return gate * np.exp(-(delta_i / sigma) ** 2) * np.exp(-(s ** 2) / BOUNDARY_SCALE)


def build_rag(sv: SupervoxelSet, v: np.ndarray, sigma: float | None = None, u: Volume | None = None) -> Rag:
    if sigma is None:
        sigma = GLOBAL_RANGE_MHU[1] - GLOBAL_RANGE_MHU[0]
    cos = None if u is None else _gradient_cos(np.asarray(u.data, np.float64), u.spacing_mm)
    pairs, faces, faces_d, cont, cont_d = _contacts(sv.labels.labels, np.asarray(v), cos)
    s = _fraction(faces, faces_d, cont, cont_d)
    edges = pairs - 1
    dI = sv.mean_mhu[edges[:, 0]] - sv.mean_mhu[edges[:, 1]] if edges.size else np.zeros(0)
    w = edge_weight(dI, s, sigma)
    return Rag(sv.mean_mhu.copy(), sv.counts.copy(), edges.astype(np.int64), w, s, float(sigma))


# ---------------------------------------------------------------------------
# normalized cuts


def ncut_value(W, in_a) -> float:
    """cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V); +inf if a side has zero association."""
    W = W.dense() if isinstance(W, Rag) else np.asarray(W, dtype=np.float64)
    sel = np.asarray(in_a)
    if sel.dtype == bool and sel.shape == (W.shape[0],):
        a = sel.copy()
    else:
        a = np.zeros(W.shape[0], dtype=bool)
        a[sel.astype(np.int64)] = True
    if not a.any() or a.all():
        raise ValueError("both sides of the partition must be non-empty")
    b = ~a
    # averaging both orientations makes the value exactly symmetric in (A, B)
    cut = 0.5 * (W[np.ix_(a, b)].sum() + W[np.ix_(b, a)].sum())
    d = W.sum(axis=1)
    assoc_a, assoc_b = d[a].sum(), d[b].sum()
    if assoc_a == 0 or assoc_b == 0:
        return float("inf")
    return float(cut / assoc_a + cut / assoc_b)


def fiedler_vector(W: np.ndarray, shift: float = 1e-3, tol: float = 1e-8, max_iter: int = 500):
    """Second generalized eigenpair of (D - W) x = lam D x.

    Shifted inverse power iteration on the normalized Laplacian
    ``I - D^-1/2 W D^-1/2`` with the trivial eigenvector ``D^1/2 1``
    deflated at every step.  Returns ``(lam, x, converged)``.
    """
    n = W.shape[0]
    d = W.sum(axis=1)
    if np.any(d <= 0):
        raise ValueError("every node needs positive degree")
    if n < 2:
        return 0.0, np.zeros(n), True
    dis = 1.0 / np.sqrt(d)
    M = np.eye(n) - dis[:, None] * W * dis[None, :]
    M = 0.5 * (M + M.T)
    y0 = np.sqrt(d)
    y0 /= np.linalg.norm(y0)
    factor = linalg.cho_factor(M + shift * np.eye(n))
    y = np.random.default_rng(0).standard_normal(n)
    y -= y0 * (y0 @ y)
    y /= np.linalg.norm(y)
    lam = float(y @ M @ y)
    converged = False
    for _ in range(max_iter):
        y = linalg.cho_solve(factor, y)
        y -= y0 * (y0 @ y)
        y /= np.linalg.norm(y)
        My = M @ y
        lam = float(y @ My)
        if np.linalg.norm(My - lam * y) < tol:
            converged = True
            break
    return lam, dis * y, converged


def _scan_threshold_cuts(W: np.ndarray, order: np.ndarray):
    """Ncut of every prefix split of ``order``; entry k splits after position k."""
    Wp = W[np.ix_(order, order)]
    d = Wp.sum(axis=1)
    assoc_a = np.cumsum(d)[:-1]
    total = d.sum()
    assoc_b = total - assoc_a
    inner = np.cumsum(2.0 * np.tril(Wp, -1).sum(axis=1) + np.diag(Wp))[:-1]
    cut = np.maximum(assoc_a - inner, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = cut / assoc_a + cut / assoc_b
    val[(assoc_a <= 0) | (assoc_b <= 0)] = np.inf
    return val


def spectral_split(W: np.ndarray):
    """Best threshold cut of the Fiedler ordering: ``(ncut, in_a mask)``."""
    _, x, _ = fiedler_vector(W)
    order = np.argsort(x, kind="stable")
    vals = _scan_threshold_cuts(W, order)
    k = int(np.argmin(vals))
    in_a = np.zeros(W.shape[0], dtype=bool)
    in_a[order[:k + 1]] = True
    return float(vals[k]), in_a


def ncut_parts(rag: Rag, threshold: float = 0.1, min_part_voxels: int = 27) -> list[np.ndarray]:
    """Recursive two-way normalized cuts; returns node-index arrays, one per part.

    Disconnected pieces of the graph are separated first (a free split with
    Ncut 0).  A spectral split is accepted only if its Ncut is below
    ``threshold`` and both sides hold at least ``min_part_voxels`` voxels.
    """
    W = rag.dense()
    counts = np.asarray(rag.voxel_count)
    parts = []
    stack = [np.arange(rag.n)]
    while stack:
        nodes = stack.pop()
        if nodes.size == 0:
            continue
        sub = W[np.ix_(nodes, nodes)]
        n_cc, cc = connected_components(coo_matrix(sub > 0), directed=False)
        if n_cc > 1:
            for c in range(n_cc - 1, -1, -1):
                stack.append(nodes[cc == c])
            continue
        if nodes.size == 1:
            parts.append(nodes)
            continue
        val, in_a = spectral_split(sub)
        if (val < threshold and counts[nodes[in_a]].sum() >= min_part_voxels
                and counts[nodes[~in_a]].sum() >= min_part_voxels):
            stack.append(nodes[~in_a])
            stack.append(nodes[in_a])
        else:
            parts.append(nodes)
    return [np.sort(p) for p in parts]


def ncut_partition(rag: Rag, sv: SupervoxelSet, bag_id: str = "", threshold: float = 0.1,
                   min_part_voxels: int = 27, volume: Volume | None = None) -> list[CandidateBlob]:
    """Partition the graph and turn each part into blobs (one per 26-connected piece)."""
    lab = sv.labels.labels
    dims = lab.shape
    flat = lab.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(np.bincount(flat, minlength=rag.n + 1))])
    data = None if volume is None else volume.data.ravel()
    blobs = []
    for part in ncut_parts(rag, threshold, min_part_voxels):
        vox = np.concatenate([order[bounds[k + 1]:bounds[k + 2]] for k in part])
        vox.sort()
        mask = np.zeros(flat.size, dtype=bool)
        mask[vox] = True
        cc, n = ndimage.label(mask.reshape(dims), structure=np.ones((3, 3, 3), dtype=bool))
        pieces = [vox] if n == 1 else [np.flatnonzero(cc.ravel() == c) for c in range(1, n + 1)]
        for p in pieces:
            mean = float(np.mean(data[p], dtype=np.float64)) if data is not None else float("nan")
            blobs.append(CandidateBlob(bag_id, p.astype(np.int64), dims, mean))
    blobs.sort(key=lambda b: int(b.voxels[0]))
    return blobs


# ---------------------------------------------------------------------------
# the full Stage I segmenter


@dataclass(frozen=True)
class Stage1Params:
    at: AtParams = field(default_factory=AtParams)
    slic: SlicParams = field(default_factory=SlicParams)
    global_range: tuple[float, float] = GLOBAL_RANGE_MHU
    ncut_threshold: float = 0.1
    min_part_voxels: int = 27

    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:12]


@dataclass(frozen=True, eq=False)
class Stage1Result:
    blobs: list
    supervoxels: SupervoxelSet
    rag: Rag


def run_stage1(vol: Volume, params: Stage1Params = Stage1Params(), bag_id: str = "") -> Stage1Result:
    """Smooth, over-segment, filter by density and cut into candidate blobs."""
    at = at_smooth(vol, params.at)
    sv = filter_supervoxels(slic3d(at.u, params.slic), params.global_range)
    sigma = params.global_range[1] - params.global_range[0]
    rag = build_rag(sv, at.v, sigma, u=at.u)
    blobs = ncut_partition(rag, sv, bag_id, params.ncut_threshold, params.min_part_voxels, volume=vol)
    log.debug("bag %s: %d retained supervoxels, %d blobs", bag_id, sv.n, len(blobs))
    return Stage1Result(blobs, sv, rag)


def blobs_to_labels(blobs, dims, spacing) -> LabelMap:
    lab = np.zeros(int(np.prod(dims)), dtype=np.uint32)
    for k, b in enumerate(blobs, 1):
        lab[b.voxels] = k
    return LabelMap(lab.reshape(dims), spacing)


def labels_to_blobs(lab: LabelMap, bag_id: str, volume: Volume | None = None) -> list[CandidateBlob]:
    flat = lab.labels.ravel()
    n = lab.n_labels
    order = np.argsort(flat, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(np.bincount(flat, minlength=n + 1))])
    data = None if volume is None else volume.data.ravel()
    out = []
    for k in range(1, n + 1):
        vox = np.sort(order[bounds[k]:bounds[k + 1]]).astype(np.int64)
        mean = float(np.mean(data[vox], dtype=np.float64)) if data is not None else float("nan")
        out.append(CandidateBlob(bag_id, vox, lab.dims, mean))
    return out
