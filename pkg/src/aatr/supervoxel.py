"""3D SLIC over-segmentation and density filtering of supervoxels."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .volume import LabelMap, Volume

GLOBAL_RANGE_MHU = (380.0, 2470.0)
INTENSITY_SCALE = 10.0  # MHU per unit of colour distance
_STRUCT26 = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True)
class SlicParams:
    n_segments: int = 1000
    compactness: float = 40.0
    max_iters: int = 10
    perturb_seeds: bool = True

    def __post_init__(self):
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        if not self.compactness > 0:
            raise ValueError("compactness must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True, eq=False)
class SupervoxelSet:
    """Supervoxel label map (ids 1..K, 0 = discarded) with per-id stats.

    ``counts[k - 1]``, ``mean_mhu[k - 1]`` and ``centroid_mm[k - 1]`` describe
    supervoxel ``k``.
    """

    labels: LabelMap
    counts: np.ndarray
    mean_mhu: np.ndarray
    centroid_mm: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.size)


@numba.njit(cache=True)
def _assign(img, centers, S, m, labels, dist):
    nx, ny, nz = img.shape
    w = (m / S) ** 2
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                dist[i, j, k] = np.inf
    for c in range(centers.shape[0]):
        ci, cx, cy, cz = centers[c, 0], centers[c, 1], centers[c, 2], centers[c, 3]
        x0 = max(0, int(np.floor(cx - S)))
        x1 = min(nx - 1, int(np.ceil(cx + S)))
        y0 = max(0, int(np.floor(cy - S)))
        y1 = min(ny - 1, int(np.ceil(cy + S)))
        z0 = max(0, int(np.floor(cz - S)))
        z1 = min(nz - 1, int(np.ceil(cz + S)))
        for i in range(x0, x1 + 1):
            dx2 = (i - cx) ** 2
            for j in range(y0, y1 + 1):
                dxy2 = dx2 + (j - cy) ** 2
                for k in range(z0, z1 + 1):
                    dc = img[i, j, k] - ci
                    d = dc * dc + (dxy2 + (k - cz) ** 2) * w
                    if d < dist[i, j, k]:
                        dist[i, j, k] = d
                        labels[i, j, k] = c


def _grid_centers(shape, n_segments):
    n_vox = int(np.prod(shape))
    S = (n_vox / n_segments) ** (1.0 / 3.0)
    if n_segments == 1:
        counts = [1, 1, 1]
    else:
        counts = [max(1, int(round(d / S))) for d in shape]
    axes = [(np.arange(c) + 0.5) * d / c - 0.5 for c, d in zip(counts, shape)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1), S


def _perturb(img, pos):
    gsq = sum(g ** 2 for g in np.gradient(img)) if min(img.shape) > 1 else np.zeros_like(img)
    out = pos.copy()
    shape = np.array(img.shape)
    for c, p in enumerate(np.rint(pos).astype(int)):
        lo = np.maximum(p - 1, 0)
        hi = np.minimum(p + 2, shape)
        win = gsq[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        off = np.unravel_index(int(np.argmin(win)), win.shape)
        out[c] = lo + np.array(off)
    return out


def _enforce_connectivity(labels: np.ndarray, min_size: float) -> np.ndarray:
    """Split labels into 26-connected components and absorb the orphans.

    An orphan is any component that is not the largest piece of its label, or
    a largest piece smaller than ``min_size``.  Orphans are merged (smallest
    first) into the neighbouring component with which they share the most
    voxel contacts; ties go to the lowest component id.
    """
    comp = np.zeros(labels.shape, dtype=np.int64)
    sizes = [0]
    keeper = [False]
    bboxes = [None]
    n_lab = int(labels.max()) + 1
    for lab, sl in enumerate(ndimage.find_objects(labels + 1, max_label=n_lab)):
        if sl is None:
            continue
        sub = labels[sl] == lab
        cc, n = ndimage.label(sub, structure=_STRUCT26)
        base = len(sizes)
        comp[sl][sub] = cc[sub] + (base - 1)
        csz = np.bincount(cc[sub], minlength=n + 1)[1:]
        big = int(np.argmax(csz))
        for i in range(n):
            sizes.append(int(csz[i]))
            keeper.append(i == big)
        sub_objs = ndimage.find_objects(cc)
        for s in sub_objs:
            bboxes.append(tuple(slice(a.start + o.start, a.stop + o.start) for a, o in zip(s, sl)))
    n_comp = len(sizes) - 1
    if n_comp <= 1:
        return (comp - 1).astype(np.int64)
    shape = labels.shape
    orphans = [c for c in range(1, n_comp + 1) if not keeper[c] or sizes[c] < min_size]
    orphans.sort(key=lambda c: (sizes[c], c))
    cur_size = list(sizes)
    for c in orphans:
        if keeper[c] and cur_size[c] >= min_size:
            continue
        sl = bboxes[c]
        lo = [max(0, s.start - 1) for s in sl]
        hi = [min(shape[a], sl[a].stop + 1) for a in range(3)]
        box = tuple(slice(l, h) for l, h in zip(lo, hi))
        local = comp[box]
        mine = local == c
        if not mine.any():
            continue
        ring = ndimage.binary_dilation(mine, structure=_STRUCT26) & ~mine
        nbrs = local[ring]
        if nbrs.size == 0:
            continue
        ids, cnt = np.unique(nbrs, return_counts=True)
        target = int(ids[np.argmax(cnt)])  # unique() sorts, so ties pick the lowest id
        local[mine] = target
        cur_size[target] += cur_size[c]
        cur_size[c] = 0
        # grow the target's bbox to cover the absorbed voxels
        tb = bboxes[target]
        bboxes[target] = tuple(slice(min(a.start, b.start), max(a.stop, b.stop)) for a, b in zip(tb, sl))
    _, inverse = np.unique(comp, return_inverse=True)
    return inverse.reshape(shape).astype(np.int64)


def _stats(lab: np.ndarray, values: np.ndarray, spacing, n: int):
    flat = lab.ravel()
    counts = np.bincount(flat, minlength=n + 1)[1:].astype(np.int64)
    sums = np.bincount(flat, weights=values.ravel().astype(np.float64), minlength=n + 1)[1:]
    idx = np.indices(lab.shape).reshape(3, -1).astype(np.float64)
    cent = np.stack([np.bincount(flat, weights=idx[a] * spacing[a], minlength=n + 1)[1:] for a in range(3)], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sums / counts
        cent = cent / counts[:, None]
    return counts, mean, cent


def supervoxel_set(labels: np.ndarray, values: Volume) -> SupervoxelSet:
    """Wrap a label array (ids 1..K, 0 = background) with stats from ``values``."""
    n = int(labels.max())
    counts, mean, cent = _stats(labels, values.data, values.spacing_mm, n)
    return SupervoxelSet(LabelMap(labels.astype(np.uint32), values.spacing_mm), counts, mean, cent)


def slic3d(u: Volume, params: SlicParams = SlicParams()) -> SupervoxelSet:
    """SLIC in joint (intensity, x, y, z) space.

    Distance is ``sqrt(dc^2 + (ds/S)^2 m^2)`` with ``dc`` in MHU/10, ``ds`` in
    voxels and ``S = (N / n_segments)^(1/3)``.  A post-pass makes every
    supervoxel a single 26-connected component.
    """
    img = np.asarray(u.data, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("volume contains non-finite values")
    if params.n_segments > img.size:
        raise ValueError(f"n_segments={params.n_segments} exceeds voxel count {img.size}")
    img = img / INTENSITY_SCALE
    pos, S = _grid_centers(img.shape, params.n_segments)
    if params.perturb_seeds:
        pos = _perturb(img, pos)
    ip = np.clip(np.rint(pos).astype(int), 0, np.array(img.shape) - 1)
    centers = np.column_stack([img[ip[:, 0], ip[:, 1], ip[:, 2]], pos]).astype(np.float64)

    labels = np.zeros(img.shape, dtype=np.int64)
    dist = np.empty(img.shape, dtype=np.float64)
    coords = np.indices(img.shape).reshape(3, -1).astype(np.float64)
    flat_img = img.ravel()
    prev = None
    for _ in range(params.max_iters):
        _assign(img, centers, float(S), float(params.compactness), labels, dist)
        flat = labels.ravel()
        if prev is not None and np.array_equal(flat, prev):
            break
        prev = flat.copy()
        k = centers.shape[0]
        cnt = np.bincount(flat, minlength=k).astype(np.float64)
        alive = cnt > 0
        new = centers.copy()
        new[alive, 0] = np.bincount(flat, weights=flat_img, minlength=k)[alive] / cnt[alive]
        for a in range(3):
            new[alive, a + 1] = np.bincount(flat, weights=coords[a], minlength=k)[alive] / cnt[alive]
        centers = new

    comp = _enforce_connectivity(labels, S ** 3 / 8.0)
    return supervoxel_set(comp + 1, u)


def filter_supervoxels(sv: SupervoxelSet, global_range=GLOBAL_RANGE_MHU) -> SupervoxelSet:
    """Keep supervoxels whose mean MHU lies in ``global_range`` (inclusive).

    Retained ids are renumbered 1..K' in their original order; discarded
    voxels become background.
    """
    lo, hi = global_range
    keep = (sv.mean_mhu >= lo) & (sv.mean_mhu <= hi)
    remap = np.zeros(sv.n + 1, dtype=np.uint32)
    remap[1:][keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.uint32)
    new_labels = remap[sv.labels.labels]
    return SupervoxelSet(LabelMap(new_labels, sv.labels.spacing_mm),
                         sv.counts[keep].copy(), sv.mean_mhu[keep].copy(), sv.centroid_mm[keep].copy())
