"""Per-blob features: mass, normalized density histogram and 3D thickness vector."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .supervoxel import GLOBAL_RANGE_MHU
from .volume import Volume, voxel_mass

N_BINS = 100
HIST_WEIGHT = 0.005  # 0.5 / 100
THICK_WEIGHT = 0.167  # 0.5 / 3, printed value
N_FEATURES = N_BINS + 3
_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class BlobFeatures:
    mass_g: float
    hist: np.ndarray
    thickness_vec: np.ndarray
    physical_thickness_mm: float
    mean_mhu: float
    median_mhu: float
    n_voxels: int


def _voxels(blob, vol: Volume) -> np.ndarray:
    vox = np.asarray(blob.voxels if hasattr(blob, "voxels") else blob, dtype=np.int64)
    if vox.size == 0:
        raise ValueError("empty blob")
    n = int(np.prod(vol.dims))
    if vox.min() < 0 or vox.max() >= n:
        raise IndexError(f"blob voxel index outside volume of {n} voxels")
    return vox


def blob_mass(blob, vol: Volume) -> float:
    """Sum of voxel densities times voxel volume, in grams."""
    vox = _voxels(blob, vol)
    return voxel_mass(vol.data.ravel()[vox], vol.voxel_volume_cm3)


def density_histogram(values, global_range=GLOBAL_RANGE_MHU, n_bins: int = N_BINS) -> np.ndarray:
    """Fraction of voxels per uniform bin; out-of-range values clamp to the end bins."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("empty blob")
    lo, hi = global_range
    width = (hi - lo) / n_bins
    idx = np.clip(np.floor((values - lo) / width), 0, n_bins - 1).astype(np.int64)
    return np.bincount(idx, minlength=n_bins) / values.size


def _principal_axes(idx: np.ndarray, spacing) -> np.ndarray:
    """Unit principal axes (columns) of the voxel cloud, in mm space.

    The covariance is accumulated in integers so lattice symmetries of the
    blob map onto the matrix exactly; axes within 1e-9 of a grid axis are
    snapped onto it and each axis is signed so its largest component is
    positive.
    """
    n = idx.shape[0]
    s1 = idx.sum(axis=0)
    s2 = idx.T @ idx
    c = n * s2 - np.outer(s1, s1)  # n^2 * covariance in voxel units, exact
    sp = np.asarray(spacing, dtype=np.float64)
    cov = c.astype(np.float64) * np.outer(sp, sp)
    _, vecs = np.linalg.eigh(cov)
    out = np.empty((3, 3))
    for k in range(3):
        e = vecs[:, k]
        a = int(np.argmax(np.abs(e)))
        if abs(e[a]) > 1.0 - _SNAP:
            e = np.zeros(3)
            e[a] = 1.0
        elif e[a] < 0:
            e = -e
        out[:, k] = e
    return out


@numba.njit(cache=True)
def _longest_runs(occ, origins, e, h, sp, n_steps):
    # ray r samples origins[r] + k*h*e (mm); the nearest voxel decides occupancy
    nx, ny, nz = occ.shape
    out = np.zeros(origins.shape[0])
    for r in range(origins.shape[0]):
        best = 0
        run = 0
        for k in range(-n_steps, n_steps + 1):
            x = origins[r, 0] + k * h * e[0]
            y = origins[r, 1] + k * h * e[1]
            z = origins[r, 2] + k * h * e[2]
            i = int(np.floor(x / sp[0] + 0.5))
            j = int(np.floor(y / sp[1] + 0.5))
            l = int(np.floor(z / sp[2] + 0.5))
            if 0 <= i < nx and 0 <= j < ny and 0 <= l < nz and occ[i, j, l]:
                run += 1
                if run > best:
                    best = run
            else:
                run = 0
        out[r] = best * h
    return out


def _axis_median(idx, occ, e, spacing) -> float:
    sp = np.asarray(spacing, dtype=np.float64)
    h = float(sp.min())
    pts = idx * sp
    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    rel = pts - center
    # one ray per distinct line: drop the component along e, phase the samples from the box centre
    perp = rel - np.outer(rel @ e, e)
    key = np.round(perp, 6)
    _, first = np.unique(key, axis=0, return_index=True)
    origins = perp[np.sort(first)] + center
    extent = float(np.linalg.norm(np.asarray(occ.shape) * sp))
    n_steps = int(np.ceil(extent / h)) + 1
    runs = _longest_runs(occ, origins, np.ascontiguousarray(e), h, sp, n_steps)
    return float(np.median(runs))


def thickness_vector(blob, dims_or_vol, spacing=None):
    """Median longest-chord length along each principal axis.

    Returns ``(vec, physical_thickness_mm)`` where ``vec`` holds the three
    medians sorted descending and divided by the largest, and the physical
    thickness is the smallest median in mm.  Degenerate (flat or linear)
    blobs need no special casing: chords across a flat axis are one sample long.
    """
    if isinstance(dims_or_vol, Volume):
        dims, spacing = dims_or_vol.dims, dims_or_vol.spacing_mm
    else:
        dims = tuple(dims_or_vol)
    if spacing is None:
        raise ValueError("spacing required")
    if isinstance(blob, np.ndarray) and blob.dtype == bool:
        vox = np.flatnonzero(blob.ravel())
        dims = blob.shape
    else:
        vox = np.asarray(blob.voxels if hasattr(blob, "voxels") else blob, dtype=np.int64)
    if vox.size == 0:
        raise ValueError("empty blob")
    idx = np.stack(np.unravel_index(vox, dims), axis=1).astype(np.int64)
    lo = idx.min(axis=0)
    idx = idx - lo
    occ = np.zeros(tuple(idx.max(axis=0) + 1), dtype=np.bool_)
    occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    axes = _principal_axes(idx, spacing)
    med = np.array([_axis_median(idx, occ, axes[:, k], spacing) for k in range(3)])
    med = np.sort(med)[::-1]
    return med / med[0], float(med[-1])


def extract_features(blob, vol: Volume) -> BlobFeatures:
    vox = _voxels(blob, vol)
    vals = vol.data.ravel()[vox]
    vec, phys = thickness_vector(vox, vol.dims, vol.spacing_mm)
    return BlobFeatures(
        mass_g=voxel_mass(vals, vol.voxel_volume_cm3),
        hist=density_histogram(vals),
        thickness_vec=vec,
        physical_thickness_mm=phys,
        mean_mhu=float(np.mean(vals, dtype=np.float64)),
        median_mhu=float(np.median(vals)),
        n_voxels=int(vox.size),
    )


def assemble_feature(f: BlobFeatures, thickness_active: bool = True) -> np.ndarray:
    out = np.empty(N_FEATURES)
    out[:N_BINS] = np.asarray(f.hist) * HIST_WEIGHT
    out[N_BINS:] = np.asarray(f.thickness_vec) * THICK_WEIGHT if thickness_active else 0.0
    return out


def set_thickness_active(X: np.ndarray, active: bool) -> np.ndarray:
    """Copy of stored vectors (thickness active) with the thickness block kept or zeroed."""
    X = np.array(X, dtype=np.float64)
    if not active:
        X[:, N_BINS:] = 0.0
    return X


# ---------------------------------------------------------------------------
# feature corpus file

_FIXED_COLS = ["bag_id", "blob_id", "label", "mass_g", "physical_thickness_mm", "median_mhu"]
FEATURE_COLS = [f"f{k:03d}" for k in range(N_FEATURES)]


@dataclass(frozen=True, eq=False)
class FeatureCorpus:
    """One row per Stage I blob; ``label`` is the matched ground-truth id (0 = stray)."""

    bag_id: np.ndarray
    blob_id: np.ndarray
    label: np.ndarray
    mass_g: np.ndarray
    physical_thickness_mm: np.ndarray
    median_mhu: np.ndarray
    X: np.ndarray  # thickness block active

    def __len__(self):
        return int(self.label.size)

    def subset(self, mask) -> "FeatureCorpus":
        mask = np.asarray(mask)
        return FeatureCorpus(self.bag_id[mask], self.blob_id[mask], self.label[mask], self.mass_g[mask],
                             self.physical_thickness_mm[mask], self.median_mhu[mask], self.X[mask])

    @staticmethod
    def from_rows(rows) -> "FeatureCorpus":
        """rows: iterable of (bag_id, blob_id, label, BlobFeatures)."""
        rows = list(rows)
        return FeatureCorpus(
            np.array([r[0] for r in rows], dtype=object),
            np.array([r[1] for r in rows], dtype=np.int64),
            np.array([r[2] for r in rows], dtype=np.int64),
            np.array([r[3].mass_g for r in rows], dtype=np.float64),
            np.array([r[3].physical_thickness_mm for r in rows], dtype=np.float64),
            np.array([r[3].median_mhu for r in rows], dtype=np.float64),
            np.array([assemble_feature(r[3], True) for r in rows]).reshape(len(rows), N_FEATURES),
        )

    @staticmethod
    def concat(parts) -> "FeatureCorpus":
        parts = list(parts)
        return FeatureCorpus(*[np.concatenate([getattr(p, f) for p in parts]) for f in
                               ("bag_id", "blob_id", "label", "mass_g", "physical_thickness_mm", "median_mhu", "X")])


def save_corpus(c: FeatureCorpus, path) -> None:
    lines = ["\t".join(_FIXED_COLS + FEATURE_COLS)]
    for i in range(len(c)):
        fixed = [str(c.bag_id[i]), str(int(c.blob_id[i])), str(int(c.label[i])),
                 repr(float(c.mass_g[i])), repr(float(c.physical_thickness_mm[i])), repr(float(c.median_mhu[i]))]
        lines.append("\t".join(fixed + [repr(float(x)) for x in c.X[i]]))
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_corpus(path) -> FeatureCorpus:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split("\t") != _FIXED_COLS + FEATURE_COLS:
        raise ValueError(f"{path}: bad feature corpus header")
    rows = [ln.split("\t") for ln in lines[1:] if ln]
    for k, r in enumerate(rows, 2):
        if len(r) != len(_FIXED_COLS) + N_FEATURES:
            raise ValueError(f"{path}:{k}: expected {len(_FIXED_COLS) + N_FEATURES} fields, got {len(r)}")
    n = len(rows)
    num = np.array([[float(x) for x in r[3:]] for r in rows], dtype=np.float64).reshape(n, 3 + N_FEATURES)
    return FeatureCorpus(
        np.array([r[0] for r in rows], dtype=object),
        np.array([int(r[1]) for r in rows], dtype=np.int64),
        np.array([int(r[2]) for r in rows], dtype=np.int64),
        num[:, 0].copy(), num[:, 1].copy(), num[:, 2].copy(), num[:, 3:].copy(),
    )
