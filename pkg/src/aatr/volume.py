"""Volumetric data types, density calibration, bag phantoms and file I/O.

Volumes hold Modified Hounsfield Units (HU + 1000, so air is 0 and water is
1000).  Arrays are stored C-ordered with shape ``(nx, ny, nz)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, signal

log = logging.getLogger(__name__)

WATER_MHU = 1000.0


class VolumeFormatError(ValueError):
    """Raised when a volume, label map or manifest file cannot be parsed."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or not all(math.isfinite(s) and s > 0 for s in spacing):
        raise ValueError(f"spacing must be three positive reals, got {spacing}")
    return spacing


@dataclass(frozen=True, eq=False)
class Volume:
    """A dense 3D grid of MHU values with physical voxel spacing in mm."""

    data: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ValueError(f"volume data must be a non-empty 3D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume contains non-finite values")
        if np.any(data < 0):
            raise ValueError("MHU values must be non-negative")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing_mm
        return sx * sy * sz

    @property
    def voxel_volume_cm3(self) -> float:
        return self.voxel_volume_mm3 / 1000.0

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (self.spacing_mm == other.spacing_mm
                and self.dims == other.dims
                and np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Integer labels per voxel; 0 is background and ids are contiguous."""

    labels: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise ValueError(f"label data must be a non-empty 3D array, got shape {labels.shape}")
        if labels.dtype.kind not in "ui":
            raise ValueError("labels must be integers")
        if labels.dtype.kind == "i" and labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        labels = labels.astype(np.uint32)
        present = np.unique(labels)
        present = present[present > 0]
        if present.size and present[-1] != present.size:
            raise ValueError("label ids are not contiguous")
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(self, "spacing_mm", _check_spacing(self.spacing_mm))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.labels.shape)

    @property
    def n_labels(self) -> int:
        return int(self.labels.max())

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (self.spacing_mm == other.spacing_mm
                and self.dims == other.dims
                and np.array_equal(self.labels, other.labels))

    __hash__ = None


def mhu_to_density(mhu):
    """Mass density in g/cm^3 for an MHU value (or array); water maps to 1.0."""
    arr = np.asarray(mhu, dtype=np.float64)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("MHU values must be finite and non-negative")
    rho = arr / WATER_MHU
    return float(rho) if rho.ndim == 0 else rho


def voxel_mass(values, voxel_volume_cm3: float) -> float:
    """Mass in grams of a set of voxel MHU values.

    Shared by the phantom manifest and by blob feature extraction so the two
    agree bit-for-bit on ground-truth objects.
    """
    rho = mhu_to_density(np.asarray(values, dtype=np.float64).ravel())
    return float(np.sum(rho) * voxel_volume_cm3)


# ---------------------------------------------------------------------------
# phantoms


@dataclass(frozen=True)
class MaterialDef:
    name: str
    density_range_mhu: tuple[float, float]
    is_target: bool

    def __post_init__(self):
        lo, hi = (float(x) for x in self.density_range_mhu)
        if not (0 <= lo < hi <= 4000):
            raise ValueError(f"material {self.name!r}: need 0 <= lo < hi <= 4000, got {(lo, hi)}")
        object.__setattr__(self, "density_range_mhu", (lo, hi))


DEFAULT_MATERIALS = (
    MaterialDef("saline", (1050.0, 1215.0), True),
    MaterialDef("rubber", (1170.0, 1290.0), True),
    MaterialDef("clay", (1530.0, 1715.0), True),
    MaterialDef("organic", (400.0, 900.0), False),
    MaterialDef("dense", (1800.0, 2400.0), False),
)


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for one synthetic bag.

    Count ranges are inclusive ``(lo, hi)``.  Heavy and light bulk target
    masses are drawn from their band lists (band first, then uniform within
    the band); the bands leave gaps so no object sits right on a common mass
    threshold.  Sheets are axis-aligned slabs ``sheet_thickness_voxels``
    thick, optionally folded once into two layers.
    """

    dims: tuple[int, int, int] = (64, 64, 64)
    spacing_mm: tuple[float, float, float] = (2.0, 2.0, 2.0)
    n_heavy: tuple[int, int] = (1, 2)
    n_bulk: tuple[int, int] = (1, 2)
    n_sheet: tuple[int, int] = (5, 7)
    n_clutter: tuple[int, int] = (2, 3)
    materials: tuple[MaterialDef, ...] = DEFAULT_MATERIALS
    noise_sigma_mhu: float = 20.0
    streak_artifact_level: float = 0.0
    seed: int = 0
    heavy_mass_bands_g: tuple[tuple[float, float], ...] = ((315.0, 375.0), (425.0, 475.0))
    bulk_mass_bands_g: tuple[tuple[float, float], ...] = ((20.0, 75.0), (115.0, 200.0))
    clutter_volume_cm3: tuple[float, float] = (8.0, 60.0)
    sheet_thickness_voxels: tuple[int, ...] = (2, 3, 4)
    sheet_extent_mm: tuple[float, float] = (40.0, 48.0)
    fold_probability: float = 0.15
    clutter_sheet_probability: float = 0.25
    min_gap_voxels: int = 2
    margin_voxels: int = 1
    max_retries: int = 40

    def __post_init__(self):
        for name in ("n_heavy", "n_bulk", "n_sheet", "n_clutter"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi, got {(lo, hi)}")
        if not self.materials:
            raise ValueError("at least one material must be defined")
        if self.noise_sigma_mhu < 0 or self.streak_artifact_level < 0:
            raise ValueError("noise and streak levels must be >= 0")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("dims must be three positive integers")
        _check_spacing(self.spacing_mm)
        if not 0 <= self.fold_probability <= 1:
            raise ValueError("fold_probability must lie in [0, 1]")


@dataclass(frozen=True)
class ObjectRecord:
    label: int
    material: str
    is_target: bool
    mass_g: float
    thickness_mm: float
    shape: str  # "bulk" | "sheet"


@dataclass(frozen=True)
class ObjectManifest:
    objects: tuple[ObjectRecord, ...] = ()
    dropped: tuple[str, ...] = field(default=(), compare=False)

    def __len__(self):
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def by_label(self) -> dict[int, ObjectRecord]:
        return {o.label: o for o in self.objects}


@dataclass
class _Placement:
    material: MaterialDef
    value: float
    shape: str
    kind: str  # ellipsoid | box | slab
    extents_vox: tuple  # full extents in voxels (float for ellipsoid/box)
    thickness_mm: float
    folded: bool = False
    normal_axis: int = 0


def _ellipsoid_mask(semi):
    r = [int(math.ceil(a)) for a in semi]
    grids = np.ogrid[-r[0]:r[0] + 1, -r[1]:r[1] + 1, -r[2]:r[2] + 1]
    q = sum((g / a) ** 2 for g, a in zip(grids, semi))
    return q <= 1.0


def _shape_mask(p: _Placement) -> np.ndarray:
    if p.kind == "ellipsoid":
        mask = _ellipsoid_mask([e / 2.0 for e in p.extents_vox])
    elif p.kind == "box":
        mask = np.ones([max(1, int(round(e))) for e in p.extents_vox], dtype=bool)
    else:
        lat = [max(1, int(round(e))) for e in p.extents_vox]
        k = int(p.extents_vox[p.normal_axis])
        if p.folded:
            # two layers separated by a one-voxel air gap
            shape = list(lat)
            shape[p.normal_axis] = 2 * k + 1
            mask = np.ones(shape, dtype=bool)
            sl = [slice(None)] * 3
            sl[p.normal_axis] = slice(k, k + 1)
            mask[tuple(sl)] = False
        else:
            shape = list(lat)
            shape[p.normal_axis] = k
            mask = np.ones(shape, dtype=bool)
    # drop empty border planes left by the ellipsoid rasterisation
    nz = np.nonzero(mask)
    return mask[tuple(slice(a.min(), a.max() + 1) for a in nz)]


def _draw_bulk(rng, mat, mass_g, spacing, min_ratio=0.55, shape_kind=None):
    value = float(rng.uniform(*mat.density_range_mhu))
    vox_mm3 = float(np.prod(spacing))
    n_vox = mass_g / (value / 1000.0) * 1000.0 / vox_mm3  # cm^3 -> mm^3 -> voxels
    ratios = np.sort(rng.uniform(min_ratio, 1.0, size=2))[::-1]
    kind = shape_kind or ("ellipsoid" if rng.random() < 0.5 else "box")
    rel = np.array([1.0, ratios[0], ratios[1]])
    if kind == "ellipsoid":
        big = (6.0 * n_vox / (math.pi * rel.prod())) ** (1.0 / 3.0)
    else:
        big = (n_vox / rel.prod()) ** (1.0 / 3.0)
    extents = rng.permutation(rel * big)
    min_extent_vox = float(extents.min())
    return _Placement(mat, value, "bulk", kind, tuple(float(e) for e in extents),
                      thickness_mm=min_extent_vox * min(spacing))


def _draw_sheet(rng, mat, spec: PhantomSpec):
    value = float(rng.uniform(*mat.density_range_mhu))
    k = int(rng.choice(spec.sheet_thickness_voxels))
    s = min(spec.spacing_mm)
    lat = rng.uniform(*spec.sheet_extent_mm, size=2) / s
    normal = int(rng.integers(3))
    folded = bool(rng.random() < spec.fold_probability)
    if folded:
        lat[0] = lat[0] / 2.0
    extents = [0.0, 0.0, 0.0]
    others = [a for a in range(3) if a != normal]
    extents[others[0]], extents[others[1]] = float(lat[0]), float(lat[1])
    extents[normal] = float(k)
    return _Placement(mat, value, "sheet", "slab", tuple(extents), thickness_mm=k * s,
                      folded=folded, normal_axis=normal)


def _find_corner(rng, forbidden, mask, margin, room, retries):
    """Random corner where ``mask`` avoids ``forbidden``; None if there is no room.

    Cheap random probing first, then an exhaustive FFT feasibility map so an
    object is only dropped when the bag genuinely has no space for it.
    """
    for _ in range(retries):
        corner = [margin + int(rng.integers(0, room[a] + 1)) for a in range(3)]
        sl = tuple(slice(c, c + s) for c, s in zip(corner, mask.shape))
        if not np.any(forbidden[sl] & mask):
            return corner
    inner = forbidden[tuple(slice(margin, margin + r + s) for r, s in zip(room, mask.shape))]
    hits = signal.correlate(inner.astype(np.float32), mask.astype(np.float32), mode="valid", method="fft")
    free = np.argwhere(hits < 0.5)
    if free.size == 0:
        return None
    pick = free[int(rng.integers(len(free)))]
    corner = [margin + int(c) for c in pick]
    sl = tuple(slice(c, c + s) for c, s in zip(corner, mask.shape))
    if np.any(forbidden[sl] & mask):  # fft round-off guard
        return None
    return corner


def _add_streaks(data, rng, level, spacing):
    nx, ny, nz = data.shape
    xs = np.arange(nx)[:, None] * spacing[0]
    ys = np.arange(ny)[None, :] * spacing[1]
    for _ in range(3):
        theta = rng.uniform(0, math.pi)
        px, py = rng.uniform(0, nx * spacing[0]), rng.uniform(0, ny * spacing[1])
        dist = np.abs((xs - px) * math.sin(theta) - (ys - py) * math.cos(theta))
        width = 1.5 * spacing[0]
        sign = 1.0 if rng.random() < 0.5 else -1.0
        z0 = int(rng.integers(0, nz))
        z1 = min(nz, z0 + int(rng.integers(1, max(2, nz // 4))))
        data[:, :, z0:z1] += (sign * level * np.exp(-(dist / width) ** 2))[:, :, None]


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, LabelMap, ObjectManifest]:
    """Render a synthetic bag: volume, ground-truth labels and manifest.

    Deterministic in ``spec`` (including its seed).  Objects that cannot be
    placed within ``max_retries`` attempts are dropped and listed in
    ``manifest.dropped``.
    """
    rng = np.random.default_rng(spec.seed)
    spacing = tuple(float(s) for s in spec.spacing_mm)
    targets = [m for m in spec.materials if m.is_target]
    benign = [m for m in spec.materials if not m.is_target]

    plans: list[_Placement] = []
    n_heavy = int(rng.integers(spec.n_heavy[0], spec.n_heavy[1] + 1))
    n_bulk = int(rng.integers(spec.n_bulk[0], spec.n_bulk[1] + 1))
    n_sheet = int(rng.integers(spec.n_sheet[0], spec.n_sheet[1] + 1))
    n_clutter = int(rng.integers(spec.n_clutter[0], spec.n_clutter[1] + 1))
    if targets:
        for count, bands, ratio in ((n_heavy, spec.heavy_mass_bands_g, 0.8),
                                    (n_bulk, spec.bulk_mass_bands_g, 0.55)):
            for _ in range(count):
                mat = targets[int(rng.integers(len(targets)))]
                band = bands[int(rng.integers(len(bands)))]
                plans.append(_draw_bulk(rng, mat, float(rng.uniform(*band)), spacing, min_ratio=ratio))
        for _ in range(n_sheet):
            plans.append(_draw_sheet(rng, targets[int(rng.integers(len(targets)))], spec))
    pool = benign or list(spec.materials)
    for _ in range(n_clutter):
        mat = pool[int(rng.integers(len(pool)))]
        if rng.random() < spec.clutter_sheet_probability:
            plans.append(_draw_sheet(rng, mat, spec))
        else:
            volume_cm3 = float(rng.uniform(*spec.clutter_volume_cm3))
            mass = volume_cm3 * sum(mat.density_range_mhu) / 2000.0
            plans.append(_draw_bulk(rng, mat, mass, spacing))

    # large objects first: packing succeeds far more often
    order = sorted(range(len(plans)), key=lambda i: -float(np.prod(plans[i].extents_vox)))
    dims = tuple(int(d) for d in spec.dims)
    labels = np.zeros(dims, dtype=np.uint32)
    forbidden = np.zeros(dims, dtype=bool)
    ideal = np.zeros(dims, dtype=np.float32)
    placed: list[tuple[_Placement, int]] = []
    dropped = []
    m = spec.margin_voxels
    gap_struct = ndimage.generate_binary_structure(3, 3)
    for i in order:
        p = plans[i]
        mask = _shape_mask(p)
        room = [dims[a] - 2 * m - mask.shape[a] for a in range(3)]
        corner = _find_corner(rng, forbidden, mask, m, room, spec.max_retries) if min(room) >= 0 else None
        if corner is None:
            dropped.append(f"{p.material.name} {p.shape} extents_vox={tuple(round(e, 1) for e in p.extents_vox)}")
            continue
        sl = tuple(slice(c, c + s) for c, s in zip(corner, mask.shape))
        label = len(placed) + 1
        labels[sl][mask] = label
        ideal[sl][mask] = p.value
        g = spec.min_gap_voxels
        lo = [max(0, c - g) for c in corner]
        hi = [min(dims[a], corner[a] + mask.shape[a] + g) for a in range(3)]
        local = np.zeros([h - l for l, h in zip(lo, hi)], dtype=bool)
        off = [c - l for c, l in zip(corner, lo)]
        local[tuple(slice(o, o + s) for o, s in zip(off, mask.shape))] = mask
        if g > 0:
            local = ndimage.binary_dilation(local, structure=gap_struct, iterations=g)
        forbidden[tuple(slice(l, h) for l, h in zip(lo, hi))] |= local
        placed.append((p, label))
    if dropped:
        log.info("phantom seed %d: dropped %d object(s) after %d retries", spec.seed, len(dropped), spec.max_retries)

    data = ideal.astype(np.float64)
    if spec.streak_artifact_level > 0:
        _add_streaks(data, rng, spec.streak_artifact_level, spacing)
    if spec.noise_sigma_mhu > 0:
        data += rng.normal(0.0, spec.noise_sigma_mhu, size=dims)
    np.clip(data, 0.0, None, out=data)
    vol = Volume(data.astype(np.float32), spacing)
    lab = LabelMap(labels, spacing)

    flat_labels = lab.labels.ravel()
    flat_data = vol.data.ravel()
    order_idx = np.argsort(flat_labels, kind="stable")
    counts = np.bincount(flat_labels, minlength=len(placed) + 1)
    starts = np.concatenate([[0], np.cumsum(counts)])
    records = []
    for p, label in placed:
        idx = order_idx[starts[label]:starts[label + 1]]
        records.append(ObjectRecord(
            label=label,
            material=p.material.name,
            is_target=p.material.is_target,
            mass_g=voxel_mass(flat_data[idx], vol.voxel_volume_cm3),
            thickness_mm=float(p.thickness_mm),
            shape=p.shape,
        ))
    return vol, lab, ObjectManifest(tuple(records), tuple(dropped))


# ---------------------------------------------------------------------------
# file formats
#
#   AATRVOL 1                 (AATRLAB 1 for label maps)
#   dims <nx> <ny> <nz>
#   spacing <sx> <sy> <sz>
#   encoding float32-le       (uint32-le for label maps)
#   payload <nbytes>
#   <blank line, then raw C-ordered payload>

_FORMATS = {
    "volume": ("AATRVOL 1", "float32-le", np.dtype("<f4")),
    "labels": ("AATRLAB 1", "uint32-le", np.dtype("<u4")),
}


def _encode(kind: str, arr: np.ndarray, spacing) -> bytes:
    magic, enc, dtype = _FORMATS[kind]
    payload = np.ascontiguousarray(arr, dtype=dtype).tobytes()
    header = (f"{magic}\n"
              f"dims {arr.shape[0]} {arr.shape[1]} {arr.shape[2]}\n"
              f"spacing {' '.join(repr(float(s)) for s in spacing)}\n"
              f"encoding {enc}\n"
              f"payload {len(payload)}\n\n")
    return header.encode("ascii") + payload


def _decode(kind: str, raw: bytes):
    magic, enc, dtype = _FORMATS[kind]
    fields = {}
    pos = 0
    lines = []
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise VolumeFormatError("header", "unterminated header")
        line = raw[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if line == "":
            break
        if not lines and line != magic:
            raise VolumeFormatError("magic", f"expected {magic!r}, got {line[:40]!r}")
        lines.append(line)
        if len(lines) > 16:
            raise VolumeFormatError("header", "header too long")
    if not lines or lines[0] != magic:
        raise VolumeFormatError("magic", f"expected {magic!r}, got {lines[0] if lines else ''!r}")
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest.split()
    for key in ("dims", "spacing", "encoding", "payload"):
        if key not in fields:
            raise VolumeFormatError(key, "missing header field")
    try:
        dims = tuple(int(x) for x in fields["dims"])
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError
    except ValueError:
        raise VolumeFormatError("dims", f"invalid dims {fields['dims']}") from None
    try:
        spacing = tuple(float(x) for x in fields["spacing"])
        _check_spacing(spacing)
    except ValueError:
        raise VolumeFormatError("spacing", f"invalid spacing {fields['spacing']}") from None
    if fields["encoding"] != [enc]:
        raise VolumeFormatError("encoding", f"expected {enc}, got {' '.join(fields['encoding'])}")
    try:
        (nbytes,) = (int(x) for x in fields["payload"])
    except ValueError:
        raise VolumeFormatError("payload", f"invalid payload length {fields['payload']}") from None
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    body = raw[pos:]
    if nbytes != expected or len(body) != expected:
        raise VolumeFormatError("payload", f"payload size mismatch (header {nbytes}, dims imply {expected}, found {len(body)})")
    arr = np.frombuffer(body, dtype=dtype).reshape(dims)
    return arr, spacing


def _atomic_write(path: Path, blob: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def save_volume(vol: Volume, path) -> None:
    _atomic_write(Path(path), _encode("volume", vol.data, vol.spacing_mm))


def load_volume(path) -> Volume:
    arr, spacing = _decode("volume", Path(path).read_bytes())
    try:
        return Volume(arr.astype(np.float32), spacing)
    except ValueError as e:
        raise VolumeFormatError("payload", str(e)) from None


def save_labels(lab: LabelMap, path) -> None:
    _atomic_write(Path(path), _encode("labels", lab.labels, lab.spacing_mm))


def load_labels(path) -> LabelMap:
    arr, spacing = _decode("labels", Path(path).read_bytes())
    try:
        return LabelMap(arr.astype(np.uint32), spacing)
    except ValueError as e:
        raise VolumeFormatError("payload", str(e)) from None


def volume_roundtrip(vol: Volume, path) -> Volume:
    save_volume(vol, path)
    return load_volume(path)


_MANIFEST_COLUMNS = ("label", "material", "is_target", "mass_g", "thickness_mm", "shape")


def save_manifest(manifest: ObjectManifest, path) -> None:
    out = ["#" + "\t".join(_MANIFEST_COLUMNS)]
    for o in manifest.objects:
        out.append("\t".join([str(o.label), o.material, "1" if o.is_target else "0",
                              repr(o.mass_g), repr(o.thickness_mm), o.shape]))
    for d in manifest.dropped:
        out.append("#dropped\t" + d)
    _atomic_write(Path(path), ("\n".join(out) + "\n").encode("utf-8"))


def load_manifest(path) -> ObjectManifest:
    objects, dropped = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        if line.startswith("#dropped\t"):
            dropped.append(line.split("\t", 1)[1])
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != len(_MANIFEST_COLUMNS):
            raise VolumeFormatError(f"manifest line {lineno}", f"expected {len(_MANIFEST_COLUMNS)} fields, got {len(parts)}")
        try:
            objects.append(ObjectRecord(int(parts[0]), parts[1], parts[2] == "1",
                                        float(parts[3]), float(parts[4]), parts[5]))
        except ValueError as e:
            raise VolumeFormatError(f"manifest line {lineno}", str(e)) from None
    return ObjectManifest(tuple(objects), tuple(dropped))
