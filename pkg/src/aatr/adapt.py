"""ORS-driven retuning of Stage II: sample weighting, label derivation, target algebra, grid search."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureCorpus, set_thickness_active
from .forest import ForestParams, TrainedForest, predict_score, train_forest

log = logging.getLogger(__name__)

INF = math.inf


class OrsError(ValueError):
    kind = "ors error"


class UnknownKeyError(OrsError):
    kind = "unknown key"


class MissingKeyError(OrsError):
    kind = "missing key"


class InvertedRangeError(OrsError):
    kind = "inverted range"


class OrsValueError(OrsError):
    kind = "bad value"


class DegenerateLabeling(ValueError):
    pass


class AdaptationInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class Ors:
    density: tuple[float, float]
    mass: tuple[float, float] | None = None
    thickness: tuple[float, float] | None = None
    target_pd: float = 0.9
    target_pfa: float = 0.1
    name: str = ""

    def __post_init__(self):
        for key, rng in (("density", self.density), ("mass", self.mass), ("thickness", self.thickness)):
            if rng is not None and rng[0] > rng[1]:
                raise InvertedRangeError(f"inverted range for {key}: {rng[0]} > {rng[1]}")
        if not 0 < self.target_pd <= 1:
            raise OrsValueError(f"target_pd must lie in (0, 1], got {self.target_pd}")
        if not 0 <= self.target_pfa < 1:
            raise OrsValueError(f"target_pfa must lie in [0, 1), got {self.target_pfa}")

    def constrained(self) -> dict:
        out = {"density": self.density}
        if self.mass is not None:
            out["mass"] = self.mass
        if self.thickness is not None:
            out["thickness"] = self.thickness
        return out

    def satisfies(self, density_mhu, mass_g, thickness_mm):
        """Ground-truth target test; all bounds inclusive.  Works elementwise."""
        ok = (np.asarray(density_mhu) >= self.density[0]) & (np.asarray(density_mhu) <= self.density[1])
        if self.mass is not None:
            ok = ok & (np.asarray(mass_g) >= self.mass[0]) & (np.asarray(mass_g) <= self.mass[1])
        if self.thickness is not None:
            t = np.asarray(thickness_mm)
            ok = ok & (t >= self.thickness[0]) & (t <= self.thickness[1])
        return ok

    def dumps(self) -> str:
        def fmt(x):
            return "inf" if x == INF else repr(float(x))
        lines = [f"density_min_mhu: {fmt(self.density[0])}", f"density_max_mhu: {fmt(self.density[1])}"]
        for key, rng, unit in (("mass", self.mass, "g"), ("thickness", self.thickness, "mm")):
            if rng is None:
                lines += [f"{key}_min_{unit}: none", f"{key}_max_{unit}: none"]
            else:
                lines += [f"{key}_min_{unit}: {fmt(rng[0])}", f"{key}_max_{unit}: {fmt(rng[1])}"]
        lines += [f"target_pd: {self.target_pd!r}", f"target_pfa: {self.target_pfa!r}"]
        return "\n".join(lines) + "\n"


_RANGE_KEYS = {
    "density": ("density_min_mhu", "density_max_mhu"),
    "mass": ("mass_min_g", "mass_max_g"),
    "thickness": ("thickness_min_mm", "thickness_max_mm"),
}
_KNOWN = {k for pair in _RANGE_KEYS.values() for k in pair} | set(_RANGE_KEYS) | {"target_pd", "target_pfa", "name"}


def parse_kv(text: str, known=None, what="ORS") -> dict:
    """``key: value`` lines; '#' starts a comment; duplicate and unknown keys rejected."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise OrsValueError(f"{what} line {n}: expected 'key: value', got {raw!r}")
        key, value = (s.strip() for s in line.split(":", 1))
        if known is not None and key not in known:
            raise UnknownKeyError(f"{what} line {n}: unknown key {key!r}")
        if key in out:
            raise OrsValueError(f"{what} line {n}: duplicate key {key!r}")
        out[key] = value
    return out


def _num(key, s, allow_none=False):
    s = s.strip().lower()
    if s == "none" and allow_none:
        return None
    if s in ("inf", "+inf"):
        return INF
    try:
        x = float(s)
    except ValueError:
        raise OrsValueError(f"{key}: not a number: {s!r}") from None
    if math.isnan(x):
        raise OrsValueError(f"{key}: NaN not allowed")
    return x


def parse_ors(text: str, name: str = "") -> Ors:
    """Parse an ORS file.

    A range is given either by its ``*_min_*``/``*_max_*`` keys or by a
    combined ``density|mass|thickness: lo:hi`` line.  ``none`` leaves mass or
    thickness unconstrained; a missing upper bound means +inf, a missing
    lower bound 0.
    """
    kv = parse_kv(text, _KNOWN)
    ranges = {}
    for rkey, (kmin, kmax) in _RANGE_KEYS.items():
        if rkey in kv:
            if kmin in kv or kmax in kv:
                raise OrsValueError(f"{rkey} given both combined and as {kmin}/{kmax}")
            v = kv[rkey].strip().lower()
            if v == "none":
                lo = hi = None
            elif ":" in v:
                a, b = v.split(":", 1)
                lo, hi = _num(rkey, a), _num(rkey, b)
            else:
                raise OrsValueError(f"{rkey}: expected 'lo:hi' or 'none', got {kv[rkey]!r}")
        else:
            lo = _num(kmin, kv[kmin], allow_none=True) if kmin in kv else None
            hi = _num(kmax, kv[kmax], allow_none=True) if kmax in kv else None
        if rkey == "density":
            if lo is None or hi is None:
                missing = kmin if lo is None else kmax
                raise MissingKeyError(f"missing mandatory key {missing!r}")
        if lo is None and hi is None:
            ranges[rkey] = None
            continue
        lo = 0.0 if lo is None else lo
        hi = INF if hi is None else hi
        if lo > hi:
            raise InvertedRangeError(f"inverted range for {rkey}: {lo} > {hi}")
        ranges[rkey] = (lo, hi)
    for key in ("target_pd", "target_pfa"):
        if key not in kv:
            raise MissingKeyError(f"missing mandatory key {key!r}")
    return Ors(ranges["density"], ranges["mass"], ranges["thickness"],
               _num("target_pd", kv["target_pd"]), _num("target_pfa", kv["target_pfa"]),
               kv.get("name", name))


# ---------------------------------------------------------------------------
# Dynamic Sample Weighting


@dataclass(frozen=True)
class GaussianWindow:
    """Plateau of 1 on (lo', hi'] with Gaussian shoulders.

    The plateau is the range shrunk by 10% of its width at each end.  A
    range with an infinite upper end has no shrink and no upper taper.
    """

    lo: float
    hi: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.lo > self.hi:
            raise InvertedRangeError(f"inverted range: {self.lo} > {self.hi}")

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def plateau(self):
        if math.isinf(self.hi) or math.isinf(self.lo):
            return self.lo, self.hi
        return self.lo + 0.1 * self.width, self.hi - 0.1 * self.width


def gaussian_weight(x, w: GaussianWindow):
    x = np.asarray(x, dtype=np.float64)
    lo, hi = w.plateau
    out = np.ones_like(x)
    below = x <= lo
    above = x > hi
    out[below] = np.exp(-(((x[below] - lo) / w.sigma) ** 2))
    out[above] = np.exp(-(((x[above] - hi) / w.sigma) ** 2))
    # exactly on the plateau edge the shoulder formula already gives 1
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightingParams:
    sigma_density: float = 1.0
    sigma_mass: float = 1.0
    sigma_thickness: float = 1.0
    t: float = 0.8

    def __post_init__(self):
        if min(self.sigma_density, self.sigma_mass, self.sigma_thickness) <= 0:
            raise ValueError("all sigma must be > 0")
        if not 0 < self.t < 1:
            raise ValueError("t must lie in (0, 1)")


def total_sample_weight(median_mhu, mass_g, thickness_mm, ors: Ors, wp: WeightingParams, include_mass: bool = True):
    """Product of the window weights of the constrained parameters.

    The tuner passes ``include_mass=False``: mass is enforced by the
    post-classifier mass filter, and the forest's features (normalized
    histogram and normalized thickness) cannot see mass anyway.
    """
    w = gaussian_weight(median_mhu, GaussianWindow(*ors.density, wp.sigma_density))
    if include_mass and ors.mass is not None:
        w = w * gaussian_weight(mass_g, GaussianWindow(*ors.mass, wp.sigma_mass))
    if ors.thickness is not None:
        w = w * gaussian_weight(thickness_mm, GaussianWindow(*ors.thickness, wp.sigma_thickness))
    else:
        w = w * np.ones_like(np.asarray(thickness_mm, dtype=np.float64))
    return w


def derive_labels(weights, t: float):
    """Binary labels (weight >= t) and training weights (w for positives, 1 - w for negatives)."""
    w = np.asarray(weights, dtype=np.float64)
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    y = (w >= t).astype(np.int64)
    if w.size and (y.all() or not y.any()):
        raise DegenerateLabeling(f"degenerate labeling at t={t}: all samples {'positive' if y.all() else 'negative'}")
    return y, np.where(y == 1, w, 1.0 - w)


def balance_classes(y, weights) -> np.ndarray:
    """Rescale weights so both classes carry equal total mass (mean weight stays 1/2 per sample)."""
    y = np.asarray(y)
    out = np.array(weights, dtype=np.float64)
    for c in (0, 1):
        m = y == c
        total = out[m].sum()
        if total > 0:
            out[m] *= 0.5 * y.size / total
    return out


# ---------------------------------------------------------------------------
# cascade target algebra


@dataclass(frozen=True)
class Stage2Targets:
    pd2_target: float
    pfa2_target: float
    pd_clamped: bool = False
    pfa_clamped: bool = False

    @property
    def unreachable(self) -> bool:
        return self.pd_clamped or self.pfa_clamped


def stage2_targets(pd_total: float, pfa_total: float, pd1: float, pfa1: float) -> Stage2Targets:
    if not pd1 > 0 or not pfa1 > 0:
        raise ValueError(f"Stage I rates must be positive (pd1={pd1}, pfa1={pfa1})")
    pd2 = pd_total / pd1
    pfa2 = pfa_total / pfa1
    return Stage2Targets(min(1.0, pd2), min(1.0, pfa2), pd2 > 1.0, pfa2 > 1.0)


# ---------------------------------------------------------------------------
# grid search


SIGMA_FACTORS = (0.5, 1.0, 2.0)
T_GRID = (0.6, 0.7, 0.8, 0.9)
THICKNESS_SIGMA_MM = 1.0


def sigma_scale(ors: Ors) -> dict:
    """Base sigma per constrained parameter: 10% of the range width (or of the finite bound)."""
    def scale(rng):
        lo, hi = rng
        if math.isinf(hi):
            return 0.1 * lo if lo > 0 else 1.0
        return 0.1 * (hi - lo) if hi > lo else 1.0
    out = {"density": scale(ors.density)}
    if ors.mass is not None:
        out["mass"] = scale(ors.mass)
    if ors.thickness is not None:
        out["thickness"] = THICKNESS_SIGMA_MM
    return out


def default_grid(ors: Ors, factors=SIGMA_FACTORS, t_grid=T_GRID) -> list[WeightingParams]:
    """Cartesian grid over the sigma of each constrained label parameter (density, thickness) and t."""
    s = sigma_scale(ors)
    s.pop("mass", None)  # mass never enters the forest labels, see total_sample_weight
    axes = []
    for key in ("density", "mass", "thickness"):
        axes.append([f * s[key] for f in factors] if key in s else [1.0])
    return [WeightingParams(sd, sm, st, t) for sd, sm, st in itertools.product(*axes) for t in t_grid]


def stratified_folds(y, n_folds: int = 10, seed: int = 0) -> np.ndarray:
    """Fold id per sample; each class is shuffled and dealt round-robin."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    folds = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (np.arange(idx.size) + offset) % n_folds
        offset += idx.size
    return folds


def blob_rates(truth, detected):
    """(PD, PFA) over blobs; None where the denominator is empty."""
    truth = np.asarray(truth, dtype=bool)
    detected = np.asarray(detected, dtype=bool)
    npos, nneg = int(truth.sum()), int((~truth).sum())
    pd = float((detected & truth).sum()) / npos if npos else None
    pfa = float((detected & ~truth).sum()) / nneg if nneg else None
    return pd, pfa


def target_distance(pd, pfa, targets: Stage2Targets) -> float:
    terms = []
    if pd is not None:
        terms.append((pd - targets.pd2_target) ** 2)
    if pfa is not None:
        terms.append((pfa - targets.pfa2_target) ** 2)
    return math.sqrt(sum(terms)) if terms else INF


@dataclass(frozen=True, eq=False)
class GridPoint:
    params: WeightingParams
    pd2: float | None
    pfa2: float | None
    distance: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class TuneResult:
    weighting: WeightingParams
    forest: TrainedForest
    mass_threshold: float
    thickness_active: bool
    cv_pd2: float | None
    cv_pfa2: float | None
    targets: Stage2Targets
    grid: list = field(default_factory=list)

    @property
    def unreachable(self) -> bool:
        return self.targets.unreachable


def mass_threshold(ors: Ors) -> float:
    return float(ors.mass[0]) if ors.mass is not None else 0.0


def stage2_decision(scores, mass_g, mass_thr: float, threshold: float = 0.5):
    return (np.asarray(scores) >= threshold) & (np.asarray(mass_g) >= mass_thr)


def tune_stage2(corpus: FeatureCorpus, truth, ors: Ors, targets: Stage2Targets, grid=None,
                forest_params: ForestParams = ForestParams(), n_folds: int = 10, seed: int = 0) -> TuneResult:
    """Grid search over (sigma, t) by stratified cross-validation, then retrain on everything.

    ``truth`` marks the blobs whose matched ground-truth object satisfies
    the ORS; it only scores the folds, the forest trains on derived labels
    with class-balanced weights.  Ties in distance go to the larger t, then to the earlier grid point.
    """
    truth = np.asarray(truth, dtype=bool)
    if len(corpus) == 0:
        raise AdaptationInfeasible("adaptation infeasible on this corpus: no samples")
    grid = default_grid(ors) if grid is None else list(grid)
    active = ors.thickness is not None
    X = set_thickness_active(corpus.X, active)
    mthr = mass_threshold(ors)
    folds = stratified_folds(truth, n_folds, seed)
    fp = ForestParams(forest_params.n_trees, forest_params.max_depth, forest_params.min_samples_leaf,
                      forest_params.max_features, seed)
    cache = {}
    results = []
    best = None
    for gp in grid:
        w = total_sample_weight(corpus.median_mhu, corpus.mass_g, corpus.physical_thickness_mm, ors, gp, include_mass=False)
        try:
            y, tw = derive_labels(w, gp.t)
        except DegenerateLabeling:
            results.append(GridPoint(gp, None, None, INF, True))
            continue
        key = (y.tobytes(), tw.tobytes())
        if key not in cache:
            detected = np.zeros(len(corpus), dtype=bool)
            for k in range(n_folds):
                val = folds == k
                if not val.any():
                    continue
                tr = ~val
                ytr, wtr = y[tr], tw[tr]
                pos = (ytr == 1) & (wtr > 0)
                neg = (ytr == 0) & (wtr > 0)
                if not pos.any() or not neg.any():
                    score = np.full(val.sum(), 1.0 if pos.any() else 0.0)
                else:
                    score = predict_score(train_forest(X[tr], ytr, balance_classes(ytr, wtr), fp), X[val])
                detected[val] = stage2_decision(score, corpus.mass_g[val], mthr)
            cache[key] = blob_rates(truth, detected)
        pd2, pfa2 = cache[key]
        d = target_distance(pd2, pfa2, targets)
        point = GridPoint(gp, pd2, pfa2, d)
        results.append(point)
        if best is None or d < best.distance - 1e-12 or (abs(d - best.distance) <= 1e-12 and gp.t > best.params.t):
            best = point
        log.debug("grid %s -> pd2=%s pfa2=%s d=%.4f", gp, pd2, pfa2, d)
    if best is None or math.isinf(best.distance):
        raise AdaptationInfeasible("adaptation infeasible on this corpus: every grid point is degenerate")
    wp = best.params
    w = total_sample_weight(corpus.median_mhu, corpus.mass_g, corpus.physical_thickness_mm, ors, wp, include_mass=False)
    y, tw = derive_labels(w, wp.t)
    meta = {"thickness_active": int(active), "mass_threshold": repr(mthr),
            "sigma_density": repr(wp.sigma_density), "sigma_mass": repr(wp.sigma_mass),
            "sigma_thickness": repr(wp.sigma_thickness), "t": repr(wp.t)}
    forest = train_forest(X, y, balance_classes(y, tw), fp, meta=meta)
    return TuneResult(wp, forest, mthr, active, best.pd2, best.pfa2, targets, results)
