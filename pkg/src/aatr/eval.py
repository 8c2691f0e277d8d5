"""Ground-truth matching, PD/PFA, cascade reports and ROC sweeps.

A ground-truth object is flagged when some detected blob covers at least
half of its voxels.  Blobs that flag nothing are stray alarms: each one is
a false positive, but strays never add true negatives.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adapt import Ors, stage2_decision
from .features import FeatureCorpus, set_thickness_active
from .forest import TrainedForest, predict_score
from .volume import LabelMap, ObjectManifest

OVERLAP = 0.5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, o: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + o.tp, self.fp + o.fp, self.tn + o.tn, self.fn + o.fn)

    @property
    def pd(self):
        return pd_pfa(self)[0]

    @property
    def pfa(self):
        return pd_pfa(self)[1]


def pd_pfa(c: ConfusionCounts):
    """(TP/(TP+FN), FP/(FP+TN)); an empty denominator gives None, never 0."""
    pd = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else None
    pfa = c.fp / (c.fp + c.tn) if c.fp + c.tn > 0 else None
    return pd, pfa


@dataclass(frozen=True)
class GtObject:
    bag_id: str
    label: int
    material: str
    density_mhu: float
    mass_g: float
    thickness_mm: float
    n_voxels: int


def ground_truth(gt: LabelMap, manifest: ObjectManifest, bag_id: str = "") -> list[GtObject]:
    """Per-object truth; density is the object's mean rendered MHU (mass over volume)."""
    counts = np.bincount(gt.labels.ravel(), minlength=gt.n_labels + 1)
    vv = float(np.prod(gt.spacing_mm)) / 1000.0
    out = []
    for o in manifest.objects:
        n = int(counts[o.label])
        out.append(GtObject(bag_id, o.label, o.material, o.mass_g / (n * vv) * 1000.0, o.mass_g, o.thickness_mm, n))
    return out


def is_target(objs, ors: Ors) -> np.ndarray:
    return np.array([bool(ors.satisfies(o.density_mhu, o.mass_g, o.thickness_mm)) for o in objs], dtype=bool)


def blob_flags(blobs, gt: LabelMap) -> list[list[int]]:
    """Ground-truth ids each blob flags (covers >= 50% of), largest overlap first."""
    g = gt.labels.ravel()
    sizes = np.bincount(g, minlength=gt.n_labels + 1)
    out = []
    for b in blobs:
        vox = b.voxels if hasattr(b, "voxels") else np.asarray(b)
        hit = np.bincount(g[vox], minlength=sizes.size)
        hit[0] = 0
        ids = np.flatnonzero(hit >= OVERLAP * np.maximum(sizes, 1))
        ids = ids[(hit[ids] > 0)]
        out.append([int(i) for i in ids[np.argsort(-hit[ids], kind="stable")]])
    return out


def match_detections(blobs, gt: LabelMap, manifest: ObjectManifest, ors: Ors, bag_id=None) -> ConfusionCounts:
    """Object-level counts for one bag's detected blobs."""
    if bag_id is not None:
        for b in blobs:
            if getattr(b, "bag_id", bag_id) != bag_id:
                raise ValueError(f"bag id mismatch: blob from {b.bag_id!r}, ground truth {bag_id!r}")
    objs = ground_truth(gt, manifest, bag_id or "")
    flags = blob_flags(blobs, gt)
    flagged = {i for f in flags for i in f}
    strays = sum(1 for f in flags if not f)
    return _count(objs, is_target(objs, ors), flagged, strays)


def _count(objs, target, flagged, strays):
    tp = fp = tn = fn = 0
    for o, t in zip(objs, target):
        hit = o.label in flagged
        if t:
            tp += hit
            fn += not hit
        else:
            fp += hit
            tn += not hit
    return ConfusionCounts(tp, fp + strays, tn, fn)


# ---------------------------------------------------------------------------
# corpus-level cascade evaluation


@dataclass(frozen=True, eq=False)
class Population:
    """Ground-truth objects of a set of bags and the Stage I blobs found in them.

    ``blob_label`` is the matched object id per blob (0 = stray).
    """

    objects: list
    blob_bag: np.ndarray
    blob_label: np.ndarray

    @staticmethod
    def from_corpus(corpus: FeatureCorpus, objects) -> "Population":
        return Population(list(objects), np.asarray(corpus.bag_id), np.asarray(corpus.label))


def population_counts(pop: Population, target: np.ndarray, detected) -> ConfusionCounts:
    detected = np.asarray(detected, dtype=bool)
    flagged = {(b, int(l)) for b, l in zip(pop.blob_bag[detected], pop.blob_label[detected]) if l != 0}
    strays = int(np.count_nonzero(detected & (pop.blob_label == 0)))
    tp = fp = tn = fn = 0
    for o, t in zip(pop.objects, target):
        hit = (o.bag_id, o.label) in flagged
        if t:
            tp += hit
            fn += not hit
        else:
            fp += hit
            tn += not hit
    return ConfusionCounts(tp, fp + strays, tn, fn)


def nested_stage2(stage1: ConfusionCounts, total: ConfusionCounts) -> ConfusionCounts:
    """Stage II counts measured on Stage I survivors only."""
    return ConfusionCounts(total.tp, total.fp, stage1.fp - total.fp, stage1.tp - total.tp)


@dataclass(frozen=True)
class CascadeReport:
    ors_id: str
    corpus_id: str
    stage1: ConfusionCounts
    stage2: ConfusionCounts
    total: ConfusionCounts

    def rows(self):
        for name, c in (("stage1", self.stage1), ("stage2", self.stage2), ("total", self.total)):
            yield name, c, pd_pfa(c)


def cascade_report(pop: Population, ors: Ors, scores, mass_g, mass_thr: float, threshold: float = 0.5,
                   ors_id: str = "", corpus_id: str = "") -> CascadeReport:
    target = is_target(pop.objects, ors)
    s1 = population_counts(pop, target, np.ones(pop.blob_label.size, dtype=bool))
    total = population_counts(pop, target, stage2_decision(scores, mass_g, mass_thr, threshold))
    return CascadeReport(ors_id, corpus_id, s1, nested_stage2(s1, total), total)


REPORT_COLUMNS = ["ors_id", "corpus_id", "stage", "tp", "fp", "tn", "fn", "pd", "pfa"]


def _fmt(x):
    return "NA" if x is None else f"{x:.6f}"


def report_lines(reports) -> list[str]:
    lines = ["\t".join(REPORT_COLUMNS)]
    for r in reports:
        for name, c, (pd, pfa) in r.rows():
            lines.append("\t".join([r.ors_id, r.corpus_id, name, str(c.tp), str(c.fp), str(c.tn), str(c.fn),
                                    _fmt(pd), _fmt(pfa)]))
    return lines


def write_report(reports, path) -> None:
    _write(path, report_lines(reports))


def _write(path, lines):
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def roc_sweep(forest: TrainedForest, corpus: FeatureCorpus, pop: Population, ors: Ors, thresholds,
              thickness_active: bool | None = None):
    """(threshold, PD2, PFA2, PD, PFA) per decision threshold.

    PD2/PFA2 are Stage II rates on the Stage I survivors; PD/PFA are the
    cascade totals.  Only the forest score is swept (no mass filter), so
    threshold 0 passes every blob and a threshold above 1 passes none.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    if thickness_active is None:
        thickness_active = bool(forest.meta.get("thickness_active", ors.thickness is not None))
    scores = predict_score(forest, set_thickness_active(corpus.X, thickness_active))
    target = is_target(pop.objects, ors)
    s1 = population_counts(pop, target, np.ones(len(corpus), dtype=bool))
    out = []
    for thr in thresholds:
        total = population_counts(pop, target, scores >= thr)
        s2 = nested_stage2(s1, total)
        out.append((float(thr), *pd_pfa(s2), *pd_pfa(total)))
    return out


ROC_COLUMNS = ["threshold", "pd2", "pfa2", "pd", "pfa"]


def write_roc(points, path) -> None:
    lines = ["\t".join(ROC_COLUMNS)]
    for thr, *rates in points:
        lines.append("\t".join([f"{thr:.6f}"] + [_fmt(x) for x in rates]))
    _write(path, lines)
