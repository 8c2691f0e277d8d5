"""Artifact plumbing shared by the command line and the end-to-end tests.

Work directory layout (every path can be moved by config):

    corpus/   bag_NNNN.vol, bag_NNNN.lab, bag_NNNN.manifest.tsv, split.tsv
    cache/    stage1/<bag hash>-<stage1 hash>.lab    candidate blobs per bag
              features-<stage1 hash>.tsv, objects-<stage1 hash>.tsv
    models/   <ors id>.forest, <ors id>.params
    reports/  <ors id>.report.tsv, <ors id>.roc.tsv, <ors id>.crossfit.tsv
    runs.log  one JSON line per run

``adapt`` reads the feature corpus and writes only under models/; nothing
it does can reach the Stage I cache.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .adapt import (
    SIGMA_FACTORS,
    T_GRID,
    AdaptationInfeasible,
    Ors,
    default_grid,
    parse_kv,
    parse_ors,
    stage2_targets,
    tune_stage2,
)
from .eval import (
    CascadeReport,
    GtObject,
    Population,
    cascade_report,
    is_target,
    blob_flags,
    ground_truth,
    nested_stage2,
    population_counts,
    roc_sweep,
    write_report,
    write_roc,
)
from .features import FeatureCorpus, extract_features, load_corpus, save_corpus, set_thickness_active
from .forest import ForestParams, TrainedForest, load_forest, predict_score, save_forest
from .graphseg import Stage1Params, blobs_to_labels, labels_to_blobs, run_stage1
from .preprocess import AtParams
from .supervoxel import SlicParams
from .volume import (
    PhantomSpec,
    _atomic_write,
    generate_phantom,
    load_labels,
    load_manifest,
    load_volume,
    save_labels,
    save_manifest,
    save_volume,
)

log = logging.getLogger(__name__)

CONFIG_MAGIC = "AATRCONFIG 1"


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError):
    exit_code = 2


class MissingPrerequisite(PipelineError):
    exit_code = 3

    def __init__(self, what: str, command: str):
        super().__init__(f"{what} not found; run `aatr {command}` first")
        self.command = command


class StaleArtifact(PipelineError):
    exit_code = 6


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


# key -> (parser, help); defaults live on PipelineConfig
CONFIG_KEYS = {
    "corpus_dir": (str, "phantom corpus directory"),
    "cache_dir": (str, "Stage I and feature cache directory"),
    "model_dir": (str, "Stage II model directory"),
    "report_dir": (str, "report directory"),
    "seed": (int, "global seed"),
    "n_bags": (int, "bags generated by gen"),
    "test_fraction": (float, "held-out share of bags"),
    "outer_folds": (int, "eval: cross-fit over this many bag folds (0 = use the train/test split)"),
    "workers": (int, "worker processes for per-bag work"),
    "at_alpha": (float, "smoothing edge-length penalty"),
    "at_beta": (float, "smoothing weight"),
    "at_eps": (float, "smoothing edge band width"),
    "at_iters": (int, "smoothing outer iterations"),
    "slic_segments": (int, "supervoxel count"),
    "slic_compactness": (float, "supervoxel compactness"),
    "ncut_threshold": (float, "maximum accepted normalized cut"),
    "min_part_voxels": (int, "smallest part a cut may leave"),
    "sigma_factors": (_floats, "sigma grid as multiples of the base sigma"),
    "t_grid": (_floats, "label threshold grid"),
    "cv_folds": (int, "cross-validation folds for the grid search"),
    "n_trees": (int, "trees per forest"),
    "min_samples_leaf": (int, "forest leaf size"),
    "roc_points": (int, "ROC thresholds spread over [0, 1], plus one above 1"),
}


@dataclass(frozen=True)
class PipelineConfig:
    workdir: Path = Path(".")
    corpus_dir: str = "corpus"
    cache_dir: str = "cache"
    model_dir: str = "models"
    report_dir: str = "reports"
    seed: int = 0
    n_bags: int = 40
    test_fraction: float = 0.3
    outer_folds: int = 0
    workers: int = 1
    at_alpha: float = 1000.0
    at_beta: float = 0.9
    at_eps: float = 0.1
    at_iters: int = 30
    slic_segments: int = 1000
    slic_compactness: float = 40.0
    ncut_threshold: float = 0.1
    min_part_voxels: int = 27
    sigma_factors: tuple = SIGMA_FACTORS
    t_grid: tuple = T_GRID
    cv_folds: int = 10
    n_trees: int = 50
    min_samples_leaf: int = 2
    roc_points: int = 21
    phantom: dict = field(default_factory=dict, compare=False)  # PhantomSpec overrides, library use only

    def __post_init__(self):
        dirs = [self.path(k) for k in ("corpus_dir", "cache_dir", "model_dir", "report_dir")]
        if len({d.resolve() for d in dirs}) != len(dirs):
            raise ConfigError("corpus, cache, model and report directories must be distinct")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.outer_folds == 1 or self.outer_folds < 0:
            raise ConfigError("outer_folds must be 0 or at least 2")
        if self.n_bags < 2:
            raise ConfigError("n_bags must be at least 2")

    def path(self, key: str) -> Path:
        p = Path(getattr(self, key))
        return p if p.is_absolute() else Path(self.workdir) / p

    @property
    def corpus(self) -> Path:
        return self.path("corpus_dir")

    @property
    def cache(self) -> Path:
        return self.path("cache_dir")

    @property
    def models(self) -> Path:
        return self.path("model_dir")

    @property
    def reports(self) -> Path:
        return self.path("report_dir")

    def stage1_params(self) -> Stage1Params:
        return Stage1Params(
            at=AtParams(alpha=self.at_alpha, beta=self.at_beta, eps=self.at_eps, max_iters=self.at_iters),
            slic=SlicParams(n_segments=self.slic_segments, compactness=self.slic_compactness),
            ncut_threshold=self.ncut_threshold,
            min_part_voxels=self.min_part_voxels,
        )

    def forest_params(self) -> ForestParams:
        return ForestParams(n_trees=self.n_trees, min_samples_leaf=self.min_samples_leaf, seed=self.seed)

    def dumps(self) -> str:
        lines = [CONFIG_MAGIC]
        for k in CONFIG_KEYS:
            v = getattr(self, k)
            lines.append(f"{k}: {' '.join(repr(x) for x in v) if isinstance(v, tuple) else v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256((self.dumps() + repr(sorted(self.phantom.items()))).encode()).hexdigest()[:16]


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CONFIG_MAGIC:
        raise ConfigError(f"config must start with the line {CONFIG_MAGIC!r}")
    try:
        kv = parse_kv("\n".join(lines[1:]), set(CONFIG_KEYS), what="config")
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return apply_overrides(base or PipelineConfig(), kv)


def apply_overrides(cfg: PipelineConfig, kv: dict) -> PipelineConfig:
    out = {}
    for k, v in kv.items():
        if k not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {k!r}")
        parser = CONFIG_KEYS[k][0]
        try:
            out[k] = parser(v) if isinstance(v, str) else v
        except ValueError:
            raise ConfigError(f"{k}: bad value {v!r}") from None
    return replace(cfg, **out)


# ---------------------------------------------------------------------------
# hashing and run manifest


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path: Path, text: str) -> None:
    _atomic_write(path, text.encode())


def record_run(cfg: PipelineConfig, command: str, inputs: dict, outputs=(), extra=None) -> None:
    """Append (command, config hash, seed, input hashes) to runs.log."""
    entry = {"command": command, "config_hash": cfg.digest(), "seed": cfg.seed, "inputs": inputs,
             "outputs": sorted(str(p) for p in outputs)}
    if extra:
        entry.update(extra)
    path = Path(cfg.workdir) / "runs.log"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# gen


def bag_ids(cfg: PipelineConfig) -> list[str]:
    d = cfg.corpus
    ids = sorted(p.name[:-4] for p in d.glob("bag_*.vol")) if d.is_dir() else []
    if not ids:
        raise MissingPrerequisite(f"phantom corpus in {d}", "gen")
    return ids


def _bag_paths(cfg, bag):
    d = cfg.corpus
    return d / f"{bag}.vol", d / f"{bag}.lab", d / f"{bag}.manifest.tsv"


def _phantom_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def _materials(manifest) -> set:
    return {o.material for o in manifest.objects}


def make_split(bags: list[str], materials: dict, test_fraction: float, seed: int, max_tries: int = 1000):
    """Held-out bag set; retries permutations until every material lands on both sides."""
    rng = np.random.default_rng(seed)
    n_test = max(1, min(len(bags) - 1, int(round(test_fraction * len(bags)))))
    every = set().union(*materials.values()) if materials else set()
    order = None
    for _ in range(max_tries):
        order = rng.permutation(len(bags))
        test = {bags[i] for i in order[:n_test]}
        seen_test = set().union(*(materials[b] for b in test))
        seen_train = set().union(*(materials[b] for b in bags if b not in test))
        if seen_test == every and seen_train == every:
            return test
    log.warning("no split puts every material on both sides; using the last permutation")
    return {bags[i] for i in order[:n_test]}


def bag_folds(bags: list[str], k: int, seed: int) -> dict:
    """Outer cross-fitting fold per bag: shuffled and dealt round-robin."""
    order = np.random.default_rng(seed).permutation(len(bags))
    return {bags[i]: int(j % k) for j, i in enumerate(order)}


def _gen_one(args):
    corpus, bag, spec = args
    vol, gt, man = generate_phantom(spec)
    save_volume(vol, corpus / f"{bag}.vol")
    save_labels(gt, corpus / f"{bag}.lab")
    save_manifest(man, corpus / f"{bag}.manifest.tsv")
    return bag, _materials(man), len(man.dropped)


def cmd_gen(cfg: PipelineConfig) -> dict:
    corpus = cfg.corpus
    corpus.mkdir(parents=True, exist_ok=True)
    jobs = [(corpus, f"bag_{i:04d}", PhantomSpec(seed=_phantom_seed(cfg.seed, i), **cfg.phantom))
            for i in range(cfg.n_bags)]
    res = _map(_gen_one, jobs, cfg.workers)
    mats = {b: m for b, m, _ in res}
    bags = [b for b, _, _ in res]
    test = make_split(bags, mats, cfg.test_fraction, cfg.seed)
    _write_text(corpus / "split.tsv", "bag_id\tsplit\n" + "".join(
        f"{b}\t{'test' if b in test else 'train'}\n" for b in bags))
    dropped = sum(d for _, _, d in res)
    record_run(cfg, "gen", {}, [corpus], {"n_bags": len(bags), "dropped_objects": dropped})
    return {"bags": len(bags), "test": len(test), "dropped": dropped}


def load_split(cfg: PipelineConfig) -> dict:
    path = cfg.corpus / "split.tsv"
    if not path.exists():
        raise MissingPrerequisite(f"train/test split {path}", "gen")
    out = {}
    for line in path.read_text().splitlines()[1:]:
        if line:
            b, s = line.split("\t")
            out[b] = s
    return out


# ---------------------------------------------------------------------------
# stage1


def stage1_cache_path(cfg: PipelineConfig, bag_hash: str, params: Stage1Params) -> Path:
    return cfg.cache / "stage1" / f"{bag_hash[:20]}-{params.digest()}.lab"


def _stage1_one(args):
    vol_path, out, params, bag = args
    vol = load_volume(vol_path)
    res = run_stage1(vol, params, bag)
    save_labels(blobs_to_labels(res.blobs, vol.dims, vol.spacing_mm), out)
    return len(res.blobs)


def cmd_stage1(cfg: PipelineConfig) -> dict:
    bags = bag_ids(cfg)
    params = cfg.stage1_params()
    (cfg.cache / "stage1").mkdir(parents=True, exist_ok=True)
    jobs, inputs, reused = [], {}, 0
    for b in bags:
        vol_path = _bag_paths(cfg, b)[0]
        h = file_hash(vol_path)
        inputs[b] = h[:16]
        out = stage1_cache_path(cfg, h, params)
        if out.exists():
            reused += 1
            continue
        jobs.append((vol_path, out, params, b))
    counts = _map(_stage1_one, jobs, cfg.workers)
    record_run(cfg, "stage1", inputs, [j[1] for j in jobs],
               {"stage1_params": params.digest(), "computed": len(jobs), "reused": reused})
    return {"computed": len(jobs), "reused": reused, "blobs": int(sum(counts))}


# ---------------------------------------------------------------------------
# featurize

OBJECT_COLUMNS = ["bag_id", "label", "material", "density_mhu", "mass_g", "thickness_mm", "n_voxels"]


def features_path(cfg: PipelineConfig) -> Path:
    return cfg.cache / f"features-{cfg.stage1_params().digest()}.tsv"


def objects_path(cfg: PipelineConfig) -> Path:
    return cfg.cache / f"objects-{cfg.stage1_params().digest()}.tsv"


def save_objects(objs, path) -> None:
    lines = ["\t".join(OBJECT_COLUMNS)]
    for o in objs:
        lines.append("\t".join([o.bag_id, str(o.label), o.material, repr(o.density_mhu), repr(o.mass_g),
                                repr(o.thickness_mm), str(o.n_voxels)]))
    _write_text(Path(path), "\n".join(lines) + "\n")


def load_objects(path) -> list[GtObject]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split("\t") != OBJECT_COLUMNS:
        raise StaleArtifact(f"{path}: bad object table header")
    out = []
    for ln in lines[1:]:
        if ln:
            b, lab, mat, d, m, t, n = ln.split("\t")
            out.append(GtObject(b, int(lab), mat, float(d), float(m), float(t), int(n)))
    return out


def _featurize_one(args):
    bag, vol_path, lab_path, man_path, blob_path = args
    vol = load_volume(vol_path)
    gt = load_labels(lab_path)
    man = load_manifest(man_path)
    blobs = labels_to_blobs(load_labels(blob_path), bag, vol)
    flags = blob_flags(blobs, gt)
    rows = [(bag, k, f[0] if f else 0, extract_features(b, vol)) for k, (b, f) in enumerate(zip(blobs, flags), 1)]
    return rows, ground_truth(gt, man, bag)


def cmd_featurize(cfg: PipelineConfig) -> dict:
    bags = bag_ids(cfg)
    params = cfg.stage1_params()
    jobs, inputs = [], {}
    for b in bags:
        vol_path, lab_path, man_path = _bag_paths(cfg, b)
        h = file_hash(vol_path)
        blob_path = stage1_cache_path(cfg, h, params)
        if not blob_path.exists():
            raise MissingPrerequisite(f"Stage I blobs for {b}", "stage1")
        inputs[b] = h[:16]
        jobs.append((b, vol_path, lab_path, man_path, blob_path))
    res = _map(_featurize_one, jobs, cfg.workers)
    corpus = FeatureCorpus.from_rows([r for rows, _ in res for r in rows])
    objs = [o for _, ob in res for o in ob]
    save_corpus(corpus, features_path(cfg))
    save_objects(objs, objects_path(cfg))
    record_run(cfg, "featurize", inputs, [features_path(cfg), objects_path(cfg)])
    return {"blobs": len(corpus), "objects": len(objs), "strays": int(np.count_nonzero(corpus.label == 0))}


def load_features(cfg: PipelineConfig):
    fp, op = features_path(cfg), objects_path(cfg)
    if not fp.exists() or not op.exists():
        raise MissingPrerequisite(f"feature corpus {fp}", "featurize")
    try:
        corpus = load_corpus(fp)
    except ValueError as e:
        raise StaleArtifact(str(e)) from None
    return corpus, load_objects(op)


# ---------------------------------------------------------------------------
# adapt / eval / roc


def ors_id(path) -> str:
    return Path(path).stem


def read_ors(path) -> tuple[Ors, str]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"ORS file {path} does not exist")
    text = path.read_text()
    return parse_ors(text, name=ors_id(path)), hashlib.sha256(text.encode()).hexdigest()[:16]


def blob_truth(corpus: FeatureCorpus, objects, ors: Ors) -> np.ndarray:
    """Per blob: does its matched ground-truth object satisfy the ORS?"""
    lookup = {(o.bag_id, o.label): o for o in objects}
    out = np.zeros(len(corpus), dtype=bool)
    for i, (b, lab) in enumerate(zip(corpus.bag_id, corpus.label)):
        if lab:
            o = lookup[(b, int(lab))]
            out[i] = bool(ors.satisfies(o.density_mhu, o.mass_g, o.thickness_mm))
    return out


def _bags_subset(corpus, objects, bags: set):
    sel = np.array([b in bags for b in corpus.bag_id], dtype=bool)
    sub = corpus.subset(sel)
    objs = [o for o in objects if o.bag_id in bags]
    return sub, objs, Population.from_corpus(sub, objs)


def train_stage2(cfg: PipelineConfig, corpus, objects, ors: Ors, bags: set, meta=None):
    """Stage II adaptation on the given bags: targets from their Stage I rates, then the grid search."""
    sub, objs, pop = _bags_subset(corpus, objects, bags)
    s1 = population_counts(pop, is_target(objs, ors), np.ones(len(sub), dtype=bool))
    if s1.pd is None or s1.pfa is None:
        raise AdaptationInfeasible("adaptation infeasible on this corpus: no targets or no benign objects in training bags")
    targets = stage2_targets(ors.target_pd, ors.target_pfa, s1.pd, s1.pfa)
    grid = default_grid(ors, cfg.sigma_factors, cfg.t_grid)
    res = tune_stage2(sub, blob_truth(sub, objs, ors), ors, targets, grid, cfg.forest_params(), cfg.cv_folds, cfg.seed)
    if meta:
        res.forest.meta.update(meta)
    return res, s1


def model_paths(cfg: PipelineConfig, oid: str):
    return cfg.models / f"{oid}.forest", cfg.models / f"{oid}.params"


def cmd_adapt(cfg: PipelineConfig, ors_path) -> dict:
    ors, ors_hash = read_ors(ors_path)
    oid = ors_id(ors_path)
    corpus, objects = load_features(cfg)
    split = load_split(cfg)
    train = {b for b, s in split.items() if s == "train"}
    feat_hash = file_hash(features_path(cfg))[:16]
    meta = {"ors_hash": "h" + ors_hash, "features_hash": "h" + feat_hash}
    res, s1 = train_stage2(cfg, corpus, objects, ors, train, meta)
    cfg.models.mkdir(parents=True, exist_ok=True)
    fpath, ppath = model_paths(cfg, oid)
    save_forest(res.forest, fpath)
    wp = res.weighting
    tg = res.targets
    _write_text(ppath, "\n".join([
        f"ors_id: {oid}", f"ors_hash: {ors_hash}", f"features_hash: {feat_hash}",
        f"stage1_pd: {s1.pd!r}", f"stage1_pfa: {s1.pfa!r}",
        f"pd2_target: {tg.pd2_target!r}", f"pfa2_target: {tg.pfa2_target!r}",
        f"unreachable: {int(tg.unreachable)}",
        f"sigma_density: {wp.sigma_density!r}", f"sigma_mass: {wp.sigma_mass!r}",
        f"sigma_thickness: {wp.sigma_thickness!r}", f"t: {wp.t!r}",
        f"mass_threshold_g: {res.mass_threshold!r}", f"thickness_active: {int(res.thickness_active)}",
        f"cv_pd2: {res.cv_pd2!r}", f"cv_pfa2: {res.cv_pfa2!r}",
    ]) + "\n")
    record_run(cfg, "adapt", {"ors": ors_hash, "features": feat_hash}, [fpath, ppath], {"ors_id": oid})
    if tg.unreachable:
        log.warning("%s: desired totals are out of reach of this Stage I; targets were clamped", oid)
    return {"ors_id": oid, "targets": (tg.pd2_target, tg.pfa2_target), "cv": (res.cv_pd2, res.cv_pfa2),
            "weighting": wp, "unreachable": tg.unreachable}


def load_model(cfg: PipelineConfig, ors_path) -> tuple[Ors, str, TrainedForest]:
    ors, ors_hash = read_ors(ors_path)
    oid = ors_id(ors_path)
    fpath, _ = model_paths(cfg, oid)
    if not fpath.exists():
        raise MissingPrerequisite(f"Stage II model {fpath}", f"adapt --ors {ors_path}")
    try:
        forest = load_forest(fpath)
    except ValueError as e:
        raise StaleArtifact(f"{fpath}: {e}") from None
    if forest.meta.get("ors_hash") != "h" + ors_hash:
        raise StaleArtifact(f"{fpath} was trained for a different ORS; rerun `aatr adapt --ors {ors_path}`")
    if forest.meta.get("features_hash") != "h" + file_hash(features_path(cfg))[:16]:
        raise StaleArtifact(f"{fpath} predates the current feature corpus; rerun `aatr adapt --ors {ors_path}`")
    return ors, oid, forest


def _apply(forest: TrainedForest, corpus: FeatureCorpus):
    active = bool(int(forest.meta.get("thickness_active", 1)))
    return predict_score(forest, set_thickness_active(corpus.X, active)), float(forest.meta.get("mass_threshold", 0.0))


def evaluate(forest, corpus, objects, ors, bags, oid="", corpus_id="") -> CascadeReport:
    sub, objs, pop = _bags_subset(corpus, objects, bags)
    scores, mthr = _apply(forest, sub)
    return cascade_report(pop, ors, scores, sub.mass_g, mthr, ors_id=oid, corpus_id=corpus_id)


def corpus_id(cfg: PipelineConfig) -> str:
    return file_hash(features_path(cfg))[:12]


def cmd_eval(cfg: PipelineConfig, ors_path) -> CascadeReport:
    if cfg.outer_folds:
        return crossfit(cfg, ors_path)
    corpus, objects = load_features(cfg)
    ors, oid, forest = load_model(cfg, ors_path)
    test = {b for b, s in load_split(cfg).items() if s == "test"}
    rep = evaluate(forest, corpus, objects, ors, test, oid, corpus_id(cfg))
    cfg.reports.mkdir(parents=True, exist_ok=True)
    out = cfg.reports / f"{oid}.report.tsv"
    write_report([rep], out)
    record_run(cfg, "eval", {"model": file_hash(model_paths(cfg, oid)[0])[:16]}, [out], {"ors_id": oid})
    return rep


def crossfit(cfg: PipelineConfig, ors_path) -> CascadeReport:
    """Every bag held out exactly once: adapt on the other folds, evaluate the held-out fold, sum counts."""
    ors, ors_hash = read_ors(ors_path)
    oid = ors_id(ors_path)
    corpus, objects = load_features(cfg)
    bags = sorted({o.bag_id for o in objects})
    folds = bag_folds(bags, cfg.outer_folds, cfg.seed)
    stage1 = total = None
    for k in range(cfg.outer_folds):
        held = {b for b in bags if folds[b] == k}
        res, _ = train_stage2(cfg, corpus, objects, ors, set(bags) - held)
        rep = evaluate(res.forest, corpus, objects, ors, held)
        stage1 = rep.stage1 if stage1 is None else stage1 + rep.stage1
        total = rep.total if total is None else total + rep.total
    rep = CascadeReport(oid, corpus_id(cfg), stage1, nested_stage2(stage1, total), total)
    cfg.reports.mkdir(parents=True, exist_ok=True)
    out = cfg.reports / f"{oid}.crossfit.tsv"
    write_report([rep], out)
    record_run(cfg, "eval", {"ors": ors_hash, "features": corpus_id(cfg)}, [out],
               {"ors_id": oid, "outer_folds": cfg.outer_folds})
    return rep


def roc_thresholds(n: int) -> np.ndarray:
    return np.concatenate([np.linspace(0.0, 1.0, max(n, 2)), [1.01]])


def cmd_roc(cfg: PipelineConfig, ors_path):
    corpus, objects = load_features(cfg)
    ors, oid, forest = load_model(cfg, ors_path)
    test = {b for b, s in load_split(cfg).items() if s == "test"}
    sub, _, pop = _bags_subset(corpus, objects, test)
    pts = roc_sweep(forest, sub, pop, ors, roc_thresholds(cfg.roc_points))
    cfg.reports.mkdir(parents=True, exist_ok=True)
    out = cfg.reports / f"{oid}.roc.tsv"
    write_roc(pts, out)
    record_run(cfg, "roc", {"model": file_hash(model_paths(cfg, oid)[0])[:16]}, [out], {"ors_id": oid})
    return pts


def config_field_names():
    return [f.name for f in fields(PipelineConfig)]


def timed(fn, *a, **kw):
    t = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t
