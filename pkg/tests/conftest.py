"""Shared fixtures: ORS files, small and desk-sized work directories, acceptance recorder."""

import contextlib
import time
from pathlib import Path

import pytest

from aatr import pipeline as pl

ORS_TEXTS = {
    "saline": "density: 1050:1215\n",
    "rubber": "density: 1170:1290\n",
    "clay": "density: 1530:1715\n",
    "mass400": "density: 1050:1715\nmass_min_g: 400\n",
    "mass300": "density: 1050:1715\nmass_min_g: 300\n",
    "mass100": "density: 1050:1715\nmass_min_g: 100\n",
    "thick10": "density: 1050:1715\nthickness_min_mm: 10\n",
    "thick6510": "density: 1050:1715\nthickness: 6.5:10\n",
    "thin": "density: 1050:1715\nthickness: 0:6.5\n",
}
TARGETS = "target_pd: 0.9\ntarget_pfa: 0.1\n"


def write_ors(directory: Path) -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    out = {}
    for name, body in ORS_TEXTS.items():
        p = directory / f"{name}.ors"
        p.write_text(body + TARGETS)
        out[name] = p
    return out


SMALL_CONFIG = "AATRCONFIG 1\nn_bags: 6\ncv_folds: 3\nn_trees: 10\n"


@pytest.fixture(scope="session")
def small_workdir(tmp_path_factory):
    """Six-bag work directory with corpus, Stage I cache and features built through the CLI config."""
    wd = tmp_path_factory.mktemp("small")
    (wd / "aatr.cfg").write_text(SMALL_CONFIG)
    cfg = pl.parse_config(SMALL_CONFIG, pl.PipelineConfig(workdir=wd))
    pl.cmd_gen(cfg)
    pl.cmd_stage1(cfg)
    pl.cmd_featurize(cfg)
    return wd, cfg, write_ors(wd / "ors")


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    """The 40-bag, 64^3, 2 mm corpus with default settings; records build timings."""
    wd = tmp_path_factory.mktemp("desk")
    cfg = pl.PipelineConfig(workdir=wd)
    times = {}
    _, times["gen"] = pl.timed(pl.cmd_gen, cfg)
    _, times["stage1"] = pl.timed(pl.cmd_stage1, cfg)
    _, times["featurize"] = pl.timed(pl.cmd_featurize, cfg)
    return cfg, write_ors(wd / "ors"), times


# --- acceptance recorder

_RESULTS = {}


class _Record:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def acceptance():
    @contextlib.contextmanager
    def criterion(n):
        r = _Record()
        t = time.perf_counter()
        try:
            yield r
        except BaseException as e:
            msg = str(e).splitlines()[0] if str(e) else type(e).__name__
            _RESULTS[n] = (False, f"{r.detail} {msg}".strip())
            raise
        _RESULTS[n] = (True, f"{r.detail} ({time.perf_counter() - t:.1f} s)".strip())
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"ACCEPTANCE criterion {n}: {'PASS' if ok else 'FAIL'}: {detail}")
