import json

import pytest

from aatr import pipeline as pl
from aatr.cli import run


def cli(wd, *args):
    return run(["--workdir", str(wd), *map(str, args)])


def test_eval_before_adapt_names_the_missing_step(small_workdir, capsys):
    wd, _, ors = small_workdir
    assert cli(wd, "eval", "--ors", ors["clay"]) == 3
    err = capsys.readouterr().err
    assert "adapt" in err and "not found" in err


def test_featurize_on_empty_workdir(tmp_path, capsys):
    assert cli(tmp_path, "featurize") == 3
    assert "run `aatr gen` first" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["n_bags: 4\n", "AATRCONFIG 1\ncolour: red\n", "AATRCONFIG 1\nn_bags: many\n",
                                  "AATRCONFIG 1\ntest_fraction: 1.5\n"])
def test_bad_config_exits_2(tmp_path, text):
    (tmp_path / "aatr.cfg").write_text(text)
    assert cli(tmp_path, "gen") == 2


def test_missing_ors_flag_exits_2(tmp_path):
    assert cli(tmp_path, "adapt") == 2


def test_bad_ors_exits_4(small_workdir, tmp_path):
    wd, _, _ = small_workdir
    bad = tmp_path / "bad.ors"
    bad.write_text("density: 1215:1050\ntarget_pd: 0.9\ntarget_pfa: 0.1\n")
    assert cli(wd, "adapt", "--ors", bad) == 4
    bad.write_text("density: 1050:1215\nfoo: 1\ntarget_pd: 0.9\ntarget_pfa: 0.1\n")
    assert cli(wd, "adapt", "--ors", bad) == 4


def test_adapt_eval_roc_deterministic(small_workdir, capsys):
    wd, cfg, ors = small_workdir
    reports = []
    for _ in range(2):
        assert cli(wd, "adapt", "--ors", ors["saline"]) == 0
        assert cli(wd, "eval", "--ors", ors["saline"]) == 0
        reports.append((cfg.reports / "saline.report.tsv").read_bytes())
    assert reports[0] == reports[1]
    out = capsys.readouterr().out
    assert "saline" in out and "total" in out
    assert cli(wd, "roc", "--ors", ors["saline"]) == 0
    rows = (cfg.reports / "saline.roc.tsv").read_text().splitlines()
    assert rows[0] == "threshold\tpd2\tpfa2\tpd\tpfa" and len(rows) == 1 + cfg.roc_points + 1


def test_stage1_cache_untouched_by_adapt(small_workdir):
    wd, cfg, ors = small_workdir
    before = {p.name: pl.file_hash(p) for p in sorted(cfg.cache.rglob("*")) if p.is_file()}
    assert cli(wd, "adapt", "--ors", ors["rubber"]) == 0
    assert cli(wd, "adapt", "--ors", ors["thin"]) == 0
    after = {p.name: pl.file_hash(p) for p in sorted(cfg.cache.rglob("*")) if p.is_file()}
    assert before == after


def test_stage1_rerun_reuses_cache(small_workdir, capsys):
    wd, _, _ = small_workdir
    assert cli(wd, "stage1") == 0
    assert "0 bags computed" in capsys.readouterr().out


def test_stale_model_detected(small_workdir, tmp_path):
    wd, cfg, ors = small_workdir
    assert cli(wd, "adapt", "--ors", ors["clay"]) == 0
    edited = tmp_path / "clay.ors"
    edited.write_text("density: 1500:1715\ntarget_pd: 0.9\ntarget_pfa: 0.1\n")
    assert cli(wd, "eval", "--ors", edited) == 6


def test_runs_log_entries(small_workdir):
    wd, _, ors = small_workdir
    assert cli(wd, "adapt", "--ors", ors["mass100"]) == 0
    entries = [json.loads(ln) for ln in (wd / "runs.log").read_text().splitlines()]
    cmds = {e["command"] for e in entries}
    assert {"gen", "stage1", "featurize", "adapt"} <= cmds
    last = entries[-1]
    assert last["command"] == "adapt" and last["ors_id"] == "mass100" and "config_hash" in last


def test_flag_overrides_config(tmp_path):
    cfg = pl.PipelineConfig(workdir=tmp_path)
    out = pl.apply_overrides(cfg, {"n_trees": "7", "t_grid": "0.7,0.8"})
    assert out.n_trees == 7 and out.t_grid == (0.7, 0.8)
    assert pl.parse_config(out.dumps(), pl.PipelineConfig(workdir=tmp_path)) == out
    with pytest.raises(pl.ConfigError):
        pl.PipelineConfig(workdir=tmp_path, cache_dir="corpus")


def test_split_covers_materials(small_workdir):
    _, cfg, _ = small_workdir
    split = pl.load_split(cfg)
    assert len(split) == 6 and set(split.values()) == {"train", "test"}
