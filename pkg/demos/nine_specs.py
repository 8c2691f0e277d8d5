"""Cross-fitted cascade rates for the nine demo threat specs on the 40-bag corpus.

    python demos/nine_specs.py [workdir]

Reuses whatever corpus, cache and features already sit in the work
directory, so a second run only repeats the Stage II work.
"""

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from aatr import pipeline as pl

SPECS = ["saline", "rubber", "clay", "mass400", "mass300", "mass100", "thick10", "thick6510", "thin"]


def main(workdir="/tmp/aatr-desk"):
    cfg = pl.PipelineConfig(workdir=Path(workdir), outer_folds=5)
    if not (cfg.corpus / "split.tsv").exists():
        pl.cmd_gen(cfg)
    pl.cmd_stage1(cfg)
    pl.cmd_featurize(cfg)
    ors_dir = Path(__file__).parent / "ors"
    rows = []
    print(f"{'spec':<10} {'pd1':>6} {'pfa1':>6} {'pd':>6} {'pfa':>6}  seconds")
    for name in SPECS:
        rep, sec = pl.timed(pl.crossfit, replace(cfg), ors_dir / f"{name}.ors")
        rows.append((rep.total.pd, rep.total.pfa))
        print(f"{name:<10} {rep.stage1.pd:6.3f} {rep.stage1.pfa:6.3f} {rep.total.pd:6.3f} {rep.total.pfa:6.3f}  {sec:5.1f}")
    pd, pfa = np.array(rows).T
    print(f"spread: pd std {pd.std():.3f}, pfa std {pfa.std():.3f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
