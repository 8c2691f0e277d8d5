"""Command line: ``aatr {gen,stage1,featurize,adapt,eval,roc}``.

Exit codes: 0 success, 2 bad usage or config, 3 missing prerequisite
artifact (the message names the command to run first), 4 invalid ORS,
5 adaptation infeasible, 6 corrupt or stale artifact, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .adapt import AdaptationInfeasible, OrsError
from .eval import report_lines

EXIT_ORS = 4
EXIT_INFEASIBLE = 5

COMMANDS = ("gen", "stage1", "featurize", "adapt", "eval", "roc")
NEEDS_ORS = ("adapt", "eval", "roc")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aatr", description="Adaptive two-stage threat recognition pipeline.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--workdir", default=".", help="root of corpus/, cache/, models/, reports/ (default: .)")
    ap.add_argument("--config", help="config file (first line AATRCONFIG 1); default <workdir>/aatr.cfg if present")
    ap.add_argument("--ors", help="ORS file (adapt, eval, roc)")
    ap.add_argument("-v", "--verbose", action="store_true")
    for key, (_, help_) in pl.CONFIG_KEYS.items():
        ap.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=help_)
    return ap


def load_config(args) -> pl.PipelineConfig:
    workdir = Path(args.workdir)
    cfg = pl.PipelineConfig(workdir=workdir)
    path = Path(args.config) if args.config else workdir / "aatr.cfg"
    if args.config and not path.exists():
        raise pl.ConfigError(f"config file {path} does not exist")
    if path.exists():
        cfg = pl.parse_config(path.read_text(), cfg)
    flags = {k: getattr(args, k) for k in pl.CONFIG_KEYS if getattr(args, k) is not None}
    return pl.apply_overrides(cfg, flags)


def _rate(x):
    return "NA" if x is None else f"{x:.3f}"


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command in NEEDS_ORS and not args.ors:
            raise pl.ConfigError(f"`{args.command}` needs --ors FILE")
        Path(cfg.workdir).mkdir(parents=True, exist_ok=True)
        if args.command == "gen":
            r = pl.cmd_gen(cfg)
            print(f"generated {r['bags']} bags ({r['test']} held out), {r['dropped']} objects dropped in packing")
        elif args.command == "stage1":
            r = pl.cmd_stage1(cfg)
            print(f"stage1: {r['computed']} bags computed, {r['reused']} reused from cache, {r['blobs']} new blobs")
        elif args.command == "featurize":
            r = pl.cmd_featurize(cfg)
            print(f"featurize: {r['blobs']} blobs ({r['strays']} stray), {r['objects']} ground-truth objects")
        elif args.command == "adapt":
            r = pl.cmd_adapt(cfg, args.ors)
            wp = r["weighting"]
            print(f"adapt {r['ors_id']}: stage II targets pd2={r['targets'][0]:.4f} pfa2={r['targets'][1]:.4f}"
                  f"{' (clamped, unreachable)' if r['unreachable'] else ''}; chosen t={wp.t} "
                  f"sigma=({wp.sigma_density:g}, {wp.sigma_thickness:g}); cv pd2={_rate(r['cv'][0])} pfa2={_rate(r['cv'][1])}")
        elif args.command == "eval":
            print("\n".join(report_lines([pl.cmd_eval(cfg, args.ors)])))
        elif args.command == "roc":
            print("threshold\tpd2\tpfa2\tpd\tpfa")
            for thr, *rates in pl.cmd_roc(cfg, args.ors):
                print(f"{thr:.3f}\t" + "\t".join(_rate(x) for x in rates))
    except pl.PipelineError as e:
        print(f"aatr {args.command}: {e}", file=sys.stderr)
        return e.exit_code
    except OrsError as e:
        print(f"aatr {args.command}: invalid ORS: {e}", file=sys.stderr)
        return EXIT_ORS
    except AdaptationInfeasible as e:
        print(f"aatr {args.command}: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
