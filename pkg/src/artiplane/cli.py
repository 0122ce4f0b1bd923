"""Command-line interface.

Verbs:
  gen       generate a synthetic dataset from a scene spec JSON
  run       run the full recovery pipeline from a config JSON
  baseline  per-view RANSAC plane-fitting baseline for the same config
  sweep     noise sweep over one channel of the config
  eval      reprint the metric table of a finished run

Exit codes: 0 success, 2 configuration error, 3 hard pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ContractViolation, GeometryError
from .pipeline import (
    PipelineConfig,
    baseline_ransac_planes,
    evaluate_run,
    noise_sweep,
    run_pipeline,
    summarize_run,
)
from .synth.dataset import build_ground_truth, export_dataset
from .synth.generator import SceneSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3


def _load_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractViolation(f"cannot read JSON {path}: {exc}") from exc


def _cmd_gen(args) -> int:
    data = _load_json(args.spec)
    specs = data if isinstance(data, list) else [data]
    out = Path(args.out)
    for i, sd in enumerate(specs):
        if args.seed is not None:
            sd = {**sd, "seed": args.seed + i}
        spec = SceneSpec.from_json(sd)
        gt = build_ground_truth(spec, n_views=args.views)
        target = out / f"scene_{i:03d}" if isinstance(data, list) else out
        export_dataset(gt, target)
        print(f"wrote {target} ({len(gt.bundles)} views, {len(gt.gt_planes)} GT planes)")
    return EXIT_OK


def _config_from_args(args) -> PipelineConfig:
    cfg = _load_json(args.config)
    overrides = {}
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "views", None) is not None:
        overrides["views"] = args.views
    if getattr(args, "repeats", None) is not None:
        overrides["repeats"] = args.repeats
    return PipelineConfig.from_json({**cfg, **overrides})


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    summary = run_pipeline(config)
    print(summarize_run(summary))
    return EXIT_PIPELINE if summary["hard_failures"] else EXIT_OK


def _cmd_baseline(args) -> int:
    config = _config_from_args(args)
    summary = baseline_ransac_planes(config)
    print(summarize_run(summary))
    return EXIT_PIPELINE if summary["hard_failures"] else EXIT_OK


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    grid = [float(x) for x in args.grid.split(",") if x != ""]
    rows = noise_sweep(config, args.channel, grid)
    for row in rows:
        cd = row.get("mean_normal_diff_deg_mean")
        print(f"level {row['level']}: mean normal diff "
              f"{'n/a' if cd is None else f'{cd:.4f}'} deg")
    return EXIT_OK


def _cmd_eval(args) -> int:
    summary = evaluate_run(args.run_dir)
    print(summarize_run(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artiplane", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="scene spec JSON (object or list)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--seed", type=int, default=None, help="override spec seed")
    p.set_defaults(fn=_cmd_gen)

    for verb, fn in (("run", _cmd_run), ("baseline", _cmd_baseline)):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--views", type=int, default=None)
        p.add_argument("--repeats", type=int, default=None)
        p.set_defaults(fn=fn)

    p = sub.add_parser("sweep", help="noise sweep over one channel")
    p.add_argument("--config", required=True)
    p.add_argument("--channel", required=True,
                   help="noise channel, e.g. depth_sigma, sigma_px, mask_morph_px")
    p.add_argument("--grid", required=True, help="comma-separated ascending levels")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("eval", help="reprint metrics of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(fn=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ContractViolation as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
