"""Command line interface: run, validate and plot experiments."""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import ConfigError, RunManifest, load_config, run


def _cmd_run(args) -> int:
    config = load_config(args.config)
    manifest = run(config, out_dir=args.out, workers=args.workers)
    print(f"run complete: {manifest.path}")
    for out in manifest.data["outputs"]:
        print(f"  {out['path']}  ({out['bytes']} bytes)")
    return 0


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    print(f"ok: {config.kind} experiment, seed {config.seed}")
    print(json.dumps(config.resolved(), indent=2, sort_keys=True))
    return 0


def _cmd_plot(args) -> int:
    from .plotting import plot  # matplotlib import deferred to here

    manifest = RunManifest.load(args.manifest)
    if manifest.status != "success":
        print(f"error: manifest status is {manifest.status!r}", file=sys.stderr)
        return 1
    for path in plot(manifest, which=args.kind, out_dir=args.out):
        print(path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="reflectmc",
        description="Reflective Monte Carlo experiments and diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to the experiment JSON")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=None,
                       help="parallel workers (default: available cores)")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config", help="path to the experiment JSON")
    p_val.set_defaults(func=_cmd_validate)

    p_plot = sub.add_parser("plot", help="render plots from a run manifest")
    p_plot.add_argument("manifest", help="path to manifest.json")
    p_plot.add_argument("--kind", default=None,
                        help="plot kind (defaults to the experiment kind)")
    p_plot.add_argument("--out", default=None, help="directory for images")
    p_plot.set_defaults(func=_cmd_plot)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
