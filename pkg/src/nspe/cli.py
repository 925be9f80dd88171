"""Command-line entry point: ``nspe run | bias | validate``.

Exit codes: 0 success, 2 invalid configuration, 3 a simulated run
diverged, 4 output could not be written.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .analysis import to_db
from .errors import CalibrationError, ConfigError
from .estimators import Variant
from .harness import (OutputError, bias_report, emit_outputs, ensure_writable, load_config,
                      run_experiment)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nspe", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True,
                        help="JSON experiment config, or preset:<name> (e.g. preset:paper)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--runs", type=int, help="override the number of Monte Carlo runs")
        sp.add_argument("--iters", type=int, help="override the number of iterations")

    run = sub.add_parser("run", help="simulate the configured strategies and write results")
    common(run)
    run.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    run.add_argument("--quiet", action="store_true", help="do not print the summary")

    bias = sub.add_parser("bias", help="predicted steady-state bias only, no simulation")
    common(bias)
    bias.add_argument("--out", type=Path, help="write bias.json here instead of stdout")
    bias.add_argument("--algorithm", default="blind", choices=["noncoop", "oracle", "blind"])

    val = sub.add_parser("validate", help="check a config and its topology")
    common(val)
    return p


def _load(args):
    cfg = load_config(args.config)
    over = {"seed": args.seed, "runs": args.runs, "iterations": args.iters}
    if getattr(args, "out", None) is not None and args.command == "run":
        over["output_dir"] = args.out
    if args.iters is not None and cfg.trace_stride > args.iters:
        over["trace_stride"] = 1
    return cfg.with_overrides(**over)


def _cmd_run(args) -> int:
    cfg = _load(args)
    ensure_writable(cfg.output_dir)
    result = run_experiment(cfg)
    paths = emit_outputs(result)
    if not args.quiet:
        for name, v in result.variants.items():
            steady = v.steady_msd()["network"]
            db = "nan" if math.isnan(steady) else f"{float(to_db(steady)):.2f}"
            line = f"{name:>10}: steady-state network MSD {db} dB"
            clus = v.clustering()
            if clus is not None:
                line += f", precision {clus['precision']:.4f}, recall {clus['recall']:.4f}"
            if v.diverged.any():
                line += f", {int(v.diverged.sum())} run(s) diverged"
            print(line)
        print(f"results written to {paths['summary'].parent}")
    if any(result.divergence_counts.values()):
        print("error: divergence detected (non-finite estimates)", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_bias(args) -> int:
    cfg = _load(args)
    if args.out is not None:
        ensure_writable(args.out)
    report = bias_report(cfg, Variant(args.algorithm))
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        (args.out / "bias.json").write_text(text, encoding="utf-8")
    if not all(r["converged"] for r in report["runs"]):
        print("error: mean recursion does not converge (spectral radius >= 1)", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load(args)
    net = cfg.network
    print(net.validate().describe())
    print(f"nodes {net.size}, tasks {len(net.tasks)}, node-task pairs {len(net.index)}")
    print(f"iterations {cfg.iterations}, runs {cfg.runs}, seed {cfg.seed}, "
          f"strategies {', '.join(v.name for v in cfg.variants)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "bias": _cmd_bias, "validate": _cmd_validate}[args.command]
    try:
        return handler(args)
    except (ConfigError, CalibrationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
