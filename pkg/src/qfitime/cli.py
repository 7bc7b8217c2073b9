"""qfitime command-line interface.

Usage:
    qfitime qfi-scan --config configs/qfi-scan.json --out results/qfi.csv
    qfitime mle -p t0=0.4 -p 'N=[250, 500, 1000]' --seed 7 --out results/mle.json
    qfitime summarize results/qfi.csv
    qfitime info
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_MISSING = 1
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


def _parse_overrides(items: list[str] | None) -> dict:
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def cmd_run(args: argparse.Namespace) -> int:
    """Run one experiment and write its result bundle."""
    from .experiments import DEFAULT_SEED, ExperimentConfig, read_config, resolve_setting, run
    from .types import NumericalError

    doc: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            print(f"File not found: {args.config}")
            return EXIT_MISSING
    try:
        if args.config:
            doc = read_config(path)
            if doc.get("experiment", args.command) != args.command:
                raise ValueError(
                    f"config.experiment: file is for {doc['experiment']!r}, not {args.command!r}"
                )
        params = {**doc.get("params", {}), **_parse_overrides(args.param)}
        seed = resolve_setting(args.seed, os.environ.get("QFITIME_SEED"), doc.get("seed"),
                               DEFAULT_SEED, "QFITIME_SEED")
        threads = resolve_setting(args.threads, os.environ.get("QFITIME_THREADS"),
                                  doc.get("threads"), 1, "QFITIME_THREADS")
        output = args.out or doc.get("output")
        config = ExperimentConfig(
            experiment=args.command,
            params=params,
            master_seed=seed,
            threads=threads,
            output=Path(output) if output else None,
            paper_scale=args.paper_scale or doc.get("paper_scale", False),
        )
        bundle = run(config, resume=not args.fresh)
    except ValueError as e:
        print(f"Invalid configuration: {e}")
        return EXIT_INVALID
    except NumericalError as e:
        print(f"Numerical abort: {e}")
        return EXIT_NUMERICAL

    print(f"{bundle.experiment}: {len(bundle.rows):,} rows in {bundle.metadata['elapsed_s']:.1f} s")
    if config.output is not None:
        print(f"Saved: {config.output}")
    else:
        from .experiments import summarize
        from .report import summary_table

        print(summary_table(summarize(bundle).rows))
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace) -> int:
    """Reduce a saved result bundle over samples."""
    from .experiments import summarize
    from .report import format_value, summary_table
    from .resultfile import ResultBundle, load_bundle, save_bundle

    path = Path(args.file)
    if not path.exists():
        print(f"File not found: {args.file}")
        return EXIT_MISSING
    try:
        bundle = load_bundle(path)
        summary = summarize(bundle, reduction=args.reduction, window=tuple(args.window))
    except ValueError as e:
        print(f"Cannot summarize {path.name}: {e}")
        return EXIT_INVALID

    print(f"## {summary.experiment} ({args.reduction})\n")
    print(summary_table(summary.rows))
    for key, value in summary.notes.items():
        shown = ", ".join(format_value(v) for v in value) if isinstance(value, list) else format_value(value)
        print(f"- {key}: {shown}")
    if args.out:
        save_bundle(
            ResultBundle(f"{summary.experiment}-summary", bundle.config, summary.rows,
                         {"notes": summary.notes, "source": path.name}),
            args.out,
        )
        print(f"\nSaved: {args.out}")
    return EXIT_OK


def cmd_info(args: argparse.Namespace) -> int:
    """List experiments with their defaults and sample counts."""
    from .experiments import EXPERIMENTS
    from .report import registry_table

    entries = []
    for spec in EXPERIMENTS.values():
        entries.append({
            "experiment": spec.name,
            "samples": spec.defaults.get(spec.count_key) if spec.count_key else None,
            "paper_samples": spec.paper_count,
            "description": spec.description,
        })
    print(registry_table(entries))
    if args.experiment:
        spec = EXPERIMENTS.get(args.experiment)
        if spec is None:
            print(f"Unknown experiment: {args.experiment}")
            return EXIT_INVALID
        print(f"\n{spec.name} defaults:")
        print(json.dumps(spec.defaults, indent=2))
    return EXIT_OK


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    from .experiments import EXPERIMENTS, SATURATION_WINDOW

    parser = argparse.ArgumentParser(
        prog="qfitime",
        description="Subsystem Fisher information and time-estimation experiments",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command")

    # qfitime <experiment>
    for spec in EXPERIMENTS.values():
        p = sub.add_parser(spec.name, help=spec.description)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("-p", "--param", action="append", metavar="KEY=VALUE",
                       help="Override one parameter (VALUE parsed as JSON)")
        p.add_argument("--seed", type=int, help="Master seed (CLI > env:QFITIME_SEED > config)")
        p.add_argument("--threads", type=int, help="Worker threads (CLI > env:QFITIME_THREADS > config)")
        p.add_argument("--out", help="Output .csv or .json path")
        p.add_argument("--paper-scale", action="store_true",
                       help="Use the paper-scale sample counts instead of desk scale")
        p.add_argument("--fresh", action="store_true", help="Ignore an existing resume journal")

    # qfitime summarize
    p_sum = sub.add_parser("summarize", help="Reduce a result file over samples")
    p_sum.add_argument("file", help="Result .csv or .json")
    p_sum.add_argument("--reduction", choices=("mean", "median"), default="mean")
    p_sum.add_argument("--window", type=float, nargs=2, default=list(SATURATION_WINDOW),
                       metavar=("T0", "T1"), help="Late-time window for saturation values")
    p_sum.add_argument("--out", help="Write the summary table to .csv or .json")

    # qfitime info
    p_info = sub.add_parser("info", help="List experiments, defaults and sample counts")
    p_info.add_argument("experiment", nargs="?", help="Show the defaults of one experiment")

    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    if not args.command:
        parser.print_help()
        return EXIT_OK

    handlers = {"summarize": cmd_summarize, "info": cmd_info}
    return handlers.get(args.command, cmd_run)(args)


if __name__ == "__main__":
    sys.exit(main())
