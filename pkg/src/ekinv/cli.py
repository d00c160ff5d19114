"""Command-line entry point: ``ekinv run|compare|sweep|validate``.

Exit codes: 0 success, 1 invalid configuration, 2 numerical divergence.
Outputs go under ``$EKINV_OUTPUT_ROOT`` (default ``./runs``) unless the
config or ``--output-dir`` gives an absolute path.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (ConfigError, ExperimentConfig, compare, load_config, run_experiment,
                      sweep, validate_config)
from .records import RunRecord

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args):
    out = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _parse_value(value)
    if getattr(args, "output_dir", None):
        out["output_dir"] = args.output_dir
    return out


def _load(args):
    try:
        data = load_config(args.config, _overrides(args))
    except (OSError, json.JSONDecodeError) as exc:
        return None, [f"cannot read {args.config}: {exc}"]
    return data, validate_config(data)


def _report_errors(errors):
    print("invalid configuration:", file=sys.stderr)
    for e in errors:
        print(f"  {e}", file=sys.stderr)
    return EXIT_INVALID


def cmd_validate(args):
    data, errors = _load(args)
    if errors:
        return _report_errors(errors)
    print(json.dumps(ExperimentConfig.from_dict(data).to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args):
    data, errors = _load(args)
    if errors:
        return _report_errors(errors)
    record = run_experiment(ExperimentConfig.from_dict(data))
    ex = record.extras
    print(f"status       {record.status}")
    print(f"steps        {record.n_steps}")
    for key in ("final_rel_error", "final_misfit", "oracle_error", "high_mode_energy"):
        if ex.get(key) is not None:
            print(f"{key:<12} {ex[key]:.6g}")
    if record.whitened_noise_level is not None:
        print(f"noise level  {record.noise_level:.6g} (whitened {record.whitened_noise_level:.6g})")
    print(f"output       {ex.get('output_dir')}")
    if record.diverged:
        print(f"diverged: {record.message}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_compare(args):
    try:
        records = [RunRecord.load(d) for d in args.records]
        report = compare(records)
    except (OSError, ValueError) as exc:
        print(f"cannot compare: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(report.to_text(), end="")
    if args.output:
        report.write(args.output)
    return EXIT_OK


def cmd_sweep(args):
    data, errors = _load(args)
    if errors:
        return _report_errors(errors)
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()]
    try:
        report = sweep(ExperimentConfig.from_dict(data), args.param, values, workers=args.workers)
    except ConfigError as exc:
        return _report_errors(exc.errors)
    except ValueError as exc:
        return _report_errors([str(exc)])
    print(report.to_csv(), end="")
    return EXIT_DIVERGED if any(r.diverged for r in report.records) else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ekinv", description="Ensemble Kalman inversion experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("config", type=Path, help="JSON experiment configuration")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field (value parsed as JSON when possible)")
        sp.add_argument("--output-dir", help="override the output directory")
        return sp

    with_config(sub.add_parser("validate", help="check a configuration")).set_defaults(func=cmd_validate)
    with_config(sub.add_parser("run", help="run one experiment")).set_defaults(func=cmd_run)
    sp = with_config(sub.add_parser("sweep", help="run a config over a list of parameter values"))
    sp.add_argument("--param", required=True)
    sp.add_argument("--values", required=True, help="comma-separated list")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("compare", help="compare two or more run directories")
    sp.add_argument("records", nargs="+", type=Path)
    sp.add_argument("--output", type=Path, help="directory for the CSV and text reports")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
