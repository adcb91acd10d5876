"""Command-line entry point.

Exit codes: 0 success, 1 runtime/training failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

from .bench import (
    ConfigError,
    ExperimentConfig,
    TrainingError,
    emit_results,
    grad_check,
    run_suite,
)
from .data import gen_crossed_wave, gen_tabular, write_csv
from .network import KINDS, ModelSpec, SpecError, count_params

CONFIG_VERSION = 1
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("gskan")


class UsageError(Exception):
    pass


def parse_arch(text: str) -> list[int]:
    try:
        widths = [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed architecture {text!r}; expected e.g. 2,16,16,1") from None
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise argparse.ArgumentTypeError(f"architecture {text!r} needs at least two positive widths")
    return widths


def _spec_from_args(args) -> ModelSpec:
    return ModelSpec(
        kind=args.kind,
        widths=args.arch,
        spline_K=args.knots if args.kind == "gskan" else None,
        grid_G=args.grid if args.kind == "edgespline" else None,
        degree=args.degree,
        activation=args.activation,
    )


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.path=value`` overrides; values are parsed as JSON when possible."""
    doc = copy.deepcopy(doc)
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"override {item!r} is not of the form key=value")
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"override {item!r}: {part!r} is not a section")
        node[parts[-1]] = _parse_value(raw)
    return doc


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: top level must be an object")
    version = doc.pop("version", None)
    if version != CONFIG_VERSION:
        raise UsageError(f"{path}: unsupported config version {version!r} (expected {CONFIG_VERSION})")
    return doc


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _split_output(doc: dict, allowed) -> tuple[dict, dict]:
    doc = dict(doc)
    output = doc.pop("output", {}) or {}
    unknown = set(output) - set(allowed)
    if unknown:
        raise UsageError(f"unknown key(s) in output: {sorted(unknown)}")
    return doc, output


def _dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


# --- commands -----------------------------------------------------------------

def cmd_count_params(args) -> int:
    report = count_params(_spec_from_args(args))
    if args.json:
        print(json.dumps({"layers": report.layers, "total": report.total}))
    else:
        print(report.format())
    return EXIT_OK


def cmd_gen_data(args) -> int:
    if args.task == "crossed_wave":
        ds = gen_crossed_wave(args.n, args.seed, 0.01 if args.noise is None else args.noise)
    else:
        ds = gen_tabular(args.n, args.seed, 0.1 if args.noise is None else args.noise)
    write_csv(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    doc = apply_overrides(load_config_file(args.config), args.set)
    doc, output = _split_output(doc, ["dir"])
    config = ExperimentConfig.from_dict(doc)
    out_dir = Path(args.out_dir or output.get("dir") or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)

    agg = run_suite(config, workers=args.workers, checkpoint_dir=out_dir)
    result = {
        "config": config.to_dict(),
        "runs": [r.to_dict() for r in agg.runs],
        "best_test_mean": agg.mean,
        "best_test_std": agg.std,
        "single_seed": agg.single_seed,
    }
    _dump(result, out_dir / "result.json")
    for r in agg.runs:
        print(f"seed {r.seed}: final test {r.metric} {r.test_trace[-1]:.6g}, "
              f"best {r.best_test:.6g} at epoch {r.best_epoch}")
    print(f"best test {agg.metric}: {agg.mean:.6g} +- {agg.std:.3g} over {len(agg.seeds)} seed(s)")
    print(f"results written to {out_dir / 'result.json'}")
    return EXIT_OK


def cmd_bench(args) -> int:
    doc = apply_overrides(load_config_file(args.config), args.set)
    doc, output = _split_output(doc, ["results", "format"])
    unknown = set(doc) - {"defaults", "entries"}
    if unknown:
        raise UsageError(f"unknown key(s) in suite config: {sorted(unknown)}")
    entries = doc.get("entries") or []
    if not entries:
        raise UsageError("suite has no entries")
    defaults = doc.get("defaults", {})
    configs = []
    for i, entry in enumerate(entries):
        entry = dict(entry)
        name = entry.pop("name", f"entry {i}")
        try:
            configs.append((name, ExperimentConfig.from_dict(_deep_merge(defaults, entry))))
        except (ConfigError, SpecError) as exc:
            raise UsageError(f"{name}: {exc}") from None

    fmt = args.format or output.get("format") or "csv"
    out = Path(args.out or output.get("results") or f"results.{fmt}")
    out.parent.mkdir(parents=True, exist_ok=True)
    aggregates = []
    for name, config in configs:
        log.info("running %s", name)
        agg = run_suite(config, workers=args.workers)
        aggregates.append(agg)
        print(f"{name}: {config.model.kind} {list(config.model.widths)} {config.model.resolution} "
              f"best test {agg.metric} {agg.mean:.4g} +- {agg.std:.3g}")
    emit_results(aggregates, fmt, out)
    print(f"results written to {out}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    report = grad_check(_spec_from_args(args), args.batch, args.step, args.tol, seed=args.seed)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gskan", description="Shared-spline KAN benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--kind", required=True, choices=KINDS)
        p.add_argument("--arch", required=True, type=parse_arch, help="comma-separated widths, e.g. 2,16,16,1")
        p.add_argument("--knots", type=int, default=None, help="knot count K (gskan)")
        p.add_argument("--grid", type=int, default=None, help="grid size G (edgespline)")
        p.add_argument("--degree", type=int, default=3)
        p.add_argument("--activation", choices=("relu", "silu"), default="silu", help="MLP activation")

    p = sub.add_parser("count-params", help="print the parameter breakdown of an architecture")
    model_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    p.add_argument("--task", choices=("crossed_wave", "tabular"), default="crossed_wave")
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one experiment config over its seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="run a suite of experiments and emit a results table")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("grad-check", help="compare analytic and finite-difference gradients")
    model_flags(p)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, SpecError) as exc:
        print(f"gskan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"gskan: training failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"gskan: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
