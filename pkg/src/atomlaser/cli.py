"""Command line: ``atomlaser run | compare | validate | list-experiments``.

Exit codes: 0 success, 2 configuration or alignment error, 3 numerical-guard
error, 4 runtime divergence, 1 anything else.  Failures print one JSON
object on stderr, for example
``{"error": "numerical-guard", "guard": "step-size", "exit_code": 3, ...}``.

Environment
-----------
ATOMLASER_OUTPUT_ROOT
    Base directory for relative run directories (default: current directory).
ATOMLASER_THREADS
    FFT worker threads (default 1, which keeps results bitwise reproducible).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import experiments, records
from .errors import AlignmentError, AtomLaserError, MeasurementError, NumericalGuardError

OUTPUT_ROOT_ENV = "ATOMLASER_OUTPUT_ROOT"
GPE_FAMILY = set(cfgmod.GPE_KINDS)


# -------------------------------------------------------------------- configs

def bundled_configs():
    """Name -> path of the configs shipped with the package."""
    root = resources.files("atomlaser") / "configs"
    return {p.name[:-5]: Path(str(p)) for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".toml")}


def resolve_config(name_or_path):
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = bundled_configs()
    if name_or_path in bundled:
        return bundled[name_or_path]
    raise cfgmod.ConfigError(f"no config file or bundled experiment named {name_or_path!r}")


def output_dir(cfg, override=None):
    target = Path(override if override is not None else cfg["output"]["directory"])
    if target.is_absolute():
        return target
    return Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / target


# ------------------------------------------------------------------- commands

def run(config, output=None):
    """Run one experiment; returns (run directory, result)."""
    cfg = cfgmod.load(resolve_config(config))
    run_dir = output_dir(cfg, output)
    result = experiments.run_experiment(cfg)
    with records.exclusive_run_dir(run_dir):
        records.write_result(result, cfg, run_dir)
    return run_dir, result


_COMPARE_COLUMNS = ["t", "outcoupled_fraction", "center", "fwhm_k", "support_width"]


def compare(dir_a, dir_b, output=None):
    """Pair the line tables of two field runs snapshot by snapshot.

    Writes ``comparison.csv`` (per-time ratios and differences, A over B)
    and returns the summary dict.  The headline ``improvement_ratio`` is
    fwhm_A / fwhm_B at the largest outcoupled fraction both runs reach.
    """
    ca, cb = records.read_run_config(dir_a), records.read_run_config(dir_b)
    kind_a, kind_b = ca["config"]["kind"], cb["config"]["kind"]
    if not (kind_a in GPE_FAMILY and kind_b in GPE_FAMILY):
        raise AlignmentError(f"cannot compare kinds {kind_a!r} and {kind_b!r}: "
                             "comparison needs two field runs")
    _, a = records.read_columns(Path(dir_a) / "lines.csv", _COMPARE_COLUMNS)
    _, b = records.read_columns(Path(dir_b) / "lines.csv", _COMPARE_COLUMNS)
    if a["t"].shape != b["t"].shape or np.any(a["t"] != b["t"]):
        raise AlignmentError("snapshot schedules differ; runs cannot be paired")
    with np.errstate(divide="ignore", invalid="ignore"):
        rows = list(zip(a["t"], a["outcoupled_fraction"], b["outcoupled_fraction"],
                        a["fwhm_k"], b["fwhm_k"], a["fwhm_k"] / b["fwhm_k"],
                        a["support_width"], b["support_width"],
                        a["support_width"] / b["support_width"],
                        a["center"], b["center"], a["center"] - b["center"]))
    try:
        f_star, ratio = experiments.equal_fraction_ratio(a["outcoupled_fraction"], a["fwhm_k"],
                                                         b["outcoupled_fraction"], b["fwhm_k"])
        _, support_ratio = experiments.equal_fraction_ratio(
            a["outcoupled_fraction"], a["support_width"], b["outcoupled_fraction"], b["support_width"])
    except MeasurementError:
        f_star = ratio = support_ratio = float("nan")
    drift_a = float(a["center"][-1] - a["center"][0])
    drift_b = float(b["center"][-1] - b["center"][0])
    summary = {"run_a": str(dir_a), "run_b": str(dir_b), "equal_fraction": f_star,
               "improvement_ratio": ratio, "support_ratio": support_ratio,
               "center_drift_a": drift_a, "center_drift_b": drift_b}
    out = Path(output) if output is not None else Path(dir_a)
    out.mkdir(parents=True, exist_ok=True)
    digest = cfgmod.config_hash({"a": ca["config_sha256"], "b": cb["config_sha256"]})
    records.write_csv(out / "comparison.csv", "compare", digest,
                      ["t", "fraction_a", "fraction_b", "fwhm_a", "fwhm_b", "fwhm_ratio",
                       "support_a", "support_b", "support_ratio", "center_a", "center_b",
                       "center_diff"], rows,
                      [f"run_a: {dir_a} ({ca['config_sha256']})",
                       f"run_b: {dir_b} ({cb['config_sha256']})"])
    records.write_csv(out / "comparison_summary.csv", "compare", digest, ["key", "value"],
                      list(summary.items()))
    return summary


# ----------------------------------------------------------------------- main

def _error_line(exc):
    payload = {"error": getattr(exc, "kind", "error"), "type": type(exc).__name__,
               "exit_code": getattr(exc, "exit_code", 1), "message": str(exc)}
    if isinstance(exc, NumericalGuardError):
        payload["guard"] = exc.guard
    return json.dumps(payload, sort_keys=True)


def build_parser():
    p = argparse.ArgumentParser(prog="atomlaser", description="Atom-laser linewidth experiments.")
    p.add_argument("--version", action="version", version=f"atomlaser {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config (path or bundled name)")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="run directory (overrides [output] directory)")

    c = sub.add_parser("compare", help="pair two field runs snapshot by snapshot")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("-o", "--output", help="directory for comparison.csv (default: run_a)")

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")

    sub.add_parser("list-experiments", help="list kinds and bundled configs")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            run_dir, result = run(args.config, args.output)
            print(f"wrote {run_dir}")
            for key, value in result.summary.items():
                print(f"{key} = {records.format_value(value)}")
        elif args.command == "compare":
            summary = compare(args.run_a, args.run_b, args.output)
            for key, value in summary.items():
                print(f"{key} = {records.format_value(value)}")
        elif args.command == "validate":
            cfg = cfgmod.load(resolve_config(args.config))
            print(f"ok kind={cfg.kind} config_sha256={cfg.hash}")
        else:
            print("kinds:")
            for kind in cfgmod.KINDS:
                print(f"  {kind:17s} {cfgmod.DESCRIPTIONS[kind]}")
            print("bundled configs:")
            for name, path in bundled_configs().items():
                print(f"  {name:17s} {cfgmod.load(path).kind}")
    except AtomLaserError as exc:
        print(_error_line(exc), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "io", "exit_code": 1, "message": str(exc),
                          "type": type(exc).__name__}, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
