"""Run directories: CSV tables with metadata headers, summaries, snapshots.

Every CSV starts with ``#`` lines carrying the package version, the
experiment kind and the config hash, followed by one header row.  Floats are
written with :func:`repr`, the shortest string that round-trips, so equal
numbers always give equal bytes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import AlignmentError, AtomLaserError
from .gpe import write_snapshot


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _header(kind, digest, notes=()):
    lines = [f"# atomlaser {__version__}", f"# kind: {kind}", f"# config_sha256: {digest}"]
    lines += [f"# {n}" for n in notes]
    return lines


def write_csv(path, kind, digest, columns, rows, notes=()):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in _header(kind, digest, notes):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def read_csv(path):
    """Returns (metadata dict, columns, rows of strings)."""
    meta, body = {}, []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if ":" in text:
                    key, _, value = text.partition(":")
                    meta[key.strip()] = value.strip()
                elif text.startswith("atomlaser "):
                    meta["version"] = text.split()[1]
            else:
                body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise AtomLaserError(f"{path}: no header row")
    return meta, rows[0], rows[1:]


def read_columns(path, names):
    meta, columns, rows = read_csv(path)
    missing = [n for n in names if n not in columns]
    if missing:
        raise AlignmentError(f"{path}: missing columns {missing}")
    out = {}
    for n in names:
        i = columns.index(n)
        out[n] = np.array([float(r[i]) for r in rows])
    return meta, out


@contextmanager
def exclusive_run_dir(path):
    """Create ``path`` and hold a lock file in it for the duration of a run."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise AtomLaserError(f"{path} is in use by another run (remove {lock} if stale)") from None
    os.close(fd)
    try:
        yield path
    finally:
        lock.unlink(missing_ok=True)


def write_result(result, cfg: ExperimentConfig, run_dir):
    """Write every table, the summary, the config and the snapshots."""
    digest = cfg.hash
    run_dir = Path(run_dir)
    written = []
    for table in result.tables:
        p = run_dir / f"{table.name}.csv"
        write_csv(p, cfg.kind, digest, table.columns, table.rows, table.notes)
        written.append(p)
    p = run_dir / "summary.csv"
    write_csv(p, cfg.kind, digest, ["key", "value"], list(result.summary.items()))
    written.append(p)
    p = run_dir / "config.json"
    p.write_text(json.dumps({"version": __version__, "config_sha256": digest,
                             "config": json.loads(cfg.to_json())},
                            sort_keys=True, indent=1) + "\n", encoding="utf-8")
    written.append(p)
    if result.snapshots and cfg["output"].get("snapshots", True):
        snap_dir = run_dir / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        for label, psi, dx, t in result.snapshots:
            p = snap_dir / f"{label}.bin"
            write_snapshot(p, psi, dx, t)
            written.append(p)
    return written


def read_summary(run_dir):
    _, columns, rows = read_csv(Path(run_dir) / "summary.csv")
    return {r[0]: r[1] for r in rows}


def read_run_config(run_dir):
    p = Path(run_dir) / "config.json"
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except OSError:
        raise AlignmentError(f"{run_dir} is not a completed run (no config.json)") from None
