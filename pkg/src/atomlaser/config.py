"""Experiment configuration files.

A config is a TOML document with a top-level ``kind`` and sections
``[system]``, ``[coupling]``, ``[detuning]``, ``[numerics]``, ``[analysis]``,
``[sweep]`` and ``[output]``.  Each kind declares which keys it reads; unknown
keys and missing required keys are configuration errors.  Defaults are filled
in before hashing, so two files describing the same experiment share a hash.

Physical parameters in ``[system]``, ``[coupling]`` and ``[detuning]`` may be
given at their laboratory values together with ``system.time_scale = s``;
the runner then applies :func:`atomlaser.gpe.time_scale_parameters`.  Grid,
step and duration values in ``[numerics]`` and ``[analysis]`` are always in
simulated units.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from scipy.constants import hbar

from .errors import ConfigError, GridSizeError, StepSizeError
from .physical_model import RB87_MASS

REQUIRED = object()

KINDS = ("table1", "spectrum", "modes", "gpe", "chirp", "weak-sweep", "interferometer")
GPE_KINDS = ("gpe", "chirp", "weak-sweep")

# (k0 [1/m], Omega [rad/s], asterisk); asterisk marks strong-coupling rows where
# the numeric width is expected to exceed the golden-rule value
REFERENCE_ROWS = [
    [1e7, 400.0, True], [1e7, 100.0, False], [1e7, 25.0, False], [1e7, 10.0, False],
    [5e6, 100.0, False], [5e6, 25.0, False], [5e6, 10.0, False],
    [1e6, 100.0, True], [1e6, 25.0, False], [1e6, 10.0, False],
]


@dataclass(frozen=True)
class Key:
    kind: type | tuple
    default: object = REQUIRED
    check: object = None       # callable returning an error message or None
    doc: str = ""


def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be >= 0"


def _all_positive(v):
    return None if all(x > 0 for x in v) else "entries must be positive"


def _power_of_two(v):
    return None if v >= 2 and not v & (v - 1) else "must be a power of two"


def _choice(*options):
    def check(v):
        return None if v in options else f"must be one of {list(options)}"
    return check


_NUM = (int, float)
_LIST = (list,)

_SYSTEM_LINEAR = {
    "mass": Key(_NUM, RB87_MASS, _positive, "atomic mass (kg)"),
    "a": Key(_NUM, 0.0, _non_negative, "scattering length for every state pair (m)"),
    "omega_t": Key(_NUM, REQUIRED, _positive, "trap angular frequency (rad/s)"),
}

_SYSTEM_GPE = {
    **_SYSTEM_LINEAR,
    "a_tt": Key(_NUM, None, _non_negative, "overrides a for the trapped pair"),
    "a_uu": Key(_NUM, None, _non_negative, "overrides a for the untrapped pair"),
    "a_tu": Key(_NUM, None, _non_negative, "overrides a for the cross pair"),
    "n0": Key(_NUM, REQUIRED, _positive, "initial condensate atom number"),
    "area": Key((str, float, int), "calibrated", None,
                "transverse area (m^2) or one of default | matched | calibrated"),
    "time_scale": Key(_NUM, 1.0, _positive, "time factor s applied to physical parameters"),
}

_SINGLE_NUMERICS = {
    "gamma_t": Key(_NUM, 10.0, _positive, "run length in units of 1/gamma"),
    "window": Key(_NUM, 450.0, _positive, "q window in golden-rule widths"),
    "revival_safety": Key(_NUM, 1.25, _positive, "margin below the revival limit"),
    "points_per_sigma": Key(int, 20, _positive, "q samples per momentum width"),
    "n_samples": Key(int, 51, _positive, "trajectory samples"),
}

_GPE_NUMERICS = {
    "n_points": Key(int, REQUIRED, _power_of_two, "grid points (power of two)"),
    "dx": Key(_NUM, REQUIRED, _positive, "grid spacing (m)"),
    "origin": Key(_NUM, None, None, "left grid edge (m); default centres the grid"),
    "dt": Key(_NUM, REQUIRED, _positive, "time step (s)"),
    "duration": Key(_NUM, REQUIRED, _positive, "run length (s)"),
    "snapshot_times": Key(_LIST, [], None, "elapsed times of field snapshots (s)"),
    "absorber_strength": Key(_NUM, 0.0, _non_negative, "absorber peak rate (rad/s)"),
    "absorber_fraction": Key(_NUM, 0.1, None, "absorber width as a fraction of the grid"),
    "absorber_sides": Key(_LIST, ["left", "right"], None, "grid sides carrying an absorber"),
    "ground_state_tol": Key(_NUM, 1e-10, _positive, "imaginary-time stopping tolerance"),
}

_GPE_ANALYSIS = {
    "window_start": Key(_NUM, 1.5, _non_negative,
                        "beam window onset in Thomas-Fermi radii (0 disables)"),
    "window_width": Key(_NUM, 0.25, _positive, "beam window edge width in Thomas-Fermi radii"),
    "pad": Key(int, 4, _positive, "FFT zero-padding factor"),
    "policy": Key(str, "outer", _choice("outer", "strict"), "FWHM policy"),
    "settle": Key(_NUM, 0.0, _non_negative, "coupling-off time before each spectrum (s)"),
    "support_fraction": Key(_NUM, 0.95, None, "fraction of beam atoms in the support width"),
    "center_fit_start": Key(_NUM, 0.0, _non_negative,
                            "first snapshot time used to extrapolate the initial centre (s)"),
    "center_fit_points": Key(int, 4, _positive, "snapshots in the centre extrapolation"),
    "center_fit_degree": Key(int, 2, _non_negative, "polynomial degree of the extrapolation"),
    "monotone_from": Key(_NUM, 0.0, _non_negative,
                         "first snapshot time of the monotonicity checks (s)"),
    "slope_window": Key(_LIST, [], None, "[t_lo, t_hi] of the log-log slope fit (s)"),
}

_GPE_COUPLING = {
    "scheme": Key(str, "raman", _choice("raman", "rf"), "outcoupling scheme"),
    "rabi": Key(_NUM, REQUIRED, _non_negative, "Rabi frequency (rad/s)"),
    "k0": Key(_NUM, REQUIRED, _non_negative, "Raman momentum kick (1/m)"),
}

_GPE_DETUNING = {
    "mode": Key(str, "resonant-center", _choice("resonant-center", "constant", "compensated"),
                "detuning schedule"),
    "value": Key(_NUM, None, None, "constant detuning (rad/s)"),
    "r0": Key(_NUM, None, _non_negative, "outcoupling point (m)"),
    "r0_fraction": Key(_NUM, None, _non_negative, "outcoupling point in Thomas-Fermi radii"),
}

_OUTPUT = {
    "directory": Key(str, REQUIRED, None, "run directory (relative to the output root)"),
    "snapshots": Key(bool, True, None, "write binary field snapshots"),
}

SCHEMAS = {
    "table1": {
        "system": _SYSTEM_LINEAR,
        "numerics": _SINGLE_NUMERICS,
        "sweep": {"rows": Key(_LIST, REFERENCE_ROWS, None, "[k0, Omega, asterisk] rows")},
        "output": _OUTPUT,
    },
    "spectrum": {
        "system": _SYSTEM_LINEAR,
        "coupling": {
            "rabi": Key(_NUM, REQUIRED, _positive, "Rabi frequency (rad/s)"),
            "k0": Key(_NUM, REQUIRED, _positive, "Raman momentum kick (1/m)"),
        },
        "numerics": _SINGLE_NUMERICS,
        "output": _OUTPUT,
    },
    "modes": {
        "system": _SYSTEM_LINEAR,
        "sweep": {
            "k0": Key(_LIST, REQUIRED, _all_positive, "Raman kicks (1/m)"),
            "n_modes": Key(int, 20, _positive, "trap modes"),
            "amplitudes": Key((str, list), "equal", None, "'equal' or one |alpha_n| per mode"),
        },
        "output": _OUTPUT,
    },
    "interferometer": {
        "system": {"mass": _SYSTEM_LINEAR["mass"]},
        "sweep": {
            "k": Key(_LIST, REQUIRED, _all_positive, "mean wavenumbers (1/m)"),
            "dk": Key(_LIST, REQUIRED, None, "wavenumber spreads (1/m)"),
            "v0": Key(_LIST, None, None, "barrier heights (J)"),
            "v0_fraction": Key(_LIST, None, None, "barrier heights in units of hbar^2 k^2 / 2m"),
            "length": Key(_LIST, REQUIRED, _all_positive, "barrier widths (m)"),
        },
        "output": _OUTPUT,
    },
}
for _kind in GPE_KINDS:
    SCHEMAS[_kind] = {
        "system": _SYSTEM_GPE,
        "coupling": _GPE_COUPLING,
        "detuning": _GPE_DETUNING,
        "numerics": _GPE_NUMERICS,
        "analysis": _GPE_ANALYSIS,
        "output": _OUTPUT,
    }

DESCRIPTIONS = {
    "table1": "single-mode drain rates and linewidths over ten (k0, Omega) rows",
    "spectrum": "one single-mode run: beam spectrum against the finite-time line shape",
    "modes": "relative output intensity of each trap mode for a set of Raman kicks",
    "gpe": "coupled Gross-Pitaevskii run with snapshot line measurements",
    "chirp": "Gross-Pitaevskii run analysed for the chirped line centre and support",
    "weak-sweep": "weak outcoupling: linewidth against outcoupling time",
    "interferometer": "dispersive phase spread of a step barrier over a parameter sweep",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with every default filled in."""

    kind: str
    sections: dict
    source: str = ""

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def physics(self):
        """Everything except the output section: the part that is hashed."""
        return {"kind": self.kind,
                **{k: v for k, v in self.sections.items() if k != "output"}}

    @property
    def hash(self):
        return config_hash(self.physics)

    def to_json(self):
        return canonical_json({"kind": self.kind, **self.sections})


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj):
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def _type_ok(value, kind):
    kinds = kind if isinstance(kind, tuple) else (kind,)
    if isinstance(value, bool) and bool not in kinds:
        return False
    if float in kinds and isinstance(value, int):
        return True
    return isinstance(value, kinds)


def _normalize(value, spec):
    kinds = spec.kind if isinstance(spec.kind, tuple) else (spec.kind,)
    if float in kinds and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _validate_section(name, given, schema):
    if not isinstance(given, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"[{name}] unknown keys {unknown}")
    out = {}
    for key, spec in schema.items():
        if key not in given:
            if spec.default is REQUIRED:
                raise ConfigError(f"[{name}] missing required key '{key}' ({spec.doc})")
            out[key] = copy.deepcopy(spec.default)
            continue
        value = given[key]
        if value is None and spec.default is None:
            out[key] = None
            continue
        if not _type_ok(value, spec.kind):
            raise ConfigError(f"[{name}] {key} = {value!r} has the wrong type")
        value = _normalize(value, spec)
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"[{name}] {key} must be finite")
        if spec.check is not None and value is not None:
            problem = spec.check(value)
            if problem:
                raise ConfigError(f"[{name}] {key} {problem}")
        out[key] = value
    return out


def _float_list(section, key, values):
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key} must be a list of numbers") from None


def _cross_checks(kind, s):
    if kind in GPE_KINDS:
        sysm, num, det, an = s["system"], s["numerics"], s["detuning"], s["analysis"]
        if isinstance(sysm["area"], str) and sysm["area"] not in ("default", "matched", "calibrated"):
            raise ConfigError("[system] area must be a number or default | matched | calibrated")
        if not isinstance(sysm["area"], str) and not sysm["area"] > 0:
            raise ConfigError("[system] area must be positive")
        if s["coupling"]["scheme"] == "rf" and s["coupling"]["k0"] != 0:
            raise ConfigError("[coupling] rf coupling requires k0 = 0")
        if det["mode"] == "constant" and det["value"] is None:
            raise ConfigError("[detuning] mode = constant needs 'value'")
        if det["mode"] == "compensated" and (det["r0"] is None) == (det["r0_fraction"] is None):
            raise ConfigError("[detuning] mode = compensated needs exactly one of r0, r0_fraction")
        if not 0 < num["absorber_fraction"] < 0.5:
            raise ConfigError("[numerics] absorber_fraction must lie in (0, 0.5)")
        if set(num["absorber_sides"]) - {"left", "right"}:
            raise ConfigError("[numerics] absorber_sides entries must be left or right")
        num["snapshot_times"] = _float_list("numerics", "snapshot_times", num["snapshot_times"])
        steps = num["duration"] / num["dt"]
        if abs(steps - round(steps)) > 1e-6:
            raise ConfigError("[numerics] duration must be an integer multiple of dt")
        for ts in num["snapshot_times"]:
            q = ts / num["dt"]
            if abs(q - round(q)) > 1e-6 or not 0 <= ts <= num["duration"] * (1 + 1e-12):
                raise ConfigError(f"[numerics] snapshot time {ts} is not a step multiple inside the run")
        if not 0 < an["support_fraction"] < 1:
            raise ConfigError("[analysis] support_fraction must lie in (0, 1)")
        an["slope_window"] = _float_list("analysis", "slope_window", an["slope_window"])
        if an["slope_window"] and len(an["slope_window"]) != 2:
            raise ConfigError("[analysis] slope_window must be [t_lo, t_hi]")
        if kind == "weak-sweep" and len(num["snapshot_times"]) < 2:
            raise ConfigError("[numerics] weak-sweep needs at least two snapshot_times")
        # numerical guards, checked before any work is dispatched
        dt_max = num["dx"] ** 2 * sysm["mass"] / (math.pi * hbar)
        if num["dt"] >= dt_max:
            raise StepSizeError(f"dt = {num['dt']:.3g} s exceeds dx^2 m / (pi hbar) = {dt_max:.3g} s")
    elif kind == "table1":
        rows = s["sweep"]["rows"]
        if not rows:
            raise ConfigError("[sweep] rows must not be empty")
        clean = []
        for row in rows:
            if not (isinstance(row, list) and len(row) == 3 and isinstance(row[2], bool)):
                raise ConfigError("[sweep] each row is [k0, Omega, asterisk]")
            k0, rabi = _float_list("sweep", "rows", row[:2])
            if not (k0 > 0 and rabi > 0):
                raise ConfigError("[sweep] k0 and Omega must be positive")
            clean.append([k0, rabi, row[2]])
        s["sweep"]["rows"] = clean
    elif kind == "modes":
        sw = s["sweep"]
        sw["k0"] = _float_list("sweep", "k0", sw["k0"])
        if isinstance(sw["amplitudes"], str):
            if sw["amplitudes"] != "equal":
                raise ConfigError("[sweep] amplitudes must be 'equal' or a list")
        else:
            sw["amplitudes"] = _float_list("sweep", "amplitudes", sw["amplitudes"])
            if len(sw["amplitudes"]) != sw["n_modes"]:
                raise ConfigError("[sweep] need one amplitude per mode")
    elif kind == "interferometer":
        sw = s["sweep"]
        if (sw["v0"] is None) == (sw["v0_fraction"] is None):
            raise ConfigError("[sweep] give exactly one of v0, v0_fraction")
        for key in ("k", "dk", "length", "v0", "v0_fraction"):
            if sw[key] is not None:
                sw[key] = _float_list("sweep", key, sw[key])
                if not sw[key]:
                    raise ConfigError(f"[sweep] {key} must not be empty")
                if any(v < 0 for v in sw[key]):
                    raise ConfigError(f"[sweep] {key} entries must be >= 0")


def from_dict(data, source=""):
    """Validate a parsed document and fill in defaults."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a table")
    kind = data.get("kind")
    if kind not in SCHEMAS:
        raise ConfigError(f"'kind' must be one of {list(KINDS)}, got {kind!r}")
    schema = SCHEMAS[kind]
    unknown = sorted(set(data) - set(schema) - {"kind"})
    if unknown:
        raise ConfigError(f"sections {unknown} are not used by kind '{kind}'")
    sections = {name: _validate_section(name, data.get(name, {}), keys)
                for name, keys in schema.items()}
    _cross_checks(kind, sections)
    return ExperimentConfig(kind, sections, source)


def loads(text, source="<string>"):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return from_dict(data, source)


def load(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, str(path))
