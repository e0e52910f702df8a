"""Scenario configuration files.

Grammar (INI style, parsed with :mod:`configparser`)::

    scenario = register          # keys before any section header belong to [run]
    out = results/fig5           # optional output directory

    [params]                     # ModelParams of apparatus A
    N = 1000
    T = 0.2
    g = 0.045

    [params2]                    # optional second apparatus (two-apparatus only)
    g = 0.045

    [register]                   # options of the scenario being run
    t_max = 60                   # in tau_J
    snapshots = 11

    [sweep]                      # only for scenario = sweep
    scenario = register
    g = 0.02:0.06:9              # axis: lo:hi:count, linearly spaced

Values are numbers, ``inf``, ``true``/``false`` or bare words.  Comments
start with ``#`` or ``;``.  Unknown sections or keys, bad types and
out-of-range values raise :class:`ConfigError` naming ``section.key`` and
the line.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import itertools
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams

SCENARIOS = ("thermo", "kernel", "truncate", "register", "two-apparatus", "subensemble", "sweep")
PARAM_TYPES = {f.name: (int if f.name in ("N", "seed") else float) for f in dataclasses.fields(ModelParams)}


class ConfigError(ValueError):
    pass


def _choice(*allowed):
    def conv(text):
        if text not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}")
        return text

    conv.__name__ = "choice"
    return conv


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true or false")


def _float(text):
    return float(text)


def _opt_float(text):
    return None if text.lower() in ("", "none", "auto") else float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _floats(text):
    return tuple(float(x) for x in re.split(r"[,\s]+", text.strip()) if x)


# scenario -> option -> (converter, default)
OPTIONS: dict[str, dict] = {
    "thermo": {"h": (_opt_float, None), "points": (_int, 2001)},
    "kernel": {"omega_min": (_float, -2.0), "omega_max": (_float, 2.0), "points": (_int, 41), "t": (_float, 100.0)},
    "truncate": {
        "t_max": (_opt_float, None), "samples": (_int, 2001), "mode": (_choice("dephasing", "bath", "bath-exact"), "bath"),
        "sx0": (_float, 1.0), "sy0": (_float, 0.0), "sz0": (_float, 0.0),
    },
    "register": {
        "method": (_choice("master", "fokker-planck", "mean-field"), "master"), "sector": (_choice("up", "down"), "up"),
        "t_max": (_opt_float, None), "snapshots": (_int, 11), "r_up": (_float, 1.0), "finite_time": (_bool, False),
        "mu0": (_float, 0.0),
    },
    "two-apparatus": {
        "mode": (_choice("landscape", "rotate", "weights"), "weights"), "points": (_int, 201), "branch": (_int, -1),
        "t_max": (_float, 0.1), "samples": (_int, 201), "sx0": (_float, 1.0), "sy0": (_float, 0.0), "sz0": (_float, 0.0),
        "lam": (_float, 1 / math.pi), "lamp": (_float, 1 / math.pi), "runs": (_int, 100000),
    },
    "subensemble": {"G": (_int, 8), "p_up": (_float, 0.5), "decompositions": (_int, 20), "runs": (_int, 10000),
                    "trees": (_int, 5)},
}
RANGE_CHECKS = {
    ("thermo", "points"): lambda v: v >= 3,
    ("kernel", "points"): lambda v: v >= 1,
    ("kernel", "t"): lambda v: v >= 0,
    ("truncate", "samples"): lambda v: v >= 2,
    ("truncate", "t_max"): lambda v: v is None or v > 0,
    ("register", "snapshots"): lambda v: v >= 2,
    ("register", "r_up"): lambda v: 0 <= v <= 1,
    ("register", "t_max"): lambda v: v is None or v > 0,
    ("register", "mu0"): lambda v: -1 < v < 1,
    ("two-apparatus", "points"): lambda v: v >= 3,
    ("two-apparatus", "branch"): lambda v: v in (1, -1),
    ("two-apparatus", "samples"): lambda v: v >= 2,
    ("two-apparatus", "runs"): lambda v: v >= 0,
    ("subensemble", "G"): lambda v: 1 <= v <= 64,
    ("subensemble", "p_up"): lambda v: 0 < v < 1,
    ("subensemble", "decompositions"): lambda v: v >= 1,
    ("subensemble", "runs"): lambda v: v >= 1,
    ("subensemble", "trees"): lambda v: v >= 1,
}


@dataclass(frozen=True)
class SweepAxis:
    name: str
    lo: float
    hi: float
    count: int

    def values(self) -> np.ndarray:
        v = np.linspace(self.lo, self.hi, self.count)
        return v.round().astype(int) if PARAM_TYPES[self.name] is int else v


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    params: ModelParams = field(default_factory=ModelParams)
    params2: ModelParams | None = None
    options: dict = field(default_factory=dict)
    out: str | None = None
    child: str | None = None  # scenario run by each sweep child
    axes: tuple[SweepAxis, ...] = ()

    def canonical(self) -> dict:
        """Plain-data form; equal for semantically equal configs."""
        return {
            "scenario": self.scenario,
            "params": _param_dict(self.params),
            "params2": _param_dict(self.params2) if self.params2 else None,
            "options": {k: self.options[k] for k in sorted(self.options)},
            "child": self.child,
            "axes": [dataclasses.asdict(a) for a in self.axes],
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=_jsonable).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_seed(self, seed: int) -> "ScenarioConfig":
        p2 = dataclasses.replace(self.params2, seed=seed) if self.params2 else None
        return dataclasses.replace(self, params=dataclasses.replace(self.params, seed=seed), params2=p2)

    def children(self) -> list[tuple[dict, "ScenarioConfig"]]:
        """Sweep children in lexicographic axis order."""
        if self.scenario != "sweep":
            raise ValueError("only sweep configs have children")
        out = []
        for combo in itertools.product(*(a.values() for a in self.axes)):
            point = {a.name: v.item() for a, v in zip(self.axes, combo)}
            try:
                params = dataclasses.replace(self.params, **point)
            except ValueError as exc:
                raise ConfigError(f"sweep point {point}: {exc}") from None
            out.append((point, ScenarioConfig(self.child, params, self.params2, dict(self.options), self.out)))
        return out


def _param_dict(p: ModelParams) -> dict:
    return {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v) for k, v in dataclasses.asdict(p).items()}


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {x!r}")


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = "run"
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*[=:]", line, re.IGNORECASE):
            return n
    return None


def _where(text, section, key=None) -> str:
    line = _line_of(text, section, key)
    loc = f"{section}.{key}" if key else f"[{section}]"
    return f"{loc} (line {line})" if line else loc


def parse_config(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str  # keys are case-sensitive (N vs n)
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        # line numbers are shifted by the injected [run] header
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        where = f" at line {lineno - 1}" if lineno else ""
        raise ConfigError(f"malformed config{where}: {type(exc).__name__}") from None
    run = dict(cp["run"])
    unknown = set(run) - {"scenario", "out"}
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key {_where(text, 'run', k)}")
    scenario = run.get("scenario")
    if scenario is None:
        raise ConfigError("missing key run.scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"{_where(text, 'run', 'scenario')}: unknown scenario {scenario!r}")
    child = None
    axes: tuple[SweepAxis, ...] = ()
    if scenario == "sweep":
        if "sweep" not in cp:
            raise ConfigError("scenario = sweep requires a [sweep] section")
        child, axes = _parse_sweep(text, cp["sweep"])
    allowed = {"run", "params", "params2", "sweep"} | ({child} if child else {scenario})
    for sec in cp.sections():
        if sec not in allowed:
            raise ConfigError(f"unexpected section {_where(text, sec)} for scenario {scenario}")
    params = _parse_params(text, cp, "params")
    params2 = _parse_params(text, cp, "params2") if "params2" in cp else None
    target = child or scenario
    options = _parse_options(text, cp, target)
    return ScenarioConfig(scenario, params, params2, options, run.get("out"), child, axes)


def _parse_params(text, cp, section) -> ModelParams:
    values = {}
    if section in cp:
        for key, raw in cp[section].items():
            if key not in PARAM_TYPES:
                raise ConfigError(f"unknown parameter {_where(text, section, key)}")
            conv = PARAM_TYPES[key]
            try:
                values[key] = _int(raw) if conv is int else float(raw)
            except ValueError:
                raise ConfigError(f"{_where(text, section, key)}: expected {conv.__name__}, got {raw!r}") from None
    try:
        return ModelParams(**values)
    except ValueError as exc:
        bad = next((k for k in values if str(exc).startswith(k + " ")), None)
        raise ConfigError(f"{_where(text, section, bad) if bad else '[' + section + ']'}: {exc}") from None


def _parse_options(text, cp, scenario) -> dict:
    schema = OPTIONS.get(scenario, {})
    options = {k: default for k, (_, default) in schema.items()}
    if scenario in cp:
        for key, raw in cp[scenario].items():
            if key not in schema:
                raise ConfigError(f"unknown option {_where(text, scenario, key)}")
            conv = schema[key][0]
            try:
                val = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{_where(text, scenario, key)}: bad value {raw!r} ({exc})") from None
            check = RANGE_CHECKS.get((scenario, key))
            if check and not check(val):
                raise ConfigError(f"{_where(text, scenario, key)}: value {raw!r} out of range")
            options[key] = val
    return options


def _parse_sweep(text, sec) -> tuple[str, tuple[SweepAxis, ...]]:
    child = sec.get("scenario")
    if child is None:
        raise ConfigError("missing key sweep.scenario")
    if child not in SCENARIOS or child == "sweep":
        raise ConfigError(f"{_where(text, 'sweep', 'scenario')}: cannot sweep scenario {child!r}")
    axes = []
    for key, raw in sec.items():
        if key == "scenario":
            continue
        if key not in PARAM_TYPES:
            raise ConfigError(f"unknown sweep axis {_where(text, 'sweep', key)}")
        parts = raw.split(":")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), _int(parts[2])
            if len(parts) != 3:
                raise ValueError
        except (ValueError, IndexError):
            raise ConfigError(f"{_where(text, 'sweep', key)}: expected lo:hi:count, got {raw!r}") from None
        if count < 1:
            raise ConfigError(f"{_where(text, 'sweep', key)}: empty axis")
        if count == 1 and lo != hi:
            raise ConfigError(f"{_where(text, 'sweep', key)}: a single point needs lo == hi")
        axes.append(SweepAxis(key, lo, hi, count))
    if not axes:
        raise ConfigError("[sweep] defines no axes")
    return child, tuple(axes)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
