"""INI-style run configuration.

A config file has sections with ``key = value`` lines. Every key name is
unique across sections, so command-line overrides can address keys without
naming the section. Unknown sections or keys are errors.

Sections and keys (defaults in brackets)::

    [run]         method [langevin], seed [0], replicates [1], workers [0 = all cores],
                  failure_budget [0], control [true], record_stride [1]
    [problem]     potential, dim [1], potential_params [], schedule,
                  schedule_params, horizon [1.0]
    [init]        init [gibbs_mu0], init_mean [0], init_variance [1.0]
    [dynamics]    n, dt, k, lam [1.0], noise_scaling [time_change],
                  refresh_rate [1.0], h [0.02], lookahead [h], thinning_points [16],
                  safety [1.5], output_points [1000]
    [convergence] n_list [5, 40], h_list [0.02], pool_size [200]
    [gibbs_ref]   times [0, 0.05, ..., 1], x_min [-4], x_max [4], x_points [401]

Lists are comma separated. ``schedule_params`` defaults to ``0.25, 25`` for
the quadratic, ``0.1, 5`` for the linear and ``1, 1`` for the exponential
schedule; the unit-speed schedule needs it explicitly. For ``langevin`` runs either ``dt`` and ``k`` or
``dt`` and ``h`` (a multiple of ``dt``) may be given.
"""

import configparser
import math
import os
from dataclasses import dataclass

import numpy as np

from .langevin import InitSpec, LangevinConfig
from .models import builtin_potential, builtin_schedule
from .pdmp import PdmpConfig, ThinningConfig

__all__ = ["ConfigError", "KEYS", "RunSpec", "load_config", "parse_config", "resolve"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _bool(s):
    try:
        return _BOOL[s.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {s!r}") from None


def _floats(s):
    s = s.strip()
    return tuple(float(p) for p in s.split(",")) if s else ()


def _ints(s):
    return tuple(int(p) for p in s.split(",") if p.strip())


# key -> (section, parser, default); default None means required or derived
KEYS = {
    "method": ("run", str, "langevin"),
    "seed": ("run", int, 0),
    "replicates": ("run", int, 1),
    "workers": ("run", int, 0),
    "failure_budget": ("run", int, 0),
    "control": ("run", _bool, True),
    "record_stride": ("run", int, 1),
    "potential": ("problem", str, None),
    "dim": ("problem", int, 1),
    "potential_params": ("problem", _floats, ()),
    "schedule": ("problem", str, None),
    "schedule_params": ("problem", _floats, None),
    "horizon": ("problem", float, 1.0),
    "init": ("init", str, "gibbs_mu0"),
    "init_mean": ("init", _floats, (0.0,)),
    "init_variance": ("init", float, 1.0),
    "n": ("dynamics", int, None),
    "dt": ("dynamics", float, None),
    "k": ("dynamics", int, None),
    "lam": ("dynamics", float, 1.0),
    "noise_scaling": ("dynamics", str, "time_change"),
    "refresh_rate": ("dynamics", float, 1.0),
    "h": ("dynamics", float, None),
    "lookahead": ("dynamics", float, None),
    "thinning_points": ("dynamics", int, 16),
    "safety": ("dynamics", float, 1.5),
    "output_points": ("dynamics", int, 1000),
    "n_list": ("convergence", _ints, (5, 40)),
    "h_list": ("convergence", _floats, (0.02,)),
    "pool_size": ("convergence", int, 200),
    "times": ("gibbs_ref", _floats, tuple(np.round(np.linspace(0, 1, 21), 12))),
    "x_min": ("gibbs_ref", float, -4.0),
    "x_max": ("gibbs_ref", float, 4.0),
    "x_points": ("gibbs_ref", int, 401),
}
SECTIONS = sorted({v[0] for v in KEYS.values()})
METHODS = ("langevin", "pdmp")
DEFAULT_SCHEDULE_PARAMS = {"quadratic": (0.25, 25.0), "linear": (0.1, 5.0), "exponential": (1.0, 1.0)}


def load_config(path):
    """Read a config file into a flat ``{key: raw string}`` dict."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw = {}
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]; expected one of {SECTIONS}")
        for key, val in cp.items(sec):
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            if KEYS[key][0] != sec:
                raise ConfigError(f"key {key!r} belongs in section [{KEYS[key][0]}], not [{sec}]")
            raw[key] = val
    return raw


@dataclass(frozen=True)
class RunSpec:
    """Fully resolved run: typed values for every key plus the built objects."""

    values: dict
    method: str
    config: object
    potential: object
    schedule: object

    @property
    def echo(self):
        out = {}
        for key in KEYS:
            v = self.values.get(key)
            out[key] = list(v) if isinstance(v, tuple) else v
        return out


def _typed(raw):
    vals = {}
    for key, (_, parse, default) in KEYS.items():
        if key in raw and raw[key] is not None:
            try:
                vals[key] = parse(raw[key]) if isinstance(raw[key], str) else raw[key]
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        else:
            vals[key] = default
    return vals


def _need(vals, *keys):
    for key in keys:
        if vals[key] is None:
            raise ConfigError(f"missing required key {key!r}")


def _positive(vals, *keys):
    for key in keys:
        v = vals[key]
        if v is not None and not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{key} must be positive, got {v}")


def resolve(raw, method=None, dynamics=True):
    """Turn raw key values into a ``RunSpec``.

    Parameters
    ----------
    raw : dict
        Key to string (or already typed) value; later sources should already
        have been merged in (flags over file).
    method : str, optional
        Overrides the ``method`` key.
    dynamics : bool
        Build the sampler config; ``False`` only resolves the problem
        (potential and schedule), as the ``gibbs-ref`` command needs.
    """
    unknown = set(raw) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    vals = _typed(raw)
    if method is not None:
        vals["method"] = method
    if vals["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {vals['method']!r}")
    _need(vals, "potential", "schedule")
    if vals["schedule_params"] is None:
        if vals["schedule"] not in DEFAULT_SCHEDULE_PARAMS:
            raise ConfigError("missing required key 'schedule_params'")
        vals["schedule_params"] = DEFAULT_SCHEDULE_PARAMS[vals["schedule"]]
    _positive(vals, "horizon", "lam", "h", "dt", "lookahead", "init_variance", "pool_size")
    for key in ("replicates", "dim", "thinning_points", "output_points", "record_stride", "x_points"):
        if vals[key] < 1:
            raise ConfigError(f"{key} must be at least 1, got {vals[key]}")
    if vals["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    if vals["refresh_rate"] < 0:
        raise ConfigError("refresh_rate must be non-negative")
    if vals["failure_budget"] < 0:
        raise ConfigError("failure_budget must be non-negative")
    try:
        pot = builtin_potential(vals["potential"], vals["dim"], vals["potential_params"])
    except ValueError as exc:
        raise ConfigError(f"potential: {exc}") from None
    try:
        sched = builtin_schedule(vals["schedule"], vals["schedule_params"], vals["horizon"])
    except ValueError as exc:
        raise ConfigError(f"schedule_params: {exc}") from None
    try:
        init = InitSpec(vals["init"], vals["init_mean"], vals["init_variance"])
    except ValueError as exc:
        raise ConfigError(f"init: {exc}") from None
    if init.kind == "gaussian" and len(vals["init_mean"]) not in (1, pot.dim):
        raise ConfigError(f"init_mean needs 1 or {pot.dim} values")
    if not dynamics:
        return RunSpec(values=vals, method=vals["method"], config=None, potential=pot,
                       schedule=sched)
    _need(vals, "n")
    if vals["n"] < 1:
        raise ConfigError(f"n must be at least 1, got {vals['n']}")
    if vals["method"] == "langevin":
        _need(vals, "dt")
        if vals["k"] is None:
            if vals["h"] is None:
                raise ConfigError("missing required key 'k' (or 'h')")
            k = vals["h"] / vals["dt"]
            if abs(k - round(k)) > 1e-9 * max(1.0, k):
                raise ConfigError(f"h={vals['h']} is not a multiple of dt={vals['dt']}")
            vals["k"] = int(round(k))
        if vals["k"] < 1:
            raise ConfigError(f"k must be at least 1, got {vals['k']}")
        vals["h"] = vals["k"] * vals["dt"]
        try:
            cfg = LangevinConfig(
                potential=pot, schedule=sched, n=vals["n"], dt=vals["dt"], k=vals["k"],
                lam=vals["lam"], horizon=vals["horizon"], seed=vals["seed"], init=init,
                control=vals["control"], noise_scaling=vals["noise_scaling"],
            )
        except ValueError as exc:
            raise ConfigError(f"dynamics: {exc}") from None
    else:
        if vals["h"] is None:
            vals["h"] = 0.02
        try:
            thin = ThinningConfig(vals["lookahead"], vals["thinning_points"], vals["safety"])
            cfg = PdmpConfig(
                potential=pot, schedule=sched, n=vals["n"], lam=vals["lam"],
                refresh_rate=vals["refresh_rate"], h=vals["h"], horizon=vals["horizon"],
                seed=vals["seed"], init=init, control=vals["control"], thinning=thin,
                output_points=vals["output_points"],
            )
        except ValueError as exc:
            raise ConfigError(f"dynamics: {exc}") from None
    return RunSpec(values=vals, method=vals["method"], config=cfg, potential=pot,
                   schedule=sched)


def parse_config(path=None, overrides=None, method=None, dynamics=True):
    """Load a file (optional), apply ``overrides`` and resolve."""
    raw = load_config(path) if path is not None else {}
    for key, val in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        raw[key] = val
    return resolve(raw, method=method, dynamics=dynamics)
