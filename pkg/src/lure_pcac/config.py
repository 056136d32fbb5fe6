"""Example presets and the dotted-key configuration format.

A configuration is a flat mapping from dotted keys to Python literals::

    preset = ex1                     # optional base preset
    plant.A = [[1, -0.5], [1, 0]]
    nonlinearity = tanh
    rls.order = 10
    bpre.R1 = output                 # C_m^T C_m of the identified model
    perturbation = {1000: 1, 1200: -1}

Values are read with :func:`ast.literal_eval`; anything that is not a
literal is kept as a bare string. A value may continue over several lines
while its brackets are unbalanced. ``#`` starts a comment.
"""
from __future__ import annotations

import ast
import copy
import os
from dataclasses import dataclass, field

import numpy as np

from . import bpre, lure, rls, stability

__all__ = [
    "ConfigError",
    "Experiment",
    "PRESETS",
    "DEFAULTS",
    "preset_params",
    "parse_text",
    "parse_value",
    "parse_overrides",
    "resolve_params",
    "build_experiment",
    "load_experiment",
    "load_config",
    "format_params",
]


class ConfigError(ValueError):
    """Bad configuration; the message names the offending key."""


DEFAULTS = {
    "plant.A": None,
    "plant.B": None,
    "plant.C": None,
    "plant.x0": "1000B",
    "nonlinearity": None,
    "rls.order": None,
    "rls.theta0": 1e-10,
    "rls.psi0": None,
    "rls.tau_n": 40,
    "rls.tau_d": 200,
    "rls.eta": 0.1,
    "rls.alpha": 0.001,
    "rls.identify_during_open_loop": False,
    "bpre.horizon": None,
    "bpre.R1": "output",
    "bpre.R2": None,
    "bpre.P_terminal": "output",
    "limits.u_min": -np.inf,
    "limits.u_max": np.inf,
    "perturbation": {},
    "sim.k_engage": 100,
    "sim.k_final": 1000,
    "sector.K1": None,
    "sector.K2": None,
    "sector.K_L": 0.0,
    "sector.kappa": None,
    "sector.N": 0.1,
    "analysis.grid_size": stability.DEFAULT_GRID,
    "analysis.checkpoints": "engaged",
}

_EX1_PLANT = {
    "plant.A": [[1.0, -0.5], [1.0, 0.0]],
    "plant.B": [[1.0], [0.0]],
    "plant.C": [[1.0, -1.0]],
}

_EX1_SCHEDULE = {1000: 1.0, 1400: 1.0, 1800: 1.0, 1200: -1.0, 1600: -1.0, 2000: -1.0}


def _blockdiag(*blocks):
    n = sum(len(b) for b in blocks)
    M = np.zeros((n, n))
    i = 0
    for b in blocks:
        b = np.asarray(b, dtype=float)
        M[i:i + b.shape[0], i:i + b.shape[0]] = b
        i += b.shape[0]
    return M.tolist()


PRESETS = {
    "ex1": {
        **_EX1_PLANT,
        "nonlinearity": "tanh",
        "rls.order": 10,
        "rls.psi0": 1e-4,
        "bpre.horizon": 20,
        "bpre.R2": 1e-4,
        "sim.k_final": 1000,
        "sector.K1": 0.0,
        "sector.K2": 1.0,
    },
    "ex1p": {
        **_EX1_PLANT,
        "nonlinearity": "tanh",
        "rls.order": 10,
        "rls.psi0": 1e-4,
        "bpre.horizon": 20,
        "bpre.R2": 1e-4,
        "perturbation": _EX1_SCHEDULE,
        "sim.k_final": 3000,
        "sector.K1": 0.0,
        "sector.K2": 1.0,
    },
    "ex2": {
        **_EX1_PLANT,
        "nonlinearity": "affine_sine(0.25, 0.6)",
        "rls.order": 10,
        "rls.psi0": 1e-4,
        "bpre.horizon": 20,
        "bpre.R2": 1e-4,
        "perturbation": _EX1_SCHEDULE,
        "sim.k_final": 3000,
        "sector.K1": 0.115,
        "sector.K2": 0.85,
        "sector.K_L": 0.4,
    },
    "ex3": {
        "plant.A": [[0.5, 0.0, -0.25], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        "plant.B": [[1.0], [0.0], [0.0]],
        "plant.C": [[1.0, -1.0, 0.0]],
        "nonlinearity": "gaussian_plus_piecewise(s_l=-0.4, s_h=0.4)",
        "rls.order": 20,
        "rls.psi0": 1e-4,
        "bpre.horizon": 20,
        "bpre.R2": 1e-6,
        "perturbation": {**{k: 5.0 for k in range(400, 2801, 200)},
                         **{k: -5.0 for k in range(500, 2901, 200)}},
        "sim.k_final": 3000,
        "sector.K1": -0.4,
        "sector.K2": 1.35,
        "sector.K_L": 0.85,
    },
    "ex4": {
        "plant.A": _blockdiag([[1.0, -0.5], [1.0, 0.0]], [[0.8, -0.3], [0.5, 0.0]],
                              [[1.4, -0.48], [1.0, 0.0]], [[0.6, -0.58], [1.0, 0.0]]),
        "plant.B": [[2.0, 0.0], [0.0, 0.0], [2.0, 0.0], [0.0, 0.0],
                    [0.0, 2.0], [0.0, 0.0], [0.0, 2.0], [0.0, 0.0]],
        "plant.C": [[0.5, -0.5, 0.0, 0.0, 0.5, -0.5, 0.0, 0.0],
                    [0.0, 0.0, 0.5, -1.0, 0.0, 0.0, 0.5, -0.5]],
        "nonlinearity": "diagonal(tanh, affine_sine(0.25, 0.6))",
        "rls.order": 10,
        "rls.psi0": 1.0,
        "bpre.horizon": 20,
        "bpre.R2": [[1e-2, 0.0], [0.0, 1e-2]],
        "perturbation": {**{k: [5.0, 5.0] for k in range(2000, 10001, 2000)},
                         **{k: [-5.0, -5.0] for k in range(3000, 11001, 2000)}},
        "sim.k_final": 12000,
        "sector.K1": [[0.0, 0.0], [0.0, 0.115]],
        "sector.K2": [[1.0, 0.0], [0.0, 0.85]],
        "sector.K_L": 0.4,
    },
}


@dataclass
class Experiment:
    """A resolved run: the closed loop, its sector data and analysis settings."""

    name: str
    sim: lure.SimulationConfig
    sector: stability.SectorSpec
    grid_size: int
    checkpoints: tuple
    params: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# text format
# --------------------------------------------------------------------------

def parse_value(text):
    """Literal value of ``text``, or the stripped string if it is not a literal."""
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf", "-inf", "nan"):
        return float(low)
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _balance(text):
    depth = 0
    for ch in text:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
    return depth


def parse_text(text, source="<text>"):
    """Parse dotted-key text into an ordered dict."""
    out = {}
    pending = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if pending is not None:
            key, buf, start = pending
            buf += " " + line.strip()
            if _balance(buf) > 0:
                pending = (key, buf, start)
                continue
            out[key] = parse_value(buf)
            pending = None
            continue
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if _balance(val) > 0:
            pending = (key, val, lineno)
            continue
        out[key] = parse_value(val)
    if pending is not None:
        raise ConfigError(f"{source}:{pending[2]}: unterminated value for key '{pending[0]}'")
    return out


def parse_overrides(items):
    """Turn ``["key=value", ...]`` into a dict."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        out[key.strip()] = parse_value(val)
    return out


def format_params(params):
    """Render ``params`` in the dotted-key format (readable by :func:`parse_text`)."""
    lines = []
    for key, val in params.items():
        if isinstance(val, np.ndarray):
            val = val.tolist()
        lines.append(f"{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"


def _fmt(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        if np.isinf(val):
            return "inf" if val > 0 else "-inf"
        return repr(val)
    if isinstance(val, dict):
        return "{" + ", ".join(f"{_fmt(k)}: {_fmt(v)}" for k, v in val.items()) + "}"
    if isinstance(val, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in val) + "]"
    return str(val)


# --------------------------------------------------------------------------
# resolution
# --------------------------------------------------------------------------

def preset_params(name):
    """Fresh copy of the full parameter set of preset ``name``."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    params = copy.deepcopy(DEFAULTS)
    params.update(copy.deepcopy(PRESETS[name]))
    return params


def resolve_params(preset=None, path=None, overrides=None):
    """Merge defaults, an optional preset, a file and overrides, in that order."""
    file_params = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                file_params = parse_text(fh.read(), str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        base = file_params.pop("preset", None)
        if preset is None:
            preset = base
    params = preset_params(preset) if preset is not None else copy.deepcopy(DEFAULTS)
    for source in (file_params, overrides or {}):
        for key, val in source.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key '{key}'")
            params[key] = val
    return preset or "custom", params


def _need(params, key):
    val = params[key]
    if val is None:
        raise ConfigError(f"missing required key '{key}'")
    return val


def _matrix(params, key, square=None):
    try:
        M = np.atleast_2d(np.asarray(_need(params, key), dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{key}' is not a numeric matrix: {exc}") from exc
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ConfigError(f"'{key}' must be a finite 2-D matrix")
    if square is not None and M.shape != (square, square):
        raise ConfigError(f"'{key}' must be {square}x{square}, got {M.shape[0]}x{M.shape[1]}")
    return M


def _int(params, key):
    val = _need(params, key)
    if isinstance(val, bool) or not float(val).is_integer():
        raise ConfigError(f"'{key}' must be an integer, got {val!r}")
    return int(val)


def _output_weight(params, key, order, p):
    val = _need(params, key)
    if isinstance(val, str):
        if val != "output":
            raise ConfigError(f"'{key}' must be a matrix or 'output', got {val!r}")
        M = np.zeros((order * p, order * p))
        M[:p, :p] = np.eye(p)
        return M
    return _matrix(params, key, order * p)


def _section(key, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid '{key}' settings: {exc}") from exc


def build_experiment(name, params):
    """Validate ``params`` and build an :class:`Experiment`."""
    A = _matrix(params, "plant.A")
    B = _matrix(params, "plant.B")
    C = _matrix(params, "plant.C")
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    if A.shape != (n, n):
        raise ConfigError("'plant.A' must be square")
    if B.shape[0] != n:
        raise ConfigError(f"'plant.B' must have {n} rows")
    if C.shape[1] != n:
        raise ConfigError(f"'plant.C' must have {n} columns")

    x0 = params["plant.x0"]
    if isinstance(x0, str):
        if x0.endswith("B"):
            try:
                scale = float(x0[:-1] or 1.0)
            except ValueError as exc:
                raise ConfigError(f"'plant.x0' must be a vector or '<scale>B', got {x0!r}") from exc
            x0 = scale * B.sum(axis=1)
        else:
            raise ConfigError(f"'plant.x0' must be a vector or '<scale>B', got {x0!r}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise ConfigError(f"'plant.x0' must have length {n}")

    text = _need(params, "nonlinearity")
    try:
        gamma = lure.parse_nonlinearity(str(text))
        out = lure.eval_nonlinearity(gamma, np.zeros(p))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid 'nonlinearity': {exc}") from exc
    if out.size != m:
        raise ConfigError(f"'nonlinearity' maps R^{p} to R^{out.size}, expected R^{m}")

    order = _int(params, "rls.order")
    if order < 1:
        raise ConfigError("'rls.order' must be >= 1")
    rcfg = _section("rls", rls.RlsConfig, order=order, p=p, m=m,
                    theta0=_need(params, "rls.theta0"), psi0=_need(params, "rls.psi0"),
                    tau_n=_int(params, "rls.tau_n"), tau_d=_int(params, "rls.tau_d"),
                    eta=float(params["rls.eta"]), alpha=float(params["rls.alpha"]),
                    identify_during_open_loop=bool(params["rls.identify_during_open_loop"]))

    R1 = _output_weight(params, "bpre.R1", order, p)
    P_t = _output_weight(params, "bpre.P_terminal", order, p)
    R2 = _matrix(params, "bpre.R2", m)
    horizon = _int(params, "bpre.horizon")
    bcfg = _section("bpre", bpre.BpreConfig, horizon, R1, R2, P_t)
    limits = _section("limits", bpre.SaturationLimits,
                      float(params["limits.u_min"]), float(params["limits.u_max"]))

    sched_raw = params["perturbation"] or {}
    if not isinstance(sched_raw, dict):
        raise ConfigError("'perturbation' must be a mapping {step: value}")
    schedule = _section("perturbation", lure.PerturbationSchedule, dict(sched_raw), m)

    k_final = _int(params, "sim.k_final")
    k_engage = _int(params, "sim.k_engage")
    if k_final < 0:
        raise ConfigError("'sim.k_final' must be >= 0")
    if not 0 <= k_engage <= k_final:
        raise ConfigError("'sim.k_engage' must lie in [0, sim.k_final]")
    sim = _section("sim", lure.SimulationConfig, A, B, C, x0, gamma, rcfg, bcfg,
                   schedule=schedule, limits=limits, k_engage=k_engage, k_final=k_final)

    K1 = np.atleast_2d(np.asarray(_need(params, "sector.K1"), dtype=float))
    K2 = np.atleast_2d(np.asarray(_need(params, "sector.K2"), dtype=float))
    if K1.shape != (m, p):
        raise ConfigError(f"'sector.K1' must be {m}x{p}")
    if K2.shape != (m, p):
        raise ConfigError(f"'sector.K2' must be {m}x{p}")
    sector = _section("sector", stability.SectorSpec, K1, K2, kappa=params["sector.kappa"],
                      K_L=float(params["sector.K_L"]), N=params["sector.N"])

    grid = _int(params, "analysis.grid_size")
    if grid < 2:
        raise ConfigError("'analysis.grid_size' must be >= 2")
    cps = params["analysis.checkpoints"]
    if isinstance(cps, (int, float)) and not isinstance(cps, bool):
        stride = int(cps)
        if stride < 1:
            raise ConfigError("'analysis.checkpoints' stride must be >= 1")
        cps = list(range(0, k_final + 1, stride))
        if cps[-1] != k_final:
            cps.append(k_final)
    elif cps == "all":
        cps = list(range(k_final + 1))
    elif cps == "engaged":
        cps = list(range(k_engage, k_final + 1))
    elif isinstance(cps, (list, tuple)):
        cps = sorted({int(k) for k in cps})
        if cps and not 0 <= cps[0] <= cps[-1] <= k_final:
            raise ConfigError("'analysis.checkpoints' must lie in [0, sim.k_final]")
    else:
        raise ConfigError("'analysis.checkpoints' must be a stride, a list of steps, 'all' or 'engaged'")

    return Experiment(name, sim, sector, grid, tuple(cps), dict(params))


def load_experiment(source=None, overrides=None):
    """Resolve a preset name or a config file path into an :class:`Experiment`."""
    if isinstance(overrides, (list, tuple)):
        overrides = parse_overrides(overrides)
    if source in PRESETS:
        name, params = resolve_params(preset=source, overrides=overrides)
    elif source is None:
        raise ConfigError("no preset or config file given")
    elif not os.path.exists(source):
        raise ConfigError(f"{source!r} is neither an existing config file nor a known preset "
                          f"({', '.join(PRESETS)})")
    else:
        name, params = resolve_params(path=source, overrides=overrides)
    return build_experiment(name, params)


def load_config(source=None, overrides=None):
    """Validated :class:`~lure_pcac.lure.SimulationConfig` for a preset or file."""
    return load_experiment(source, overrides).sim
