"""Config files: flat sectioned key=value text.

Example::

    [domain]
    x0 = 1
    x1 = 1000

    [coefficients]
    g = x*(1001 - x)/10
    w = (x - 1)^1.17/1000
    q = ln(x)
    beta = 1
    g_scale = 1        # optional scalar multipliers, default 1

    [numerics]
    n = 2000
    grading = geometric   # uniform | geometric
    quad_order = 4
    tol = 1e-9

    [simulation]          # only needed by simulate/validate
    cfl = 0.9             # or dt = <fixed step>; not both
    t_end = 0.6           # default: 4*Gamma(x1)
    ic = exp(-((x - 500.5)/50)^2)   # default: centered bump
    epsilon = 1e-4
    window = 0.28, 0.55   # rate-fit window; default [2*Gamma, 4*Gamma]
    stride = 30
    integrator = euler    # euler | rk2
    norm_cap = 1000       # stop when ||p||_1 grows by this factor
    rate_tol = 0.1        # validate: relative rate-vs-lambda0 tolerance
    save_states = false
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from . import expr
from .model import CoefficientSet


class ConfigError(ValueError):
    """Malformed or incomplete config file."""


_NUMERICS_DEFAULTS = {"n": 2000, "grading": "uniform", "quad_order": 4, "tol": 1e-9}


@dataclass
class SimulationSection:
    dt: float | None = None
    cfl: float | None = None
    t_end: float | None = None
    ic: str | None = None
    epsilon: float = 1e-3
    window: tuple | None = None
    stride: int | None = None
    integrator: str = "euler"
    norm_cap: float | None = None
    rate_tol: float = 0.1
    save_states: bool = False


@dataclass
class Config:
    path: str
    sha256: str
    x0: float
    x1: float
    g: str
    w: str
    q: str
    beta: str
    g_scale: float = 1.0
    q_scale: float = 1.0
    w_scale: float = 1.0
    n: int = 2000
    grading: str = "uniform"
    quad_order: int = 4
    tol: float = 1e-9
    sim: SimulationSection = field(default_factory=SimulationSection)

    def coefficient_set(self) -> CoefficientSet:
        """Coefficients with the scalar multipliers applied."""
        try:
            base = CoefficientSet(
                x0=self.x0,
                x1=self.x1,
                g=expr.parse(self.g, {"x"}),
                w=expr.parse(self.w, {"x"}),
                q=expr.parse(self.q, {"x"}),
                beta=expr.parse(self.beta, {"x", "y"}),
            )
        except expr.ParseError as err:
            raise ConfigError(f"{self.path}: [coefficients] {err}") from err
        return base.with_scales(g_scale=self.g_scale, q_scale=self.q_scale,
                                w_scale=self.w_scale)


def _get(parser, section, key, cast, default=..., *, path=""):
    if not parser.has_option(section, key):
        if default is ...:
            raise ConfigError(f"{path}: missing required key {key!r} in [{section}]")
        return default
    raw = parser.get(section, key)
    try:
        if cast is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return cast(raw)
    except ValueError as err:
        raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {err}") from err


def load_config(path) -> Config:
    """Parse and minimally validate a config file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    digest = hashlib.sha256(raw).hexdigest()

    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(raw.decode("utf-8"), source=str(path))
    except (configparser.Error, UnicodeDecodeError) as err:
        raise ConfigError(f"config parse error: {err}") from err

    loc = str(path)
    for section in ("domain", "coefficients"):
        if not parser.has_section(section):
            raise ConfigError(f"{loc}: missing required section [{section}]")

    cfg = Config(
        path=loc,
        sha256=digest,
        x0=_get(parser, "domain", "x0", float, path=loc),
        x1=_get(parser, "domain", "x1", float, path=loc),
        g=_get(parser, "coefficients", "g", str, path=loc),
        w=_get(parser, "coefficients", "w", str, path=loc),
        q=_get(parser, "coefficients", "q", str, path=loc),
        beta=_get(parser, "coefficients", "beta", str, "0", path=loc),
        g_scale=_get(parser, "coefficients", "g_scale", float, 1.0, path=loc),
        q_scale=_get(parser, "coefficients", "q_scale", float, 1.0, path=loc),
        w_scale=_get(parser, "coefficients", "w_scale", float, 1.0, path=loc),
    )
    if not (0.0 < cfg.x0 < cfg.x1):
        raise ConfigError(f"{loc}: [domain] needs 0 < x0 < x1")

    if parser.has_section("numerics"):
        cfg.n = _get(parser, "numerics", "n", int, _NUMERICS_DEFAULTS["n"], path=loc)
        cfg.grading = _get(parser, "numerics", "grading", str,
                           _NUMERICS_DEFAULTS["grading"], path=loc).strip()
        cfg.quad_order = _get(parser, "numerics", "quad_order", int,
                              _NUMERICS_DEFAULTS["quad_order"], path=loc)
        cfg.tol = _get(parser, "numerics", "tol", float, _NUMERICS_DEFAULTS["tol"], path=loc)
    if cfg.grading not in ("uniform", "geometric"):
        raise ConfigError(f"{loc}: [numerics] grading must be uniform or geometric")

    if parser.has_section("simulation"):
        sim = cfg.sim
        sim.dt = _get(parser, "simulation", "dt", float, None, path=loc)
        sim.cfl = _get(parser, "simulation", "cfl", float, None, path=loc)
        if sim.dt is not None and sim.cfl is not None:
            raise ConfigError(f"{loc}: [simulation] give either dt or cfl, not both")
        sim.t_end = _get(parser, "simulation", "t_end", float, None, path=loc)
        sim.ic = _get(parser, "simulation", "ic", str, None, path=loc)
        sim.epsilon = _get(parser, "simulation", "epsilon", float, 1e-3, path=loc)
        window_raw = _get(parser, "simulation", "window", str, None, path=loc)
        if window_raw is not None:
            parts = [p for p in window_raw.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise ConfigError(f"{loc}: [simulation] window must be two numbers")
            try:
                sim.window = (float(parts[0]), float(parts[1]))
            except ValueError as err:
                raise ConfigError(f"{loc}: [simulation] window: {err}") from err
        sim.stride = _get(parser, "simulation", "stride", int, None, path=loc)
        sim.integrator = _get(parser, "simulation", "integrator", str, "euler",
                              path=loc).strip()
        sim.norm_cap = _get(parser, "simulation", "norm_cap", float, None, path=loc)
        sim.rate_tol = _get(parser, "simulation", "rate_tol", float, 0.1, path=loc)
        sim.save_states = _get(parser, "simulation", "save_states", bool, False, path=loc)
    return cfg
