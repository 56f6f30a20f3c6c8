"""Run configuration: strict TOML schema mapped onto the domain objects.

Example::

    seed = 0
    observers = [10.0]

    [metric]
    M = 1.0

    [profile]
    delta = 0.5
    h0 = 1.0

    [grid]
    du = 0.125
    u_max = 1000.0
    v_max = 1040.0

    [data]
    epsilon = 1e-3

    [analysis]
    windows = [[400.0, 900.0]]
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .coefficients import CoefficientProfile
from .errors import ConfigError, TailwaveError
from .evolution import GridSpec, InitialData
from .geometry import MetricParams

__all__ = ["AnalysisConfig", "RunConfig", "load_config", "parse_config"]


@dataclass(frozen=True)
class AnalysisConfig:
    windows: tuple = ((800.0, 1400.0),)
    kappa: float | None = None  # None means min(delta, 1)
    noise_floor: float | None = None  # None means DEFAULT_FLOOR_FACTOR * epsilon

    def to_dict(self) -> dict:
        d = {"windows": [list(w) for w in self.windows]}
        if self.kappa is not None:
            d["kappa"] = self.kappa
        if self.noise_floor is not None:
            d["noise_floor"] = self.noise_floor
        return d


@dataclass(frozen=True)
class RunConfig:
    metric: MetricParams = field(default_factory=MetricParams)
    profile: CoefficientProfile = field(default_factory=lambda: CoefficientProfile(1.0, h0=0.0))
    grid: GridSpec = field(default_factory=lambda: GridSpec(0.0625, 1490.0, 1510.0))
    data: InitialData = field(default_factory=InitialData)
    observers: tuple = (10.0,)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    seed: int = 0

    @property
    def kappa(self) -> float:
        if self.analysis.kappa is not None:
            return self.analysis.kappa
        return min(self.profile.delta, 1.0)

    def to_dict(self) -> dict:
        grid = asdict(self.grid)
        grid.pop("rstar_min")
        return {
            "seed": self.seed,
            "observers": list(self.observers),
            "metric": asdict(self.metric),
            "profile": asdict(self.profile),
            "grid": grid,
            "data": asdict(self.data),
            "analysis": self.analysis.to_dict(),
        }

    def with_value(self, axis: str, value: float) -> "RunConfig":
        """Copy with one sweep axis replaced."""
        if axis == "delta":
            return replace(self, profile=replace(self.profile, delta=value))
        if axis == "epsilon":
            return replace(self, data=replace(self.data, epsilon=value))
        if axis == "du":
            return replace(self, grid=replace(self.grid, du=value))
        raise ConfigError(f"unknown sweep axis {axis!r}; expected delta, epsilon or du")


_SECTIONS = {
    "metric": (MetricParams, {"M", "a"}),
    "profile": (CoefficientProfile, {"delta", "h0", "kind", "cubic_c"}),
    "grid": (GridSpec, {"du", "u_max", "v0", "v_max"}),
    "data": (InitialData, {"epsilon", "v_c", "sigma", "profile"}),
}
_REQUIRED = {"profile": {"delta"}, "grid": {"du", "u_max", "v_max"}}
_TOP = {"metric", "profile", "grid", "data", "observers", "analysis", "seed"}


def _number(where, x):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    x = float(x)
    if not math.isfinite(x):
        raise ConfigError(f"{where}: must be finite")
    return x


def _check_keys(where, given, allowed):
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _section(name, raw):
    cls, allowed = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    _check_keys(f"[{name}]", raw, allowed)
    missing = _REQUIRED.get(name, set()) - set(raw)
    if missing:
        raise ConfigError(f"[{name}] missing required key(s) {', '.join(sorted(missing))}")
    types = {f.name: f.type for f in fields(cls)}
    kw = {}
    for k, v in raw.items():
        if types[k] in ("str", str):
            if not isinstance(v, str):
                raise ConfigError(f"{name}.{k}: expected a string, got {v!r}")
            kw[k] = v
        else:
            kw[k] = _number(f"{name}.{k}", v)
    try:
        return cls(**kw)
    except TailwaveError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _analysis(raw) -> AnalysisConfig:
    if not isinstance(raw, dict):
        raise ConfigError("[analysis] must be a table")
    _check_keys("[analysis]", raw, {"windows", "kappa", "noise_floor"})
    kw = {}
    if "windows" in raw:
        ws = raw["windows"]
        if not isinstance(ws, list) or not ws:
            raise ConfigError("analysis.windows: expected a non-empty list of [t_lo, t_hi]")
        out = []
        for w in ws:
            if not isinstance(w, list) or len(w) != 2:
                raise ConfigError(f"analysis.windows: bad window {w!r}")
            lo, hi = (_number("analysis.windows", x) for x in w)
            if not 0 < lo < hi:
                raise ConfigError(f"analysis.windows: need 0 < t_lo < t_hi, got {w!r}")
            out.append((lo, hi))
        kw["windows"] = tuple(out)
    if "kappa" in raw:
        k = _number("analysis.kappa", raw["kappa"])
        if not k > 0:
            raise ConfigError("analysis.kappa: must be > 0")
        kw["kappa"] = k
    if "noise_floor" in raw:
        f = _number("analysis.noise_floor", raw["noise_floor"])
        if f < 0:
            raise ConfigError("analysis.noise_floor: must be >= 0")
        kw["noise_floor"] = f
    return AnalysisConfig(**kw)


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed TOML (or JSON) mapping into a RunConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    _check_keys("config", raw, _TOP)
    if "profile" not in raw or "grid" not in raw:
        raise ConfigError("config needs [profile] and [grid] sections")
    kw = {name: _section(name, raw[name]) for name in _SECTIONS if name in raw}
    if "observers" in raw:
        obs = raw["observers"]
        if not isinstance(obs, list) or not obs:
            raise ConfigError("observers: expected a non-empty list of r* values")
        kw["observers"] = tuple(_number("observers", x) for x in obs)
    if "analysis" in raw:
        kw["analysis"] = _analysis(raw["analysis"])
    if "seed" in raw:
        s = raw["seed"]
        if isinstance(s, bool) or not isinstance(s, int):
            raise ConfigError(f"seed: expected an integer, got {s!r}")
        kw["seed"] = s
    cfg = RunConfig(**kw)
    if cfg.metric.a != 0:
        raise ConfigError("metric.a: evolution runs are Schwarzschild only (a = 0)")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
    return parse_config(raw)
