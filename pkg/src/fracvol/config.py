"""Plain ``key = value`` run configuration with typed keys and defaults."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from fracvol.model import CouplingMode, ModelParams


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(x) for x in _split(text))


def _ints(text):
    return tuple(int(x) for x in _split(text))


def _split(text):
    text = str(text).strip()
    # "1..30" shorthand for an integer range
    if ".." in text and "," not in text:
        lo, hi = text.split("..")
        return [str(v) for v in range(int(lo), int(hi) + 1)]
    return [x for x in text.replace(" ", "").split(",") if x]


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


def _opt_int(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return int(text)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    """All tunables. ``None`` means "use the command's default"."""

    # model
    H: float = 0.83
    k: float = 0.59
    beta: float | None = None
    theta: float | None = None
    delta: float = 1.0
    mu: float = 0.0
    r: float | None = None
    s0: float = 1.0
    # run controls
    seed: int = 20240101
    n_paths: int | None = None
    n_steps: int | None = None
    dt: float | None = None
    quad_order: int = 64
    # risk query
    pstar: float = 0.01
    lags: tuple = tuple(float(x) for x in range(1, 31))
    baseline_vol: str = "mean"
    lag_scaled_vol: bool = False
    mode: str | None = None
    # density grid
    lag: float = 1.0
    r_min: float | None = None
    r_max: float | None = None
    n_points: int = 8001
    # leverage / checks
    taus: tuple = tuple(range(-10, 11))
    threshold: float = 3.0

    def validate(self):
        if self.beta is not None and self.theta is not None:
            raise ConfigError("beta and theta are mutually exclusive")
        if self.beta is None and self.theta is None:
            self.beta = -5.0
        if self.mode is not None and self.mode not in ("independent", "identified", "both"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.baseline_vol not in ("mean", "rms"):
            raise ConfigError(f"unknown baseline_vol {self.baseline_vol!r}")
        for name in ("n_paths", "n_steps"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not 0 < self.pstar < 1:
            raise ConfigError("pstar must lie in (0, 1)")
        if self.n_points < 2:
            raise ConfigError("n_points must be at least 2")
        try:
            self.model_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def model_params(self, default_r: float = 0.0) -> ModelParams:
        return ModelParams(
            hurst=self.H,
            vol_scale=self.k,
            beta=self.beta,
            theta=self.theta,
            obs_scale=self.delta,
            drift=self.mu,
            riskfree=default_r if self.r is None else self.r,
            spot=self.s0,
        )

    def modes(self, default: str) -> list[CouplingMode]:
        mode = self.mode or default
        if mode == "both":
            return [CouplingMode.INDEPENDENT, CouplingMode.IDENTIFIED]
        return [CouplingMode(mode)]

    def set(self, key: str, value) -> None:
        if key not in _PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            setattr(self, key, _PARSERS[key](value))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc

    def items(self):
        for f in fields(self):
            yield f.name, getattr(self, f.name)

    def header(self) -> str:
        """Single-line rendering of the resolved config."""
        parts = []
        for key, value in self.items():
            if isinstance(value, tuple):
                value = ",".join(_fmt(v) for v in value)
            elif isinstance(value, float):
                value = _fmt(value)
            parts.append(f"{key}={value}")
        return " ".join(parts)


def _fmt(v):
    if isinstance(v, float):
        if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


_PARSERS = {
    "H": float,
    "k": float,
    "beta": _opt_float,
    "theta": _opt_float,
    "delta": float,
    "mu": float,
    "r": _opt_float,
    "s0": float,
    "seed": int,
    "n_paths": _opt_int,
    "n_steps": _opt_int,
    "dt": _opt_float,
    "quad_order": int,
    "pstar": float,
    "lags": _floats,
    "baseline_vol": str,
    "lag_scaled_vol": _bool,
    "mode": lambda s: None if str(s).strip().lower() in ("", "none") else str(s).strip(),
    "lag": float,
    "r_min": _opt_float,
    "r_max": _opt_float,
    "n_points": int,
    "taus": _ints,
    "threshold": float,
}


def parse_config_text(text: str, config: RunConfig | None = None) -> RunConfig:
    config = RunConfig() if config is None else config
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        config.set(key, value)
    return config


def config_from_header(line: str) -> RunConfig:
    """Rebuild the config embedded in an output file's first line."""
    parts = line.lstrip("#").split()
    if len(parts) < 2 or parts[0] != "fracvol":
        raise ConfigError("not a fracvol header line")
    config = RunConfig()
    for item in parts[2:]:
        key, value = item.split("=", 1)
        config.set(key, value)
    return config.validate()


def load_config(path=None, overrides=()) -> RunConfig:
    config = RunConfig()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        parse_config_text(text, config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        config.set(key.strip(), value.strip())
    return config.validate()
