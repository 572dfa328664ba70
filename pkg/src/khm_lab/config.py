"""Plain key=value run configuration with sections and line-level errors.

The format is INI-like and versioned through a mandatory top-level
`format = 1` key.  Unknown sections or keys are rejected so that typos
cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forcing import ForcingSpectrum, ForcingValidationError, build_forcing, default_spectrum


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line


_KNOWN_KEYS = {
    None: {"format"},
    "run": {"nu", "n", "dt", "burn_in", "averaging", "stride", "seed",
            "ensemble", "nonlinear"},
    "forcing": {"mode", "default", "epsilon"},
    "stats": {"ell_min", "ell_max", "ell_count", "small_ell_count",
              "quad_order", "flatness_p", "shells"},
    "khm": {"eta_scale", "s", "ell_d", "ell_i"},
}


@dataclass
class StatsConfig:
    ell_min: float | None = None      # default 2 pi / n
    ell_max: float | None = None      # default pi / 2
    ell_count: int = 32
    small_ell_count: int = 4
    quad_order: int = 14
    flatness_p: tuple = (2,)
    shells: tuple = (1, 2, 4)


@dataclass
class KHMConfig:
    eta_scale: float = 1.0
    s: float = 1.5
    ell_d: float | None = None
    ell_i: float | None = None


@dataclass
class Config:
    nu: float
    n: int
    dt: float
    burn_in: float
    averaging: float
    stride: int
    seed: int
    ensemble: int
    nonlinear: bool
    forcing: ForcingSpectrum
    stats: StatsConfig = field(default_factory=StatsConfig)
    khm: KHMConfig = field(default_factory=KHMConfig)

    def ell_grid(self) -> np.ndarray:
        lo = self.stats.ell_min if self.stats.ell_min else 2.0 * np.pi / self.n
        hi = self.stats.ell_max if self.stats.ell_max else np.pi / 2.0
        grid = np.geomspace(lo, hi, self.stats.ell_count)
        if self.stats.small_ell_count > 0:
            small = lo * np.linspace(0.25, 0.85, self.stats.small_ell_count)
            grid = np.unique(np.concatenate([small, grid]))
        return grid

    def run_config(self):
        from .integrator import RunConfig
        from .spectral import Grid

        return RunConfig(
            nu=self.nu, grid=Grid(self.n), forcing=self.forcing, dt=self.dt,
            burn_in_time=self.burn_in, averaging_time=self.averaging,
            snapshot_stride=self.stride, seed=self.seed,
            ensemble_size=self.ensemble, nonlinear=self.nonlinear,
            regularity_s=self.khm.s,
        )


def _parse_scalar(raw: str, kind, key: str, line: int):
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("on", "true", "1", "yes"):
                return True
            if low in ("off", "false", "0", "no"):
                return False
            raise ValueError
        return kind(raw)
    except ValueError:
        raise ConfigError(f"key '{key}' expects {kind.__name__}, got '{raw}'", line)


def _parse_vector(raw: str, line: int):
    try:
        return tuple(float(v) for v in raw.split(","))
    except ValueError:
        raise ConfigError(f"malformed vector '{raw}'", line)


def _parse_mode_line(raw: str, line: int):
    parts = [p.strip() for p in raw.split("/")]
    if len(parts) != 3:
        raise ConfigError("mode line needs 'kx,ky,kz / ax,ay,az / gx,gy,gz'", line)
    k = _parse_vector(parts[0], line)
    if any(v != int(v) for v in k):
        raise ConfigError(f"wavenumber must be integer, got {parts[0]}", line)
    return (tuple(int(v) for v in k), _parse_vector(parts[1], line),
            _parse_vector(parts[2], line))


def parse_config(path) -> Config:
    entries = {}        # (section, key) -> (value, line)
    mode_lines = []
    section = None
    with open(path) as fh:
        for lineno, rawline in enumerate(fh, start=1):
            text = rawline.split("#", 1)[0].strip()
            if not text:
                continue
            if text.startswith("[") and text.endswith("]"):
                section = text[1:-1].strip()
                if section not in _KNOWN_KEYS:
                    raise ConfigError(f"unknown section [{section}]", lineno)
                continue
            if "=" not in text:
                raise ConfigError(f"expected 'key = value', got '{text}'", lineno)
            key, _, value = text.partition("=")
            key = key.strip().lower()
            value = value.strip()
            if key not in _KNOWN_KEYS.get(section, set()):
                where = f"[{section}]" if section else "top level"
                raise ConfigError(f"unknown key '{key}' in {where}", lineno)
            if section == "forcing" and key == "mode":
                mode_lines.append(_parse_mode_line(value, lineno))
            else:
                if (section, key) in entries:
                    raise ConfigError(f"duplicate key '{key}'", lineno)
                entries[(section, key)] = (value, lineno)

    def get(section, key, kind, default=None, required=False):
        if (section, key) in entries:
            value, line = entries[(section, key)]
            return _parse_scalar(value, kind, key, line)
        if required:
            raise ConfigError(f"missing required key '{key}' in [{section}]")
        return default

    fmt = get(None, "format", int, required=True)
    if fmt != 1:
        raise ConfigError(f"unsupported config format {fmt}")

    nu = get("run", "nu", float, required=True)
    n = get("run", "n", int, required=True)
    dt = get("run", "dt", float, required=True)
    burn_in = get("run", "burn_in", float, 0.0)
    averaging = get("run", "averaging", float, required=True)
    stride = get("run", "stride", int, 1)
    seed = get("run", "seed", int, required=True)
    ensemble = get("run", "ensemble", int, 1)
    nonlinear = get("run", "nonlinear", bool, True)
    for name, val in (("nu", nu), ("dt", dt), ("averaging", averaging)):
        if val <= 0:
            raise ConfigError(f"'{name}' must be positive, got {val}")
    if burn_in < 0:
        raise ConfigError(f"'burn_in' must be nonnegative, got {burn_in}")
    if n < 8 or n % 2:
        raise ConfigError(f"'n' must be even and >= 8, got {n}")
    if stride < 1 or ensemble < 1:
        raise ConfigError("'stride' and 'ensemble' must be >= 1")

    if mode_lines:
        try:
            forcing = build_forcing(mode_lines)
        except ForcingValidationError as err:
            raise ConfigError(str(err))
    else:
        preset = get("forcing", "default", str, "shell2")
        eps = get("forcing", "epsilon", float, 1.0)
        if eps <= 0:
            raise ConfigError(f"'epsilon' must be positive, got {eps}")
        if preset != "shell2":
            raise ConfigError(f"unknown forcing preset '{preset}'")
        forcing = default_spectrum(eps)

    stats = StatsConfig(
        ell_min=get("stats", "ell_min", float),
        ell_max=get("stats", "ell_max", float),
        ell_count=get("stats", "ell_count", int, 32),
        small_ell_count=get("stats", "small_ell_count", int, 4),
        quad_order=get("stats", "quad_order", int, 14),
        flatness_p=tuple(
            int(v) for v in str(get("stats", "flatness_p", str, "2")).split(",")),
        shells=tuple(
            int(v) for v in str(get("stats", "shells", str, "1,2,4")).split(",")),
    )
    for name in ("ell_min", "ell_max"):
        v = getattr(stats, name)
        if v is not None and not (0 < v < np.pi):
            raise ConfigError(f"'{name}' must lie in (0, pi), got {v}")
    khm = KHMConfig(
        eta_scale=get("khm", "eta_scale", float, 1.0),
        s=get("khm", "s", float, 1.5),
        ell_d=get("khm", "ell_d", float),
        ell_i=get("khm", "ell_i", float),
    )
    if khm.s <= 1.0:
        raise ConfigError(f"regularity exponent 's' must exceed 1, got {khm.s}")
    return Config(nu=nu, n=n, dt=dt, burn_in=burn_in, averaging=averaging,
                  stride=stride, seed=seed, ensemble=ensemble,
                  nonlinear=nonlinear, forcing=forcing, stats=stats, khm=khm)
