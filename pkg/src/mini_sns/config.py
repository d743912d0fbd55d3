"""Flat ``key = value`` run configuration.

Schema (every key optional; ``#`` starts a comment)::

    domain           unit_square            only the unit square is supported
    level            3                      mesh level for simulate / energy
    levels           2 3 4 5                coarse levels of a study
    reference_level  6                      reference level of a study (>= max(levels))
    T                0.1                    final time
    steps            64                     time steps on [0, T]
    energy_steps     64 128 256 512         step counts of the dt refinement
    samples          16                     Monte Carlo samples
    seed             0                      base seed of the keyed Brownian streams
    noise            default                default | boundary | none | custom
    noise_mode.<k>   <stream>, <amplitude>  custom family entry; <stream> is a builtin
                                            name, a polynomial in x and y, or a
                                            coefficient matrix [[c00, c01], [c10, c11]]
    u0               vortex                 vortex | taylor_green | shear | zero | <file>
    u0_amplitude     1.0
    nonlinearity     on                     on | off (also true/false, yes/no, 1/0)
    ito_correction   on
    noise_on         on
    snapshot_stride  1
    pressure_gauge   mean                   mean (zero-mean multiplier) | pin (pressure dof 0 fixed)
    threads          1
    lab_alpha        0.25                   smoothing exponent of the operator lab
    lab_quick        off                    restrict the operator lab to cheap levels
"""

from __future__ import annotations

import ast
import configparser
import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .experiments import StudyConfig
from .integrator import SimConfig, resolve_noise
from .noise import NAMED_FAMILIES, NoiseModel, build_noise_family

_SECTION = "run"
_BOOL = configparser.ConfigParser.BOOLEAN_STATES
_CUSTOM_NOISE: dict[tuple, NoiseModel] = {}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    domain: str = "unit_square"
    level: int = 3
    levels: tuple = (2, 3, 4, 5)
    reference_level: int = 6
    T: float = 0.1
    steps: int = 64
    energy_steps: tuple = (64, 128, 256, 512)
    samples: int = 16
    seed: int = 0
    noise: str = "default"
    noise_modes: tuple = ()  # ((stream, amplitude), ...) for noise = custom
    u0: str = "vortex"
    u0_amplitude: float = 1.0
    nonlinearity: bool = True
    ito_correction: bool = True
    noise_on: bool = True
    snapshot_stride: int = 1
    pressure_gauge: str = "mean"
    threads: int = 1
    lab_alpha: float = 0.25
    lab_quick: bool = False
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.domain != "unit_square":
            raise ConfigError(f"unsupported domain {self.domain!r}; only unit_square is available")
        if self.noise == "custom":
            if not self.noise_modes:
                raise ConfigError("noise = custom needs at least one noise_mode.<k> entry")
        elif self.noise_modes:
            raise ConfigError("noise_mode.<k> entries require noise = custom")
        elif self.noise not in NAMED_FAMILIES:
            raise ConfigError(f"unknown noise family {self.noise!r}; choose from {sorted(NAMED_FAMILIES) + ['custom']}")
        if not 0.0 < self.lab_alpha < 1.0:
            raise ConfigError("lab_alpha must lie in (0, 1)")
        if any(n < 1 for n in self.energy_steps):
            raise ConfigError("energy_steps must be positive")
        try:
            if self.noise == "custom":
                build_noise_family([(_stream_value(s), a) for s, a in self.noise_modes])
            SimConfig(T=self.T, steps=self.steps, level=self.level, snapshot_stride=self.snapshot_stride, pressure_gauge=self.pressure_gauge)
            StudyConfig(levels=self.levels, reference_level=self.reference_level, T=self.T, steps=self.steps, samples=self.samples, threads=self.threads)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    def noise_model(self) -> NoiseModel:
        if self.noise != "custom":
            return resolve_noise(self.noise)
        key = self.noise_modes
        if key not in _CUSTOM_NOISE:
            _CUSTOM_NOISE[key] = build_noise_family([(_stream_value(s), a) for s, a in key]).with_kappa()
        return _CUSTOM_NOISE[key]

    def sim_config(self, level: int | None = None) -> SimConfig:
        return SimConfig(
            T=self.T,
            steps=self.steps,
            level=self.level if level is None else level,
            noise=self.noise if self.noise != "custom" else self.noise_model(),
            u0=self.u0,
            u0_amplitude=self.u0_amplitude,
            seed=self.seed,
            nonlinearity=self.nonlinearity,
            ito_correction=self.ito_correction,
            noise_on=self.noise_on,
            snapshot_stride=self.snapshot_stride,
            pressure_gauge=self.pressure_gauge,
        )

    def study_config(self) -> StudyConfig:
        return StudyConfig(
            levels=self.levels,
            reference_level=self.reference_level,
            T=self.T,
            steps=self.steps,
            samples=self.samples,
            base_seed=self.seed,
            noise=self.noise if self.noise != "custom" else self.noise_model(),
            u0=self.u0,
            u0_amplitude=self.u0_amplitude,
            nonlinearity=self.nonlinearity,
            ito_correction=self.ito_correction,
            noise_on=self.noise_on,
            snapshot_stride=self.snapshot_stride,
            pressure_gauge=self.pressure_gauge,
            threads=self.threads,
        )

    def canonical(self) -> str:
        """Every setting as ``key = value`` lines in field order; parseable, and the hash input."""
        lines = []
        for f in fields(self):
            if f.name == "source":
                continue
            if f.name == "noise_modes":
                lines += [f"noise_mode.{k} = {s}, {a!r}" for k, (s, a) in enumerate(self.noise_modes)]
                continue
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _format(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, tuple):
        return " ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _stream_value(text: str):
    text = text.strip()
    if text.startswith("["):
        try:
            return ast.literal_eval(text)
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"bad coefficient matrix {text!r}") from exc
    return text


def _parse_value(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() not in _BOOL:
                raise ValueError(f"expected on/off, got {raw!r}")
            return _BOOL[raw.lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(int(x) for x in raw.replace(",", " ").split())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


_KINDS = {
    "domain": str,
    "level": int,
    "levels": tuple,
    "reference_level": int,
    "T": float,
    "steps": int,
    "energy_steps": tuple,
    "samples": int,
    "seed": int,
    "noise": str,
    "u0": str,
    "u0_amplitude": float,
    "nonlinearity": bool,
    "ito_correction": bool,
    "noise_on": bool,
    "snapshot_stride": int,
    "pressure_gauge": str,
    "threads": int,
    "lab_alpha": float,
    "lab_quick": bool,
}


def parse_config(text: str, source: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), comment_prefixes=("#",))
    parser.optionxform = str  # keys are case-sensitive (T)
    try:
        parser.read_string(f"[{_SECTION}]\n" + text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    values: dict = {}
    modes = []
    for key, raw in parser[_SECTION].items():
        if key.startswith("noise_mode."):
            index = key.split(".", 1)[1]
            if not index.isdigit():
                raise ConfigError(f"{key}: noise mode index must be an integer")
            stream, sep, amp = raw.rpartition(",")
            if not sep or not stream.strip():
                raise ConfigError(f"{key}: expected '<stream>, <amplitude>'")
            modes.append((int(index), stream.strip(), _parse_value(key, amp, float)))
        elif key in _KINDS:
            values[key] = _parse_value(key, raw, _KINDS[key])
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if modes:
        values["noise_modes"] = tuple((s, a) for _, s, a in sorted(modes))
    try:
        return RunConfig(**values, source=source)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))


def as_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d.pop("source")
    return d
