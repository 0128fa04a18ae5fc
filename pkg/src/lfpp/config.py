"""Flat ``key = value`` run configs with a typed schema.

Blank lines and ``#`` comments are ignored.  Unknown or repeated keys are
errors, so a typo never silently falls back to a default.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .errors import ValidationError


class ConfigError(ValidationError):
    """Malformed config text or a value of the wrong type."""


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip()) if text.strip() else ()


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip()) if text.strip() else ()


def _finite(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str


SCHEMA: dict[str, Key] = {
    # grid and ensemble
    "dimension": Key(int, 2, "spatial dimension d"),
    "n": Key(int, 256, "grid sites per axis (power of two)"),
    "box_size": Key(_finite, 4.0, "side of the periodic box"),
    "seed": Key(int, 0, "base seed; ensembles use seed, seed+1, ..."),
    "n_seeds": Key(int, 100, "ensemble size"),
    "bump": Key(str, "standard", "seed bump: standard or gevrey<power>"),
    "bump_norm": Key(_finite, 1.0, "target integral of bump^2 (anything but 1 is rejected)"),
    "stencil": Key(str, "moore", "graph stencil: moore or von_neumann"),
    # coupling
    "gamma": Key(_finite, math.sqrt(8.0 / 3.0), "coupling gamma"),
    "d_gamma": Key(_finite, 4.0, "quantum dimension d_gamma"),
    "xi": Key(_finite, 0.0, "override xi directly (0 = gamma / d_gamma)"),
    # scales
    "epsilon": Key(_finite, 1.0 / 32, "mollification scale"),
    "epsilons": Key(_floats, (0.2, 0.1, 0.05, 0.025), "scales for the exponent fit"),
    "sampler": Key(str, "spectral", "spectral or white_noise_layers"),
    "R": Key(_finite, 2.0, "outer scale of the white-noise layers"),
    "mollify": Key(_bool, False, "write the mollified field as well"),
    # distance
    "src": Key(_ints, (), "source site coordinates"),
    "dst": Key(_ints, (), "target site coordinates"),
    "return_path": Key(_bool, False, "record the optimal path"),
    # fit-exponent
    "input": Key(str, "", "CSV with epsilon,median columns (empty = run the ensemble)"),
    # c_r
    "r_list": Key(_floats, (1.0, 0.5, 0.25), "dyadic radii"),
    "control_shift": Key(_finite, 0.3, "xi Q offset of the negative control"),
    # moments / Hölder
    "p_list": Key(_floats, (1.0, 2.0, 4.0), "moment orders"),
    "levels": Key(_ints, (4, 8, 16, 32), "Hölder separations in sites"),
    "pairs_per_field": Key(int, 10, "Hölder pairs per realization"),
    # thick points
    "alpha": Key(_finite, 0.0, "thickness level"),
    "epsilon_probe": Key(_finite, 0.0, "sphere-average radius (0 = 4 spacings)"),
    # kpz
    "kind": Key(str, "segment", "target set: box, segment or cantor"),
    "count_lo": Key(int, 8, "smallest covering count used in the fit"),
    "count_hi": Key(int, 200, "largest covering count used in the fit"),
    # shells
    "radii": Key(_floats, (1.0, 0.5, 0.25, 0.125), "shell radii, shrinking by >= 2"),
    # gw tails
    "drift_a": Key(_finite, 1.0, "drift a"),
    "horizon_T": Key(_finite, 12.0, "horizon for the sup tail"),
    "dt": Key(_finite, 0.01, "time step"),
    "n_samples": Key(int, 100_000, "Monte Carlo paths"),
    "y_list": Key(_floats, (0.5, 1.0, 1.5, 2.0, 2.5, 3.0), "sup-tail thresholds"),
    "x_list": Key(_floats, (5.0, 7.92, 12.56, 19.91, 31.55, 50.0), "integral-tail thresholds"),
    "horizon_T_integral": Key(_finite, 30.0, "horizon for the integral tail"),
    "bridge": Key(_bool, True, "Brownian-bridge correction of the running maximum"),
    # verify
    "criteria": Key(_ints, tuple(range(1, 11)), "acceptance criteria to run"),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict
    source_bytes: bytes = b""
    path: str = ""

    def __getattr__(self, name: str):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source_bytes).hexdigest()

    @property
    def seeds(self) -> tuple[int, ...]:
        return tuple(range(self.seed, self.seed + self.n_seeds))

    def replace(self, **changes) -> "RunConfig":
        unknown = set(changes) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return RunConfig({**self.values, **changes}, self.source_bytes, self.path)


def parse_config(text: str, *, source: str = "<string>") -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: key {key!r} repeated")
        try:
            out[key] = SCHEMA[key].parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def load_config(path: str | Path | None) -> RunConfig:
    """Schema defaults overlaid with the file; ``None`` gives the defaults.

    A missing file raises FileNotFoundError (a usage error, not a validation one).
    """
    values = {k: v.default for k, v in SCHEMA.items()}
    if path is None:
        return RunConfig(values)
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError(f"{path}: not UTF-8 text") from None
    values.update(parse_config(text, source=str(path)))
    return RunConfig(values, raw, str(path))


def dump_config(values: dict) -> str:
    """Render values back to the flat format (lists comma-joined)."""
    lines = []
    for key in sorted(values):
        v = values[key]
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"
