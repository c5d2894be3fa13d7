"""Scenario configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import enum
import math
from pathlib import Path

from .errors import ConfigError


class RateUnit(str, enum.Enum):
    NATS = "nats"
    BITS = "bits"

    def convert(self, nats):
        """Convert a rate given in nats to this unit."""
        if self is RateUnit.BITS:
            return nats / math.log(2.0)
        return nats


@dataclasses.dataclass(frozen=True)
class SystemConfig:
    """All parameters of one simulated scenario.

    Distances are in km. ``snr0_db`` is the received SNR of a user sitting at
    ``ref_distance``; noise has unit variance so the per-user channel power is
    ``10**(snr0_db/10) * (d/ref_distance)**(-path_loss_exponent)``.
    """

    n_antennas: int = 100
    n_users: int = 40
    block_length: int = 60
    n_blocks: int = 11
    temporal_corr: float = 0.9881
    snr0_db: float = 0.0
    cell_radius: float = 1.0
    ref_distance: float = 1.0
    path_loss_exponent: float = 4.0
    min_distance: float = 0.001
    rng_seed: int = 0
    rate_unit: RateUnit = RateUnit.NATS

    def __post_init__(self):
        if not isinstance(self.rate_unit, RateUnit):
            try:
                object.__setattr__(self, "rate_unit", RateUnit(str(self.rate_unit)))
            except ValueError:
                raise ConfigError(f"rate_unit must be 'nats' or 'bits', got {self.rate_unit!r}") from None
        self.validate()

    def validate(self):
        for name in ("n_antennas", "n_users", "block_length", "n_blocks", "rng_seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.n_antennas < 1:
            raise ConfigError("n_antennas must be >= 1")
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        if self.block_length < 1:
            raise ConfigError("block_length must be >= 1")
        if self.n_blocks < 2:
            raise ConfigError("n_blocks must be >= 2")
        if not 0.0 <= self.temporal_corr <= 1.0:
            raise ConfigError("temporal_corr must lie in [0, 1]")
        if not math.isfinite(self.snr0_db):
            raise ConfigError("snr0_db must be finite")
        for name in ("cell_radius", "ref_distance", "path_loss_exponent"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive real")
        if not 0.0 < self.min_distance < self.cell_radius:
            raise ConfigError("min_distance must lie in (0, cell_radius)")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 unsigned bits")

    @property
    def alpha(self) -> float:
        """User density K / T0."""
        return self.n_users / self.block_length

    @property
    def snr0_linear(self) -> float:
        return 10.0 ** (self.snr0_db / 10.0)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}


def _coerce(name, raw):
    ftype = _FIELDS[name].type
    try:
        if ftype == "int":
            return int(raw, 0)
        if ftype == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def parse_config(text: str, base: SystemConfig | None = None) -> SystemConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, raw = line.split("=", 1)
        elif ":" in line:
            key, raw = line.split(":", 1)
        else:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw)
    base = base or SystemConfig()
    return dataclasses.replace(base, **values)


def load_config(path, base: SystemConfig | None = None) -> SystemConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base)


def format_config(config: SystemConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(config, name)
        if isinstance(value, RateUnit):
            value = value.value
        lines.append(f"{name} = {value!r}" if isinstance(value, float) else f"{name} = {value}")
    return "\n".join(lines) + "\n"
