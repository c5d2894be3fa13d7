"""User placement, large-scale fading and SNR bookkeeping."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import optimize, special

from .config import SystemConfig
from .errors import ContractError

JAKES_FIRST_ZERO = 2.404825557695773


@dataclasses.dataclass(frozen=True, eq=False)
class UserDrop:
    """Static user geometry for one episode.

    Attributes
    ----------
    positions : (K, 2) ndarray
        User coordinates in km, base station at the origin.
    distances : (K,) ndarray
        Euclidean distance of each user to the base station.
    variances : (K,) ndarray
        Per-entry channel power ``v_k``.
    """

    positions: np.ndarray
    distances: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        for name in ("positions", "distances", "variances"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ContractError("positions must have shape (K, 2)")
        k = self.positions.shape[0]
        if self.distances.shape != (k,) or self.variances.shape != (k,):
            raise ContractError("distances and variances must have shape (K,)")
        if np.any(self.variances < 0):
            raise ContractError("variances must be non-negative")

    @property
    def n_users(self) -> int:
        return self.distances.shape[0]

    @classmethod
    def from_variances(cls, variances) -> "UserDrop":
        """Build a drop with given powers; positions are placed on the x-axis at the
        matching exponent-4 distance (useful for tests and variance-profile runs)."""
        v = np.asarray(variances, dtype=float)
        with np.errstate(divide="ignore"):
            d = np.where(v > 0, v ** -0.25, np.inf)
        pos = np.column_stack([d, np.zeros_like(d)])
        return cls(pos, d, v)


def large_scale_variance(d, d0, exponent=4.0):
    """Path-loss power ``(d/d0)**(-exponent)``; accepts scalars or arrays."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0) or d0 <= 0:
        raise ContractError("distances must be positive")
    out = (d_arr / d0) ** (-exponent)
    return float(out) if out.ndim == 0 else out


def snr_db(d, config: SystemConfig):
    """Received SNR in dB of a user at distance ``d``."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ContractError("distances must be positive")
    out = config.snr0_db - 10.0 * config.path_loss_exponent * np.log10(d_arr / config.ref_distance)
    return float(out) if out.ndim == 0 else out


def sample_user_drop(config: SystemConfig, stream: np.random.Generator) -> UserDrop:
    """Place ``K`` users uniformly on the annulus ``min_distance <= d <= cell_radius``.

    One ``(K, 2)`` block of uniforms is drawn, so the first ``K`` users of a
    larger drop from the same stream coincide with a smaller drop.
    """
    u = stream.random((config.n_users, 2))
    r_min2 = config.min_distance ** 2
    r_max2 = config.cell_radius ** 2
    radius = np.sqrt(r_min2 + u[:, 0] * (r_max2 - r_min2))
    theta = 2.0 * np.pi * u[:, 1]
    positions = np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])
    distances = np.hypot(positions[:, 0], positions[:, 1])
    variances = config.snr0_linear * large_scale_variance(
        distances, config.ref_distance, config.path_loss_exponent)
    return UserDrop(positions, distances, np.atleast_1d(variances))


def temporal_correlation_jakes(f_doppler, interval):
    """Jakes correlation ``J0(2*pi*f_D*interval)``; may be negative."""
    if f_doppler < 0 or interval < 0:
        raise ContractError("Doppler frequency and interval must be non-negative")
    return float(special.j0(2.0 * math.pi * f_doppler * interval))


def jakes_argument_for(c):
    """Smallest positive ``x`` with ``J0(x) == c`` for ``c`` in [0, 1)."""
    if not 0.0 <= c < 1.0:
        raise ContractError("c must lie in [0, 1)")
    if c == 0.0:
        return JAKES_FIRST_ZERO
    return optimize.brentq(lambda x: special.j0(x) - c, 0.0, JAKES_FIRST_ZERO, xtol=1e-14)
