"""Achievable-rate evaluation.

Two routes to the same quantity: a Monte Carlo sample of the log-det rate
with CSI error folded into white equivalent noise, and its deterministic
equivalent computed from a scalar fixed point. Rates are in nats internally.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import _kernels
from .config import RateUnit
from .csi import CsiState
from .errors import ContractError, ConvergenceError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000


@dataclasses.dataclass(frozen=True)
class EquivalentNoise:
    beta: float

    @property
    def noise_power(self) -> float:
        return 1.0 + self.beta


@dataclasses.dataclass(frozen=True, eq=False)
class DetEqProblem:
    """Normalized obtained-channel variances ``v_hat_k / (1 + sum v_tilde)``."""

    v_bar: np.ndarray
    n_antennas: int
    n_users: int
    tau: int = 0
    block_length: int = 1

    def __post_init__(self):
        v_bar = np.ascontiguousarray(self.v_bar, dtype=np.float64)
        if v_bar.ndim != 1 or v_bar.shape[0] != self.n_users:
            raise ContractError("v_bar must hold one value per user")
        if np.any(v_bar < 0) or not np.all(np.isfinite(v_bar)):
            raise ContractError("v_bar must be finite and non-negative")
        object.__setattr__(self, "v_bar", v_bar)


@dataclasses.dataclass(frozen=True)
class FixedPointResult:
    t: float
    iterations: int
    residual: float
    converged: bool = True


def _mask(n_users, served):
    if served is None:
        return np.ones(n_users, dtype=bool)
    mask = np.zeros(n_users, dtype=bool)
    mask[np.asarray(served, dtype=int)] = True
    return mask


def equivalent_noise(csi: CsiState, served=None) -> EquivalentNoise:
    """Aggregate tracked CSI-error power; ``served`` restricts it to users that
    actually transmit data (all users by default)."""
    mask = _mask(csi.n_users, served)
    return EquivalentNoise(float(np.sum(csi.v_tilde[mask])))


def training_fraction(tau, block_length):
    if not 0 <= tau <= block_length:
        raise ContractError(f"tau must lie in [0, {block_length}], got {tau}")
    return 1.0 - tau / block_length


def block_rate_sample(h_hat, noise: EquivalentNoise, tau: int, block_length: int,
                      n_users: int, unit: RateUnit = RateUnit.NATS) -> float:
    """``(1 - tau/T0) / K * log det(I + H H^H / (1 + beta))`` for one CSI draw.

    The smaller of the ``N x N`` and ``K x K`` Gram forms is factorized.
    """
    h_hat = np.asarray(h_hat)
    if not np.all(np.isfinite(h_hat)):
        raise ContractError("obtained channel has non-finite entries")
    frac = training_fraction(tau, block_length)
    if frac == 0.0 or h_hat.size == 0:
        return 0.0
    n, k = h_hat.shape
    gram = h_hat.conj().T @ h_hat if k <= n else h_hat @ h_hat.conj().T
    gram = np.ascontiguousarray(0.5 * (gram + gram.conj().T))
    value = _kernels.logdet_eye_plus(gram, 1.0 / noise.noise_power)
    return float(RateUnit(unit).convert(frac * value / n_users))


def logdet_full(h_hat, noise_power) -> float:
    """``log det(I_N + H H^H / p)`` always in the ``N x N`` form (Sylvester checks)."""
    h_hat = np.asarray(h_hat)
    gram = h_hat @ h_hat.conj().T
    return _kernels.logdet_eye_plus_numpy(0.5 * (gram + gram.conj().T), 1.0 / noise_power)


def normalized_variances(csi: CsiState, n_antennas: int | None = None, tau: int = 0,
                         block_length: int = 1, served=None) -> DetEqProblem:
    """Deterministic-equivalent inputs; unserved users get ``v_bar = 0``."""
    mask = _mask(csi.n_users, served)
    noise = equivalent_noise(csi, served)
    v_bar = np.where(mask, csi.v_hat, 0.0) / noise.noise_power
    n = csi.h_hat.shape[0] if n_antennas is None else n_antennas
    return DetEqProblem(v_bar, n, csi.n_users, tau, block_length)


def solve_fixed_point(problem: DetEqProblem, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> FixedPointResult:
    """Solve ``t = 1 / ((1/K) sum v_bar_k / (1 + (N/K) v_bar_k t) + 1/K)`` by plain
    iteration from ``t = 1``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations do not bring successive iterates within ``tol``.
    """
    if not tol > 0:
        raise ContractError("tol must be positive")
    t, it, res, ok = _kernels.fixed_point(problem.v_bar, float(problem.n_antennas),
                                          float(problem.n_users), float(tol), int(max_iter))
    if not ok:
        raise ConvergenceError(
            f"fixed point did not converge in {max_iter} iterations (residual {res:.3g})",
            last=t, iterations=it, residual=res)
    return FixedPointResult(float(t), int(it), float(res), True)


def det_eq_rate(problem: DetEqProblem, fp: FixedPointResult,
                unit: RateUnit = RateUnit.NATS) -> float:
    """Deterministic-equivalent per-user rate at the fixed point ``fp``."""
    if not fp.converged:
        raise ContractError("det_eq_rate needs a converged fixed point")
    frac = training_fraction(problem.tau, problem.block_length)
    if frac == 0.0:
        return 0.0
    bracket = _kernels.deteq_bracket(problem.v_bar, fp.t, float(problem.n_antennas),
                                     float(problem.n_users))
    # The bracket is exactly zero for an all-zero profile; clip round-off below it.
    value = frac * max(bracket, 0.0) / problem.n_users
    return float(RateUnit(unit).convert(value))


def det_eq_from_csi(csi: CsiState, n_antennas: int, tau: int, block_length: int,
                    served=None, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> float:
    problem = normalized_variances(csi, n_antennas, tau, block_length, served)
    return det_eq_rate(problem, solve_fixed_point(problem, tol, max_iter))
