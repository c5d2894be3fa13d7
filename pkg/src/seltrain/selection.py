"""Per-block training-set policies and the exhaustive-search oracle.

User indices are 0-based throughout the package.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools

import numpy as np

from .csi import CsiState
from .errors import ContractError, InfeasibleError
from .geometry import UserDrop

ORACLE_MAX_USERS = 20


class Policy(str, enum.Enum):
    DUS = "DUS"  # dynamic user selection
    RUS = "RUS"  # random user selection
    US = "US"    # user scheduling: closest users, only they are served
    FT = "FT"    # full training

    @classmethod
    def parse(cls, name: str) -> "Policy":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise ValueError(f"unknown policy {name!r}; expected one of "
                             f"{', '.join(p.value for p in cls)}") from None


@dataclasses.dataclass(frozen=True)
class SelectionOutcome:
    trained: tuple[int, ...]
    policy_tag: Policy

    def __post_init__(self):
        if len(set(self.trained)) != len(self.trained):
            raise ContractError("trained users must be unique")

    def __len__(self):
        return len(self.trained)

    @property
    def indices(self) -> np.ndarray:
        return np.asarray(self.trained, dtype=int)


@dataclasses.dataclass(frozen=True, eq=False)
class SelectionScore:
    """Training-error variance, prediction-error variance and their gap, per user."""

    beta_t: np.ndarray
    beta_p: np.ndarray
    delta: np.ndarray

    @property
    def n_users(self) -> int:
        return self.delta.shape[0]


def score_arrays(v, v_hat_prev, c, tau) -> SelectionScore:
    v = np.asarray(v, dtype=float)
    beta_t = v / (1.0 + tau * v)
    beta_p = v - c * c * np.asarray(v_hat_prev, dtype=float)
    return SelectionScore(beta_t, beta_p, beta_p - beta_t)


def score_users(csi: CsiState, drop: UserDrop, c: float, tau: int) -> SelectionScore:
    """Score every user from the previous block's obtained-channel variance."""
    if tau < 1:
        raise ContractError("scores need tau >= 1")
    return score_arrays(drop.variances, csi.v_hat, c, tau)


def _top_by_delta(delta, count):
    # Stable sort on -delta keeps the smallest index first among ties.
    order = np.argsort(-np.asarray(delta), kind="stable")
    return tuple(int(i) for i in order[:count])


def select_dus(score: SelectionScore, tau: int, n_users: int) -> SelectionOutcome:
    """Train the ``min(tau, K)`` users with the largest score gap.

    All users when ``K <= tau``. Output is in descending-gap order.
    """
    if score.n_users != n_users:
        raise ContractError("score length does not match K")
    if tau <= 0:
        return SelectionOutcome((), Policy.DUS)
    if n_users <= tau:
        return SelectionOutcome(_top_by_delta(score.delta, n_users), Policy.DUS)
    return SelectionOutcome(_top_by_delta(score.delta, tau), Policy.DUS)


def select_random(n_users: int, tau: int, stream: np.random.Generator) -> SelectionOutcome:
    """Uniform subset of size ``min(tau, K)`` drawn without replacement.

    The permutation is always drawn so the stream is consumed identically
    for every tau.
    """
    perm = stream.permutation(n_users)
    count = max(0, min(tau, n_users))
    return SelectionOutcome(tuple(sorted(int(i) for i in perm[:count])), Policy.RUS)


def select_closest(drop: UserDrop, tau: int) -> SelectionOutcome:
    count = max(0, min(tau, drop.n_users))
    order = np.argsort(drop.distances, kind="stable")
    return SelectionOutcome(tuple(int(i) for i in order[:count]), Policy.US)


def select_all(n_users: int, tau: int) -> SelectionOutcome:
    if tau < n_users:
        raise InfeasibleError(f"full training needs tau >= K ({tau} < {n_users})")
    return SelectionOutcome(tuple(range(n_users)), Policy.FT)


def training_objective(score: SelectionScore, trained) -> float:
    """Sum of training-error variances over ``trained`` plus prediction-error
    variances over everyone else (the total residual CSI error)."""
    mask = np.zeros(score.n_users, dtype=bool)
    mask[list(trained)] = True
    return float(np.sum(np.where(mask, score.beta_t, score.beta_p)))


def brute_force_oracle(score: SelectionScore, tau: int, n_users: int,
                       exact_size: bool = False) -> tuple[SelectionOutcome, float]:
    """Exhaustive minimizer of :func:`training_objective` over subsets of size
    ``<= tau`` (or exactly ``min(tau, K)`` with ``exact_size``).

    Among equal objectives the smallest set wins, then the lexicographically
    smallest index tuple.
    """
    if n_users > ORACLE_MAX_USERS:
        raise ContractError(f"brute force limited to K <= {ORACLE_MAX_USERS}")
    if score.n_users != n_users:
        raise ContractError("score length does not match K")
    cap = max(0, min(tau, n_users))
    sizes = [cap] if exact_size else range(cap + 1)
    best, best_val = (), None
    for size in sizes:
        for subset in itertools.combinations(range(n_users), size):
            val = training_objective(score, subset)
            if best_val is None or val < best_val:
                best, best_val = subset, val
    return SelectionOutcome(best, Policy.DUS), best_val
