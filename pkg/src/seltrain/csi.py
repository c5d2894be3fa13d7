"""CSI acquisition: orthogonal pilots, matched filtering, scalar MMSE
estimation and linear prediction, with exact variance bookkeeping.

Per-user variances are scalars because every antenna sees the same
per-entry channel power.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

from .channel import ChannelState, complex_normal
from .errors import ContractError
from .geometry import UserDrop

ORTHO_TOL = 1e-9


@dataclasses.dataclass(frozen=True, eq=False)
class PilotMatrix:
    """``|S| x tau`` pilot rows with ``rows @ rows^H == tau * I``."""

    rows: np.ndarray
    tau: int

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class TrainingObservation:
    y: np.ndarray  # N x tau


@dataclasses.dataclass(frozen=True, eq=False)
class CsiState:
    """Obtained channel and tracked variances for every user.

    ``trained[k]`` is True if user k's CSI came from training in
    ``block_index`` and False if it was predicted.
    """

    h_hat: np.ndarray
    v_hat: np.ndarray
    v_tilde: np.ndarray
    trained: np.ndarray
    block_index: int

    def __post_init__(self):
        for name in ("h_hat", "v_hat", "v_tilde", "trained"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_users(self) -> int:
        return self.v_hat.shape[0]

    @classmethod
    def empty(cls, drop: UserDrop, n_antennas: int) -> "CsiState":
        """No knowledge at all: zero estimate, error variance equal to ``v_k``.

        Its block index is -1, so the first :func:`advance_csi` produces block 0.
        """
        k = drop.n_users
        return cls(
            h_hat=np.zeros((n_antennas, k), dtype=np.complex128),
            v_hat=np.zeros(k),
            v_tilde=np.array(drop.variances, dtype=float),
            trained=np.zeros(k, dtype=bool),
            block_index=-1,
        )

    @property
    def last_source(self) -> list[str]:
        return ["trained" if t else "predicted" for t in self.trained]


@functools.lru_cache(maxsize=4096)
def build_pilot_matrix(n_selected: int, tau: int) -> PilotMatrix:
    """First ``n_selected`` rows of the ``tau``-point DFT matrix (unit modulus).

    ``n_selected == 0`` gives an empty pilot set. Results are cached and
    read-only.
    """
    if tau < 0 or n_selected < 0:
        raise ContractError("n_selected and tau must be non-negative")
    if n_selected > tau:
        raise ContractError(f"cannot fit {n_selected} orthogonal pilots into length {tau}")
    if n_selected == 0:
        return PilotMatrix(np.zeros((0, tau), dtype=np.complex128), tau)
    idx = np.arange(tau)
    rows = np.exp(-2j * np.pi * np.outer(np.arange(n_selected), idx) / tau)
    # Exact values for the real-valued cases so that small tau tests are bit-clean.
    rows = np.where(np.abs(rows.imag) < 1e-15, rows.real + 0j, rows)
    rows = np.where(np.abs(rows.real) < 1e-15, 1j * rows.imag, rows)
    gram = rows @ rows.conj().T
    if np.max(np.abs(gram - tau * np.eye(n_selected))) > ORTHO_TOL * tau:
        raise ContractError("pilot rows failed the orthogonality check")
    rows.setflags(write=False)
    return PilotMatrix(rows, tau)


def simulate_training(channel: ChannelState, selected, pilots: PilotMatrix,
                      stream: np.random.Generator | None,
                      noise: np.ndarray | None = None) -> TrainingObservation:
    """Received pilot block ``Y = H_S X_S + N`` with unit-variance noise.

    Unselected users stay silent. The noise is drawn from ``stream`` unless a
    pre-drawn ``noise`` matrix is passed; with neither the observation is
    noiseless.
    """
    selected = np.asarray(selected, dtype=int).reshape(-1)
    if selected.size != pilots.n_rows:
        raise ContractError(f"{selected.size} selected users but {pilots.n_rows} pilot rows")
    n = channel.h.shape[0]
    y = channel.h[:, selected] @ pilots.rows
    if noise is not None:
        if noise.shape != (n, pilots.tau):
            raise ContractError("noise matrix has the wrong shape")
        y = y + noise
    elif stream is not None:
        y = y + complex_normal(stream, (n, pilots.tau))
    return TrainingObservation(y)


def matched_filter(obs: TrainingObservation, pilot_row, tau: int) -> np.ndarray:
    """``(1/sqrt(tau)) Y x^H``: equals ``sqrt(tau) h_k`` plus unit-variance noise."""
    pilot_row = np.asarray(pilot_row)
    if pilot_row.shape[-1] != tau or obs.y.shape[1] != tau:
        raise ContractError("pilot length does not match the observation")
    return obs.y @ pilot_row.conj().T / np.sqrt(tau)


def conserve(v, v_hat):
    """Split ``v`` into ``(v_hat, v_tilde)`` whose floating-point sum is exactly ``v``.

    One extra subtraction absorbs the rounding of ``v - v_hat``.
    """
    v_tilde = v - v_hat
    return v - v_tilde, v_tilde


def mmse_estimate(r, v, tau):
    """Scalar MMSE estimate of ``h`` from ``r = sqrt(tau) h + n``.

    Returns ``(h_hat, v_hat, v_tilde)``. ``v`` may be a per-column array when
    ``r`` holds several users side by side.
    """
    v = np.asarray(v, dtype=float)
    coef = np.sqrt(tau) * v / (tau * v + 1.0)
    v_hat, v_tilde = conserve(v, v - v / (1.0 + tau * v))
    return coef * np.asarray(r), v_hat, v_tilde


def predict(h_hat_prev, v_hat_prev, v, c):
    """Linear prediction ``c * h_prev``; returns ``(h_hat, v_hat, v_tilde)``."""
    v_hat, v_tilde = conserve(np.asarray(v, dtype=float),
                              c * c * np.asarray(v_hat_prev, dtype=float))
    return c * np.asarray(h_hat_prev), v_hat, v_tilde


def advance_csi(prev: CsiState, selected, obs: TrainingObservation | None,
                pilots: PilotMatrix | None, drop: UserDrop, c: float, tau: int) -> CsiState:
    """Next block's CSI: train the users in ``selected``, predict everyone else.

    ``selected[j]`` uses pilot row ``j``.
    """
    selected = np.asarray(selected, dtype=int).reshape(-1)
    k = prev.n_users
    if selected.size:
        if pilots is None or obs is None or pilots.n_rows < selected.size:
            raise ContractError("every selected user needs a pilot row and an observation")
        if np.unique(selected).size != selected.size or selected.min() < 0 or selected.max() >= k:
            raise ContractError("selected users must be unique indices in [0, K)")

    h_hat, v_hat, v_tilde = predict(prev.h_hat, prev.v_hat, drop.variances, c)
    h_hat = np.array(h_hat, dtype=np.complex128)
    trained = np.zeros(k, dtype=bool)
    if selected.size:
        r = matched_filter(obs, pilots.rows[: selected.size], tau)
        v_sel = drop.variances[selected]
        h_sel, vh_sel, vt_sel = mmse_estimate(r, v_sel, tau)
        h_hat[:, selected] = h_sel
        v_hat[selected] = vh_sel
        v_tilde[selected] = vt_sel
        trained[selected] = True
    return CsiState(h_hat, v_hat, v_tilde, trained, prev.block_index + 1)


def train_block(prev: CsiState, channel: ChannelState, selected, drop: UserDrop,
                c: float, tau: int, stream: np.random.Generator | None,
                noise: np.ndarray | None = None) -> CsiState:
    """Pilot construction, training simulation and CSI update for one block."""
    selected = np.asarray(selected, dtype=int).reshape(-1)
    if selected.size == 0:
        return advance_csi(prev, selected, None, None, drop, c, tau)
    pilots = build_pilot_matrix(selected.size, tau)
    obs = simulate_training(channel, selected, pilots, stream, noise)
    return advance_csi(prev, selected, obs, pilots, drop, c, tau)
