"""First-order Gauss-Markov block-fading channel."""

from __future__ import annotations

import dataclasses
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError
from .geometry import UserDrop


@dataclasses.dataclass(frozen=True, eq=False)
class ChannelState:
    """True ``N x K`` channel of one block."""

    h: np.ndarray
    block_index: int = 0

    def __post_init__(self):
        h = np.array(self.h, dtype=np.complex128)
        if h.ndim != 2:
            raise ContractError("channel matrix must be 2-D")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def shape(self):
        return self.h.shape


def complex_normal(stream: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """CN(0, variance) draws: real and imaginary parts each N(0, variance/2).

    ``variance`` broadcasts against ``shape`` (e.g. per-column powers).
    """
    re = stream.standard_normal(shape)
    im = stream.standard_normal(shape)
    return np.sqrt(np.asarray(variance, dtype=float) / 2.0) * (re + 1j * im)


def init_channel(drop: UserDrop, n_antennas: int, stream: np.random.Generator) -> ChannelState:
    """Draw the block-0 channel from its stationary distribution."""
    h = complex_normal(stream, (n_antennas, drop.n_users), drop.variances[None, :])
    return ChannelState(h, 0)


def evolve_channel(prev: ChannelState, c: float, drop: UserDrop,
                   stream: np.random.Generator) -> ChannelState:
    """One Gauss-Markov step ``h <- c*h + z`` with ``z ~ CN(0, (1-c^2) v_k)``.

    The innovation is always drawn, even for ``c == 1``, so the stream
    position does not depend on ``c``.
    """
    if not 0.0 <= c <= 1.0:
        raise ContractError("temporal correlation must lie in [0, 1]")
    if prev.h.shape[1] != drop.n_users:
        raise ContractError("channel and drop disagree on the number of users")
    z = complex_normal(stream, prev.h.shape, (1.0 - c * c) * drop.variances[None, :])
    return ChannelState(c * prev.h + z, prev.block_index + 1)


def channel_trajectory(drop: UserDrop, n_antennas: int, n_blocks: int, c: float,
                       streams) -> list[ChannelState]:
    """Blocks ``0 .. n_blocks-1``; block ``b`` draws from ``streams("channel", b)``."""
    states = [init_channel(drop, n_antennas, streams("channel", 0))]
    for b in range(1, n_blocks):
        states.append(evolve_channel(states[-1], c, drop, streams("channel", b)))
    return states


_HEADER = struct.Struct("<QQQ")


def write_trajectory(path, states) -> None:
    """Dump ``J`` channel matrices: header ``(N, K, J)`` as little-endian uint64,
    then the ``J x N x K`` complex doubles in row-major little-endian order."""
    data = np.stack([s.h for s in states]).astype("<c16", copy=False)
    j, n, k = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(n, k, j))
        fh.write(np.ascontiguousarray(data).tobytes(order="C"))


def read_trajectory(path) -> np.ndarray:
    """Inverse of :func:`write_trajectory`; returns a ``(J, N, K)`` array."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ContractError("trajectory file too short")
    n, k, j = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != n * k * j:
        raise ContractError(f"trajectory body holds {body.size} values, header says {n * k * j}")
    return body.reshape(j, n, k).astype(np.complex128)
