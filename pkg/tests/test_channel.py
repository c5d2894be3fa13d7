import numpy as np
import pytest

from seltrain.channel import (ChannelState, channel_trajectory, evolve_channel, init_channel,
                              read_trajectory, write_trajectory)
from seltrain.errors import ContractError
from seltrain.geometry import UserDrop
from seltrain.streams import EpisodeStreams, derive_stream


def test_zero_variance_gives_zero_channel():
    drop = UserDrop.from_variances([0.0, 0.0, 0.0])
    ch = init_channel(drop, 4, derive_stream(0, "channel"))
    assert ch.h.shape == (4, 3) and ch.block_index == 0
    assert not np.any(ch.h)


def test_init_variance_monte_carlo():
    drop = UserDrop.from_variances([1.0])
    h = init_channel(drop, 100_000, derive_stream(1, "channel")).h[:, 0]
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, rel=0.02)
    # circular symmetry: real and imaginary parts each carry half the power
    assert np.var(h.real) == pytest.approx(0.5, rel=0.03)
    assert abs(np.mean(h * h)) < 0.02


def test_init_is_deterministic():
    drop = UserDrop.from_variances([1.0, 4.0])
    a = init_channel(drop, 8, derive_stream(3, "channel", 1, 2, 0))
    b = init_channel(drop, 8, derive_stream(3, "channel", 1, 2, 0))
    np.testing.assert_array_equal(a.h, b.h)


def test_static_channel_when_c_is_one():
    drop = UserDrop.from_variances([1.0, 0.25])
    h0 = init_channel(drop, 6, derive_stream(0, "channel"))
    h1 = evolve_channel(h0, 1.0, drop, derive_stream(0, "channel", block=1))
    np.testing.assert_array_equal(h1.h, h0.h)
    assert h1.block_index == 1


def test_memoryless_when_c_is_zero():
    drop = UserDrop.from_variances([2.0])
    n = 100_000
    h0 = init_channel(drop, n, derive_stream(0, "channel"))
    h1 = evolve_channel(h0, 0.0, drop, derive_stream(0, "channel", block=1))
    x, y = h0.h[:, 0], h1.h[:, 0]
    assert np.mean(np.abs(y) ** 2) == pytest.approx(2.0, rel=0.02)
    corr = abs(np.mean(y * x.conj())) / 2.0
    assert corr < 0.01


def test_lag_one_autocorrelation():
    c = 0.9881
    drop = UserDrop.from_variances([1.0])
    h0 = init_channel(drop, 100_000, derive_stream(4, "channel"))
    h1 = evolve_channel(h0, c, drop, derive_stream(4, "channel", block=1))
    x, y = h0.h[:, 0], h1.h[:, 0]
    rho = np.real(np.vdot(x, y)) / np.sqrt(np.vdot(x, x).real * np.vdot(y, y).real)
    assert abs(rho - c) < 0.005


@pytest.mark.parametrize("c", [0.3, 0.9881])
def test_stationarity_and_two_block_covariance(c):
    v = np.array([0.5, 3.0])
    drop = UserDrop.from_variances(v)
    n_real = 20_000
    states = channel_trajectory(drop, n_real, 6, c, EpisodeStreams(11))
    for s in states:
        power = np.mean(np.abs(s.h) ** 2, axis=0)
        se = v / np.sqrt(n_real)  # |h|^2 is exponential: std = mean
        assert np.all(np.abs(power - v) < 3 * se)
    cross = np.mean(states[-1].h * states[-2].h.conj(), axis=0).real
    se = v / np.sqrt(n_real)
    assert np.all(np.abs(cross - c * v) < 3 * se)


def test_evolve_shape_and_index():
    drop = UserDrop.from_variances([1.0, 1.0, 1.0])
    states = channel_trajectory(drop, 5, 4, 0.9, EpisodeStreams(0))
    assert [s.block_index for s in states] == [0, 1, 2, 3]
    assert all(s.h.shape == (5, 3) for s in states)


def test_evolve_rejects_bad_inputs():
    drop = UserDrop.from_variances([1.0])
    ch = init_channel(drop, 2, derive_stream(0, "channel"))
    with pytest.raises(ContractError):
        evolve_channel(ch, 1.1, drop, derive_stream(0, "channel"))
    with pytest.raises(ContractError):
        evolve_channel(ch, 0.5, UserDrop.from_variances([1.0, 1.0]), derive_stream(0, "channel"))


def test_channel_state_is_immutable():
    ch = ChannelState(np.ones((2, 2)))
    with pytest.raises(ValueError):
        ch.h[0, 0] = 0


def test_trajectory_dump_roundtrip(tmp_path):
    drop = UserDrop.from_variances([1.0, 0.5, 2.0])
    states = channel_trajectory(drop, 4, 5, 0.9, EpisodeStreams(2))
    path = tmp_path / "traj.bin"
    write_trajectory(path, states)
    raw = path.read_bytes()
    assert np.frombuffer(raw[:24], dtype="<u8").tolist() == [4, 3, 5]
    assert len(raw) == 24 + 5 * 4 * 3 * 16
    # row-major: second complex value is block 0, antenna 0, user 1
    first = np.frombuffer(raw[24:56], dtype="<c16")
    assert first[1] == states[0].h[0, 1]
    back = read_trajectory(path)
    np.testing.assert_array_equal(back, np.stack([s.h for s in states]))


def test_trajectory_dump_rejects_truncated(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(np.array([2, 2, 2], dtype="<u8").tobytes() + b"\0" * 16)
    with pytest.raises(ContractError):
        read_trajectory(path)
