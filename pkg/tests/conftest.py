import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from seltrain.config import SystemConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return SystemConfig(n_antennas=16, n_users=6, block_length=20, n_blocks=5, rng_seed=7)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
