import numpy as np
import pytest

from qskr.channel import ChannelState
from qskr.rates import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_channel(rng, k, low=0.05, high=0.95):
    return ChannelState.from_transmittance(rng.uniform(low, high, k))


def random_config(rng, k, v_max_bs=None):
    return SystemConfig(k_users=k, w=rng.uniform(0.01, 0.2), delta_det_sq=0.16,
                        v_max_bs=v_max_bs if v_max_bs is not None else rng.uniform(50, 5000))


# acceptance-criterion verdicts, printed once at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
