import os

import numpy as np
import pytest

from qlrs.channel import ChannelInstance, SystemConfig, make_instance
from qlrs.streams import aux_rng


def pytest_collection_modifyitems(config, items):
    if os.environ.get("QLRS_EXTENDED") == "1":
        return
    skip = pytest.mark.skip(reason="extended profile; set QLRS_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def random_instance(K, N, snr_db=11.0, seed=0, amplitudes=None):
    cfg = SystemConfig(K=K, N=N, snr_db=snr_db, sequence_mode="long",
                       amplitudes=amplitudes, master_seed=seed)
    return make_instance(cfg, aux_rng(seed, 99, K, N))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_channel():
    return random_instance(8, 10, seed=1)


@pytest.fixture
def orthogonal_channel():
    return ChannelInstance.orthogonal(6, sigma=0.0)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
