import functools
import time

import numpy as np
import pytest

from spintransfer import SystemParams

DESK = SystemParams(A=10e6, u_max=1e6, v_max=20e3)


@pytest.fixture
def desk():
    return DESK


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def with_ratio(ratio: float, v_max: float = 20e3) -> SystemParams:
    """Desk parameters with ``A / v_max = ratio``."""
    return SystemParams(A=ratio * v_max, u_max=1e6, v_max=v_max)


@functools.lru_cache(maxsize=None)
def timed_scan(target: str):
    """64 x 64 class scan with 8 restarts, computed once per session; returns (scan, seconds)."""
    from spintransfer.decomp import scan_transfer_classes
    t0 = time.perf_counter()
    scan = scan_transfer_classes(target, resolution=64, restarts=8, seed=0)
    return scan, time.perf_counter() - t0


@pytest.fixture(scope="session")
def iz_scan():
    return timed_scan("Iz")[0]


@pytest.fixture(scope="session")
def ix_scan():
    return timed_scan("Ix")[0]
