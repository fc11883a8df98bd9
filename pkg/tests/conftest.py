from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def random_rotation(rng: np.random.Generator, k: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(k, k)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def default_grid_2d():
    from procrustes_leak.experiments import DEFAULT_N_VALUES, DEFAULT_P_VALUES, run_grid

    return run_grid(DEFAULT_N_VALUES, DEFAULT_P_VALUES, k=2, replicates=20, seed=0)


@pytest.fixture(scope="session")
def default_grid_3d():
    from procrustes_leak.experiments import DEFAULT_N_VALUES, DEFAULT_P_VALUES, run_grid

    return run_grid(DEFAULT_N_VALUES, DEFAULT_P_VALUES, k=3, replicates=20, seed=0)
