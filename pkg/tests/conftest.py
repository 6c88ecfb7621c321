import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

REPO = Path(__file__).resolve().parents[1]
DATA = Path(os.environ.get("HWFOREST_DATA", REPO / "data"))


@pytest.fixture
def blobs():
    """Three well separated Gaussian classes in 4 dimensions."""
    rng = np.random.default_rng(7)
    centers = np.array([[0, 0, 0, 0], [3, 3, 0, 0], [0, 3, 3, 3]], dtype=float)
    y = np.repeat(np.arange(3), 40)
    X = centers[y] + rng.normal(scale=0.6, size=(y.size, 4))
    return X, y


@pytest.fixture(scope="session")
def mnist5k():
    from hwforest.dataset import load_idx
    ip = DATA / "mnist5k-images-idx3-ubyte"
    lp = DATA / "mnist5k-labels-idx1-ubyte"
    if not ip.exists():
        pytest.skip("MNIST sample not fetched (python3 scripts/fetch_data.py)")
    return load_idx(ip, lp)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; echoed live and in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
