import numpy as np
import pytest

from iccl.scene import Building, Scene, build_circular_trajectory, generate_random_scene


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains networks or runs full Monte-Carlo sweeps")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def empty_scene():
    return Scene((100.0, 80.0), (), 0)


@pytest.fixture
def city():
    return generate_random_scene(seed=1)


@pytest.fixture
def small_trajectory():
    return build_circular_trajectory((40.0, 45.0, 40.0), 20.0, 24)


@pytest.fixture
def one_block():
    return Scene((100.0, 80.0), (Building((40.0, 30.0, 0.0), (50.0, 50.0, 20.0), 1.0),), 0)



@pytest.fixture(scope="session")
def record_criterion(request):
    """``record_criterion(n, passed, detail)`` prints and keeps one line per acceptance criterion."""
    store = request.config.__dict__.setdefault("_iccl_acceptance", {})

    def record(key, passed, detail):
        store[key] = (bool(passed), detail)
        print(f"criterion {key}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.__dict__.get("_iccl_acceptance")
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(store):
        passed, line = store[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'} - {line}")
