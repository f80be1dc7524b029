import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qecml.circuit import build_circuit
from qecml.code import SurfaceCode

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def code3():
    return SurfaceCode(3)


@pytest.fixture(scope="session")
def code2():
    return SurfaceCode(2)


@pytest.fixture(scope="session")
def sn3(code3):
    return build_circuit(code3, "SN", 6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def report(capsys):
    """Record one acceptance line; it is echoed immediately and again in the session summary."""
    def emit(tag: str, ok: bool, detail: str) -> bool:
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
