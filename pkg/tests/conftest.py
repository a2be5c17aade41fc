import random

import pytest

from secure_ntt.ntt import KYBER, NttParams

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def small():
    return NttParams.create(8, 17)


@pytest.fixture
def kyber():
    return KYBER


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
