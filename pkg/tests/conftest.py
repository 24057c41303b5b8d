from fractions import Fraction

import pytest

from shelby_audit.config import load_config, shipped_config
from shelby_audit.model import ProtocolParams


@pytest.fixture
def calibration() -> ProtocolParams:
    return load_config(shipped_config()).params


def small_params(**overrides) -> ProtocolParams:
    base = dict(
        n=5, r_s=30, r_a=Fraction(5, 10**7), c_s=5, c_a=Fraction(1, 10**7), c_read=2, p_s=2,
        p_a=Fraction(3, 10), sigma_s=100, sigma_a=10, epsilon=Fraction(1, 10), c_max=8, k=2, seed=11,
    )
    base.update(overrides)
    return ProtocolParams(**base)


# criterion number -> verdict line, filled by test_acceptance
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
