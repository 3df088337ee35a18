from fractions import Fraction

import pytest

from shockratio.dist import DiscreteSpec, ShiftedTwoSidedExponential, ShockDistribution


@pytest.fixture
def binomial():
    """p0 = 1/2 with a single atom at 1; c_n(2.5) = (n^2 + n + 2) / 2^(n+1)."""
    return DiscreteSpec(Fraction(1, 2), ((1, Fraction(1, 2)),))


@pytest.fixture
def binomial_dist(binomial):
    return ShockDistribution.of(binomial)


@pytest.fixture
def f1_dist():
    return ShockDistribution.of(ShiftedTwoSidedExponential())


def binomial_c(n: int) -> Fraction:
    return Fraction(n * n + n + 2, 2 ** (n + 1))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
