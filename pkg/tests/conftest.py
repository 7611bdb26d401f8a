import numpy as np
import pytest

from univcode.channels import dmc_theta, make_dmc_family, make_gaussian_fading, make_mimo_gaussian


@pytest.fixture
def bsc_family():
    return make_dmc_family(2, 1)


@pytest.fixture
def bsc01(bsc_family):
    return bsc_family.point(dmc_theta([[0.9, 0.1], [0.1, 0.9]]))


def random_point(fam, rng, margin=0.1):
    """Random point in the inner part of a builtin family's box (every box point is admissible)."""
    width = fam.upper - fam.lower
    return fam.point(fam.lower + (margin + (1 - 2 * margin) * rng.random(fam.k)) * width)


def builtin_families():
    return [
        make_dmc_family(2, 1),
        make_dmc_family(3, 2),
        make_gaussian_fading([-1.0, 1.0]),
        make_mimo_gaussian([[1.0, 0.0], [0.0, 1.0]], 2),
    ]


# PASS/FAIL lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
