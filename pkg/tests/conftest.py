import functools
import math

import pytest

from circlebreak import RotationTarget, make_break_map, tune_delta_report

E = math.e


@functools.lru_cache(maxsize=None)
def tuned_delta(c, eps, target="golden", depth=18):
    return tune_delta_report(c, eps, RotationTarget.parse(target), depth).delta


def tuned_map(c, eps, target="golden", depth=18, precision_digits=16):
    return make_break_map(c, eps, tuned_delta(c, eps, target, depth), precision_digits=precision_digits)


@pytest.fixture(scope="session")
def golden_e1():
    """(c = e, eps = 1) tuned to the golden mean."""
    return tuned_map(E, 1.0)


@pytest.fixture(scope="session")
def golden_2_half():
    return tuned_map(2.0, 0.5)
