import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from circlebreak import c_hat, derivative_bound, ledger_for
from circlebreak.constants import nu_formula
from circlebreak.errors import ValidationError
from circlebreak.partition import DecayFit


def test_e():
    led = ledger_for(math.e)
    assert led.c_hat == math.e
    assert led.D == pytest.approx(57.328, abs=1e-3)
    assert led.Lambda == pytest.approx(0.98286, abs=1e-5)


def test_half_matches_two():
    assert c_hat(0.5) == 2.0
    assert derivative_bound(0.5) == derivative_bound(2.0) == pytest.approx(16.8)


@given(st.floats(1e-3, 1e3).filter(lambda c: c != 1))
def test_symmetry(c):
    assert derivative_bound(c) == pytest.approx(derivative_bound(1 / c), rel=1e-12)
    led = ledger_for(c)
    assert led.Lambda == pytest.approx(led.D / (1 + led.D))
    assert 0 < led.Lambda < 1


def test_nu_formula():
    assert nu_formula(0.8, 0.1) == pytest.approx(0.0462, abs=1e-4)
    led = ledger_for(2.0, DecayFit(0.6, 0.8, 1.0, 1.0, (8, 16)), 0.1)
    assert led.nu_formula == pytest.approx(0.0462, abs=1e-4)
    assert led.gamma1_hat == 0.6


def test_nu_needs_decay():
    assert ledger_for(2.0, DecayFit(0.6, 1.0, 1.0, 1.0, (8, 16)), 0.1).nu_formula is None
    assert ledger_for(2.0).to_dict()["r_hat"] is None


@pytest.mark.parametrize("bad", [1.0, 0.0, -2.0, float("inf")])
def test_rejects(bad):
    with pytest.raises(ValidationError):
        ledger_for(bad)
