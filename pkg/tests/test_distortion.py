import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circlebreak import Interval, compose, dynamical_partition, make_break_map, mixed_partial_check, tilde, xi, xi_orbit
from circlebreak.circle import Jet3, backend_for
from circlebreak.errors import BreakInInterior, ValidationError
from circlebreak.rotation import ContinuedFraction

from conftest import E, tuned_map

GOLD_CF = ContinuedFraction.periodic((1,), 40)


def xi_closed_form(eps, ell):
    """xi of the exponential factor on any interval of length ell (the Moebius factor drops out)."""
    if eps == 0:
        return 0.0
    z = eps * ell
    return z - 2 * math.log(math.expm1(z) / z)


class Doubling:
    """The linear lift fragment x -> 2x."""

    backend = backend_for(16)
    unit_roundoff = 2.0**-53

    def num(self, x):
        return float(x)

    def __call__(self, x):
        return 2.0 * x

    def jet(self, x, side=None):
        return Jet3(2.0 * x, 2.0, 0.0, 0.0)

    def at_break(self, x):
        return False


def test_tilde_rigid_is_zero():
    f = make_break_map(1.0, 0.0, 0.3)
    for x, y in [(0.1, 0.5), (0.2, 0.2), (0.7, 0.7000001)]:
        assert tilde(f, x, y) == 0.0


def test_tilde_linear():
    g = Doubling()
    assert tilde(g, 0.1, 0.4) == pytest.approx(math.log(2), abs=1e-15)
    assert tilde(g, 0.3, 0.3) == pytest.approx(math.log(2), abs=1e-15)


def test_tilde_diagonal_is_log_derivative():
    f = make_break_map(E, 1.0, 0.4)
    assert tilde(f, 0.2, 0.2) == pytest.approx(math.log(f.jet(0.2).d1), abs=1e-12)


@given(st.floats(0.05, 0.9), st.floats(1e-12, 0.05))
def test_tilde_symmetric_and_continuous(x, h):
    f = make_break_map(2.0, 0.5, 0.1)
    assert tilde(f, x, x + h) == tilde(f, x + h, x)
    # close to the diagonal the secant is the derivative at the midpoint
    m = x + h / 2
    assert tilde(f, x, x + h) == pytest.approx(math.log(f.jet(m).d1), abs=h * h + 1e-14)


@given(st.sampled_from([0.5, 2.0, E]), st.sampled_from([0.5, 1.0, 2.0, -1.0]),
       st.floats(0.0, 0.98), st.floats(1e-7, 0.5))
def test_xi_depends_only_on_length(c, eps, a, ell):
    if a + ell >= 1:
        return
    f = make_break_map(c, eps, 0.37)
    assert xi(f, Interval(a, a + ell)) == pytest.approx(xi_closed_form(eps, ell), rel=1e-9, abs=1e-14)


def test_xi_absolute_error_floor():
    f = make_break_map(E, 1.0, 0.6)
    for t in (1e-3, 1e-4, 1e-5):
        exact = -t * t / 12 * (1 - t * t / 120)
        assert abs(xi(f, Interval(0.25, 0.25 + t)) - exact) <= 1e-15


@given(st.sampled_from([0.5, 2.0, E, 5.0]), st.floats(0.0, 0.9), st.floats(1e-6, 0.1))
def test_xi_of_moebius_piece_vanishes(c, a, ell):
    f = make_break_map(c, 0.0, 0.2)
    assert abs(xi(f, Interval(a, a + ell))) <= 1e-11


def xi_by_quadrature(c, eps, a, b, nodes=(24, 25)):
    """Double integral of d^2/dsdt ln((F(t) - F(s)) / (t - s)) over [a, b]^2.

    Interleaved Gauss-Legendre grids keep the (removable) diagonal away from the nodes.
    """
    with mpmath.workdps(50):
        e, K = mpmath.mpf(eps), mpmath.expm1(eps)
        s_ = mpmath.sqrt(c * mpmath.exp(-e))

        def F(t):
            y = mpmath.expm1(e * t) / K
            return y / (s_ + (1 - s_) * y)

        def dF(t):
            y = mpmath.expm1(e * t) / K
            return s_ / (s_ + (1 - s_) * y) ** 2 * e * mpmath.exp(e * t) / K

        a, b = mpmath.mpf(a), mpmath.mpf(b)
        half = (b - a) / 2
        grids = []
        for m in nodes:
            x, w = np.polynomial.legendre.leggauss(m)
            grids.append([(a + half * (1 + mpmath.mpf(xi_)), half * mpmath.mpf(wi)) for xi_, wi in zip(x, w)])
        total = mpmath.mpf(0)
        for s, ws in grids[0]:
            Fs, dFs = F(s), dF(s)
            for t, wt in grids[1]:
                total += ws * wt * (dFs * dF(t) / (F(t) - Fs) ** 2 - 1 / (t - s) ** 2)
        return float(total)


@pytest.mark.parametrize("t", [1e-2, 1e-3, 1e-4])
def test_xi_against_quadrature(t):
    f = make_break_map(E, 1.0, 0.6)
    J = Interval(0.3, 0.3 + t)
    ours = xi(f, J)
    quad = xi_by_quadrature(E, 1.0, J.a, J.b)
    # xi cancels O(1) logarithms, so its error floor is absolute (a few u)
    assert abs(ours - quad) <= 1e-8 * abs(quad) + 1e-15
    assert ours / (-t * t / 12) == pytest.approx(1.0, abs=t)


def test_xi_ratio_tends_to_one():
    # the next term of the expansion is z^4 / 1440, a relative correction z^2 / 120
    f = make_break_map(E, 1.0, 0.6)
    for t in (1e-1, 1e-2, 1e-3, 1e-4):
        err = abs(xi(f, Interval(0.3, 0.3 + t)) / (-t * t / 12) - 1)
        assert err <= t * t / 120 * 1.01 + 1e-15 / (t * t / 12)


def test_xi_rejects_break_inside():
    f = make_break_map(2.0, 1.0, 0.3)
    with pytest.raises(BreakInInterior):
        xi(f, Interval(0.9, 1.1))
    with pytest.raises(ValidationError):
        Interval(0.5, 0.5)
    # a break at an endpoint is fine (one-sided derivative)
    assert xi(f, Interval(0.0, 0.25)) == pytest.approx(xi_closed_form(1.0, 0.25), rel=1e-12)


def test_composition_law_1000_cases():
    rng = np.random.default_rng(11)
    worst, done = 0.0, 0
    while done < 1000:
        f = make_break_map(rng.uniform(0.3, 3), rng.uniform(-2, 2), rng.uniform(0, 1))
        g = make_break_map(rng.uniform(0.3, 3), rng.uniform(-2, 2), rng.uniform(0, 1))
        a = rng.uniform(0, 0.95)
        J = Interval(a, a + rng.uniform(1e-3, min(0.3, 0.999 - a)))
        fa, fb = f(J.a), f(J.b)
        if math.floor(fa) != math.floor(fb) and fb != math.floor(fb):
            continue  # f(J) would contain the break of g
        total = xi(compose(g, f), J)
        parts = xi(f, J) + xi(g, Interval(fa, fb))
        worst = max(worst, abs(total - parts))
        done += 1
    assert worst < 1e-10


def test_xi_orbit_rigid():
    f = make_break_map(1.0, 0.0, 0.6180339887498949)
    s = xi_orbit(f, Interval(0.1, 0.12), 3)
    assert s.xi_power == 0.0
    assert s.sum_squares == pytest.approx(3 * 0.02**2, rel=1e-9)


def test_xi_orbit_moebius_pieces():
    f = tuned_map(2.0, 0.0)
    part = dynamical_partition(f, GOLD_CF, 10)
    # Delta_9^0 and its first q_10 images only touch the break orbit at endpoints
    J = Interval(part.old_left[0], part.old_left[0] + part.old_len[0])
    s = xi_orbit(f, J, GOLD_CF.q(10))
    assert abs(s.xi_power) <= GOLD_CF.q(10) * 1e-10


def test_xi_orbit_negative_schwarzian(golden_e1):
    f = golden_e1
    n = 11
    qn = GOLD_CF.q(n)
    part = dynamical_partition(f, GOLD_CF, n)
    k = int(np.argmin(part.old_lengths))
    left, length = float(part.old_left[k]), float(part.old_len[k])
    # Delta_{n-1}^k runs from f^k(p) towards f^{k + q_{n-1}}(p); it splits at f^{k - q_n}(p)
    start = left if (n - 1) % 2 == 0 else left + length
    pts, _ = f.circle_orbit(start, qn, backward=True)
    split = pts[qn]
    if split < left:
        split += 1
    halves = [Interval(left, split), Interval(split, left + length)]
    J = min(halves, key=lambda h: h.length)
    s = xi_orbit(f, J, GOLD_CF.q(10))
    assert s.s_hat > 0
    assert s.xi_power <= -s.s_hat * s.sum_squares * (1 - 1e-12)
    # each summand is close to -eps^2/12 |f^k J|^2 at these scales
    assert s.s_hat == pytest.approx(1 / 12, rel=1e-2)


def test_xi_orbit_reports_break_inside():
    f = make_break_map(2.0, 1.0, 0.3)
    with pytest.raises(BreakInInterior):
        xi_orbit(f, Interval(0.5, 0.9), 5)


@pytest.mark.parametrize("c,eps", [(E, 1.0), (2.0, 0.5)])
def test_mixed_partial_identity(c, eps):
    f = make_break_map(c, eps, 0.3)
    xs = np.random.default_rng(3).uniform(0.01, 0.99, 100)
    scale = eps * eps / 12  # |S / 6|
    assert max(mixed_partial_check(f, x) for x in xs) / scale <= 1e-4


def test_mixed_partial_examples():
    assert mixed_partial_check(make_break_map(E, 1.0, 0.3), 0.4) <= 1.5e-4
    assert mixed_partial_check(make_break_map(1.0, 0.0, 0.3), 0.4) <= 1e-10
    assert mixed_partial_check(make_break_map(3.0, 0.0, 0.3), 0.6) <= 1e-8
