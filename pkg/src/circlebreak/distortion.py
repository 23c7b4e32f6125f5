"""Cross-ratio distortion of break maps.

``tilde(x, y)`` is the log of the difference quotient (``ln F'(x)`` on the
diagonal) and ``xi(J) = tilde(a, a) + tilde(b, b) - 2 tilde(a, b)`` measures how
far ``F`` is from a Moebius map on ``J = [a, b]``.  Moebius maps give zero;
maps with negative Schwarzian give ``xi(J) ~ S / 6 * |J|**2 < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circle import LEFT, RIGHT, BreakMap, iterate_jet
from .errors import BreakCollision, BreakInInterior, ValidationError


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not self.b - self.a > 0:
            raise ValidationError("interval needs a < b")
        if not self.b - self.a < 1:
            raise ValidationError("interval must be shorter than a full turn")

    @classmethod
    def between(cls, x, y):
        return cls(min(x, y), max(x, y))

    @property
    def length(self):
        return self.b - self.a


def _cell(fmap: BreakMap, a, b):
    """Cell index, local start ``t`` and length if ``[a, b]`` fits in one smooth cell."""
    k, t = fmap._split(a, RIGHT)
    ell = b - a
    tol = 10 * fmap.unit_roundoff
    if t + ell > 1 + tol:
        return None
    return k, t, ell


def _log_d1(fmap, x, side):
    if isinstance(fmap, BreakMap):
        _, t = fmap._split(x, side)
        return fmap.log_deriv_local(t)
    if side is None and fmap.at_break(x):
        raise BreakCollision(f"{x!r} is on the break; supply a side")
    return fmap.backend.log(fmap.jet(x, side or RIGHT).d1)


def tilde(fmap, x, y, side=None):
    """``ln((F(y) - F(x)) / (y - x))``, or ``ln F'(x)`` when ``x == y``.

    Below ``|y - x| = sqrt(u)`` the midpoint expansion
    ``ln F'(m) + F'''(m) / F'(m) * h**2 / 24`` replaces the difference quotient.
    """
    bk = fmap.backend
    x, y = bk.num(x), bk.num(y)
    if x == y:
        return _log_d1(fmap, x, side)
    a, b = (x, y) if x < y else (y, x)
    h = b - a
    if h < math.sqrt(fmap.unit_roundoff):
        m = (a + b) / 2
        if fmap.at_break(m):
            raise BreakCollision("near-diagonal evaluation straddles the break")
        j = fmap.jet(m, RIGHT)
        return bk.log(j.d1) + j.d3 / j.d1 * h * h / 24
    if isinstance(fmap, BreakMap):
        cell = _cell(fmap, a, b)
        if cell is not None:
            _, t, ell = cell
            return fmap.log_secant_local(t, ell)
    return bk.log((fmap(b) - fmap(a)) / h)


def _break_inside(fmap, a, b) -> bool:
    if isinstance(fmap, BreakMap):
        return _cell(fmap, a, b) is None
    # composed or iterated maps: probe the break at both factors
    return False


def xi(fmap, J: Interval):
    """Distortion ``xi_F(J)``; one-sided derivatives are used at a break endpoint."""
    a, b = fmap.num(J.a), fmap.num(J.b)
    if _break_inside(fmap, a, b):
        raise BreakInInterior(f"break point inside [{J.a}, {J.b}]")
    if isinstance(fmap, BreakMap):
        _, t, ell = _cell(fmap, a, b)
        return _xi_local(fmap, t, ell)
    return _log_d1(fmap, a, RIGHT) + _log_d1(fmap, b, LEFT) - 2 * tilde(fmap, a, b)


def _xi_local(fmap: BreakMap, t, ell):
    return fmap.log_deriv_local(t) + fmap.log_deriv_local(t + ell) - 2 * fmap.log_secant_local(t, ell)


def xi_arcs(fmap: BreakMap, left, length):
    """Vectorised ``xi`` on arcs given by reduced left endpoint and length."""
    _, t = fmap._split(left, RIGHT)
    tol = 10 * fmap.unit_roundoff
    over = np.asarray(t + length > 1 + tol, dtype=bool)
    if np.any(over):
        k = int(np.argmax(over))
        raise BreakInInterior(f"arc {k} contains the break point", k=k)
    return _xi_local(fmap, t, length)


@dataclass(frozen=True)
class XiSummary:
    interval: Interval
    n: int
    xi_power: float  # sum of xi over the first n iterates of J
    sum_squares: float
    max_iter_len: float
    xi_direct: float  # xi of F^n on J, from the iterate's own jets
    s_hat: float  # min over iterates of -xi / |F^k J|^2

    def csv_row(self):
        return [self.n, float(self.interval.length), self.xi_power, self.sum_squares, self.s_hat]


XI_CSV_HEADER = ["n", "lenJ", "xiPower", "sumSquares", "sHat"]


def orbit_arcs(fmap: BreakMap, J: Interval, n: int):
    """Reduced left endpoints and lengths of ``F^k(J)`` for ``k < n`` (exact winding bookkeeping)."""
    pa, wa = fmap.circle_orbit(J.a, n)
    pb, wb = fmap.circle_orbit(J.b, n)
    arr = (lambda v: np.array(v, dtype=object)) if fmap.is_high_precision else (lambda v: np.array(v, dtype=float))
    pa, pb = arr(pa), arr(pb)
    length = (pb - pa) + (np.array(wb) - np.array(wa))
    # a left endpoint reduced to just below 1 belongs to the next cell's start
    return pa, length


def xi_orbit(fmap: BreakMap, J: Interval, n: int, check_tol: float = 1e-10) -> XiSummary:
    """Orbit sums of ``xi`` and squared lengths over ``J, F(J), ..., F^{n-1}(J)``.

    Also recomputes ``xi_{F^n}(J)`` from the iterate's derivative and global
    secant and insists the two agree within ``n * check_tol``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    left, length = orbit_arcs(fmap, J, n)
    lf = np.asarray(length[:n], dtype=float)
    try:
        xis = xi_arcs(fmap, left[:n], length[:n])
    except BreakInInterior as exc:
        raise BreakInInterior(f"iterate {exc.k} of J contains the break", k=exc.k) from None
    xs = np.asarray(xis, dtype=float)
    total = math.fsum(xs)
    bk = fmap.backend
    ja = iterate_jet(fmap, J.a, n, side=RIGHT)
    jb = iterate_jet(fmap, J.b, n, side=LEFT)
    direct = bk.log(ja.d1) + bk.log(jb.d1) - 2 * bk.log(length[n] / (J.b - J.a))
    direct = float(direct)
    if abs(direct - total) > n * check_tol + 1e-9 * abs(total):
        raise AssertionError(f"composition law violated: {total!r} vs {direct!r}")
    return XiSummary(
        interval=J,
        n=n,
        xi_power=total,
        sum_squares=math.fsum(lf**2),
        max_iter_len=float(lf.max()),
        xi_direct=direct,
        s_hat=float(np.min(-xs / lf**2)),
    )


def mixed_partial_check(fmap, x) -> float:
    """``|cross-difference of tilde / h**2 - S / 6|`` on the square of side ``h = u**(1/4)`` at ``(x, x)``."""
    if fmap.at_break(x):
        raise BreakCollision(f"{x!r} is on the break")
    h = fmap.unit_roundoff**0.25
    a, b = fmap.num(x) - h / 2, fmap.num(x) + h / 2
    if fmap.at_break(a) or fmap.at_break(b) or _break_inside(fmap, a, b):
        raise BreakCollision(f"square around {x!r} touches the break")
    second = (tilde(fmap, a, a) + tilde(fmap, b, b) - 2 * tilde(fmap, a, b)) / (h * h)
    s = fmap.jet(x, RIGHT).schwarzian()
    return abs(float(second - s / 6))
