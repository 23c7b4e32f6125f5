"""Circle homeomorphism lifts with a single break point.

The map family is ``F = R o fbar`` on one period, extended by ``F(x + 1) = F(x) + 1``:

* ``fbar(t) = expm1(eps t) / expm1(eps)`` (the identity when ``eps == 0``) has
  constant Schwarzian ``-eps**2 / 2``;
* ``R(y) = delta + y / (sigma + (1 - sigma) y)`` is the Moebius factor with
  ``R(1) = R(0) + 1`` and ``R'(1) / R'(0) = sigma**2 = c exp(-eps)``.

The one-sided derivatives at the break then satisfy ``F'(p - 0) / F'(p + 0) = c``.

All derivatives are propagated as order-3 jets (exact chain rule), never by
finite differences.  Scalars and numpy arrays are accepted in binary64 mode;
the high-precision mode (``precision_digits > 16``) runs on a private mpmath
context and is meant for scalar orbit work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import mpmath
from mpmath.ctx_mp_python import _mpf as _mpf_base  # shared by every mpmath context
import numpy as np

from .errors import BreakCollision, ValidationError

FLOAT_DIGITS = 16
LEFT, RIGHT = "left", "right"


class Jet3(NamedTuple):
    """Value and first three derivatives of a map at a point."""

    value: object
    d1: object
    d2: object
    d3: object

    def schwarzian(self):
        r = self.d2 / self.d1
        return self.d3 / self.d1 - 1.5 * r * r

    def after(self, inner: "Jet3") -> "Jet3":
        """Jet of ``self o inner``; ``self`` must be evaluated at ``inner.value``."""
        g1, g2, g3 = self.d1, self.d2, self.d3
        h1, h2, h3 = inner.d1, inner.d2, inner.d3
        return Jet3(
            self.value,
            g1 * h1,
            g2 * h1 * h1 + g1 * h2,
            g3 * h1 * h1 * h1 + 3 * g2 * h1 * h2 + g1 * h3,
        )


def identity_jet(x, one=1.0) -> Jet3:
    zero = one - one
    return Jet3(x, one + 0 * x, zero * x, zero * x)


class _FloatBackend:
    digits = FLOAT_DIGITS
    unit_roundoff = 2.0**-53
    exp = staticmethod(np.exp)
    expm1 = staticmethod(np.expm1)
    log = staticmethod(np.log)
    log1p = staticmethod(np.log1p)
    floor = staticmethod(np.floor)
    sqrt = staticmethod(np.sqrt)

    @staticmethod
    def num(x):
        if isinstance(x, np.ndarray):
            return x.astype(float)
        return float(x)

    @staticmethod
    def isfinite(x):
        return bool(np.all(np.isfinite(x)))


class _MPBackend:
    def __init__(self, digits: int):
        self.digits = digits
        self.ctx = mpmath.MPContext()
        self.ctx.dps = digits
        self.unit_roundoff = 2.0 ** (-self.ctx.prec)
        ctx = self.ctx
        for name in ("exp", "expm1", "log", "log1p", "floor", "sqrt"):
            scalar = getattr(ctx, name)
            setattr(self, name, self._lift_ufunc(scalar))
        self._mpf_u = np.frompyfunc(ctx.mpf, 1, 1)

    @staticmethod
    def _lift_ufunc(scalar):
        vec = np.frompyfunc(scalar, 1, 1)

        def apply(x):
            if isinstance(x, np.ndarray):
                return vec(x)
            return scalar(x)

        return apply

    def num(self, x):
        if isinstance(x, np.ndarray):
            return self._mpf_u(x)
        return self.ctx.mpf(x)

    def isfinite(self, x):
        if isinstance(x, np.ndarray):
            return all(self.ctx.isfinite(v) for v in x.ravel())
        return bool(self.ctx.isfinite(x))


_FLOAT = _FloatBackend()
_MP_CACHE: dict[int, _MPBackend] = {}


def backend_for(digits: int):
    if digits < 15:
        raise ValidationError("precision_digits must be >= 15")
    if digits <= FLOAT_DIGITS:
        return _FLOAT
    if digits not in _MP_CACHE:
        _MP_CACHE[digits] = _MPBackend(digits)
    return _MP_CACHE[digits]


@dataclass(frozen=True)
class BreakMap:
    """Lift ``x -> F(x)`` of a circle homeomorphism with one break at ``p``.

    Use :func:`make_break_map` to construct; the derived constants are filled
    in on initialisation and the instance is immutable afterwards.
    """

    c: float
    eps: float
    delta: float
    p: float = 0.0
    precision_digits: int = FLOAT_DIGITS
    _bk: object = field(init=False, repr=False, compare=False)
    _sigma: object = field(init=False, repr=False, compare=False)
    _K: object = field(init=False, repr=False, compare=False)
    _log_fbar1: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("c", "eps", "delta", "p"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, _mpf_base)) and mpmath.isfinite(v)):
                raise ValidationError(f"{name} must be a finite real, got {v!r}")
        if not self.c > 0:
            raise ValidationError(f"break size c must be positive, got {self.c!r}")
        if not 0 <= self.p < 1:
            raise ValidationError("break point p must lie in [0, 1)")
        bk = backend_for(int(self.precision_digits))
        c, eps = bk.num(self.c), bk.num(self.eps)
        object.__setattr__(self, "_bk", bk)
        object.__setattr__(self, "_sigma", bk.sqrt(c * bk.exp(-eps)))
        if self.eps != 0:
            K = bk.expm1(eps)
            object.__setattr__(self, "_K", K)
            # log of fbar'(t) = eps exp(eps t) / K, minus the eps t term
            object.__setattr__(self, "_log_fbar1", bk.log(eps / K))
        else:
            object.__setattr__(self, "_K", None)
            object.__setattr__(self, "_log_fbar1", None)

    # ------------------------------------------------------------------ basics
    @property
    def unit_roundoff(self) -> float:
        return self._bk.unit_roundoff

    @property
    def backend(self):
        return self._bk

    @property
    def is_high_precision(self) -> bool:
        return self._bk is not _FLOAT

    def num(self, x):
        return self._bk.num(x)

    def _split(self, x, side=None):
        """Cell index and local coordinate ``t`` in ``[0, 1]`` of ``x``.

        ``side`` only matters for points within ``10 u`` of the break orbit.
        """
        bk = self._bk
        s = x - self.p
        k = bk.floor(s)
        t = s - k
        if side is None:
            return k, t
        tol = 10 * bk.unit_roundoff
        if isinstance(t, np.ndarray):
            lo = t < tol
            hi = t > 1 - tol
            if side == RIGHT:
                k = np.where(hi, k + 1, k)
                t = np.where(lo | hi, t * 0, t)
            else:
                k = np.where(lo, k - 1, k)
                t = np.where(lo | hi, t * 0 + 1, t)
            return k, t
        if t < tol or t > 1 - tol:
            if side == RIGHT:
                return (k + 1 if t > 0.5 else k), t * 0
            return (k - 1 if t < 0.5 else k), t * 0 + 1
        return k, t

    def at_break(self, x) -> bool:
        _, t = self._split(x)
        tol = 10 * self._bk.unit_roundoff
        return bool(np.any((t < tol) | (t > 1 - tol)))

    # --------------------------------------------------------------- factors
    def _fbar(self, t):
        if self._K is None:
            return t
        return self._bk.expm1(self.eps_num * t) / self._K

    @property
    def eps_num(self):
        return self._bk.num(self.eps)

    def _fbar_jet(self, t) -> Jet3:
        if self._K is None:
            return identity_jet(t, self._bk.num(1))
        e = self.eps_num
        g = self._bk.exp(e * t) / self._K
        return Jet3(self._bk.expm1(e * t) / self._K, e * g, e * e * g, e * e * e * g)

    def _mobius_jet(self, y) -> Jet3:
        s = self._sigma
        b = 1 - s
        D = s + b * y
        return Jet3(y / D, s / (D * D), -2 * s * b / (D * D * D), 6 * s * b * b / (D * D * D * D))

    # ------------------------------------------------------------- evaluation
    def __call__(self, x):
        x = self._bk.num(x)
        k, t = self._split(x)
        y = self._fbar(t)
        return k + self.p + self._bk.num(self.delta) + y / (self._sigma + (1 - self._sigma) * y)

    def local_jet(self, t) -> Jet3:
        """Jet of the map restricted to one smooth cell, in the local coordinate."""
        j = self._mobius_jet(self._fbar(t)).after(self._fbar_jet(t))
        return j

    def jet(self, x, side=None) -> Jet3:
        x = self._bk.num(x)
        k, t = self._split(x, side)
        if side is None and self.at_break(x):
            raise BreakCollision(f"point {x} is on the break; pass side='left' or 'right'")
        j = self.local_jet(t)
        return Jet3(k + self.p + self._bk.num(self.delta) + j.value, j.d1, j.d2, j.d3)

    def log_deriv_local(self, t):
        """``ln F'`` at local coordinate ``t`` in ``[0, 1]``."""
        bk = self._bk
        s = self._sigma
        y = self._fbar(t)
        out = bk.log(s) - 2 * bk.log(s + (1 - s) * y)
        if self._K is not None:
            out = out + self._log_fbar1 + self.eps_num * t
        return out

    def log_secant_local(self, t, ell):
        """``ln((F(t + ell) - F(t)) / ell)`` for ``0 <= t``, ``t + ell <= 1``.

        Closed form on a single smooth cell; keeps full relative accuracy for
        tiny ``ell``.
        """
        bk = self._bk
        s = self._sigma
        y1 = self._fbar(t)
        y2 = self._fbar(t + ell)
        out = bk.log(s) - bk.log(s + (1 - s) * y1) - bk.log(s + (1 - s) * y2)
        if self._K is not None:
            e = self.eps_num
            # (fbar(t+ell) - fbar(t)) / ell = exp(e t) expm1(e ell) / (K ell)
            out = out + e * t + bk.log(bk.expm1(e * ell) / (e * ell)) + bk.log(e / self._K)
        return out

    def secant(self, x, y):
        """Difference quotient ``(F(y) - F(x)) / (y - x)`` for ``x != y``."""
        x, y = self._bk.num(x), self._bk.num(y)
        a, b = (x, y) if x < y else (y, x)
        k, t = self._split(a, RIGHT)
        ell = b - a
        if t + ell <= 1:
            return self._bk.exp(self.log_secant_local(t, ell))
        return (self(b) - self(a)) / ell

    def inverse(self, y):
        bk = self._bk
        w = bk.num(y) - self.p - bk.num(self.delta)
        k = bk.floor(w)
        w = w - k
        s = self._sigma
        u = s * w / (1 - (1 - s) * w)
        if self._K is not None:
            u = bk.log1p(u * self._K) / self.eps_num
        return k + self.p + u

    def break_ratio(self):
        """``F'(p - 0) / F'(p + 0)``."""
        return self.jet(self.p, LEFT).d1 / self.jet(self.p, RIGHT).d1

    # -------------------------------------------------------------- circle
    def circle_orbit(self, x0, n: int, backward: bool = False):
        """Orbit ``x0, F(x0), ...`` reduced mod 1 to ``[0, 1)``, with windings.

        Returns ``(points, windings)`` where ``F^k(x0) = points[k] + windings[k]``
        (exact integer bookkeeping avoids losing digits to large lift values).
        """
        bk = self._bk
        x = bk.num(x0)
        w0 = int(bk.floor(x))
        x = x - w0
        pts = [x]
        wind = [w0]
        if bk is _FLOAT and not backward:
            return self._float_forward_orbit(float(x), w0, n)
        step = self.inverse if backward else self
        w = w0
        if bk is _FLOAT:
            step = self._inverse_scalar_float if backward else self._call_scalar_float
            x = float(x)
        elif not backward:
            step = self._scalar_mp_step()
        for _ in range(n):
            y = step(x)
            k = math.floor(y)
            x = y - k
            if x >= 1.0:  # rounding of y - k for y just below an integer
                x -= 1.0
                k += 1
            w += int(k)
            pts.append(x)
            wind.append(w)
        return pts, wind

    def _float_forward_orbit(self, x: float, w: int, n: int):
        # hot loop of every orbit sweep: arithmetic inlined, names bound locally
        s = float(self._sigma)
        b = 1.0 - s
        p, shift = float(self.p), float(self.p) + float(self.delta)
        eps = float(self.eps)
        K = None if self._K is None else float(self._K)
        floor, expm1 = math.floor, math.expm1
        pts, wind = [x], [w]
        add_pt, add_w = pts.append, wind.append
        for _ in range(n):
            j = floor(x - p)
            t = x - p - j
            if K is not None:
                t = expm1(eps * t) / K
            y = j + shift + t / (s + b * t)
            k = floor(y)
            x = y - k
            if x >= 1.0:
                x -= 1.0
                k += 1
            w += k
            add_pt(x)
            add_w(w)
        return pts, wind

    def _call_scalar_float(self, x: float) -> float:
        s = float(self._sigma)
        k = math.floor(x - self.p)
        t = x - self.p - k
        if self._K is not None:
            t = math.expm1(self.eps * t) / float(self._K)
        return k + self.p + self.delta + t / (s + (1 - s) * t)

    def _scalar_mp_step(self):
        ctx = self._bk.ctx
        s = self._sigma
        b = 1 - s
        shift = ctx.mpf(self.p) + ctx.mpf(self.delta)
        p = ctx.mpf(self.p)
        floor, expm1 = ctx.floor, ctx.expm1
        e, K = self.eps_num, self._K

        def step(x):
            k = floor(x - p)
            t = x - p - k
            if K is not None:
                t = expm1(e * t) / K
            return k + shift + t / (s + b * t)

        return step

    def _inverse_scalar_float(self, y: float) -> float:
        s = float(self._sigma)
        w = y - self.p - self.delta
        k = math.floor(w)
        w -= k
        u = s * w / (1 - (1 - s) * w)
        if self._K is not None:
            u = math.log1p(u * float(self._K)) / self.eps
        return k + self.p + u


def make_break_map(c, eps, delta, precision_digits: int = FLOAT_DIGITS, p: float = 0.0) -> BreakMap:
    """Lift of ``R o fbar_eps`` with total break size ``c`` at ``p``."""
    return BreakMap(c=c, eps=eps, delta=delta, p=p, precision_digits=precision_digits)


def eval_lift(fmap, x):
    bk = fmap.backend
    if not bk.isfinite(bk.num(x)):
        raise ValidationError("x must be finite")
    return fmap(x)


def eval_jet(fmap, x, side=None) -> Jet3:
    return fmap.jet(x, side)


def iterate(fmap, x, n: int) -> list:
    if n < 0:
        raise ValidationError("n must be non-negative")
    out = [fmap.num(x)]
    for _ in range(n):
        out.append(fmap(out[-1]))
    return out


def iterate_jet(fmap, x, n: int, side=None) -> Jet3:
    """Jet of ``F^n`` at ``x`` by repeated order-3 composition.

    ``x`` may be a numpy array in binary64 mode.  The side is carried along
    the orbit (``F`` preserves orientation); without a side, an orbit point on
    the break raises :class:`BreakCollision`.
    """
    if n < 0:
        raise ValidationError("n must be non-negative")
    bk = fmap.backend
    x = bk.num(x)
    one = bk.num(1)
    acc = identity_jet(x, one)
    # keep the running point in [0, 1) and the integer part aside, so that
    # positions (and hence derivatives) do not lose digits to large lifts
    w = bk.floor(x)
    y = x - w
    for i in range(n):
        if side is None and fmap.at_break(y):
            raise BreakCollision(f"orbit point {i} of {x!r} hits the break")
        step = fmap.jet(y, side if side is not None else RIGHT)
        acc = step.after(acc)
        k = bk.floor(step.value)
        y = step.value - k
        w = w + k
    return Jet3(y + w, acc.d1, acc.d2, acc.d3)


@dataclass(frozen=True)
class ComposedMap:
    """``outer o inner`` for jet-evaluable maps (used to test composition laws)."""

    outer: object
    inner: object

    @property
    def backend(self):
        return self.inner.backend

    @property
    def unit_roundoff(self):
        return self.inner.unit_roundoff

    def num(self, x):
        return self.inner.num(x)

    def __call__(self, x):
        return self.outer(self.inner(x))

    def jet(self, x, side=None) -> Jet3:
        j = self.inner.jet(x, side)
        return self.outer.jet(j.value, side).after(j)

    def at_break(self, x) -> bool:
        return self.inner.at_break(x) or self.outer.at_break(self.inner(x))


def compose(outer, inner) -> ComposedMap:
    return ComposedMap(outer, inner)
