"""Rotation numbers as continued fractions, read off orbit combinatorics.

Every routine here works on any *circle map* object exposing

* ``circle_orbit(x0, n)`` -> ``(points in [0, 1), integer windings)``,
* ``__call__(x)`` -> lift value (numpy-vectorised in binary64 mode),
* ``unit_roundoff`` and the break point ``p``.

:class:`~circlebreak.circle.BreakMap` and :class:`~circlebreak.renorm.MobiusCircle`
both qualify.
"""

from __future__ import annotations

import itertools
import math
from array import array
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .circle import make_break_map
from .errors import (
    InvalidDepth,
    NonMonotoneBracket,
    PeriodicOrbit,
    PrecisionExhausted,
    Undecidable,
    ValidationError,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SILVER = math.sqrt(2.0) - 1.0


class Ordering(Enum):
    LESS = "less"
    GREATER = "greater"


def convergents_of(quotients):
    """``[(p_0, q_0), ..., (p_N, q_N)]`` for ``[a_1, ..., a_N]``."""
    pm, qm = 1, 0
    p, q = 0, 1
    out = [(p, q)]
    for a in quotients:
        pm, qm, p, q = p, q, a * p + pm, a * q + qm
        out.append((p, q))
    return out


def _gauss_remainder(x: float, depth: int) -> float:
    """Gauss-map iterate ``G^depth(x)`` in exact arithmetic (0 once it terminates)."""
    r = Fraction(x)
    for _ in range(depth):
        if r == 0:
            return 0.0
        inv = 1 / r
        r = inv - math.floor(inv)
    return float(r)


def cf_value(quotients) -> float:
    """Value of the finite continued fraction ``[a_1, ..., a_N]``."""
    x = Fraction(0)
    for a in reversed(quotients):
        x = 1 / (a + x)
    return float(x)


@dataclass(frozen=True)
class ContinuedFraction:
    """Partial quotients of ``rho = [a_1, a_2, ...]`` with derived data.

    ``convergents[n] = (p_n, q_n)`` for ``n = 0..N``; ``measures[n]`` is
    ``mu_n = |q_n rho - p_n|``.  ``tail`` is the value of the quotients past
    ``a_N``; when omitted it is recovered from ``value``.
    """

    quotients: tuple
    value: float | None = None
    tail: float | None = None
    convergents: list = field(init=False, repr=False, compare=False)
    measures: list = field(init=False, repr=False, compare=False)
    tails: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        qs = tuple(int(a) for a in self.quotients)
        if any(a < 1 for a in qs):
            raise ValidationError("partial quotients must be >= 1")
        object.__setattr__(self, "quotients", qs)
        value = self.value if self.value is not None else cf_value(qs) if qs else None
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "convergents", convergents_of(qs))
        if value is None:
            object.__setattr__(self, "tails", [])
            object.__setattr__(self, "measures", [])
            return
        tail = self.tail if self.tail is not None else _gauss_remainder(value, len(qs))
        object.__setattr__(self, "tail", float(tail))
        # tails[k] = [a_{k+1}, a_{k+2}, ...]; the backward recursion contracts errors
        # a NaN tail means the next quotient was unresolvable (hence huge):
        # it contributes ~0 to shallower tails but leaves mu_N unknown
        unknown = math.isnan(tail)
        tails = [0.0] * (len(qs) + 1)
        tails[-1] = 0.0 if unknown else float(tail)
        for k in range(len(qs) - 1, -1, -1):
            tails[k] = 1.0 / (qs[k] + tails[k + 1])
        # mu_n = tails[0] * ... * tails[n], free of the cancellation in q_n rho - p_n
        mus = list(itertools.accumulate(tails, lambda a, b: a * b))
        if unknown:
            tails[-1] = mus[-1] = math.nan
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "measures", mus)

    @property
    def depth(self) -> int:
        return len(self.quotients)

    def a(self, n: int) -> int:
        return self.quotients[n - 1]

    def q(self, n: int) -> int:
        return 0 if n == -1 else self.convergents[n][1]

    def p(self, n: int) -> int:
        return 1 if n == -1 else self.convergents[n][0]

    def mu(self, n: int) -> float:
        return 1.0 if n == -1 else self.measures[n]

    def prefix(self, depth: int) -> "ContinuedFraction":
        if depth > self.depth:
            raise InvalidDepth(f"need depth {depth}, have {self.depth}")
        tail = self.tails[depth] if self.tails else None
        return ContinuedFraction(self.quotients[:depth], self.value, tail)

    def shifted(self) -> "ContinuedFraction":
        """Gauss-map image: drop the leading quotient."""
        if self.value is None:
            return ContinuedFraction(self.quotients[1:])
        return ContinuedFraction(self.quotients[1:], self.tails[1], self.tail)

    @classmethod
    def from_real(cls, x: float, depth: int) -> "ContinuedFraction":
        """Continued fraction of ``x`` in ``(0, 1)`` via the Gauss map (exact rational arithmetic)."""
        if not 0 < x < 1:
            raise ValidationError("x must lie in (0, 1)")
        r = Fraction(x)
        qs = []
        while len(qs) < depth and r != 0:
            inv = 1 / r
            a = math.floor(inv)
            qs.append(a)
            r = inv - a
        return cls(tuple(qs), float(x), float(r))

    @classmethod
    def periodic(cls, pattern, depth: int) -> "ContinuedFraction":
        """``[pattern, pattern, ...]`` truncated to ``depth``, with its exact limit value."""
        pattern = tuple(int(a) for a in pattern)
        if not pattern:
            raise ValidationError("empty quotient pattern")
        reps = depth // len(pattern) + 1
        qs = (pattern * reps)[:depth]
        # the tail converges geometrically; 400 terms saturate binary64
        long = pattern * (400 // len(pattern) + 2)
        k = depth % len(pattern)
        return cls(qs, cf_value(long), cf_value(long[k:k + 400]))


@dataclass(frozen=True)
class RotationTarget:
    """Prescribed rotation number, as explicit quotients or a real value."""

    kind: str
    pattern: tuple = ()
    rho: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("explicitCF", "realValue"):
            raise ValidationError(f"unknown target kind {self.kind!r}")
        if self.kind == "explicitCF" and not self.pattern:
            raise ValidationError("explicitCF target needs quotients")
        if self.kind == "realValue" and not (self.rho is not None and 0 < self.rho < 1):
            raise ValidationError("realValue target needs 0 < rho < 1")

    @classmethod
    def golden(cls):
        return cls("explicitCF", (1,), name="golden")

    @classmethod
    def silver(cls):
        return cls("explicitCF", (2,), name="silver")

    @classmethod
    def from_quotients(cls, quotients, name=""):
        return cls("explicitCF", tuple(int(a) for a in quotients), name=name)

    @classmethod
    def from_real(cls, rho: float):
        return cls("realValue", rho=float(rho))

    @classmethod
    def parse(cls, text: str) -> "RotationTarget":
        """``golden``, ``silver``, ``1,1,10`` (repeating pattern) or a decimal in (0, 1)."""
        text = text.strip()
        if text in ("golden", "silver"):
            return getattr(cls, text)()
        if "," in text or text.isdigit():
            return cls.from_quotients([int(s) for s in text.split(",") if s.strip()], name=text)
        return cls.from_real(float(text))

    def cf(self, depth: int) -> ContinuedFraction:
        if self.kind == "explicitCF":
            return ContinuedFraction.periodic(self.pattern, depth)
        cf = ContinuedFraction.from_real(self.rho, depth)
        if cf.depth < depth:
            raise PrecisionExhausted(f"{self.rho!r} has only {cf.depth} quotients at binary64")
        return cf

    def describe(self) -> str:
        if self.name:
            return self.name
        if self.kind == "explicitCF":
            return ",".join(map(str, self.pattern))
        return repr(self.rho)


# --------------------------------------------------------------------------
# closest returns


class _Orbit:
    """Lazily extended orbit of the break point, reduced mod 1."""

    CHUNK = 1 << 20

    def __init__(self, fmap, budget: int, windings: bool = True):
        self.fmap = fmap
        self.budget = budget
        pts, wind = fmap.circle_orbit(fmap.p, 0)
        # compact storage keeps tens of millions of binary64 points affordable;
        # windings are only kept when lifts are asked for
        self.pts = list(pts) if fmap.is_high_precision else array("d", pts)
        self.wind = array("q", wind)
        self._w_last = wind[-1]
        self._keep_windings = windings

    def ensure(self, n: int):
        have = len(self.pts) - 1
        if n <= have:
            return
        if n > self.budget:
            raise PrecisionExhausted(f"orbit budget {self.budget} exceeded (need {n})")
        target = min(have + max(n - have, have), self.budget)  # amortised doubling
        while have < target:
            extra = min(target - have, self.CHUNK)
            # restart from the reduced point; F(x + k) = F(x) + k keeps windings exact
            pts, wind = self.fmap.circle_orbit(self.pts[-1], extra)
            w0 = self._w_last
            self.pts.extend(pts[1:])
            if self._keep_windings:
                self.wind.extend(w + w0 for w in wind[1:])
            self._w_last = wind[-1] + w0
            have += extra

    def offset(self, i: int):
        """Position of ``f^i(p)`` measured rightwards from ``p``, in ``[0, 1)``."""
        self.ensure(i)
        r = self.pts[i] - self.fmap.p
        return r + 1 if r < 0 else r

    def lift(self, i: int):
        """``F^i(p) - p`` as (fractional part, integer part)."""
        if not self._keep_windings:
            raise ValueError("orbit was built without windings")
        self.ensure(i)
        return self.pts[i] - self.fmap.p, self.wind[i]


def _side_distance(r, right: bool):
    return r if right else 1 - r


def rotation_cf(fmap, depth: int, *, budget: int = 60_000_000, value_extra: int = 4) -> ContinuedFraction:
    """Partial quotients ``a_1..a_depth`` of the rotation number from closest returns.

    ``a_{n+1}`` is the number of steps of length ``q_n`` that the orbit of
    ``p`` takes, starting from ``f^{q_{n-1}}(p)``, while staying on the same
    side of ``p`` and strictly approaching it.  Only orderings of orbit points
    are used, so the quotients are exact integers while precision lasts.
    The ``value`` field is the deepest convergent reachable with a few extra
    quotients (it only feeds the measures ``mu_n``).
    """
    if depth < 1:
        raise InvalidDepth("depth must be >= 1")
    orbit = _Orbit(fmap, budget, windings=False)
    floor = 100 * fmap.unit_roundoff
    qs: list[int] = []
    qm, q = 0, 1
    n = 0
    target = depth + value_extra
    while len(qs) < target:
        if len(qs) == depth:
            # quotients past the requested depth only refine ``value``; a
            # rational rotation number would make them run away, so cap them
            orbit.budget = min(orbit.budget, 3 * (q + qm))
        try:
            a = _next_quotient(orbit, qm, q, n, floor)
        except (PrecisionExhausted, PeriodicOrbit) as exc:
            if len(qs) >= depth:
                break
            if isinstance(exc, PrecisionExhausted) and exc.level is None:
                exc.level = n
            raise
        qs.append(a)
        qm, q = q, qm + a * q
        n += 1
    conv = convergents_of(qs)
    p_last, q_last = conv[-1]
    return ContinuedFraction(tuple(qs[:depth]), p_last / q_last, cf_value(qs[depth:]) if len(qs) > depth else math.nan)


def _next_quotient(orbit: _Orbit, qm: int, q: int, n: int, floor) -> int:
    # f^{q_n}(p) sits right of p for even n, left for odd n; the run starts on
    # the side of f^{q_{n-1}}(p), which is the opposite one
    right = n % 2 == 1
    prev = 1.0 if qm == 0 else _side_distance(orbit.offset(qm), right)
    k = 0
    while True:
        i = qm + (k + 1) * q
        r = orbit.offset(i)
        if r == 0:
            raise PeriodicOrbit(f"exact return of the break orbit at step {i}")
        if min(r, 1 - r) < floor:
            raise PrecisionExhausted(f"closest return at step {i} within {floor:.1e} of p", level=n)
        d = _side_distance(r, right)
        if d < prev:
            if prev - d < floor:
                raise PrecisionExhausted(f"closest returns tie at step {i}", level=n)
            k += 1
            prev = d
            continue
        if k == 0:
            raise PrecisionExhausted(f"no return found at level {n}", level=n)
        return k


# --------------------------------------------------------------------------
# comparison with rationals


def _displacement(fmap, x: np.ndarray, p: int, q: int) -> np.ndarray:
    """``F^q(x) - x - p`` with windings tracked as exact integers."""
    y = np.array(x, dtype=float)
    w = np.zeros_like(y)
    for _ in range(q):
        y = np.asarray(fmap(y), dtype=float)
        k = np.floor(y)
        y = y - k
        w = w + k
    return (y - x) + (w - p)


def compare_rotation(fmap, p: int, q: int, *, initial_grid: int = 64, max_evals: int = 200_000) -> Ordering:
    """Certified comparison of ``rho(F)`` with ``p/q``.

    The displacement ``phi(x) = F^q(x) - x - p`` has constant sign unless
    ``rho = p/q``.  Monotonicity of ``F^q`` gives the enclosure
    ``phi(a) - h <= phi(x) <= phi(b) + h`` on a cell ``[a, b]`` of width ``h``;
    cells are refined until every one certifies the sign.
    """
    if q < 1 or math.gcd(p, q) != 1:
        raise ValidationError("need q >= 1 and gcd(p, q) = 1")
    if fmap.backend.digits > 16:
        raise ValidationError("compare_rotation runs in binary64 only")
    margin = 10 * fmap.unit_roundoff * (q + 1) * 4
    xs = np.linspace(0.0, 1.0, initial_grid + 1)
    vals = _displacement(fmap, xs, p, q)
    evals = xs.size
    if np.all(np.abs(vals) <= margin):
        raise Undecidable(f"displacement vanishes to working precision: rho is {p}/{q} or too close to it")
    if np.any(vals > margin) and np.any(vals < -margin):
        raise PeriodicOrbit(f"displacement changes sign: rotation number is {p}/{q}")
    sign = 1.0 if np.sum(vals > 0) >= np.sum(vals < 0) else -1.0
    cells = [(xs[i], xs[i + 1], vals[i], vals[i + 1]) for i in range(initial_grid)]
    while cells:
        pending = []
        for a, b, fa, fb in cells:
            h = b - a
            if sign > 0 and fa - h > margin:
                continue
            if sign < 0 and fb + h < -margin:
                continue
            if h < 1e3 * fmap.unit_roundoff:
                raise Undecidable(f"cannot certify sign of rho - {p}/{q} at working precision")
            pending.append((a, b, fa, fb))
        if not pending:
            break
        sub = 8
        new_x = np.concatenate([np.linspace(a, b, sub + 1)[1:-1] for a, b, _, _ in pending])
        new_v = _displacement(fmap, new_x, p, q)
        evals += new_x.size
        if evals > max_evals:
            raise Undecidable(f"evaluation budget exhausted comparing with {p}/{q}")
        if np.any(new_v * sign < -margin):
            raise PeriodicOrbit(f"displacement changes sign: rotation number is {p}/{q}")
        cells = []
        for j, (a, b, fa, fb) in enumerate(pending):
            xs_c = np.concatenate([[a], new_x[j * (sub - 1):(j + 1) * (sub - 1)], [b]])
            vs_c = np.concatenate([[fa], new_v[j * (sub - 1):(j + 1) * (sub - 1)], [fb]])
            cells.extend((xs_c[i], xs_c[i + 1], vs_c[i], vs_c[i + 1]) for i in range(sub))
    return Ordering.GREATER if sign > 0 else Ordering.LESS


def rotation_side(fmap, p: int, q: int, orbit: _Orbit | None = None) -> int:
    """One-point certified bound from the break orbit.

    Returns ``+1`` when ``rho >= p/q``, ``-1`` when ``rho <= p/q`` and ``0``
    when ``F^q(p) - p - p/q`` vanishes to working precision (so ``rho = p/q``
    up to that precision).  Sound because ``rho < p/q`` forces the
    displacement to be negative everywhere, in particular at ``p``.
    """
    orbit = orbit or _Orbit(fmap, budget=10 * q + 10)
    frac, wind = orbit.lift(q)
    phi = frac + (wind - p)
    margin = 10 * fmap.unit_roundoff * (q + 1)
    if phi > margin:
        return 1
    if phi < -margin:
        return -1
    return 0


# --------------------------------------------------------------------------
# tuning


_LESS, _INSIDE, _GREATER = -1, 0, 1


def _classify(fmap, conv, depth: int, budget: int) -> int:
    """Locate ``rho`` against the cylinder of the first ``depth - 1`` quotients.

    Convergents alternate around the target (even index below, odd above).
    """
    orbit = _Orbit(fmap, budget)
    for k in range(1, depth + 1):
        p, q = conv[k]
        s = rotation_side(fmap, p, q, orbit)
        if k % 2 == 0 and s <= 0:
            return _LESS
        if k % 2 == 1 and s >= 0:
            return _GREATER
    return _INSIDE


@dataclass
class TuneResult:
    delta: float
    depth: int
    steps: int


def tune_delta_report(c, eps, target: RotationTarget, tol_depth: int, *, precision_digits: int = 16,
                      bracket=(-1.0, 2.0), refine_budget: int = 250_000, max_steps: int = 4000,
                      guard: int = 3) -> TuneResult:
    """Bisection on ``delta`` until ``rho`` enters the target cylinder.

    The cylinder test uses ``tol_depth + guard`` convergents, so the returned
    map reproduces the first ``tol_depth`` quotients even if its rotation
    number is rational.  Afterwards the bracket keeps shrinking towards deeper
    cylinders while the break orbit stays within ``refine_budget`` steps and
    ``delta`` can still be resolved; ``depth`` reports the deepest cylinder
    reached.
    """
    if tol_depth < 1:
        raise InvalidDepth("tol_depth must be >= 1")
    need = tol_depth + guard
    conv_cf = target.cf(need + 40) if target.kind == "explicitCF" else target.cf(need)
    conv = conv_cf.convergents
    max_depth = need
    while max_depth + 1 < len(conv) and conv[max_depth + 1][1] <= refine_budget:
        max_depth += 1
    budget = conv[max_depth][1] + 1

    def make(d):
        return make_break_map(c, eps, d, precision_digits=precision_digits)

    lo, hi = (float(b) for b in bracket)
    if precision_digits > 16:
        bk = make(0.0).backend
        lo, hi = bk.num(lo), bk.num(hi)
    if _classify(make(lo), conv, need, budget) != _LESS or _classify(make(hi), conv, need, budget) != _GREATER:
        raise NonMonotoneBracket(f"bracket {bracket} does not straddle the target")

    best = None
    depth = need
    steps = 0
    while steps < max_steps:
        mid = (lo + hi) / 2
        if not lo < mid < hi:
            break
        steps += 1
        cls = _classify(make(mid), conv, depth, budget)
        while cls == _INSIDE:
            best = (mid, depth)
            if depth >= max_depth:
                break
            depth += 1
            cls = _classify(make(mid), conv, depth, budget)
        if cls == _INSIDE:
            break
        if cls == _LESS:
            lo = mid
        else:
            hi = mid
    if best is None:
        raise PrecisionExhausted(f"delta resolution exhausted before depth {need}", level=need)
    delta, reached = best
    got = rotation_cf(make(delta), tol_depth, value_extra=0).quotients
    want = conv_cf.quotients[:tol_depth]
    if got != want:
        raise PrecisionExhausted(f"tuned map has quotients {got}, wanted {want}")
    return TuneResult(delta=delta, depth=reached - guard, steps=steps)


def tune_delta(c, eps, target: RotationTarget, tol_depth: int, **kw):
    """``delta`` such that ``make_break_map(c, eps, delta)`` has the target's first ``tol_depth`` quotients."""
    return tune_delta_report(c, eps, target, tol_depth, **kw).delta
