"""Dynamical partitions of the circle by the break-point orbit.

Level ``n`` consists of the ``q_n`` "old" intervals ``f^k [p .. f^{q_{n-1}}(p)]``
(``0 <= k < q_n``) and the ``q_{n-1}`` "new" intervals ``f^m [p .. f^{q_n}(p)]``
(``0 <= m < q_{n-1}``).  Every endpoint is an orbit point ``f^j(p)`` with
``0 <= j < q_n + q_{n-1}``, so one orbit sweep builds the whole level.

Intervals are stored as (left endpoint in ``[0, 1)``, length); the break point
is an endpoint at every level, so no interval wraps past it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InsufficientData, InvalidDepth, PrecisionExhausted, ValidationError


class PartitionInterval(NamedTuple):
    left: object
    right: object  # lift coordinate, left < right <= left + 1
    orbit_index: int
    generation: int


def side_is_right(n: int) -> bool:
    """``f^{q_n}(p)`` lies to the right of ``p`` exactly for even ``n``."""
    return n % 2 == 0


def arc_from(start, end, right: bool):
    """Left endpoint and length of the arc leaving ``start`` towards ``end``.

    Works elementwise on numpy arrays of reduced coordinates (object arrays
    in high-precision mode).
    """
    if right:
        length = end - start
        left = start
    else:
        length = start - end
        left = end
    length = np.where(length <= 0, length + 1, length) if isinstance(length, np.ndarray) else (
        length + 1 if length <= 0 else length)
    return left, length


@dataclass
class DynamicalPartition:
    level: int
    q_old: int  # q_n
    q_new: int  # q_{n-1}
    old_left: np.ndarray
    old_len: np.ndarray
    new_left: np.ndarray
    new_len: np.ndarray
    unit_roundoff: float
    orbit: np.ndarray  # reduced orbit points f^j(p), j < q_n + q_{n-1}

    @property
    def old_lengths(self) -> np.ndarray:
        return np.asarray(self.old_len, dtype=float)

    @property
    def new_lengths(self) -> np.ndarray:
        return np.asarray(self.new_len, dtype=float)

    @property
    def size(self) -> int:
        return self.q_old + self.q_new

    def intervals(self):
        n = self.level
        for k in range(self.q_old):
            yield PartitionInterval(self.old_left[k], self.old_left[k] + self.old_len[k], k, n - 1)
        for m in range(self.q_new):
            yield PartitionInterval(self.new_left[m], self.new_left[m] + self.new_len[m], m, n)

    def _sorted(self):
        left = np.concatenate([self.old_left, self.new_left])
        length = np.concatenate([self.old_len, self.new_len])
        order = np.argsort(np.asarray(left, dtype=float), kind="stable")
        return left[order], length[order]

    def check(self) -> dict:
        """Residuals of the cover and adjacency invariants (all should be tiny)."""
        left, length = self._sorted()
        total = float(np.sum(length))
        right = left + length
        # consecutive intervals must abut; the last one closes up at 1 + first
        gaps = np.asarray(left[1:] - right[:-1], dtype=float)
        closing = float(left[0] + 1 - right[-1])
        return {
            "cover": abs(total - 1.0),
            "adjacency": float(max(np.max(np.abs(gaps), initial=0.0), abs(closing))),
            "count": len(left),
        }

    def assert_valid(self, tol: float | None = None):
        u = self.unit_roundoff
        res = self.check()
        if res["count"] != self.q_old + self.q_new:
            raise AssertionError("wrong interval count")
        if res["cover"] > (tol or self.q_old * 100 * u):
            raise AssertionError(f"cover residual {res['cover']:.3e}")
        if res["adjacency"] > (tol or 100 * u):
            raise AssertionError(f"adjacency residual {res['adjacency']:.3e}")
        if np.any(np.asarray(self.old_len, dtype=float) <= 0) or np.any(np.asarray(self.new_len, dtype=float) <= 0):
            raise AssertionError("non-positive interval length")


def orbit_points(fmap, count: int):
    """Reduced orbit ``f^j(p)`` for ``0 <= j < count`` as an array."""
    pts, _ = fmap.circle_orbit(fmap.p, count - 1)
    if fmap.is_high_precision:
        return np.array(pts, dtype=object)
    return np.array(pts, dtype=float)


def dynamical_partition(fmap, cf, n: int, orbit=None) -> DynamicalPartition:
    """Level ``n`` partition of the circle by the orbit of the break point.

    ``orbit`` may pass a precomputed reduced orbit (at least ``q_n + q_{n-1}`` points).
    """
    if n < 1:
        raise InvalidDepth("level must be >= 1")
    if cf.depth < n:
        raise InvalidDepth(f"continued fraction depth {cf.depth} < level {n}")
    if fmap.p != 0:
        raise ValidationError("partitions assume the break point at 0")
    qn, qm = cf.q(n), cf.q(n - 1)
    floor = 100 * fmap.unit_roundoff
    if cf.measures and cf.mu(n) < floor:
        # the expected shortest gap is already unresolvable; skip the sweep
        raise PrecisionExhausted(f"expected gap {cf.mu(n):.2e} at level {n} is below 100u", level=n)
    need = qn + qm
    x = orbit if orbit is not None and len(orbit) >= need else orbit_points(fmap, need)
    x = x[:need]
    old_left, old_len = arc_from(x[:qn], x[qm:qm + qn], side_is_right(n - 1))
    new_left, new_len = arc_from(x[:qm], x[qn:qn + qm], side_is_right(n))
    part = DynamicalPartition(n, qn, qm, old_left, old_len, new_left, new_len, fmap.unit_roundoff, x)
    shortest = min(float(np.min(part.old_lengths)), float(np.min(part.new_lengths)))
    if shortest < floor:
        raise PrecisionExhausted(f"interval of length {shortest:.2e} at level {n} is below 100u", level=n)
    return part


def is_refinement(coarse: DynamicalPartition, fine: DynamicalPartition, tol: float | None = None) -> bool:
    """Every interval of ``fine`` lies inside one interval of ``coarse``."""
    # endpoints are compared after conversion to binary64
    tol = tol if tol is not None else 100 * max(fine.unit_roundoff, 2.0**-53)
    c_left, c_len = coarse._sorted()
    c_left = np.asarray(c_left, dtype=float)
    c_right = c_left + np.asarray(c_len, dtype=float)
    f_left, f_len = fine._sorted()
    f_left = np.asarray(f_left, dtype=float)
    f_right = f_left + np.asarray(f_len, dtype=float)
    idx = np.searchsorted(c_left, f_left + tol, side="right") - 1
    if np.any(idx < 0):
        return False
    return bool(np.all(f_left >= c_left[idx] - tol) and np.all(f_right <= c_right[idx] + tol))


@dataclass(frozen=True)
class PartitionStats:
    level: int
    q: int
    max_length: float  # over all intervals of the level
    min_old_length: float
    mu: float  # invariant measure of each old interval
    min_over_mu: float
    argmin_index: int

    def csv_row(self):
        return [self.level, self.q, self.max_length, self.min_old_length, self.mu, self.min_over_mu]


PARTITION_CSV_HEADER = ["n", "q_n", "maxLen", "minLen", "mu", "minOverMu"]


def partition_stats(part: DynamicalPartition, cf) -> PartitionStats:
    old = part.old_lengths
    l_n = int(np.argmin(old))
    mx = max(float(np.max(old)), float(np.max(part.new_lengths)))
    mu = cf.mu(part.level - 1)
    mn = float(old[l_n])
    return PartitionStats(part.level, part.q_old, mx, mn, mu, mn / mu, l_n)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(x, y) -> LinearFit:
    """Ordinary least squares ``y ~ slope * x + intercept`` with its r^2.

    A constant response is fitted perfectly, so it reports ``r2 = 1``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot <= 1e-30 * max(1.0, float(np.sum(y**2))) else 1.0 - ss_res / ss_tot
    return LinearFit(float(slope), float(intercept), r2)


@dataclass(frozen=True)
class DecayFit:
    gamma1_hat: float
    gamma2_hat: float
    r2_max: float
    r2_min: float
    levels: tuple


def fit_decay(stats, n_range=None, min_levels: int = 6) -> DecayFit:
    """Exponential decay rates of the longest interval and of min/mu across levels."""
    if n_range is not None:
        lo, hi = n_range
        stats = [s for s in stats if lo <= s.level <= hi]
    if len(stats) < min_levels:
        raise InsufficientData(f"need {min_levels} levels, got {len(stats)}")
    n = [s.level for s in stats]
    f1 = linear_fit(n, np.log([s.max_length for s in stats]))
    f2 = linear_fit(n, np.log([s.min_over_mu for s in stats]))
    return DecayFit(float(np.exp(f1.slope)), float(np.exp(f2.slope)), f1.r2, f2.r2, (min(n), max(n)))
