"""Conjugacy between two break maps with the same rotation number, and the
regularity obstruction it carries.

The conjugacy ``h`` sends ``f^i(p)`` to ``g^i(p)``; it is only ever sampled on
those matched orbit points.  Its smoothness is probed through the distortion
``xi``: if ``h'`` were Hoelder with exponent ``alpha`` then the difference of
``xi_{f^{q_n}}(J)`` and ``xi_{g^{q_n}}(h J)`` would be ``O(|J|^alpha)``.  The
Moebius comparison map has ``xi = 0``, the negative-Schwarzian map does not,
and the growth of that difference against ``|J|`` caps ``alpha``.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .circle import make_break_map
from .constants import derivative_bound, ledger_for
from .distortion import xi_arcs
from .errors import CFMismatch, DegenerateRegression, InsufficientLevels, ValidationError
from .partition import (
    arc_from,
    dynamical_partition,
    fit_decay,
    is_refinement,
    linear_fit,
    partition_stats,
    side_is_right,
)
from .rotation import RotationTarget, rotation_cf, tune_delta_report

NULL_FLOOR = 1e-10


def _orbit_table(fmap, forward: int, backward: int):
    fw, _ = fmap.circle_orbit(fmap.p, forward - 1)
    bw, _ = fmap.circle_orbit(fmap.p, backward, backward=True)
    pts = list(reversed(bw[1:])) + fw
    if fmap.is_high_precision:
        return np.array(pts, dtype=object)
    return np.array(pts, dtype=float)


@dataclass
class ConjugacyTable:
    """Matched orbits ``f^i(p) <-> g^i(p)`` for ``-backward <= i < forward``.

    ``f_points``/``g_points`` are the matched pairs sorted by the ``f`` point.
    """

    depth: int
    cf: object
    forward: int
    backward: int
    f_orbit: np.ndarray
    g_orbit: np.ndarray
    source_maps: tuple
    f_points: np.ndarray = field(repr=False)
    g_points: np.ndarray = field(repr=False)

    def f_at(self, idx):
        return self.f_orbit[np.asarray(idx) + self.backward]

    def g_at(self, idx):
        return self.g_orbit[np.asarray(idx) + self.backward]

    def h(self, x):
        """Piecewise-linear interpolation of ``h`` (for plotting only)."""
        fx = np.append(np.asarray(self.f_points, dtype=float), 1.0)
        gx = np.append(np.asarray(self.g_points, dtype=float), 1.0)
        return np.interp(np.mod(x, 1.0), fx, gx)

    def is_identity(self, tol=0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(self.f_points - self.g_points, dtype=float)) <= tol))


def _describe(fmap) -> str:
    return f"BreakMap(c={fmap.c!r}, eps={fmap.eps!r}, delta={fmap.delta!r})"


def build_conjugacy(f, g, depth: int, cf=None, backward: int | None = None) -> ConjugacyTable:
    """Orbit matching for maps whose rotation numbers agree to ``depth`` quotients.

    Stores the forward points ``0 <= i < q_N + q_{N-1}`` and the backward points
    down to ``-q_{N-2}``, and verifies that both orbits are in the same circular
    order.
    """
    if depth < 2:
        raise ValidationError("depth must be >= 2")
    cf_f = rotation_cf(f, depth)
    cf_g = rotation_cf(g, depth)
    if cf_f.quotients != cf_g.quotients:
        raise CFMismatch(f"quotients differ: {cf_f.quotients} vs {cf_g.quotients}")
    if cf is not None and tuple(cf.quotients[:depth]) != cf_f.quotients:
        raise CFMismatch("maps do not match the supplied continued fraction")
    cf = cf if cf is not None else cf_f
    fwd = cf.q(depth) + cf.q(depth - 1)
    bwd = cf.q(depth - 2) if backward is None else backward
    fo = _orbit_table(f, fwd, bwd)
    go = _orbit_table(g, fwd, bwd)
    order = np.argsort(np.asarray(fo, dtype=float), kind="stable")
    g_sorted = np.asarray(go[order], dtype=float)
    # circular order is preserved and h(p) = p, so the matched g points must
    # increase along the f order starting from p
    if not np.all(np.diff(g_sorted) > 0):
        raise CFMismatch("orbits are not in the same circular order")
    return ConjugacyTable(depth, cf, fwd, bwd, fo, go, (_describe(f), _describe(g)), fo[order], go[order])


# --------------------------------------------------------------------------
# obstruction


@dataclass
class LevelObstruction:
    level: int
    q: int
    d: np.ndarray  # per old interval
    L: np.ndarray
    f_sum: np.ndarray
    g_sum: np.ndarray
    sum_sq: np.ndarray  # squared lengths along the chosen half's orbit
    sum_sq_whole: np.ndarray
    chosen_first: np.ndarray
    smallest: int


def _split_sums(table: ConjugacyTable, fmap, orbit_at, n: int):
    """Per-index xi and squared lengths of the two halves of every old interval.

    For ``m = k + j`` the ``j``-th iterate of the first half of ``Delta_{n-1}^k``
    is the arc ``f^m(p) -> f^{m - q_n}(p)`` and of the second half
    ``f^{m - q_n}(p) -> f^{m + q_{n-1}}(p)``.
    """
    cf = table.cf
    qn, qm = cf.q(n), cf.q(n - 1)
    right = side_is_right(n - 1)
    m = np.arange(2 * qn)
    x0 = orbit_at(m)
    xs = orbit_at(m - qn)
    x1 = orbit_at(m + qm)
    la, lena = arc_from(x0, xs, right)
    lb, lenb = arc_from(xs, x1, right)
    use = 2 * qn - 1  # iterates j < q_n of k < q_n
    xa = np.asarray(xi_arcs(fmap, la[:use], lena[:use]), dtype=float)
    xb = np.asarray(xi_arcs(fmap, lb[:use], lenb[:use]), dtype=float)
    return xa, xb, np.asarray(lena, dtype=float), np.asarray(lenb, dtype=float)


def _window_sums(v: np.ndarray, width: int, count: int) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(v)])
    return c[width:width + count] - c[:count]


def level_obstruction(table: ConjugacyTable, f, g, n: int) -> LevelObstruction:
    qn = table.cf.q(n)
    fa, fb, fla, flb = _split_sums(table, f, table.f_at, n)
    ga, gb, _, _ = _split_sums(table, g, table.g_at, n)
    sq_a = _window_sums(fla[:2 * qn - 1] ** 2, qn, qn)
    sq_b = _window_sums(flb[:2 * qn - 1] ** 2, qn, qn)
    first = sq_a >= sq_b
    f_sum = np.where(first, _window_sums(fa, qn, qn), _window_sums(fb, qn, qn))
    g_sum = np.where(first, _window_sums(ga, qn, qn), _window_sums(gb, qn, qn))
    k = np.arange(qn)
    J = np.where(first, fla[k], flb[k])
    J_image = np.where(first, fla[k + qn], flb[k + qn])
    whole = fla[:qn] + flb[:qn]
    return LevelObstruction(
        level=n,
        q=qn,
        d=np.abs(f_sum - g_sum),
        L=np.maximum(J, J_image),
        f_sum=f_sum,
        g_sum=g_sum,
        sum_sq=np.where(first, sq_a, sq_b),
        sum_sq_whole=sq_a + sq_b + 2 * _window_sums(fla[:2 * qn - 1] * flb[:2 * qn - 1], qn, qn),
        chosen_first=first,
        smallest=int(np.argmin(whole)),
    )


@dataclass
class SlopeFit:
    slope: float
    r2: float
    points: list

    def to_dict(self):
        return {"slope": self.slope, "r2": self.r2, "points": self.points}


def _slope(pairs) -> SlopeFit:
    L = np.log([p[1] for p in pairs])
    d = np.log([p[0] for p in pairs])
    if np.ptp(L) == 0:
        raise DegenerateRegression("all interval scales coincide")
    fit = linear_fit(L, d)
    return SlopeFit(fit.slope, fit.r2, [[float(a), float(b)] for a, b in pairs])


@dataclass
class HolderEstimate:
    alpha_hat: float
    defined: bool
    slope: float | None
    r2: float | None
    diagnostics: dict

    def to_dict(self):
        return asdict(self)


def holder_estimate(table: ConjugacyTable, f, g, level_range, min_levels: int = 4,
                    levels: dict | None = None) -> HolderEstimate:
    """Upper bound on the Hoelder exponent of ``h'`` from the ``xi`` obstruction.

    Per level the statistic is the old interval maximising ``d / L``, where
    ``d`` is the ``xi`` mismatch along ``q_n`` iterates of the chosen half and
    ``L = max(|J|, |f^{q_n} J|)``.  The returned exponent is the slope of
    ``ln d`` against ``ln L`` across levels, capped at 1.  Alternatives (the
    90th percentile of ``d / L``, the smallest interval alone and the raw
    ``max d`` against ``max L``) are reported as diagnostics.
    """
    lo, hi = level_range
    if hi - lo + 1 < min_levels:
        raise InsufficientLevels(f"need {min_levels} levels, got {hi - lo + 1}")
    if table.depth < hi + 2:
        raise InsufficientLevels(f"table depth {table.depth} < {hi + 2}")
    primary, p90, smallest, raw = [], [], [], []
    floor = 0.0
    per_level = []
    for n in range(lo, hi + 1):
        ob = levels[n] if levels and n in levels else level_obstruction(table, f, g, n)
        floor = max(floor, float(np.max(np.abs(ob.g_sum))))
        ratio = ob.d / ob.L
        k = int(np.argmax(ratio))
        primary.append((ob.d[k], ob.L[k]))
        kq = int(np.argsort(ratio)[int(0.9 * (len(ratio) - 1))])
        p90.append((ob.d[kq], ob.L[kq]))
        smallest.append((ob.d[ob.smallest], ob.L[ob.smallest]))
        raw.append((float(np.max(ob.d)), float(np.max(ob.L))))
        per_level.append({"n": n, "q": ob.q, "maxD": float(np.max(ob.d)), "argmaxRatio": k,
                          "dStar": float(ob.d[k]), "LStar": float(ob.L[k])})
    diagnostics = {"levels": per_level, "gFloor": floor}
    if max(p[0] for p in primary) < NULL_FLOOR:
        diagnostics["note"] = "no obstruction above the precision floor"
        return HolderEstimate(1.0, False, None, None, diagnostics)
    if min(p[0] for p in primary) <= 0:
        raise DegenerateRegression("zero obstruction at some level")
    main = _slope(primary)
    diagnostics["p90"] = _slope(p90).to_dict()
    diagnostics["smallestInterval"] = _slope(smallest).to_dict()
    diagnostics["rawMax"] = _slope(raw).to_dict()
    diagnostics["primary"] = main.to_dict()
    return HolderEstimate(min(main.slope, 1.0), True, main.slope, main.r2, diagnostics)


# --------------------------------------------------------------------------
# full experiment


@dataclass
class ExperimentConfig:
    c: float = math.e
    eps: float = 1.0
    target: RotationTarget = field(default_factory=RotationTarget.golden)
    n_min: int = 8
    n_max: int = 16
    precision_digits: int = 16
    alpha_gate: float = 0.95
    n0: int = 6
    g_eps: float = 0.0
    alpha_grid: tuple = (0.80, 0.85, 0.90, 0.95, 1.00)
    bounded_slope_tol: float = 0.0

    def validate(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValidationError("c must be positive")
        if self.c == 1:
            raise ValidationError("c = 1 is excluded: the maps have no break")
        if self.eps == 0:
            raise ValidationError("eps must be nonzero for the obstruction experiment")
        if not 1 <= self.n_min < self.n_max:
            raise ValidationError("need 1 <= n_min < n_max")
        if self.precision_digits < 15:
            raise ValidationError("precision_digits must be >= 15")


@dataclass
class RigidityReport:
    alpha_hat: float
    nu_hat: float
    passed_gate: bool
    regression: dict
    lower_chain: list
    upper_chain: dict
    levels_used: tuple
    decay: dict
    constants: dict
    maps: dict
    runtime_s: float

    def to_dict(self):
        return asdict(self)


def _r_hat(parts: dict, levels) -> float:
    """Min over old intervals of (longest next-level piece) / (interval length)."""
    best = math.inf
    for n in levels:
        if n + 1 not in parts:
            continue
        coarse, fine = parts[n], parts[n + 1]
        c_left = np.asarray(coarse.old_left, dtype=float)
        c_len = coarse.old_lengths
        f_left, f_len = fine._sorted()
        f_left = np.asarray(f_left, dtype=float)
        f_len = np.asarray(f_len, dtype=float)
        order = np.argsort(c_left)
        c_sorted = c_left[order]
        # pieces of the fine partition are assigned to the coarse interval holding their midpoint
        mids = f_left + f_len / 2
        owner = np.searchsorted(c_sorted, mids, side="right") - 1
        inside = (owner >= 0) & (mids < c_sorted[np.maximum(owner, 0)] + c_len[order][np.maximum(owner, 0)])
        longest = np.zeros(len(c_sorted))
        np.maximum.at(longest, owner[inside], f_len[inside])
        best = min(best, float(np.min(longest / c_len[order])))
    return best


def tuned_pair(config: ExperimentConfig, depth: int):
    f_res = tune_delta_report(config.c, config.eps, config.target, depth)
    g_res = tune_delta_report(config.c, config.g_eps, config.target, depth)
    digits = config.precision_digits
    f = make_break_map(config.c, config.eps, f_res.delta, precision_digits=digits)
    g = make_break_map(config.c, config.g_eps, g_res.delta, precision_digits=digits)
    return f, g


def rigidity_experiment(config: ExperimentConfig) -> RigidityReport:
    """Tune ``f`` (negative Schwarzian) and ``g`` (Moebius pieces), match their
    orbits and evaluate both sides of the exponent argument level by level."""
    config.validate()
    t0 = time.perf_counter()
    N = config.n_max + 2
    f, g = tuned_pair(config, N + 1)
    cf = config.target.cf(N + 8)
    table = build_conjugacy(f, g, N, cf=cf)
    D = derivative_bound(config.c)

    levels = range(config.n_min, config.n_max + 1)
    parts, stats = {}, []
    fwd = table.f_orbit[table.backward:]
    prev = None
    for n in range(config.n_min, config.n_max + 2):
        part = dynamical_partition(f, cf, n, orbit=fwd)
        part.assert_valid()
        if prev is not None and not is_refinement(prev, part):
            raise AssertionError(f"level {n} does not refine level {n - 1}")
        parts[n] = prev = part
        if n <= config.n_max:
            stats.append(partition_stats(part, cf))
    decay = fit_decay(stats, (config.n_min, config.n_max), min_levels=min(6, len(stats)))
    r_hat = _r_hat(parts, levels)
    ledger = ledger_for(config.c, decay, r_hat)

    obs = {n: level_obstruction(table, f, g, n) for n in levels}
    est = holder_estimate(table, f, g, (config.n_min, config.n_max), levels=obs)

    lower, jn_len, s2 = [], [], []
    for n, st in zip(levels, stats):
        ob = obs[n]
        sq = float(np.sum(parts[n].old_lengths ** 2))
        l_n = st.argmin_index
        chosen, whole = float(ob.sum_sq[l_n]), float(ob.sum_sq_whole[l_n])
        lower.append({
            "n": n,
            "q": st.q,
            "qSumSquares": st.q * sq,
            "lowerBound": (1 + D) ** -2,
            "ok": st.q * sq >= (1 + D) ** -2,
            "asymptotic": n >= config.n0,
            "jnSumSquares": chosen,
            "halfOfWhole": chosen >= 0.5 * whole,
            "jnOverSum": chosen / sq,
            "jnBound": 1 / (2 * D),
            "jnOk": chosen >= sq / (2 * D),
        })
        half = _chosen_half_length(table, n, l_n, bool(ob.chosen_first[l_n]))
        jn_len.append(half)
        s2.append(sq)

    upper = {"grid": list(config.alpha_grid), "slopes": [], "bounded": []}
    ns = np.array(list(levels), dtype=float)
    for a in config.alpha_grid:
        ratio = np.log(s2) - a * np.log(jn_len)
        sl = linear_fit(ns, ratio).slope
        upper["slopes"].append(sl)
        upper["bounded"].append(bool(sl <= config.bounded_slope_tol))
    bounded = [a for a, b in zip(config.alpha_grid, upper["bounded"]) if b]
    upper["largestBoundedAlpha"] = max(bounded) if bounded else None
    upper["jnLengths"] = jn_len

    regression = {"primary": {"slope": est.slope, "r2": est.r2}, **est.diagnostics}
    return RigidityReport(
        alpha_hat=est.alpha_hat,
        nu_hat=1 - est.alpha_hat,
        passed_gate=bool(est.defined and est.alpha_hat <= config.alpha_gate),
        regression=regression,
        lower_chain=lower,
        upper_chain=upper,
        levels_used=(config.n_min, config.n_max),
        decay=asdict(decay),
        constants=ledger.to_dict(),
        maps={"f": {"c": f.c, "eps": f.eps, "delta": f.delta}, "g": {"c": g.c, "eps": g.eps, "delta": g.delta}},
        runtime_s=time.perf_counter() - t0,
    )


def _chosen_half_length(table: ConjugacyTable, n: int, k: int, first: bool) -> float:
    cf = table.cf
    qn, qm = cf.q(n), cf.q(n - 1)
    right = side_is_right(n - 1)
    a, s, b = table.f_at(k), table.f_at(k - qn), table.f_at(k + qm)
    _, length = arc_from(a, s, right) if first else arc_from(s, b, right)
    return float(length)
