"""Renormalization of break maps and the fractional-linear limit family.

For a break map the level-``n`` pair is the first-return map to
``[f^{q_{n-1}}(p) .. f^{q_n}(p)]`` written in the affine coordinate ``z`` with
``z(p) = 0`` and ``z(f^{q_{n-1}}(p)) = -1``:

* ``f_n(z) = A^{-1} F^{q_n} A(z)`` on ``[-1, 0]``,
* ``g_n(z) = A^{-1} F^{q_{n-1}} A(z)`` on ``[0, alpha_n]``.

The pair converges to ``F(z) = (alpha + sqrt(c) z) / (1 - v z)`` with its
companion ``G``; inside that family renormalization is a matrix identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .circle import LEFT, RIGHT, Jet3, iterate_jet
from .errors import DegenerateFit, OutOfFamily, PrecisionExhausted, ValidationError
from .rotation import ContinuedFraction, _classify, rotation_cf

# --------------------------------------------------------------------------
# break-map renormalization


def _power_minus_shift(fmap, x, q: int, shift: int):
    """``F^q(x) - shift`` with exact winding bookkeeping (vectorised)."""
    x = np.asarray(x, dtype=float)
    w = np.floor(x)
    y = x - w
    for _ in range(q):
        y = np.asarray(fmap(y), dtype=float)
        k = np.floor(y)
        y = y - k
        w = w + k
    return y + (w - shift)


@dataclass(frozen=True)
class ReturnBranch:
    """``z -> (F^q(scale z) - shift) / scale``, one branch of the return map."""

    fmap: object
    q: int
    shift: int
    scale: float
    zero_side: str  # side of the break used at z = 0

    def __call__(self, z):
        out = _power_minus_shift(self.fmap, self.scale * np.asarray(z, dtype=float), self.q, self.shift) / self.scale
        return out if np.ndim(z) else float(out)

    def jet(self, z) -> Jet3:
        z = np.asarray(z, dtype=float)
        x = self.scale * z
        if np.ndim(x):
            side = self.zero_side
        else:
            side = self.zero_side if x == 0 else None
        j = iterate_jet(self.fmap, x, self.q, side=side or RIGHT)
        s = self.scale
        return Jet3(self(z), j.d1, j.d2 * s, j.d3 * s * s)


@dataclass(frozen=True)
class RenormPair:
    level: int
    alpha: float
    f_branch: object
    g_branch: object
    c_n: float

    def break_product(self, literal: bool = False) -> float:
        """Product of the two break sizes of the glued return map.

        Break sizes are left over right derivative in the orientation of the
        original circle.  ``literal=True`` returns the z-coordinate ratio
        ``g'(0)/f'(0) * f'(-1)/g'(alpha)`` instead, which is the inverse of
        that product whenever ``z`` preserves orientation.
        """
        f, g = self.f_branch, self.g_branch
        ratio = (g.jet(0.0).d1 / f.jet(0.0).d1) * (f.jet(-1.0).d1 / g.jet(self.alpha).d1)
        ratio = float(ratio)
        if literal or f.scale < 0:
            return ratio
        return 1.0 / ratio

    def checks(self) -> dict:
        f, g, a = self.f_branch, self.g_branch, self.alpha
        c = self.f_branch.fmap.c
        return {
            "f0": abs(f(0.0) - a),
            "g0": abs(g(0.0) + 1),
            "commute": abs(f(-1.0) - g(a)),
            "breakProduct": self.break_product(),
            "breakProductResidual": abs(self.break_product() / c - 1),
            "literalBreakProduct": self.break_product(literal=True),
        }


def renormalize(fmap, cf: ContinuedFraction, n: int) -> RenormPair:
    """Level-``n`` renormalization pair of a break map with ``p = 0``."""
    if n < 1:
        raise ValidationError("level must be >= 1")
    if fmap.is_high_precision:
        raise ValidationError("renormalize runs in binary64")
    qn, qm = cf.q(n), cf.q(n - 1)
    pn, pm = cf.p(n), cf.p(n - 1)
    pts, wind = fmap.circle_orbit(0.0, qn)
    s = pts[qm] + (wind[qm] - pm)  # f^{q_{n-1}}(p) relative to p
    t = pts[qn] + (wind[qn] - pn)
    if not s * t < 0:
        raise PrecisionExhausted(f"closest returns at level {n} are not on opposite sides", level=n)
    if min(abs(s), abs(t)) < 100 * fmap.unit_roundoff:
        raise PrecisionExhausted(f"fundamental interval at level {n} below 100u", level=n)
    scale = -s
    toward_s = RIGHT if s > 0 else LEFT
    toward_t = RIGHT if t > 0 else LEFT
    f_branch = ReturnBranch(fmap, qn, pn, scale, toward_s)
    g_branch = ReturnBranch(fmap, qm, pm, scale, toward_t)
    c_n = fmap.c ** (1 if n % 2 == 0 else -1)
    return RenormPair(n, -t / s, f_branch, g_branch, c_n)


# --------------------------------------------------------------------------
# fractional-linear family


def fl_value(z, alpha, v, c):
    return (alpha + math.sqrt(c) * z) / (1 - v * z)


def fl_derivs(z, alpha, v, c):
    """First and second derivative of ``F_{alpha, v, c}``."""
    k = math.sqrt(c) + alpha * v
    den = 1 - v * z
    return k / den**2, 2 * v * k / den**3


def uc_contains(alpha, v, c, slack: float = 0.0) -> bool:
    rc = math.sqrt(c)
    lo, hi = sorted(((rc - 1) / 2, rc - 1))
    return (-slack <= alpha <= rc + slack) and (lo - slack <= v <= hi + slack)


@dataclass(frozen=True)
class FitResult:
    alpha: float
    v: float
    dist_c0: float
    dist_c2: float
    in_uc: bool
    c: float


def chebyshev_lobatto(m: int, a: float = -1.0, b: float = 0.0) -> np.ndarray:
    k = np.arange(m)
    x = np.cos(np.pi * k / (m - 1))
    return np.sort(a + (b - a) * (x + 1) / 2)


def fit_fractional_linear(pair, nodes: int = 33, grid: int = 257) -> FitResult:
    """Least-squares ``v`` with ``alpha = alpha_n`` fixed, then distances to the fit.

    Starts from the linearised normal equation and polishes with Gauss-Newton
    on the value residuals.
    """
    alpha, c = float(pair.alpha), float(pair.c_n)
    rc = math.sqrt(c)
    z = chebyshev_lobatto(nodes)
    f = np.asarray(pair.f_branch(z), dtype=float)
    zf = z * f
    den = float(np.dot(zf, zf))
    if den == 0 or not math.isfinite(den):
        raise DegenerateFit("normal equation is singular")
    v = float(np.dot(zf, f - alpha - rc * z) / den)
    for _ in range(60):
        model = (alpha + rc * z) / (1 - v * z)
        jac = z * (alpha + rc * z) / (1 - v * z) ** 2
        jj = float(np.dot(jac, jac))
        if jj == 0:
            break
        step = float(np.dot(jac, f - model) / jj)
        v += step
        if abs(step) <= 1e-16 * (1 + abs(v)):
            break
    zz = np.linspace(-1.0, 0.0, grid)
    fv = np.asarray(pair.f_branch(zz), dtype=float)
    d0 = float(np.max(np.abs(fv - fl_value(zz, alpha, v, c))))
    j = pair.f_branch.jet(zz)
    d1m, d2m = fl_derivs(zz, alpha, v, c)
    d1 = float(np.max(np.abs(np.asarray(j.d1, dtype=float) - d1m)))
    d2 = float(np.max(np.abs(np.asarray(j.d2, dtype=float) - d2m)))
    return FitResult(alpha, v, d0, max(d0, d1, d2), uc_contains(alpha, v, c), c)


@dataclass(frozen=True)
class MobiusMap:
    """``z -> (a z + b) / (c z + d)`` for ``m = ((a, b), (c, d))``."""

    m: tuple

    @classmethod
    def of(cls, arr) -> "MobiusMap":
        a = np.asarray(arr, dtype=float)
        if a.shape != (2, 2):
            raise ValidationError("need a 2x2 matrix")
        if np.linalg.det(a) == 0:
            raise ValidationError("singular matrix")
        return cls(tuple(map(tuple, a.tolist())))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.m, dtype=float)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.array))

    def __call__(self, z):
        (a, b), (c, d) = self.m
        return (a * z + b) / (c * z + d)

    def __matmul__(self, other: "MobiusMap") -> "MobiusMap":
        return MobiusMap.of(self.array @ other.array)

    def scaled(self, k: float) -> "MobiusMap":
        return MobiusMap.of(k * self.array)

    def normalized(self) -> np.ndarray:
        """Unit Frobenius norm with a positive leading nonzero entry (projective representative)."""
        a = self.array / np.linalg.norm(self.array)
        lead = a.flat[np.flatnonzero(np.abs(a) > 1e-300)[0]]
        return a if lead > 0 else -a

    def power(self, k: int) -> "MobiusMap":
        return MobiusMap.of(np.linalg.matrix_power(self.array, k))


def projective_distance(m1: np.ndarray, m2: np.ndarray) -> float:
    a = m1 / np.linalg.norm(m1)
    b = m2 / np.linalg.norm(m2)
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


@dataclass(frozen=True)
class MobiusPairParams:
    alpha: float
    v: float
    c: float

    def __post_init__(self):
        for name in ("alpha", "v", "c"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if not self.c > 0:
            raise ValidationError("c must be positive")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")

    @property
    def in_uc(self) -> bool:
        return uc_contains(self.alpha, self.v, self.c)

    def F(self) -> MobiusMap:
        rc = math.sqrt(self.c)
        return MobiusMap.of([[rc, self.alpha], [-self.v, 1.0]])

    def G(self) -> MobiusMap:
        rc = math.sqrt(self.c)
        a = self.alpha
        return MobiusMap.of([[a, -a * rc], [1 + self.v - rc, a * rc]])

    def circle(self) -> "MobiusCircle":
        return MobiusCircle(self.F(), self.G(), self.alpha)

    def check_homeomorphism(self):
        """Both branches increasing and without poles on their domains."""
        F, G = self.F(), self.G()
        if F.det <= 0 or G.det <= 0:
            raise OutOfFamily("branches must preserve orientation")
        for M, (lo, hi) in ((F, (-1.0, 0.0)), (G, (0.0, self.alpha))):
            (_, _), (c, d) = M.m
            den = np.array([c * lo + d, c * hi + d])
            if not (np.all(den > 0) or np.all(den < 0)):
                raise OutOfFamily("pole inside a branch domain")


@dataclass(frozen=True)
class FLBranch:
    """``F_{alpha, v, c}`` as a jet-evaluable branch (for fitting tests)."""

    alpha: float
    v: float
    c: float

    def __call__(self, z):
        return fl_value(np.asarray(z, dtype=float), self.alpha, self.v, self.c)

    def jet(self, z) -> Jet3:
        z = np.asarray(z, dtype=float)
        k = math.sqrt(self.c) + self.alpha * self.v
        den = 1 - self.v * z
        return Jet3(self(z), k / den**2, 2 * self.v * k / den**3, 6 * self.v**2 * k / den**4)


@dataclass(frozen=True)
class FLPair:
    """A fittable pair whose first branch is exactly fractional linear."""

    alpha: float
    c_n: float
    f_branch: object


class MobiusCircle:
    """``T``: ``F`` on ``[-1, 0]``, ``G`` on ``[0, alpha]``, glued at ``-1 ~ alpha``.

    Lifted to the unit circle through ``theta = z / (1 + alpha)`` on
    ``[0, alpha]`` and ``theta = 1 + z / (1 + alpha)`` on ``[-1, 0]``.
    """

    p = 0.0
    unit_roundoff = 2.0**-53
    is_high_precision = False

    def __init__(self, F: MobiusMap, G: MobiusMap, alpha: float):
        self.F, self.G, self.alpha = F, G, float(alpha)
        self.L = 1.0 + self.alpha
        self.cut = self.alpha / self.L
        (self._fa, self._fb), (self._fc, self._fd) = F.m
        (self._ga, self._gb), (self._gc, self._gd) = G.m

    @property
    def backend(self):
        from .circle import backend_for

        return backend_for(16)

    def _step(self, theta: float) -> float:
        k = math.floor(theta)
        t = theta - k
        if t < self.cut:
            z = t * self.L
            w = (self._ga * z + self._gb) / (self._gc * z + self._gd)
        else:
            z = (t - 1) * self.L
            w = (self._fa * z + self._fb) / (self._fc * z + self._fd)
        return k + 1 + w / self.L

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        k = np.floor(th)
        t = th - k
        zg = t * self.L
        zf = (t - 1) * self.L
        wg = (self._ga * zg + self._gb) / (self._gc * zg + self._gd)
        wf = (self._fa * zf + self._fb) / (self._fc * zf + self._fd)
        out = k + 1 + np.where(t < self.cut, wg, wf) / self.L
        return out if np.ndim(theta) else float(out)

    def circle_orbit(self, x0, n: int, backward: bool = False):
        if backward:
            raise NotImplementedError("backward orbits of T are not needed")
        x = float(x0)
        w = math.floor(x)
        x -= w
        pts, wind = [x], [w]
        for _ in range(n):
            y = self._step(x)
            k = math.floor(y)
            x = y - k
            if x >= 1.0:
                x -= 1.0
                k += 1
            w += k
            pts.append(x)
            wind.append(w)
        return pts, wind


def pair_rotation_cf(params: MobiusPairParams, depth: int, **kw) -> ContinuedFraction:
    """Rotation data of the pair: ``x = r / (1 - r)`` for ``r = rho(T)``.

    In continued fractions this strips one from the first quotient of ``r``.
    """
    cf = rotation_cf(params.circle(), depth, **kw)
    qs = list(cf.quotients)
    if qs[0] < 2:
        raise ValidationError("pair rotation number must lie below 1")
    qs[0] -= 1
    r = cf.value
    return ContinuedFraction(tuple(qs), r / (1 - r))


def mobius_renorm_step(params: MobiusPairParams, a: int, rtol: float = 1e-10) -> MobiusPairParams:
    """Exact first-return pair of ``T_{alpha, v, c}`` on the next fundamental interval.

    ``f' = f^a o g`` on ``[0, alpha]`` and ``g' = f`` on ``[f^a(-1), 0]``,
    rescaled by ``z = -alpha z'``.  The result is normalised to the same
    family with ``c`` replaced by ``1 / c``.
    """
    if a < 1:
        raise ValidationError("partial quotient must be >= 1")
    params.check_homeomorphism()
    A, B = params.F(), params.G()
    alpha = params.alpha
    z = -1.0
    for _ in range(a):
        z = A(z)
    z_next = A(z)
    if not (z <= 0 < z_next):
        raise ValidationError(f"a = {a} is not the current partial quotient")
    S = MobiusMap.of([[-alpha, 0.0], [0.0, 1.0]])
    S_inv = MobiusMap.of([[-1.0 / alpha, 0.0], [0.0, 1.0]])
    Fn = (S_inv @ A.power(a) @ B @ S).array
    Gn = (S_inv @ A @ S).array
    Fn = Fn / Fn[1, 1]
    c_new = 1.0 / params.c
    if abs(Fn[0, 0] - math.sqrt(c_new)) > rtol * max(1.0, math.sqrt(c_new)):
        raise OutOfFamily(f"leading coefficient {Fn[0, 0]!r} != sqrt(1/c)")
    out = MobiusPairParams(alpha=float(Fn[0, 1]), v=float(-Fn[1, 0]), c=c_new)
    if abs(out.alpha - (-z / alpha)) > rtol * max(1.0, out.alpha):
        raise OutOfFamily("rescaled return length disagrees with F(0)")
    if projective_distance(Gn, out.G().array) > rtol:
        raise OutOfFamily("second branch is not of the companion form")
    return out


def tune_pair_alpha(v: float, c: float, target_cf: ContinuedFraction, depth: int,
                    bracket=None, guard: int = 2, max_steps: int = 200) -> MobiusPairParams:
    """``alpha`` with the pair's rotation quotients equal to ``target_cf`` to ``depth``.

    Bisection on the cylinder classification of ``r = rho(T)``.  Monotonicity
    in ``alpha`` is not known, so the bracket is only required to straddle the
    target and continuity does the rest.
    """
    rq = list(target_cf.quotients[: depth + guard])
    rq[0] += 1
    conv = ContinuedFraction(tuple(rq)).convergents
    need = depth + guard
    budget = conv[need][1] + 1
    lo, hi = bracket or (1e-6, math.sqrt(c))

    def cls(alpha):
        return _classify(MobiusPairParams(alpha, v, c).circle(), conv, need, budget)

    c_lo, c_hi = cls(lo), cls(hi)
    if c_lo == 0:
        return MobiusPairParams(lo, v, c)
    if c_hi == 0:
        return MobiusPairParams(hi, v, c)
    if c_lo == c_hi:
        raise ValidationError("alpha bracket does not straddle the target")
    for _ in range(max_steps):
        mid = (lo + hi) / 2
        cm = cls(mid)
        if cm == 0:
            return MobiusPairParams(mid, v, c)
        if cm == c_lo:
            lo = mid
        else:
            hi = mid
    raise PrecisionExhausted("alpha bisection did not reach the target cylinder")


@dataclass(frozen=True)
class ProbeResult:
    conjugate: bool
    matrix: MobiusMap | None
    residual: float
    u: float


def _as_matrices(t):
    if isinstance(t, MobiusPairParams):
        return t.F().array, t.G().array
    A, B = t
    return (A.array if isinstance(A, MobiusMap) else np.asarray(A, dtype=float),
            B.array if isinstance(B, MobiusMap) else np.asarray(B, dtype=float))


def _aligned(M, T):
    """``M`` scaled to unit norm with the sign that best matches ``T``."""
    M = M / np.linalg.norm(M)
    return M if np.sum(M * T) >= 0 else -M


def _polish(A1, B1, A2, B2, u, steps: int = 30):
    """Gauss-Newton on the smooth residual; the projective distance itself has a kink at zero."""
    TA, TB = A2 / np.linalg.norm(A2), B2 / np.linalg.norm(B2)

    def r(u):
        C = np.array([[1.0, 0.0], [u, u + 1.0]])
        Ci = np.linalg.inv(C)
        return np.concatenate([(_aligned(C @ A1 @ Ci, TA) - TA).ravel(), (_aligned(C @ B1 @ Ci, TB) - TB).ravel()])

    for _ in range(steps):
        if not u > -1:
            break
        h = 1e-7 * (1 + abs(u))
        J = (r(u + h) - r(u - h)) / (2 * h)
        jj = float(J @ J)
        if jj == 0:
            break
        step = float(J @ r(u)) / jj
        u -= step
        if abs(step) <= 1e-15 * (1 + abs(u)):
            break
    return u if u > -1 else 0.0


def mobius_conjugacy_probe(t1, t2, tol: float = 1e-10) -> ProbeResult:
    """Search ``C = ((1, 0), (u, u + 1))`` with ``C A1 C^-1 ~ A2`` and ``C B1 C^-1 ~ B2``.

    ``C`` fixes ``0`` and ``-1``, which pins it to this one-parameter form.
    The residual is the projective (norm-one, sign-free) mismatch minimised
    over ``u > -1``.
    """
    A1, B1 = _as_matrices(t1)
    A2, B2 = _as_matrices(t2)

    def mismatch(u):
        C = np.array([[1.0, 0.0], [u, u + 1.0]])
        Ci = np.linalg.inv(C)
        return max(projective_distance(C @ A1 @ Ci, A2), projective_distance(C @ B1 @ Ci, B2))

    # parametrise u = exp(s) - 1 so the search covers u > -1
    candidates = [(mismatch(0.0), 0.0)]
    grid = np.linspace(-8.0, 8.0, 161)
    vals = [mismatch(math.expm1(s)) for s in grid]
    i = int(np.argmin(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda s: mismatch(math.expm1(s)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    u_star = _polish(A1, B1, A2, B2, math.expm1(float(res.x)))
    candidates += [(float(res.fun), math.expm1(float(res.x))), (mismatch(u_star), u_star)]
    residual, u = min(candidates)
    conj = residual < tol
    C = MobiusMap.of([[1.0, 0.0], [u, u + 1.0]]) if conj else None
    return ProbeResult(conj, C, residual, u)
