"""Break-size constants and the empirical exponent bookkeeping."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ValidationError

# slack factor on the universal derivative bound, kept fixed across all checks
D_SLACK = 1.05


def c_hat(c: float) -> float:
    return max(c, 1.0 / c)


def derivative_bound(c: float) -> float:
    """Bound ``D(c)`` with ``1/D < (f^{q_n})' < D`` for large ``n``."""
    return D_SLACK * c_hat(c) ** 4


def nu_formula(gamma2: float, r: float) -> float:
    """Exponent loss ``ln gamma2 / (2 ln r + ln gamma2)``."""
    return math.log(gamma2) / (2 * math.log(r) + math.log(gamma2))


@dataclass(frozen=True)
class ConstantsLedger:
    c: float
    c_hat: float
    D: float
    Lambda: float
    gamma1_hat: float | None = None
    gamma2_hat: float | None = None
    r_hat: float | None = None
    nu_formula: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def ledger_for(c: float, fits=None, r_estimate: float | None = None) -> ConstantsLedger:
    """Formula constants for break size ``c`` plus whatever estimates are supplied.

    ``fits`` is a :class:`~circlebreak.partition.DecayFit` (or ``None``).
    """
    if not (isinstance(c, (int, float)) and math.isfinite(c) and c > 0):
        raise ValidationError("c must be a positive finite real")
    if c == 1:
        raise ValidationError("c = 1 has no break")
    ch = c_hat(c)
    D = derivative_bound(c)
    g1 = g2 = None
    if fits is not None:
        g1, g2 = fits.gamma1_hat, fits.gamma2_hat
    nu = None
    if g2 is not None and r_estimate is not None and 0 < g2 < 1 and 0 < r_estimate < 1:
        nu = nu_formula(g2, r_estimate)
    return ConstantsLedger(c, ch, D, 1.0 / (1.0 + 1.0 / D), g1, g2, r_estimate, nu)
