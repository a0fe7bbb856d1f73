"""Threshold constants: xi*, the r0 <-> xi map, and the A/B/C partition.

For k >= 2 the SOE started at the FOE->SOE switch, psi(r0) = beta and
psi'(r0) = -g(beta) r0 / k, either turns around inside (-alpha, 0) (class A),
or falls through -alpha and escapes to -infinity (class C).  The in-between
set B is only ever represented by a bracket.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from scipy.optimize import brentq

from .builder import build_radial
from .config import SolveConfig
from .foe import h_integral
from .nonlinearity import Nonlinearity
from .soe import Event, soe_integrate

CLASS_A = "A"
CLASS_C = "C"
UNDECIDED = "undecided"
# Truncation doubles at most this many times before a run is called undecided.
MAX_DOUBLINGS = 2


def _energy_gap(nl: Nonlinearity) -> float:
    return float(nl.potential(nl.alpha)) - float(nl.potential(nl.beta))


def _right_end(f, hi: float, offset: float) -> float:
    """Move towards ``hi`` until f turns positive."""
    while f(hi - offset) <= 0:
        offset *= 1e-2
        if offset < 1e-15 * max(1.0, abs(hi)):
            raise ValueError("no sign change before the right end of the interval")
    return hi - offset


def xi_star(nl: Nonlinearity, k: int) -> float:
    """Root in (beta, alpha) of k g(beta)^2 int_beta^x ds/g = G(alpha) - G(beta).

    Raises:
        ValueError: the defining function has no sign change on (beta, alpha),
            which only happens for a non-bistable ``nl``.
    """
    gb = float(nl.eval(nl.beta))
    gap = _energy_gap(nl)

    def F(x):
        return k * gb * gb * h_integral(nl, x, nl.beta) - gap

    if not gap > 0:
        raise ValueError(f"{nl.label}: G(alpha) <= G(beta), xi* is undefined")
    b = _right_end(F, nl.alpha, 1e-3 * (nl.alpha - nl.beta))
    return brentq(F, nl.beta, b, xtol=1e-14 * nl.alpha, rtol=1e-15)


def r0_of_xi(nl: Nonlinearity, k: int, xi: float) -> float:
    """Switch radius r0 with r0^2 = 2k int_beta^xi ds/g, for beta < xi < alpha."""
    if not nl.beta < xi < nl.alpha:
        raise ValueError(f"xi={xi} is outside (beta, alpha)")
    return math.sqrt(2.0 * k * h_integral(nl, xi, nl.beta))


def xi_of_r0(nl: Nonlinearity, k: int, r0: float) -> float:
    """Inverse of :func:`r0_of_xi`.

    Solved in ``t = -ln((alpha - xi)/(alpha - beta))`` so that values of xi
    close to alpha stay resolvable.

    Raises:
        ValueError: r0 <= 0, or r0 so large that xi is within rounding of alpha.
    """
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    a, b = nl.alpha, nl.beta
    target = r0 * r0 / (2.0 * k)

    def xi_at(t):
        return a - (a - b) * math.exp(-t)

    def F(t):
        x = xi_at(t)
        if x >= a:
            return math.inf
        return h_integral(nl, x, b) - target

    hi = 1.0
    while F(hi) < 0:
        hi *= 2.0
        if xi_at(hi) >= a or hi > 1e4:
            raise ValueError(f"r0={r0} maps to xi within rounding of alpha")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while lo > 0 and F(lo) > 0:
        lo /= 2.0
        if lo < 1e-300:
            lo = 0.0
    t = brentq(F, lo, hi, xtol=1e-15, rtol=1e-15)
    return xi_at(t)


def r0_bounds(nl: Nonlinearity, k: int) -> tuple[float, float]:
    """Closed-form lower and upper bounds on the A/C boundary (k >= 2)."""
    if k < 2:
        raise ValueError("the r0 bounds hold for k >= 2 only")
    a, b = nl.alpha, nl.beta
    gb = float(nl.eval(b))
    Ga, Gb = float(nl.potential(a)), float(nl.potential(b))
    factor = k * math.sqrt(2.0) / gb
    lower = factor * math.sqrt(Ga - Gb / k)
    upper = factor * math.sqrt(Ga - Gb + (k - 1) / k * gb * (a + b))
    return lower, upper


def _switch_family_events(nl: Nonlinearity) -> list[Event]:
    a = nl.alpha
    turn = Event(
        CLASS_A, lambda r, y: y[1], direction=1, terminal=True,
        accept=lambda r, y: -a < y[0] < 0.0,
    )
    fall = Event(
        CLASS_C, lambda r, y: y[0] + a, direction=-1, terminal=True,
        accept=lambda r, y: y[1] < 0.0,
    )
    return [turn, fall]


def classify_r0(
    nl: Nonlinearity, k: int, r0: float, config: SolveConfig = SolveConfig()
) -> str:
    """A, C or ``undecided`` for psi(.; r0, beta, -g(beta) r0 / k).

    A: first psi' = 0 lands in (-alpha, 0).  C: psi crosses -alpha while
    decreasing, or the integration blows up.  Once below -alpha with psi' < 0
    the equation forbids turning back, so C is final.  A run that reaches the
    truncation radius is retried with the radius doubled, up to four times the
    configured one.
    """
    if k < 2:
        raise ValueError("the switch-start family is classified for k >= 2")
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0}")
    theta = -float(nl.eval(nl.beta)) * r0 / k
    events = _switch_family_events(nl)
    truncation = max(config.truncation, 2.0 * r0)
    for _ in range(MAX_DOUBLINGS + 1):
        traj = soe_integrate(nl, k, (r0, nl.beta, theta), events, config, truncation)
        if traj.status == "event":
            return traj.hits[-1].name
        if traj.status == "blowup":
            return CLASS_C
        truncation *= 2.0
    return UNDECIDED


@dataclass
class Bracket:
    r_lo: float
    r_hi: float
    evaluations: int
    undecided: list[float] = field(default_factory=list)
    converged: bool = True


def bisect_boundary(
    nl: Nonlinearity,
    k: int,
    tol: float = 1e-2,
    config: SolveConfig = SolveConfig(),
    initial: tuple[float, float] | None = None,
) -> Bracket:
    """Shrink a verified (A, C) bracket of the boundary to width ``tol``.

    The starting bracket is the closed-form bound pair unless ``initial`` is
    given; both ends are classified first.  An undecided midpoint is replaced
    by the two quarter points, and whichever of them is decided moves the
    corresponding end.  If neither is, bisection stops with ``converged``
    false.

    Raises:
        ValueError: an end of the starting bracket has the wrong class.
    """
    lo, hi = initial if initial is not None else r0_bounds(nl, k)
    c_lo = classify_r0(nl, k, lo, config)
    c_hi = classify_r0(nl, k, hi, config)
    out = Bracket(lo, hi, 2)
    if c_lo != CLASS_A or c_hi != CLASS_C:
        raise ValueError(
            f"bracket ends misclassified: r0={lo:.6g} -> {c_lo}, r0={hi:.6g} -> {c_hi} "
            "(try a larger truncation radius)"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        c = classify_r0(nl, k, mid, config)
        out.evaluations += 1
        if c == CLASS_A:
            lo = mid
            continue
        if c == CLASS_C:
            hi = mid
            continue
        out.undecided.append(mid)
        q1, q3 = 0.5 * (lo + mid), 0.5 * (mid + hi)
        c1 = classify_r0(nl, k, q1, config)
        c3 = classify_r0(nl, k, q3, config)
        out.evaluations += 2
        moved = False
        if c1 == CLASS_A:
            lo, moved = q1, True
        elif c1 == CLASS_C:
            hi, moved = q1, True
        if c3 == CLASS_C and q3 < hi:
            hi, moved = q3, True
        elif c3 == CLASS_A and q3 > lo:
            lo, moved = q3, True
        if not moved:
            out.converged = False
            break
    out.r_lo, out.r_hi = lo, hi
    return out


@dataclass
class ThresholdSet:
    """Thresholds for one (nonlinearity, k) pair; k = 1 has no r0 bracket."""

    label: str
    k: int
    xi_star: float
    r0_lower_bound: float | None = None
    r0_upper_bound: float | None = None
    r0_bracket: tuple[float, float] | None = None
    xi_bracket: tuple[float, float] | None = None
    tol: float | None = None
    evaluations: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def compute_thresholds(
    nl: Nonlinearity, k: int, tol: float = 1e-2, config: SolveConfig = SolveConfig()
) -> ThresholdSet:
    ts = ThresholdSet(nl.label, k, xi_star(nl, k))
    if k < 2:
        return ts
    ts.r0_lower_bound, ts.r0_upper_bound = r0_bounds(nl, k)
    br = bisect_boundary(nl, k, tol, config)
    ts.r0_bracket = (br.r_lo, br.r_hi)
    ts.xi_bracket = (xi_of_r0(nl, k, br.r_lo), xi_of_r0(nl, k, br.r_hi))
    ts.tol = tol
    ts.evaluations = br.evaluations
    ts.converged = br.converged
    return ts


@dataclass(frozen=True)
class K1ThresholdReport:
    xi_star: float
    energy_gap: float  # E0(xi*) - G(alpha)
    below_kind: str
    above_kind: str
    above_limit: float
    delta: float

    @property
    def passed(self) -> bool:
        return (
            abs(self.energy_gap) <= 1e-10
            and self.below_kind == "localized_dip"
            and self.above_kind == "sign_changing_unbounded"
            and self.above_limit == -math.inf
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["above_limit"] = str(self.above_limit)
        d["passed"] = self.passed
        return d


def k1_threshold_check(
    nl: Nonlinearity, config: SolveConfig = SolveConfig(), delta: float = 1e-3
) -> K1ThresholdReport:
    """Energy at xi* after the FOE climb, and the outcomes on either side of xi*."""
    xs = xi_star(nl, 1)
    gb = float(nl.eval(nl.beta))
    E0 = gb * gb * h_integral(nl, xs, nl.beta) + float(nl.potential(nl.beta))
    below = build_radial(nl, 1, xs - delta, config).classification
    above = build_radial(nl, 1, xs + delta, config).classification
    return K1ThresholdReport(
        xs, E0 - float(nl.potential(nl.alpha)), below.kind, above.kind,
        above.limit_value, delta,
    )
