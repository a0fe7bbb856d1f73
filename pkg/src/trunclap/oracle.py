"""Independent reference computations used to cross-check the solvers.

Nothing here is called by the production path.  The RK4 integrator is a
plain fixed-step loop, the FOE closed form comes from the Bernoulli
substitution w = u^-2 for the cubic family, and events are found by scanning
a grid for sign changes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .nonlinearity import Nonlinearity, cubic_parameters

DEFAULT_STEP = 1e-4


@dataclass
class ReferenceTrajectory:
    r: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    status: str  # 'done' or 'blowup'


def rk4_reference(
    nl: Nonlinearity,
    k: int,
    regime: str,
    start: tuple[float, float, float],
    until: float,
    step: float = DEFAULT_STEP,
    cap: float = 1e6,
    h0: float | None = None,
) -> ReferenceTrajectory:
    """Classical fixed-step RK4 for the SOE ("SOE") or FOE ("FOE") equation.

    ``start = (r0, xi, theta)``; theta is ignored for the FOE.  An SOE start
    at the origin with theta = 0 is moved to r = h0 with the series
    xi + a2 r^2 + a4 r^4 (a2 = -g/2k, a4 = g g'/(2k(4k+8))).
    """
    g = nl.eval
    r0, xi, theta = (float(x) for x in start)
    if regime == "SOE":
        if r0 == 0.0 and theta == 0.0:
            h0 = 1e-4 * max(1.0, nl.alpha) if h0 is None else h0
            gx, dgx = float(g(xi)), float(nl.deriv(xi))
            a2 = -gx / (2 * k)
            a4 = dgx * gx / (2 * k * (4 * k + 8))
            rs, us, ups = [0.0], [xi], [0.0]
            r, y = h0, (xi + a2 * h0**2 + a4 * h0**4, 2 * a2 * h0 + 4 * a4 * h0**3)
        else:
            rs, us, ups = [], [], []
            r, y = r0, (xi, theta)

        def f(r, y):
            damp = (k - 1) / r * y[1] if k > 1 else 0.0
            return (y[1], -damp - float(g(y[0])))
    elif regime == "FOE":
        rs, us, ups = [], [], []
        r, y = r0, (xi,)

        def f(r, y):
            return (-(r / k) * float(g(y[0])),)
    else:
        raise ValueError(f"unknown regime {regime!r}")

    def pack(r, y):
        rs.append(r)
        us.append(y[0])
        ups.append(y[1] if len(y) > 1 else -(r / k) * float(g(y[0])))

    pack(r, y)
    r_begin = r
    n = max(1, int(math.ceil((until - r) / step - 1e-9)))
    h = (until - r) / n
    status = "done"
    for i in range(n):
        k1 = f(r, y)
        k2 = f(r + h / 2, tuple(a + h / 2 * b for a, b in zip(y, k1)))
        k3 = f(r + h / 2, tuple(a + h / 2 * b for a, b in zip(y, k2)))
        k4 = f(r + h, tuple(a + h * b for a, b in zip(y, k3)))
        y = tuple(
            a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
            for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
        )
        r = r_begin + (i + 1) * h
        pack(r, y)
        if abs(y[0]) > cap or not math.isfinite(y[0]):
            status = "blowup"
            break
    return ReferenceTrajectory(np.array(rs), np.array(us), np.array(ups), status)


def bernoulli_foe(
    scale: float, k: int, r0: float, xi: float, r, prefactor: float = 1.0
):
    """FOE solution for g = prefactor (u - u^3/scale):

    u(r) = sign(xi) [1/scale + (xi^-2 - 1/scale) exp(prefactor (r^2 - r0^2)/k)]^(-1/2).

    Raises:
        ValueError: xi = 0 or r past the blow-up radius.
    """
    if xi == 0:
        raise ValueError("xi = 0 is an equilibrium; the substitution w = u^-2 fails")
    r = np.asarray(r, dtype=float)
    inv = 1.0 / scale
    with np.errstate(over="ignore"):
        # On the trapped branch the exponential overflows to inf and u -> 0.
        bracket = inv + (1.0 / xi**2 - inv) * np.exp(prefactor * (r * r - r0 * r0) / k)
    if np.any(bracket <= 0):
        raise ValueError("r lies at or beyond the blow-up radius")
    out = math.copysign(1.0, xi) / np.sqrt(bracket)
    return float(out) if out.ndim == 0 else out


def bernoulli_blowup_radius(
    scale: float, k: int, r0: float, xi: float, prefactor: float = 1.0
) -> float:
    """Radius where the Bernoulli bracket vanishes; inf when |xi| <= sqrt(scale)."""
    if xi * xi <= scale:
        return math.inf
    return math.sqrt(r0 * r0 + (k / prefactor) * math.log(xi * xi / (xi * xi - scale)))


def event_scan(
    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    fn: Callable[[float, float, float], float],
    r_min: float,
    r_max: float,
    step: float = 1e-3,
    xtol: float = 1e-13,
) -> list[float]:
    """Roots of ``fn(r, u, u')`` located by a grid scan and bisection.

    ``evaluate`` maps radii to (u, u'), e.g. a trajectory's dense output.
    """
    n = max(2, int(math.ceil((r_max - r_min) / step)) + 1)
    grid = np.linspace(r_min, r_max, n)
    u, up = evaluate(grid)
    vals = np.array([fn(r, a, b) for r, a, b in zip(grid, u, up)])

    def F(r):
        uu, uup = evaluate(np.array([r]))
        return fn(r, float(uu[0]), float(uup[0]))

    roots = []
    for i in range(n - 1):
        a, b = vals[i], vals[i + 1]
        if a == 0:
            roots.append(float(grid[i]))
            continue
        if a * b < 0:
            lo, hi, flo = grid[i], grid[i + 1], a
            while hi - lo > xtol:
                mid = 0.5 * (lo + hi)
                fm = F(mid)
                if fm == 0:
                    lo = hi = mid
                    break
                if (fm < 0) == (flo < 0):
                    lo, flo = mid, fm
                else:
                    hi = mid
            roots.append(float(0.5 * (lo + hi)))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    return roots


@dataclass(frozen=True)
class OracleReport:
    name: str
    main: float
    oracle: float
    abs_dev: float
    rel_dev: float
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def compare(name: str, main: float, oracle: float, tol: float, relative: bool = False) -> OracleReport:
    abs_dev = abs(main - oracle)
    rel_dev = abs_dev / abs(oracle) if oracle != 0 else (0.0 if main == 0 else math.inf)
    dev = rel_dev if relative else abs_dev
    return OracleReport(name, float(main), float(oracle), abs_dev, rel_dev, tol, bool(dev <= tol))


def cross_check(solution, nl: Nonlinearity, k: int, span: float = 20.0) -> list[OracleReport]:
    """Compare a built solution against the oracles segment by segment.

    FOE pieces are checked against the Bernoulli form (cubic family only).
    The first SOE piece is rerun with RK4 over at most ``span`` in r.  Both
    comparisons skip samples with |u| > 100 alpha: near blow-up the Bernoulli
    form cancels catastrophically and a fixed step cannot keep up.
    """
    reports = []
    params = cubic_parameters(nl)
    sign = -1.0 if solution.equation == "minus" else 1.0
    for i, seg in enumerate(solution.segments):
        if seg.regime == "FOE" and seg.foe_start is not None and params is not None:
            r0, x0 = seg.foe_start
            u = sign * seg.u
            keep = np.abs(u) <= 100 * nl.alpha
            if not np.any(keep):
                continue
            ref = sign * np.asarray(
                bernoulli_foe(params[1], k, r0, x0, seg.r[keep], params[0])
            )
            dev = np.abs(seg.u[keep] - ref) / np.maximum(1.0, np.abs(ref))
            j = int(np.argmax(dev))
            reports.append(OracleReport(
                f"segment {i} FOE vs Bernoulli", float(seg.u[keep][j]), float(ref[j]),
                float(np.abs(seg.u[keep] - ref)[j]), float(dev[j]), 1e-10,
                bool(dev[j] <= 1e-10),
            ))
    soe = [s for s in solution.segments if s.regime == "SOE" and s.soe is not None]
    if soe:
        seg = soe[0]
        traj = seg.soe
        r_start = float(traj.r[0])
        until = min(traj.r_end, r_start + span)
        if traj.series is not None:
            start = (0.0, traj.series[0], 0.0)
            h0 = traj.series[3]
        else:
            start = (r_start, float(traj.u[0]), float(traj.uprime[0]))
            h0 = None
        ref = rk4_reference(nl, k, "SOE", start, until, h0=h0)
        inside = (ref.r >= r_start) & (ref.r <= until) & (np.abs(ref.u) <= 100 * nl.alpha)
        if np.any(inside):
            u_main, _ = traj.evaluate(ref.r[inside])
            dev = np.abs(u_main - ref.u[inside]) / np.maximum(1.0, np.abs(ref.u[inside]))
            j = int(np.argmax(dev))
            reports.append(OracleReport(
                "first SOE segment vs RK4", float(sign * u_main[j]),
                float(sign * ref.u[inside][j]), float(dev[j]), float(dev[j]), 1e-7,
                bool(dev[j] <= 1e-7),
            ))
    return reports
