"""First-order regime  phi' = -(r/k) g(phi).

Trajectories are never stepped.  Separating variables gives
``int_phi^xi ds/g(s) = (r^2 - r0^2) / (2k)``, and this module inverts that
relation.  All integrals of ``1/g`` are taken in the logarithmic variable
``s = xi * exp(+-y)`` where the integrand ``s/g(s)`` stays bounded near the
zero of ``g`` at the origin.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import IntegrationWarning, quad

from .nonlinearity import Nonlinearity

QUAD_EPSREL = 1e-12
INVERSION_TOL = 1e-12
DIVERGENCE_THRESHOLD = 1e8
# exp(-v) underflows past this many e-folds below the starting value.
_UNDERFLOW_V = 690.0
_FAR_VALUE = 1e100
# Relative distance to +-alpha below which g is replaced by its Taylor
# expansion; second order is then more accurate than direct evaluation.
_TAYLOR_BAND = 5e-6

_GL20 = leggauss(20)
_GL10 = leggauss(10)


@dataclass(frozen=True)
class FoeState:
    r: float
    u: float
    uprime: float
    Au: float


def _zeros(nl: Nonlinearity) -> tuple[float, float, float]:
    return (-nl.alpha, 0.0, nl.alpha)


def foe_state(nl: Nonlinearity, k: int, r: float, u: float) -> FoeState:
    """State on the FOE at radius r with value u; u' and Au follow from the ODE."""
    g = float(nl.eval(u))
    return FoeState(r, u, -(r / k) * g, (r * r) / (k * k) * g * float(nl.deriv(u)))


def foe_second_derivative(nl: Nonlinearity, k: int, r: float, u: float) -> float:
    """u'' obtained by differentiating the FOE once."""
    g = float(nl.eval(u))
    return -g / k + (r * r) / (k * k) * g * float(nl.deriv(u))


def _quad(f, a: float, b: float, epsrel: float = 1e-13, limit: int = 200) -> float:
    """``quad`` that splits geometrically towards an endpoint where f is large.

    Near a zero of g the log-variable integrand behaves like 1/(c + y) with
    c down to machine precision; quad alone then exhausts its subdivisions.
    """
    if a == b:
        return 0.0
    fa, fb, fm = abs(f(a)), abs(f(b)), abs(f(0.5 * (a + b)))
    pts = []
    for end, other, fe in ((a, b, fa), (b, a, fb)):
        if np.isfinite(fe) and fe > 1e3 * max(fm, 1e-300):
            pts += [end + (other - end) * 10.0**-j for j in range(1, 17)]
    edges = np.unique(np.concatenate([[a, b], pts]))
    with warnings.catch_warnings():
        # Remaining roundoff warnings concern pieces that are already at
        # machine precision relative to the total.
        warnings.simplefilter("ignore", IntegrationWarning)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += quad(f, lo, hi, epsabs=1e-15, epsrel=epsrel, limit=limit)[0]
    return total if a < b else -total


def h_integral(nl: Nonlinearity, xi: float, t: float) -> float:
    """Return ``int_t^xi ds / g(s)``.

    Infinite when an endpoint is a zero of ``g``.

    Raises:
        ValueError: a zero of ``g`` lies strictly between ``t`` and ``xi``.
    """
    if xi == t:
        return 0.0
    lo, hi = min(xi, t), max(xi, t)
    for z in _zeros(nl):
        if lo < z < hi:
            raise ValueError(
                f"interval [{lo:.6g}, {hi:.6g}] contains the zero {z:.6g} of g"
            )
    mid = 0.5 * (lo + hi)
    orientation = 1.0 if xi > t else -1.0
    if any(e in _zeros(nl) for e in (xi, t)):
        return orientation * math.copysign(math.inf, float(nl.eval(mid)))

    # Anchor the log variable at the endpoint closer to +-alpha so that the
    # integrand keeps its accuracy there.
    anchor, other = sorted((xi, t), key=lambda e: abs(abs(e) - nl.alpha))
    span = abs(math.log(abs(other) / abs(anchor)))
    return orientation * math.copysign(1.0, float(nl.eval(mid))) * _Branch(nl, anchor).phi(span)


class _Branch:
    """Monotone FOE branch through xi, parametrised by v = |ln(phi / xi)|.

    ``phi(v) = xi * exp(sigma * v)`` with ``sigma = -1`` on the trapped
    branch (|xi| < alpha) and ``+1`` on the escaping branch (|xi| > alpha).
    ``Phi(v) = int_0^v w`` equals ``(r^2 - r0^2) / (2k)``.
    """

    def __init__(self, nl: Nonlinearity, xi: float):
        if xi == 0 or abs(xi) == nl.alpha:
            raise ValueError(f"xi={xi} is a zero of g; the FOE solution is constant")
        self.nl = nl
        self.xi = float(xi)
        self.sigma = -1.0 if abs(xi) < nl.alpha else 1.0
        self.zero = math.copysign(nl.alpha, xi)
        self.dg = float(nl.deriv(self.zero))
        self.d2g = float(nl.deriv2(self.zero))

    def value(self, v):
        return self.xi * np.exp(self.sigma * np.asarray(v, dtype=float))

    def w(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            s = self.value(y)
            out = np.abs(s / np.asarray(self.nl.eval(s), dtype=float))
            # Next to +-alpha, g(s) cancels catastrophically; expand it about
            # the zero with the offset s - zero taken from expm1 instead.
            d = (self.xi - self.zero) + self.xi * np.expm1(self.sigma * y)
            near = np.abs(d) < _TAYLOR_BAND * self.nl.alpha
            if np.any(near):
                taylor = np.abs(s / (d * (self.dg + 0.5 * self.d2g * d)))
                out = np.where(near, taylor, out)
        # s/g(s) -> 1/g'(0) once s underflows to zero.
        return np.where(s == 0, 1.0 / abs(float(self.nl.deriv(0.0))), out)

    def _w_scalar(self, y: float) -> float:
        return float(self.w(y))

    def integrate(self, a, b) -> np.ndarray:
        """Vectorised ``int_a^b w`` per interval; Gauss-Legendre with quad fallback."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)

        def gl(rule):
            x, wt = rule
            nodes = mid[:, None] + half[:, None] * x[None, :]
            return half * (self.w(nodes) * wt[None, :]).sum(axis=1)

        fine = gl(_GL20)
        coarse = gl(_GL10)
        bad = np.abs(fine - coarse) > 1e-13 * np.maximum(np.abs(fine), 1e-300)
        for i in np.flatnonzero(bad & (half != 0)):
            fine[i] = _quad(self._w_scalar, a[i], b[i])
        return fine

    def phi(self, v: float) -> float:
        if v <= 0:
            return 0.0
        return _quad(self._w_scalar, 0.0, v, limit=500)

    def phi_inf(self) -> float:
        """``Phi(+inf)``; infinite when the tail diverges (trapped branch always).

        The escaping branch is integrated up to |phi| = 1e100 and the rest is
        estimated from the local exponential decay rate of the integrand.
        """
        if self.sigma < 0:
            return math.inf
        y_max = math.log(_FAR_VALUE / abs(self.xi))
        val = _quad(self._w_scalar, 0.0, y_max, limit=500)
        if not np.isfinite(val) or val > DIVERGENCE_THRESHOLD:
            return math.inf
        w_end = self._w_scalar(y_max)
        if w_end == 0.0:
            return val
        rate = (math.log(self._w_scalar(y_max - 1.0)) - math.log(w_end))
        if rate < 1e-3:
            return math.inf
        tail = w_end / rate
        if val + tail > DIVERGENCE_THRESHOLD:
            return math.inf
        return val + tail

    def invert_table(self, targets, v_tab, T_tab) -> np.ndarray:
        """Vectorised inversion of ``Phi`` seeded from a tabulated (v, Phi) grid.

        Targets beyond the table are extrapolated linearly; this only happens
        on the trapped branch after ``phi`` has underflowed to zero.
        """
        targets = np.asarray(targets, dtype=float)
        out = np.empty_like(targets)
        inside = targets <= T_tab[-1]
        tt = targets[inside]
        j = np.clip(np.searchsorted(T_tab, tt, side="right") - 1, 0, len(T_tab) - 2)
        lo, hi = v_tab[j], v_tab[j + 1]
        vv = np.interp(tt, T_tab, v_tab)
        for _ in range(30):
            F = T_tab[j] + self.integrate(lo, vv) - tt
            step = F / self.w(vv)
            vv = np.clip(vv - step, lo, hi)
            scale = np.abs(self.value(vv))
            if np.all(np.abs(step) * np.maximum(scale, 1e-300) < 0.1 * INVERSION_TOL):
                break
        out[inside] = vv
        if np.any(~inside):
            slope = 1.0 / self._w_scalar(v_tab[-1])
            out[~inside] = v_tab[-1] + (targets[~inside] - T_tab[-1]) * slope
        return out

    def invert(self, T: float, v_guess: float | None = None) -> float:
        """Solve ``Phi(v) = T`` by safeguarded Newton inside a growing bracket."""
        if T <= 0:
            return 0.0
        lo, plo = 0.0, 0.0
        hi = max(v_guess or 0.0, 1.0)
        phi_hi = self.phi(hi)
        while phi_hi < T:
            lo, plo = hi, phi_hi
            hi *= 2.0
            if hi > 1e7:
                raise ValueError(f"target {T} beyond the reach of the FOE branch")
            phi_hi = self.phi(hi)
        v = v_guess if v_guess is not None and lo < v_guess < hi else 0.5 * (lo + hi)
        # Incremental quadrature from the nearest bracket end keeps iterations cheap.
        anchor, panchor = lo, plo
        for _ in range(100):
            f = panchor + float(self.integrate(anchor, v)[0]) - T
            if f > 0:
                hi = v
            else:
                lo, anchor, panchor = v, v, f + T
            step = f / self._w_scalar(v)
            v_new = v - step
            if not lo < v_new < hi:
                v_new = 0.5 * (lo + hi)
            u_scale = abs(self.xi) * math.exp(self.sigma * v_new)
            if abs(v_new - v) * max(u_scale, 1e-300) < 0.1 * INVERSION_TOL or abs(
                v_new - v
            ) < 1e-15 * max(1.0, v):
                return v_new
            v = v_new
        return v


def _classify_start(nl: Nonlinearity, xi: float) -> str:
    if xi in _zeros(nl):
        return "constant"
    return "trapped" if abs(xi) < nl.alpha else "escaping"


def foe_closed(nl: Nonlinearity, k: int, r0: float, xi: float, r: float) -> FoeState:
    """Exact FOE state at radius ``r >= r0`` for ``phi(r0) = xi``.

    Raises:
        ValueError: ``r < r0`` or ``r`` at/after the blow-up radius.
    """
    if r < r0:
        raise ValueError(f"r={r} precedes the starting radius r0={r0}")
    kind = _classify_start(nl, xi)
    if kind == "constant":
        return foe_state(nl, k, r, xi)
    branch = _Branch(nl, xi)
    T = (r * r - r0 * r0) / (2.0 * k)
    if kind == "escaping" and T >= branch.phi_inf():
        raise ValueError(
            f"r={r} is beyond the blow-up radius {foe_blowup_radius(nl, k, r0, xi):.6g}"
        )
    v = branch.invert(T)
    return foe_state(nl, k, r, float(branch.value(v)))


def foe_blowup_radius(nl: Nonlinearity, k: int, r0: float, xi: float) -> float:
    """Supremum of the FOE validity interval for |xi| > alpha (inf if unbounded).

    Raises:
        ValueError: |xi| < alpha, where the solution is global.
    """
    if abs(xi) == nl.alpha:
        return math.inf
    if abs(xi) < nl.alpha:
        raise ValueError(f"|xi|={abs(xi)} <= alpha: the FOE solution is global")
    total = _Branch(nl, xi).phi_inf()
    if math.isinf(total):
        return math.inf
    return math.sqrt(r0 * r0 + 2.0 * k * total)


def foe_switch_radius(nl: Nonlinearity, k: int, r0: float, xi: float) -> float | None:
    """Radius where the FOE reaches beta, or None when it never leaves the FOE.

    Raises:
        ValueError: ``xi`` is not a value the FOE can start from.
    """
    a, b = nl.alpha, nl.beta
    if b < xi < a:
        return math.sqrt(r0 * r0 + 2.0 * k * h_integral(nl, xi, b))
    if -b <= xi < 0 or xi < -a:
        return None
    raise ValueError(
        f"xi={xi} is outside the FOE starting regions "
        "(-inf,-alpha) U [-beta,0) U (beta,alpha)"
    )


def foe_diagnostics(nl: Nonlinearity, k: int, state: FoeState) -> tuple[float, float]:
    """Return (Au, Au') along an FOE trajectory; Au' requires r > 0."""
    r, u = state.r, state.u
    if r == 0:
        raise ValueError("Au' is undefined at r = 0")
    g = float(nl.eval(u))
    dg = float(nl.deriv(u))
    Au = (r * r) / (k * k) * g * dg
    up = -(r / k) * g
    Au_prime = (2.0 / r - (r / k) * dg) * Au - (r / k) * up * up * float(nl.deriv2(u))
    return Au, Au_prime


@dataclass
class FoeTrajectory:
    """Dense FOE samples.  ``status`` is 'switch', 'blowup' or 'truncated'."""

    r: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    Au: np.ndarray
    status: str
    blowup_radius: float = math.inf


def _states(nl, k, r, u):
    g = np.asarray(nl.eval(u), dtype=float)
    up = -(r / k) * g
    Au = (r * r) / (k * k) * g * np.asarray(nl.deriv(u), dtype=float)
    return up, Au


def foe_trajectory(
    nl: Nonlinearity,
    k: int,
    r0: float,
    xi: float,
    truncation: float,
    cap: float = 1e6,
    samples: int = 256,
) -> FoeTrajectory:
    """Sample the FOE from (r0, xi) until it reaches beta, the cap, or truncation.

    Samples are uniform in the log variable and, separately, uniform in r.
    """
    kind = _classify_start(nl, xi)
    if kind == "constant":
        r = np.linspace(r0, truncation, samples)
        u = np.full_like(r, xi)
        up, Au = _states(nl, k, r, u)
        return FoeTrajectory(r, u, up, Au, "truncated")

    branch = _Branch(nl, xi)
    T_trunc = (truncation**2 - r0**2) / (2.0 * k)
    status = "truncated"
    blowup = math.inf
    if kind == "trapped":
        if nl.beta < xi < nl.alpha:
            v_stop = math.log(xi / nl.beta)
            T_stop = h_integral(nl, xi, nl.beta)
            if T_stop < T_trunc:
                status = "switch"
        else:
            # Subnormal starts leave no room before underflow; the floor keeps
            # the table nonempty and w handles phi = 0.
            v_stop = max(1.0, min(_UNDERFLOW_V, math.log(abs(xi)) + _UNDERFLOW_V))
            T_stop = math.inf
    else:
        v_stop = math.log(cap / abs(xi)) if cap > abs(xi) else 0.0
        T_stop = branch.phi(v_stop)
        total = branch.phi_inf()
        if math.isfinite(total):
            blowup = math.sqrt(r0 * r0 + 2.0 * k * total)
        if T_stop < T_trunc:
            status = "blowup"

    v = np.linspace(0.0, v_stop, samples)
    if v_stop > 0 and branch.w(0.0) > 10.0 * branch.w(0.5 * v_stop):
        # xi close to a zero of g: w ~ 1/(2(c + v)) is peaked at v = 0, so
        # grade the table geometrically towards the start.
        v = np.unique(np.concatenate(
            [v, np.geomspace(1e-16 * max(1.0, v_stop), v_stop, samples)]
        ))
    T = np.concatenate([[0.0], np.cumsum(branch.integrate(v[:-1], v[1:]))])
    if math.isfinite(T_stop):
        # Pin the last node to the independently computed end value.
        T[-1] = T_stop
    keep = T <= T_trunc
    v, T = v[keep], T[keep]

    r_end = truncation if status == "truncated" else math.sqrt(r0 * r0 + 2.0 * k * T_stop)
    r_uni = np.linspace(r0, r_end, samples)
    v_uni = branch.invert_table((r_uni**2 - r0**2) / (2.0 * k), v, T)

    r_all = np.concatenate([np.sqrt(r0 * r0 + 2.0 * k * T), r_uni])
    v_all = np.concatenate([v, v_uni])
    order = np.argsort(r_all, kind="stable")
    r_all, v_all = r_all[order], v_all[order]
    uniq = np.concatenate([[True], np.diff(r_all) > 0])
    r_all, v_all = r_all[uniq], v_all[uniq]
    u = branch.value(v_all)
    if status == "switch":
        r_all[-1] = r_end
        u[-1] = nl.beta
    up, Au = _states(nl, k, r_all, u)
    return FoeTrajectory(r_all, u, up, Au, status, blowup)
