"""Second-order regime  psi'' + (k-1)/r psi' + g(psi) = 0.

Integration uses scipy's Dormand-Prince 5(4) stepper one step at a time so
that events can be scanned on each step's dense output, polished with
``brentq`` and filtered by a validity predicate before deciding to stop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import OdeSolution, quad
from scipy.integrate import cumulative_trapezoid
from scipy.integrate import RK45, DOP853
from scipy.optimize import brentq

from .config import SolveConfig
from .nonlinearity import Nonlinearity

_SOLVERS = {"RK45": RK45, "DOP853": DOP853}
# Relative margin keeping switch roots away from the excluded values.
_REGION_MARGIN = 1e-9


class SoeIntegrationError(RuntimeError):
    """Integrator failure; ``partial`` holds the trajectory computed so far."""

    def __init__(self, message: str, partial: "SoeTrajectory | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SoeState:
    r: float
    u: float
    uprime: float
    Au: float
    energy: float


def soe_state(nl: Nonlinearity, k: int, r: float, u: float, uprime: float) -> SoeState:
    g = float(nl.eval(u))
    Au = -(k / r) * uprime - g if r > 0 else 0.0
    return SoeState(r, u, uprime, Au, 0.5 * uprime**2 + float(nl.potential(u)))


def default_h0(nl: Nonlinearity) -> float:
    return 1e-4 * max(1.0, nl.alpha)


def series_coefficients(nl: Nonlinearity, k: int, xi: float) -> tuple[float, float]:
    """Coefficients (a2, a4) of psi = xi + a2 r^2 + a4 r^4 + O(r^6) at the origin."""
    g = float(nl.eval(xi))
    a2 = -g / (2.0 * k)
    a4 = float(nl.deriv(xi)) * g / (2.0 * k * (4 * k + 8))
    return a2, a4


def series_a6(nl: Nonlinearity, k: int, xi: float) -> float:
    """Sixth-order coefficient of the origin series, from matching r^4 terms."""
    a2, a4 = series_coefficients(nl, k, xi)
    return -(float(nl.deriv(xi)) * a4 + 0.5 * float(nl.deriv2(xi)) * a2**2) / (6 * k + 24)


def series_A(nl: Nonlinearity, k: int, xi: float, r):
    """A psi = psi'' - psi'/r = 8 a4 r^2 + 24 a6 r^4 + O(r^6) near the origin.

    Computing A psi from (psi, psi') there loses everything to cancellation;
    the series keeps its sign reliable, including at xi = +-beta where a4 = 0.
    """
    _, a4 = series_coefficients(nl, k, xi)
    return 8.0 * a4 * np.square(r) + 24.0 * series_a6(nl, k, xi) * np.power(r, 4)


def soe_origin_start(nl: Nonlinearity, k: int, xi: float, h0: float) -> SoeState:
    """Series state at r = h0 for the regular start psi(0) = xi, psi'(0) = 0.

    Truncation error is O(h0^6) in psi and O(h0^5) in psi'.
    """
    if not h0 > 0:
        raise ValueError("h0 must be positive")
    a2, a4 = series_coefficients(nl, k, xi)
    u = xi + a2 * h0**2 + a4 * h0**4
    up = 2.0 * a2 * h0 + 4.0 * a4 * h0**3
    return soe_state(nl, k, h0, u, up)


def in_switch_region(nl: Nonlinearity, u: float) -> bool:
    """u in (-inf,-alpha) U (-beta,0) U (beta,alpha), excluding values near +-beta, +-alpha.

    The boundary at 0 is strict: small-amplitude oscillations switch there.
    """
    a, b = nl.alpha, nl.beta
    m = _REGION_MARGIN * a
    return u < -a - m or (-b + m < u < 0.0) or (b + m < u < a - m)


def switch_function(nl: Nonlinearity, k: int) -> Callable[[float, np.ndarray], float]:
    """f(r) = psi' + (r/k) g(psi) = -(r/k) * A psi; positive once A psi < 0."""

    def f(r, y):
        return y[1] + (r / k) * float(nl.eval(y[0]))

    return f


def soe_switch_event(nl: Nonlinearity, k: int, state: SoeState, tol: float = 1e-9) -> bool:
    """Whether ``state`` is a valid SOE->FOE switching point."""
    if not state.r > 0:
        raise ValueError("switch events are defined for r > 0 only")
    f = state.uprime + (state.r / k) * float(nl.eval(state.u))
    scale = max(1.0, abs(state.uprime))
    return abs(f) <= tol * scale and in_switch_region(nl, state.u)


@dataclass(frozen=True)
class Event:
    """Scalar event ``fn(r, y) = 0``.

    ``direction`` +1 keeps only upward crossings, -1 downward, 0 both.
    ``accept`` filters polished roots; rejected roots are ignored entirely.
    """

    name: str
    fn: Callable[[float, np.ndarray], float]
    direction: int = 0
    terminal: bool = True
    accept: Callable[[float, np.ndarray], bool] | None = None


@dataclass(frozen=True)
class EventHit:
    name: str
    r: float
    u: float
    uprime: float
    terminal: bool


def switch_event(nl: Nonlinearity, k: int) -> Event:
    return Event(
        "switch",
        switch_function(nl, k),
        direction=1,
        terminal=True,
        accept=lambda r, y: in_switch_region(nl, y[0]),
    )


def extremum_event(terminal: bool = False, accept=None) -> Event:
    return Event("extremum", lambda r, y: y[1], 0, terminal, accept)


@dataclass
class SoeTrajectory:
    """Samples of one SOE integration plus its dense output.

    ``status`` is 'event', 'blowup' or 'truncated'.
    """

    nl: Nonlinearity
    k: int
    r: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    status: str
    hits: list[EventHit] = field(default_factory=list)
    dense: OdeSolution | None = None
    series: tuple[float, float, float, float] | None = None  # (xi, a2, a4, h0)

    @property
    def second_derivative(self) -> np.ndarray:
        g = np.asarray(self.nl.eval(self.u), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            damp = np.where(self.r > 0, (self.k - 1) / self.r * self.uprime, 0.0)
        upp = -damp - g
        if self.series is not None:
            upp = np.where(self.r > 0, upp, 2.0 * self.series[1])
        return upp

    @property
    def Au(self) -> np.ndarray:
        g = np.asarray(self.nl.eval(self.u), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(self.r > 0, -(self.k / self.r) * self.uprime - g, 0.0)
        return out

    @property
    def energy(self) -> np.ndarray:
        return 0.5 * self.uprime**2 + np.asarray(self.nl.potential(self.u), dtype=float)

    @property
    def r_end(self) -> float:
        return float(self.r[-1])

    def evaluate(self, r) -> tuple[np.ndarray, np.ndarray]:
        """(psi, psi') at arbitrary radii inside the integrated range."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        u = np.empty_like(r)
        up = np.empty_like(r)
        inner = np.zeros(r.shape, dtype=bool)
        if self.series is not None:
            xi, a2, a4, h0 = self.series
            inner = r < h0
            ri = r[inner]
            u[inner] = xi + a2 * ri**2 + a4 * ri**4
            up[inner] = 2 * a2 * ri + 4 * a4 * ri**3
        if np.any(~inner):
            y = self.dense(r[~inner])
            u[~inner], up[~inner] = y[0], y[1]
        return u, up


def _rhs(nl: Nonlinearity, k: int):
    g = nl.eval
    if k == 1:
        def fun(r, y):
            return np.array([y[1], -float(g(y[0]))])
    else:
        km1 = float(k - 1)

        def fun(r, y):
            return np.array([y[1], -km1 / r * y[1] - float(g(y[0]))])
    return fun


def soe_integrate(
    nl: Nonlinearity,
    k: int,
    start: tuple[float, float, float],
    events: tuple[Event, ...] | list[Event] = (),
    config: SolveConfig = SolveConfig(),
    truncation: float | None = None,
) -> SoeTrajectory:
    """Integrate the SOE from ``start = (r0, xi, theta)``.

    Stops at the first accepted terminal event, at the blow-up caps or at the
    truncation radius (``config.truncation`` unless overridden).

    Raises:
        ValueError: r0 = 0 with theta != 0 for k >= 2, or negative r0.
        SoeIntegrationError: step-size underflow; the partial trajectory is attached.
    """
    r0, xi, theta = (float(x) for x in start)
    r_max = config.truncation if truncation is None else float(truncation)
    if r0 < 0:
        raise ValueError("starting radius must be nonnegative")
    if r0 == 0 and theta != 0 and k != 1:
        raise ValueError("(r0, theta) must lie in (0, inf) x R or equal (0, 0)")
    if r_max <= r0:
        raise ValueError("truncation radius must exceed the starting radius")

    rs, us, ups = [], [], []
    series = None
    if r0 == 0 and theta == 0:
        h0 = config.h0 if config.h0 is not None else default_h0(nl)
        a2, a4 = series_coefficients(nl, k, xi)
        series = (xi, a2, a4, h0)
        st = soe_origin_start(nl, k, xi, h0)
        rs.append(0.0), us.append(xi), ups.append(0.0)
        t0, y0 = h0, np.array([st.u, st.uprime])
    else:
        t0, y0 = r0, np.array([xi, theta])
    rs.append(t0), us.append(y0[0]), ups.append(y0[1])

    fun = _rhs(nl, k)
    solver_cls = _SOLVERS[config.method]
    solver = solver_cls(
        fun, t0, y0, r_max, rtol=config.rtol, atol=config.atol,
        max_step=config.max_step,
    )
    ts = [t0]
    interps = []
    hits: list[EventHit] = []
    prev_vals = [ev.fn(t0, y0) for ev in events]
    status = "truncated"

    def finish(st):
        dense = OdeSolution(ts, interps) if interps else None
        return SoeTrajectory(
            nl, k, np.array(rs), np.array(us), np.array(ups), st, hits, dense, series
        )

    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise SoeIntegrationError(
                f"SOE integration failed at r={solver.t:.9g}: {msg}", finish("failed")
            )
        t_old, t_new, y_new = solver.t_old, solver.t, solver.y
        interp = solver.dense_output()

        def y_at(r, interp=interp):
            return interp(r)

        step_hits = []
        vals = [ev.fn(t_new, y_new) for ev in events]
        for i, ev in enumerate(events):
            a, b = prev_vals[i], vals[i]
            crossed = (a < 0 <= b and ev.direction >= 0) or (a > 0 >= b and ev.direction <= 0)
            if not crossed or a == 0:
                continue
            root = brentq(
                lambda r, fn=ev.fn: fn(r, y_at(r)), t_old, t_new,
                xtol=config.event_xtol, rtol=4 * np.finfo(float).eps,
            )
            y_root = y_at(root)
            if ev.accept is not None and not ev.accept(root, y_root):
                continue
            step_hits.append((root, ev, y_root))
        prev_vals = vals
        step_hits.sort(key=lambda h: h[0])
        stop_at = None
        for root, ev, y_root in step_hits:
            hits.append(EventHit(ev.name, root, float(y_root[0]), float(y_root[1]), ev.terminal))
            if ev.terminal:
                stop_at = (root, y_root)
                break

        ts.append(t_new)
        interps.append(interp)
        if stop_at is not None:
            root, y_root = stop_at
            ts[-1] = root
            rs.append(root), us.append(float(y_root[0])), ups.append(float(y_root[1]))
            status = "event"
            break
        rs.append(t_new), us.append(float(y_new[0])), ups.append(float(y_new[1]))
        if abs(y_new[0]) > config.cap_u or abs(y_new[1]) > config.cap_du:
            status = "blowup"
            break
    return finish(status)


def soe_energy_audit(
    trajectory: SoeTrajectory, k: int | None = None, points_per_unit: int = 4000
) -> float:
    """Max over sample pairs of |E(r) - E(t) + (k-1) int_t^r psi'^2/s ds|.

    The trajectory is resampled from its dense output on a uniform grid and
    the damping integral is accumulated with the trapezoidal rule.
    """
    k = trajectory.k if k is None else k
    nl = trajectory.nl
    r_lo = float(trajectory.r[trajectory.r > 0][0]) if np.any(trajectory.r > 0) else 0.0
    r_hi = trajectory.r_end
    if trajectory.dense is None or r_hi <= r_lo:
        E = trajectory.energy
        return float(E.max() - E.min())
    n = max(int((r_hi - r_lo) * points_per_unit), 200)
    r = np.linspace(r_lo, r_hi, n + 1)
    u, up = trajectory.evaluate(r)
    E = 0.5 * up**2 + np.asarray(nl.potential(u), dtype=float)
    if k != 1:
        E = E + (k - 1) * cumulative_trapezoid(up**2 / r, r, initial=0.0)
    return float(E.max() - E.min())


@dataclass(frozen=True)
class K1Outcome:
    """Outcome of the autonomous (k = 1) SOE from (xi, theta).

    ``alternatives`` lists both neighbouring kinds when the energy sits in the
    tolerance band around G(alpha).  ``limit`` is the value approached at
    +infinity for heteroclinic and constant outcomes.
    """

    kind: str
    E: float
    M: float | None = None
    T: float | None = None
    limit: float | None = None
    alternatives: tuple[str, ...] = ()


ENERGY_BAND = 1e-12


def k1_classify(nl: Nonlinearity, xi: float, theta: float) -> K1Outcome:
    a = nl.alpha
    E = 0.5 * theta**2 + float(nl.potential(abs(xi)))
    G_a = float(nl.potential(a))
    if abs(xi) > a:
        return K1Outcome("unbounded", E)
    if E == 0.0:
        return K1Outcome("zero", E, limit=0.0)
    if abs(E - G_a) <= ENERGY_BAND * max(1.0, abs(G_a)):
        if theta == 0:
            return K1Outcome("constant", E, limit=math.copysign(a, xi))
        limit = a if theta > 0 else -a
        return K1Outcome("heteroclinic", E, limit=limit, alternatives=("periodic", "unbounded"))
    if E > G_a:
        return K1Outcome("unbounded", E)
    M, T = k1_amplitude_and_period(nl, xi, theta)
    return K1Outcome("periodic", E, M=M, T=T)


def _amplitude(nl: Nonlinearity, xi: float, theta: float) -> float:
    x0 = abs(xi)
    if theta == 0:
        return x0
    target = 0.5 * theta**2
    G0 = float(nl.potential(x0))

    def F(m):
        return float(nl.potential(m)) - G0 - target

    hi = nl.alpha
    return brentq(F, x0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def k1_amplitude_and_period(nl: Nonlinearity, xi: float, theta: float) -> tuple[float, float]:
    """Amplitude M and period T of the periodic k = 1 orbit through (xi, theta).

    The half-period integral is taken over s = M sin(phi), which removes the
    inverse square-root singularities at both turning points.

    Raises:
        ValueError: the orbit through (xi, theta) is not periodic.
    """
    E = 0.5 * theta**2 + float(nl.potential(abs(xi)))
    G_a = float(nl.potential(nl.alpha))
    if not (abs(xi) < nl.alpha and 0 < E < G_a):
        raise ValueError(f"(xi, theta)=({xi}, {theta}) does not give a periodic orbit")
    M = _amplitude(nl, xi, theta)
    G_M = float(nl.potential(M))
    gl_x, gl_w = np.polynomial.legendre.leggauss(16)

    def energy_gap(s):
        # G(M) - G(s); integrate g directly when close to M to avoid cancellation.
        if M - s > 1e-2 * M:
            return G_M - float(nl.potential(s))
        half, mid = 0.5 * (M - s), 0.5 * (M + s)
        return half * float(np.dot(gl_w, nl.eval(mid + half * gl_x)))

    def integrand(phi):
        gap = energy_gap(M * math.sin(phi))
        return M * math.cos(phi) / math.sqrt(2.0 * gap) if gap > 0 else 0.0

    quarter = quad(integrand, 0.0, 0.5 * math.pi, epsabs=0.0, epsrel=1e-11, limit=200)[0]
    # T/2 = int_{-M}^{M} = 2 int_0^M, by evenness of G.
    return M, 4.0 * quarter


def _extrema(trajectory: SoeTrajectory, r_min: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Radii and values of psi at its critical points, polished on dense output."""
    r, up = trajectory.r, trajectory.uprime
    idx = np.flatnonzero((np.sign(up[:-1]) * np.sign(up[1:]) < 0) & (r[:-1] >= r_min))
    radii = []
    for i in idx:
        root = brentq(lambda s: float(trajectory.evaluate(s)[1][0]), r[i], r[i + 1], xtol=1e-13)
        radii.append(root)
    radii = np.array(radii)
    vals = trajectory.evaluate(radii)[0] if len(radii) else np.array([])
    return radii, vals


def k2_decay_envelope(
    trajectory: SoeTrajectory, k: int | None = None, r_min: float = 10.0
) -> tuple[float, float, float]:
    """Fit the algebraic decay of |psi| + |psi'| + |psi''| on [r_min, end].

    Returns (c_est, C_est, slope): the slope of the log-log fit at the
    critical points and the min/max of the quantity times r^((k-1)/2) over
    all samples with r >= 1.

    Raises:
        ValueError: k = 1, or fewer than 10 critical points in range.
    """
    k = trajectory.k if k is None else k
    if k < 2:
        raise ValueError("decay envelope requires k >= 2; k = 1 orbits are periodic")
    radii, vals = _extrema(trajectory, r_min)
    if len(radii) < 10:
        raise ValueError(f"only {len(radii)} critical points beyond r={r_min}; need 10")
    g = np.asarray(trajectory.nl.eval(vals), dtype=float)
    # psi' = 0 at critical points, so psi'' = -g(psi) there.
    q = np.abs(vals) + np.abs(g)
    slope = float(np.polyfit(np.log(radii), np.log(q), 1)[0])

    mask = trajectory.r >= 1.0
    r = trajectory.r[mask]
    qs = np.abs(trajectory.u[mask]) + np.abs(trajectory.uprime[mask]) + np.abs(
        trajectory.second_derivative[mask]
    )
    scaled = qs * r ** ((k - 1) / 2.0)
    return float(scaled.min()), float(scaled.max()), slope
