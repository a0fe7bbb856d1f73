"""Maximal radial solutions of P_k^+ U + g(U) = 0 by gluing FOE and SOE pieces.

For a radial profile u(r) the Hessian has eigenvalue u'' once and u'/r
with multiplicity N - 1.  The sign of ``Au = u'' - u'/r`` decides whether
the k largest eigenvalues sum to the SOE operator (Au >= 0) or to
``k u'/r`` (Au <= 0), and the builder follows whichever regime is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SolveConfig
from .foe import foe_second_derivative, foe_trajectory
from .nonlinearity import Nonlinearity
from .soe import (
    SoeIntegrationError,
    SoeTrajectory,
    default_h0,
    series_A,
    series_a6,
    series_coefficients,
    soe_integrate,
    switch_event,
)

FOE = "FOE"
SOE = "SOE"
CONSTANT = "CONSTANT"
MAX_SWITCHES = 3

KINDS = (
    "constant",
    "unbounded_up",
    "unbounded_down",
    "localized_monotone",
    "localized_dip",
    "heteroclinic_limit",
    "sign_changing_unbounded",
    "ambiguous",
)


class BuildError(RuntimeError):
    """Construction failed; ``partial`` carries the segments built so far."""

    def __init__(self, message: str, partial: "RadialSolution | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass
class Segment:
    regime: str
    r: np.ndarray
    u: np.ndarray
    uprime: np.ndarray
    Au: np.ndarray
    soe: SoeTrajectory | None = None
    foe_start: tuple[float, float] | None = None  # (r0, xi) of an FOE piece

    @property
    def r_start(self) -> float:
        return float(self.r[0])

    @property
    def r_end(self) -> float:
        return float(self.r[-1])

    @property
    def start_state(self) -> tuple[float, float]:
        return float(self.u[0]), float(self.uprime[0])

    @property
    def end_state(self) -> tuple[float, float]:
        return float(self.u[-1]), float(self.uprime[-1])


@dataclass(frozen=True)
class SwitchEvent:
    r: float
    direction: str  # "FOE->SOE" or "SOE->FOE"
    u_at: float
    jump_second_derivative: float
    du_jump: float = 0.0
    dup_jump: float = 0.0

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "direction": self.direction,
            "u": self.u_at,
            "jump": self.jump_second_derivative,
        }


@dataclass(frozen=True)
class Classification:
    kind: str
    limit_value: float
    monotonicity: str
    note: str = ""

    def mirrored(self) -> "Classification":
        kind = {"unbounded_up": "unbounded_down", "unbounded_down": "unbounded_up"}.get(
            self.kind, self.kind
        )
        mono = {"increasing": "decreasing", "decreasing": "increasing"}
        parts = [mono.get(p, p) for p in self.monotonicity.split("-")]
        return Classification(kind, -self.limit_value, "-".join(parts), self.note)


@dataclass
class RadialSolution:
    """Glued radial profile on [0, R).

    ``R`` is finite only when the profile blows up; ``truncated`` marks a
    profile stopped at the truncation radius (R reported as that radius).
    """

    xi: float
    k: int
    nl: Nonlinearity
    segments: list[Segment] = field(default_factory=list)
    switches: list[SwitchEvent] = field(default_factory=list)
    R: float = math.inf
    truncated: bool = False
    classification: Classification | None = None
    equation: str = "plus"

    def samples(self) -> tuple[np.ndarray, ...]:
        """Concatenated (r, u, u', Au, regime, segment_index) columns."""
        cols = [[], [], [], [], [], []]
        for i, seg in enumerate(self.segments):
            n = len(seg.r)
            for c, arr in zip(cols, (seg.r, seg.u, seg.uprime, seg.Au)):
                c.append(arr)
            cols[4].append(np.full(n, seg.regime, dtype=object))
            cols[5].append(np.full(n, i))
        return tuple(np.concatenate(c) for c in cols)

    def evaluate(self, r) -> tuple[np.ndarray, np.ndarray]:
        """(u, u') at arbitrary radii; FOE pieces are inverted exactly."""
        from .foe import foe_closed

        r = np.atleast_1d(np.asarray(r, dtype=float))
        u = np.full(r.shape, np.nan)
        up = np.full(r.shape, np.nan)
        sign = -1.0 if self.equation == "minus" else 1.0
        for seg in self.segments:
            mask = (r >= seg.r_start) & (r <= seg.r_end) & np.isnan(u)
            if not np.any(mask):
                continue
            if seg.regime == SOE:
                uu, uup = seg.soe.evaluate(r[mask])
            elif seg.foe_start is None:
                uu = np.full(mask.sum(), sign * seg.u[0])
                uup = np.zeros(mask.sum())
            else:
                r0, x0 = seg.foe_start
                states = [foe_closed(self.nl, self.k, r0, x0, float(s)) for s in r[mask]]
                uu = np.array([s.u for s in states])
                uup = np.array([s.uprime for s in states])
                uu, uup = sign * uu, sign * uup
                u[mask], up[mask] = uu, uup
                continue
            u[mask], up[mask] = sign * uu, sign * uup
        return u, up

    def summary(self, residual_max: float | None = None) -> dict:
        c = self.classification
        return {
            "xi": self.xi,
            "k": self.k,
            "equation": self.equation,
            "nonlinearity": self.nl.summary(),
            "classification": None
            if c is None
            else {
                "kind": c.kind,
                "limit": _json_float(c.limit_value),
                "monotonicity": c.monotonicity,
                "note": c.note,
            },
            "switches": [s.to_dict() for s in self.switches],
            "R": _json_float(self.R),
            "truncated": self.truncated,
            "residual_max": residual_max,
        }


def _json_float(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def starting_regime(nl: Nonlinearity, xi: float) -> str:
    a, b = nl.alpha, nl.beta
    if xi in (-a, 0.0, a):
        return CONSTANT
    if xi < -a or -b <= xi < 0 or b < xi < a:
        return FOE
    return SOE


def _foe_segment(nl, k, r0, xi, config) -> tuple[Segment, str, float]:
    tr = foe_trajectory(
        nl, k, r0, xi, config.truncation, cap=config.cap_u, samples=config.foe_samples
    )
    seg = Segment(FOE, tr.r, tr.u, tr.uprime, tr.Au, foe_start=(r0, xi))
    return seg, tr.status, tr.blowup_radius


def _soe_segment(traj: SoeTrajectory) -> Segment:
    return Segment(SOE, traj.r, traj.u, traj.uprime, traj.Au, soe=traj)


def _early_origin_switch(nl, k, xi, config):
    """Switch hidden inside the series start interval (0, h0), if any.

    Only happens when xi sits within rounding of -beta on the SOE side, where
    A psi changes sign at r ~ sqrt(|a4 / a6|) long before the first step.
    Returns FOE when a4 has rounded to a non-positive value: A psi < 0 right
    away, which is the -beta start itself.
    """
    h0 = config.h0 if config.h0 is not None else default_h0(nl)
    if series_A(nl, k, xi, h0) >= 0:
        return None
    _, a2, a4 = 0.0, *series_coefficients(nl, k, xi)
    a6 = series_a6(nl, k, xi)
    if not a4 * a6 < 0:
        return FOE
    r_s = math.sqrt(-8.0 * a4 / (24.0 * a6))
    if not r_s < h0:
        return None
    r = np.linspace(0.0, r_s, 5)
    u = xi + a2 * r**2 + a4 * r**4 + a6 * r**6
    up = 2 * a2 * r + 4 * a4 * r**3 + 6 * a6 * r**5
    # xi is within O(h0^2) of -beta here, so the usual margin around the
    # wall would reject a switch that sits on it.
    if not -nl.alpha < float(u[-1]) < 0.0:
        return None
    seg = Segment(SOE, r, u, up, series_A(nl, k, xi, r))
    u_s = float(u[-1])
    phi_prime = -(r_s / k) * float(nl.eval(u_s))
    upp_minus = 2 * a2 + 12 * a4 * r_s**2 + 30 * a6 * r_s**4
    upp_plus = foe_second_derivative(nl, k, r_s, u_s)
    switch = SwitchEvent(
        r_s, "SOE->FOE", u_s, upp_minus - upp_plus, 0.0, float(up[-1]) - phi_prime
    )
    seg.uprime[-1] = phi_prime
    return seg, switch


def build_radial(
    nl: Nonlinearity, k: int, xi: float, config: SolveConfig = SolveConfig()
) -> RadialSolution:
    """Construct and classify the radial solution with u(0) = xi.

    Raises:
        BuildError: integrator failure or a switch pattern that violates the
            at-most-three bound; the partial solution is attached.
    """
    if k < 1 or int(k) != k:
        raise ValueError(f"k must be a positive integer, got {k}")
    sol = RadialSolution(float(xi), int(k), nl)
    regime = starting_regime(nl, xi)
    if regime == CONSTANT:
        r = np.linspace(0.0, config.truncation, 9)
        seg = Segment(FOE, r, np.full_like(r, xi), np.zeros_like(r), np.zeros_like(r))
        sol.segments.append(seg)
        sol.R, sol.truncated = config.truncation, True
        sol.classification = classify(sol, nl, k)
        return sol

    r_cur, u_cur, up_cur = 0.0, float(xi), 0.0
    while True:
        if len(sol.switches) > MAX_SWITCHES:
            raise BuildError("more than three switches recorded", sol)
        if regime == FOE:
            seg, status, blowup = _foe_segment(nl, k, r_cur, u_cur, config)
            sol.segments.append(seg)
            if status == "switch":
                r_s = seg.r_end
                b = nl.beta
                theta = -(r_s / k) * float(nl.eval(b))
                upp_minus = foe_second_derivative(nl, k, r_s, b)
                upp_plus = -(k - 1) / r_s * theta - float(nl.eval(b))
                sol.switches.append(
                    SwitchEvent(r_s, "FOE->SOE", b, upp_minus - upp_plus,
                                seg.u[-1] - b, seg.uprime[-1] - theta)
                )
                r_cur, u_cur, up_cur = r_s, b, theta
                regime = SOE
                continue
            if status == "blowup":
                sol.R = blowup if math.isfinite(blowup) else seg.r_end
            else:
                sol.R, sol.truncated = config.truncation, True
            break

        # SOE
        if r_cur == 0.0:
            early = _early_origin_switch(nl, k, u_cur, config)
            if early == FOE:
                regime = FOE
                continue
            if early is not None:
                seg, switch = early
                sol.segments.append(seg)
                sol.switches.append(switch)
                r_cur, u_cur, up_cur = switch.r, switch.u_at, seg.uprime[-1]
                regime = FOE
                continue
        start = (r_cur, u_cur, up_cur)
        try:
            traj = soe_integrate(nl, k, start, [switch_event(nl, k)], config)
        except SoeIntegrationError as exc:
            if exc.partial is not None:
                sol.segments.append(_soe_segment(exc.partial))
            raise BuildError(str(exc), sol) from exc
        seg = _soe_segment(traj)
        sol.segments.append(seg)
        if traj.status == "event":
            r_s = traj.r_end
            u_s, up_s = float(traj.u[-1]), float(traj.uprime[-1])
            upp_minus = -(k - 1) / r_s * up_s - float(nl.eval(u_s))
            upp_plus = foe_second_derivative(nl, k, r_s, u_s)
            phi_prime = -(r_s / k) * float(nl.eval(u_s))
            sol.switches.append(
                SwitchEvent(r_s, "SOE->FOE", u_s, upp_minus - upp_plus, 0.0, up_s - phi_prime)
            )
            r_cur, u_cur, up_cur = r_s, u_s, phi_prime
            regime = FOE
            continue
        if traj.status == "blowup":
            sol.R = traj.r_end
        else:
            sol.R, sol.truncated = config.truncation, True
        break

    if sum(s.direction == "FOE->SOE" for s in sol.switches) > 1 or len(sol.switches) > MAX_SWITCHES:
        raise BuildError("switch pattern violates the at-most-three bound", sol)
    sol.classification = classify(sol, nl, k, config)
    return sol


def _monotonicity(up: np.ndarray) -> str:
    # Relative to the largest slope so that profiles of tiny amplitude keep
    # their shape; only an identically zero u' counts as constant.
    tol = 1e-12 * float(np.max(np.abs(up)))
    signs = np.sign(np.where(np.abs(up) <= tol, 0.0, up))
    signs = signs[signs != 0]
    if len(signs) == 0:
        return "constant"
    runs = [signs[0]]
    for s in signs[1:]:
        if s != runs[-1]:
            runs.append(s)
    return "-".join("increasing" if s > 0 else "decreasing" for s in runs)


def classify(
    solution: RadialSolution, nl: Nonlinearity, k: int, config: SolveConfig = SolveConfig()
) -> Classification:
    """Read the outcome family off the terminal behaviour of a built profile."""
    a = nl.alpha
    r, u, up, *_ = solution.samples()
    mono = _monotonicity(up)
    last = solution.segments[-1]
    changed_sign = bool(np.any(np.sign(u) * np.sign(solution.xi) < 0))

    if mono == "constant":
        return Classification("constant", solution.xi, mono)

    if not solution.truncated or (last.regime == FOE and abs(last.u[0]) > a):
        # Finite blow-up, or an escaping FOE piece cut at truncation.
        up_dir = last.u[-1] > 0
        limit = math.inf if up_dir else -math.inf
        if changed_sign:
            return Classification("sign_changing_unbounded", limit, mono)
        return Classification("unbounded_up" if up_dir else "unbounded_down", limit, mono)

    if last.regime == FOE and abs(last.u[0]) < a:
        kind = "localized_dip" if changed_sign else "localized_monotone"
        return Classification(kind, 0.0, mono)

    # SOE piece reached the truncation radius without deciding.
    band = config.heteroclinic_band * a
    tail = last.r >= last.r_end - config.dwell
    for target in (-a, a):
        if np.all(np.abs(last.u[tail] - target) <= band):
            return Classification("heteroclinic_limit", target, mono)
    return Classification(
        "ambiguous", float("nan"), mono,
        note=f"SOE segment undecided at r={last.r_end:.6g} (u={last.u[-1]:.6g})",
    )


def solve_minus(
    nl: Nonlinearity, k: int, xi: float, config: SolveConfig = SolveConfig()
) -> RadialSolution:
    """Radial solution of P_k^- U + g(U) = 0: the negated P_k^+ solution from -xi."""
    base = build_radial(nl, k, -xi, config)
    out = RadialSolution(
        float(xi), k, nl, R=base.R, truncated=base.truncated, equation="minus"
    )
    for seg in base.segments:
        out.segments.append(
            Segment(seg.regime, seg.r, -seg.u, -seg.uprime, -seg.Au, seg.soe, seg.foe_start)
        )
    out.switches = [
        SwitchEvent(s.r, s.direction, -s.u_at, -s.jump_second_derivative, -s.du_jump, -s.dup_jump)
        for s in base.switches
    ]
    out.classification = base.classification.mirrored() if base.classification else None
    return out


@dataclass
class ResidualReport:
    residual_max: float
    branch_violations: list[tuple[int, float, float]]  # (segment, r, Au)
    residual_abs: float = 0.0

    @property
    def consistent(self) -> bool:
        return not self.branch_violations


def pucci_plus(u2: np.ndarray, u1_over_r: np.ndarray, k: int, N: int) -> np.ndarray:
    """Sum of the k largest of {u''} U {u'/r with multiplicity N-1}."""
    top_is_u2 = u2 >= u1_over_r
    # If u'' is among the k largest: u'' + (k-1) u'/r, else k u'/r (k < N).
    return np.where(top_is_u2, u2 + (k - 1) * u1_over_r, k * u1_over_r)


def verify_residual(
    solution: RadialSolution,
    nl: Nonlinearity,
    k: int,
    branch_tol: float = 1e-8,
    N: int | None = None,
) -> ResidualReport:
    """Max scaled |P_k^pm U + g(U)| over samples with r > 0, plus sign(Au) checks.

    u'' is recovered from each piece's own ODE.  Each residual is divided by
    ``1 + |u''| + k|u'|/r + |g(u)|`` so that rounding near the blow-up cap,
    where g(u) reaches 1e18, does not swamp the check; ``residual_abs`` keeps
    the unscaled maximum.  The ambient dimension defaults to N = k + 1.
    """
    N = k + 1 if N is None else N
    if not k < N:
        raise ValueError("need k < N")
    sign = -1.0 if solution.equation == "minus" else 1.0
    worst = worst_abs = 0.0
    violations = []
    for i, seg in enumerate(solution.segments):
        mask = seg.r > 0
        r = seg.r[mask]
        # Work with the P^+ representative; the minus profile is its negation.
        u, up = sign * seg.u[mask], sign * seg.uprime[mask]
        g = np.asarray(nl.eval(u), dtype=float)
        if seg.regime == SOE:
            upp = -(k - 1) / r * up - g
        else:
            upp = -g / k + (r * r) / (k * k) * g * np.asarray(nl.deriv(u), dtype=float)
        A = upp - up / r
        res = pucci_plus(upp, up / r, k, N) + g
        if len(res):
            size = 1.0 + np.abs(upp) + k * np.abs(up / r) + np.abs(g)
            worst = max(worst, float(np.max(np.abs(res) / size)))
            worst_abs = max(worst_abs, float(np.max(np.abs(res))))
        scale = np.maximum(1.0, np.abs(upp))
        bad = A < -branch_tol * scale if seg.regime == SOE else A > branch_tol * scale
        for j in np.flatnonzero(bad)[:5]:
            violations.append((i, float(r[j]), float(A[j])))
    return ResidualReport(worst, violations, worst_abs)
