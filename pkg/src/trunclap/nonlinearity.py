"""Bistable nonlinearities g with derivatives, potential G and zeros alpha, beta."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad

DEFAULT_GRID_POINTS = 4096


@dataclass(frozen=True)
class Nonlinearity:
    """An odd bistable nonlinearity.

    ``alpha`` is the positive zero of ``g`` and ``beta`` the positive zero of
    ``g'``, with ``0 < beta < alpha``.  All callables accept floats or numpy
    arrays.
    """

    eval: Callable
    deriv: Callable
    deriv2: Callable
    potential: Callable
    alpha: float
    beta: float
    label: str = "custom"

    def __call__(self, u):
        return self.eval(u)

    def summary(self) -> dict:
        return {"label": self.label, "alpha": self.alpha, "beta": self.beta}


@dataclass
class BistableReport:
    violations: list[tuple[str, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


# Module-level kernels so that cubic nonlinearities pickle cleanly across
# worker processes.  Explicit products keep g exactly odd; numpy's ``**`` on
# arrays is not always symmetric in the last bit.
def _cubic_g(prefactor, scale, u):
    return prefactor * (u - u * u * u / scale)


def _cubic_dg(prefactor, scale, u):
    return prefactor * (1.0 - 3.0 * (u * u) / scale)


def _cubic_d2g(prefactor, scale, u):
    return prefactor * (-6.0 * u / scale)


def _cubic_G(prefactor, scale, t):
    t2 = t * t
    return prefactor * (t2 / 2.0 - t2 * t2 / (4.0 * scale))


def make_scaled_cubic(prefactor: float, scale: float) -> Nonlinearity:
    """g(u) = prefactor * (u - u**3 / scale)."""
    if not (prefactor > 0 and scale > 0):
        raise ValueError(
            f"prefactor and scale must be positive, got {prefactor}, {scale}"
        )
    prefactor = float(prefactor)
    scale = float(scale)
    if prefactor == 1.0:
        label = f"cubic:{scale:g}"
    else:
        label = f"scaled-cubic:{prefactor:g}:{scale:g}"
    return Nonlinearity(
        eval=partial(_cubic_g, prefactor, scale),
        deriv=partial(_cubic_dg, prefactor, scale),
        deriv2=partial(_cubic_d2g, prefactor, scale),
        potential=partial(_cubic_G, prefactor, scale),
        alpha=math.sqrt(scale),
        beta=math.sqrt(scale / 3.0),
        label=label,
    )


def make_cubic(scale: float) -> Nonlinearity:
    """g(u) = u - u**3 / scale, so alpha = sqrt(scale), beta = sqrt(scale/3)."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return make_scaled_cubic(1.0, scale)


def _quad_potential(g, t):
    t_arr = np.asarray(t, dtype=float)
    with warnings.catch_warnings():
        # Roundoff warnings come from integrals that are zero to machine precision.
        warnings.simplefilter("ignore", IntegrationWarning)
        out = np.array(
            [quad(g, 0.0, float(x), epsabs=1e-14, epsrel=1e-12)[0] for x in t_arr.ravel()]
        )
    out = out.reshape(t_arr.shape)
    return float(out) if out.ndim == 0 else out


def make_custom(
    g: Callable,
    dg: Callable,
    d2g: Callable,
    alpha: float,
    beta: float,
    potential: Callable | None = None,
    label: str = "custom",
    grid_points: int = DEFAULT_GRID_POINTS,
) -> Nonlinearity:
    """Wrap user callbacks, rejecting them unless they pass validation.

    When ``potential`` is omitted it is computed by quadrature of ``g``.
    """
    if potential is None:
        potential = partial(_quad_potential, g)
    nl = Nonlinearity(g, dg, d2g, potential, float(alpha), float(beta), label)
    report = validate_bistable(nl, grid_points)
    if not report.passed:
        name, u, value = report.violations[0]
        raise ValueError(
            f"{label} is not bistable: {name} fails at u={u:.6g} (value {value:.6g})"
        )
    return nl


def validate_bistable(
    nl: Nonlinearity, grid_points: int = DEFAULT_GRID_POINTS, max_per_check: int = 3
) -> BistableReport:
    """Sample the bistability assumptions on a grid covering [-2 alpha, 2 alpha]."""
    report = BistableReport()
    alpha, beta = nl.alpha, nl.beta
    if not (0 < beta < alpha):
        report.violations.append(("ordering 0<beta<alpha", beta, alpha))
        return report

    u = np.linspace(-2.0 * alpha, 2.0 * alpha, max(int(grid_points), 1000))
    g = np.asarray(nl.eval(u), dtype=float)
    dg = np.asarray(nl.deriv(u), dtype=float)
    gscale = max(1.0, float(np.max(np.abs(g))))
    # Points this close to a zero are not sign-tested.
    margin = 1e-9 * alpha

    def record(name, mask, values):
        idx = np.flatnonzero(mask)
        for i in idx[:max_per_check]:
            report.violations.append((name, float(u[i]), float(values[i])))

    odd = np.abs(g + np.asarray(nl.eval(-u), dtype=float))
    record("odd", odd > 1e-12 * gscale, odd)

    pos = (u > margin) & (u < alpha - margin)
    record("g>0 on (0,alpha)", pos & ~(g > 0), g)
    neg = u > alpha + margin
    record("g<0 on (alpha,inf)", neg & ~(g < 0), g)
    inc = (u >= 0) & (u < beta - margin)
    record("g'>0 on [0,beta)", inc & ~(dg > 0), dg)
    dec = u > beta + margin
    record("g'<0 on (beta,inf)", dec & ~(dg < 0), dg)

    d2 = float(nl.deriv2(beta))
    if not d2 < 0:
        report.violations.append(("g''(beta)<0", beta, d2))
    g_alpha = float(nl.eval(alpha))
    if abs(g_alpha) > 1e-12 * gscale:
        report.violations.append(("g(alpha)=0", alpha, g_alpha))
    dg_beta = float(nl.deriv(beta))
    if abs(dg_beta) > 1e-12 * max(1.0, float(np.max(np.abs(dg)))):
        report.violations.append(("g'(beta)=0", beta, dg_beta))

    G0 = float(nl.potential(0.0))
    if abs(G0) > 1e-14:
        report.violations.append(("G(0)=0", 0.0, G0))
    # Central differences of G against g on a coarser interior grid.
    uc = np.linspace(-2.0 * alpha, 2.0 * alpha, 257)[1:-1]
    h = 1e-5 * alpha
    Gp = (np.asarray(nl.potential(uc + h)) - np.asarray(nl.potential(uc - h))) / (2 * h)
    mismatch = np.abs(Gp - np.asarray(nl.eval(uc)))
    bad = np.flatnonzero(mismatch > 1e-6 * gscale)
    for i in bad[:max_per_check]:
        report.violations.append(("G'=g", float(uc[i]), float(mismatch[i])))
    return report


def parse_nonlinearity(spec: str) -> Nonlinearity:
    """Parse ``cubic:<scale>`` or ``scaled-cubic:<prefactor>:<scale>``."""
    parts = spec.strip().split(":")
    try:
        if parts[0] == "cubic" and len(parts) == 2:
            return make_cubic(float(parts[1]))
        if parts[0] == "scaled-cubic" and len(parts) == 3:
            return make_scaled_cubic(float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise ValueError(f"invalid nonlinearity spec {spec!r}: {exc}") from exc
    raise ValueError(
        f"invalid nonlinearity spec {spec!r}; expected cubic:S or scaled-cubic:P:S"
    )


def cubic_parameters(nl: Nonlinearity) -> tuple[float, float] | None:
    """(prefactor, scale) when ``nl`` was built by :func:`make_scaled_cubic`."""
    ev = nl.eval
    if isinstance(ev, partial) and ev.func is _cubic_g:
        return ev.args[0], ev.args[1]
    return None
