from __future__ import annotations

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class SolveConfig:
    """Integrator and construction settings shared by every solve.

    ``h0`` is the radius of the series start at the origin; ``None`` means
    ``1e-4 * max(1, alpha)``.  ``heteroclinic_band`` and ``dwell`` control
    when a trajectory still hovering near a nonzero equilibrium at the
    truncation radius is reported as a heteroclinic limit.
    """

    rtol: float = 1e-10
    atol: float = 1e-10
    cap_u: float = 1e6
    cap_du: float = 1e9
    truncation: float = 200.0
    event_xtol: float = 1e-13
    h0: float | None = None
    foe_samples: int = 256
    method: str = "RK45"
    max_step: float = 0.5
    heteroclinic_band: float = 0.05
    dwell: float = 10.0

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.event_xtol > 0):
            raise ValueError("tolerances must be positive")
        if not (self.cap_u > 0 and self.cap_du > 0):
            raise ValueError("blow-up caps must be positive")
        if not self.truncation > 0:
            raise ValueError("truncation radius must be positive")

    def refined(self, factor: float = 0.5) -> "SolveConfig":
        """Same config with integrator tolerances scaled by ``factor``."""
        return replace(self, rtol=self.rtol * factor, atol=self.atol * factor)

    def with_truncation(self, truncation: float) -> "SolveConfig":
        return replace(self, truncation=truncation)

    def to_dict(self) -> dict:
        return asdict(self)
