from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from src.constants import (
    EARTH_ANGULAR_VELOCITY,
    EARTH_GRAVITY,
    EARTH_RADIUS,
    SWE_DEFAULT_DT,
    SWE_HYPERDIFFUSION_EFOLD_HOURS,
)


class SWEParams(BaseModel):
    """Physical and numerical parameters of the shallow-water solver (SI units)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    gravity: float = Field(default=EARTH_GRAVITY, gt=0)
    radius: float = Field(default=EARTH_RADIUS, gt=0)
    angular_velocity: float = Field(default=EARTH_ANGULAR_VELOCITY, gt=0)
    dt: float = Field(default=SWE_DEFAULT_DT, gt=0, description="Time step in seconds")
    hyperdiffusion_order: int = Field(default=2, ge=1, description="Power of the Laplacian in the damping term")
    hyperdiffusion_efold_hours: float = Field(
        default=SWE_HYPERDIFFUSION_EFOLD_HOURS,
        gt=0,
        description="e-folding time of the truncation degree; sets the coefficient when `hyperdiffusion` is unset",
    )
    hyperdiffusion: Optional[float] = Field(default=None, ge=0, description="Explicit damping coefficient; 0 disables damping")

    def steps_per_lead(self, lead_time_hours: float) -> int:
        steps = lead_time_hours * 3600.0 / self.dt
        if steps < 1 or abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"lead time {lead_time_hours} h is not a positive multiple of dt = {self.dt} s")
        return int(round(steps))
