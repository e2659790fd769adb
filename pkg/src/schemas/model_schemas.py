from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.constants import SWE_CHANNELS
from src.schemas.grid_schemas import GridSpec


class FilterVariant(str, Enum):
    SFNO_LINEAR = "sfno-linear"
    SFNO_NONLINEAR = "sfno-nonlinear"
    FNO_LINEAR = "fno-linear"
    FNO_NONLINEAR = "fno-nonlinear"

    @property
    def is_planar(self) -> bool:
        return self in (FilterVariant.FNO_LINEAR, FilterVariant.FNO_NONLINEAR)

    @property
    def is_nonlinear(self) -> bool:
        return self in (FilterVariant.SFNO_NONLINEAR, FilterVariant.FNO_NONLINEAR)


class PosEmbedKind(str, Enum):
    GRID_LEARNED = "grid-learned"
    SPHERICAL_HARMONIC = "spherical-harmonic"
    NONE = "none"


class SFNOConfig(BaseModel):
    """Network hyper-parameters; `grid` is the outer (data) grid."""

    model_config = ConfigDict(extra="forbid")

    grid: GridSpec = Field(default_factory=GridSpec)
    n_blocks: int = Field(default=4, ge=1)
    embed_dim: int = Field(default=16, ge=1, description="Channel width C inside the blocks")
    scale_factor: int = Field(default=1, ge=1)
    filter: FilterVariant = FilterVariant.SFNO_LINEAR
    lmax: Optional[int] = Field(default=None, ge=0, description="Spectral truncation; defaults to the internal grid limit")
    mmax: Optional[int] = Field(default=None, ge=0)
    in_channels: List[str] = Field(default_factory=lambda: list(SWE_CHANNELS))
    out_channels: List[str] = Field(default_factory=lambda: list(SWE_CHANNELS))
    pos_embed: PosEmbedKind = PosEmbedKind.GRID_LEARNED
    pos_embed_lmax: int = Field(default=8, ge=0, description="Degree cut-off of the spherical-harmonic embedding")
    mlp_ratio: float = Field(default=2.0, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def validate_resolution(self):
        if self.grid.nlat % self.scale_factor or self.grid.nlon % self.scale_factor:
            raise ValueError(
                f"scale_factor {self.scale_factor} must divide the grid size {self.grid.nlat}x{self.grid.nlon}"
            )
        internal = self.internal_grid
        if self.lmax is not None and self.lmax > internal.nlat - 1:
            raise ValueError(f"lmax {self.lmax} exceeds the internal grid limit {internal.nlat - 1}")
        if self.mmax is not None and self.mmax > min(self.resolved_lmax, internal.nlon // 2 - 1):
            raise ValueError(f"mmax {self.mmax} exceeds min(lmax, nlon/2 - 1) of the internal grid")
        if len(self.in_channels) == 0 or len(self.out_channels) == 0:
            raise ValueError("Channel lists must not be empty")
        return self

    @property
    def internal_grid(self) -> GridSpec:
        return self.grid.scaled(self.scale_factor)

    @property
    def resolved_lmax(self) -> int:
        return self.lmax if self.lmax is not None else self.internal_grid.nlat - 1

    @property
    def resolved_mmax(self) -> int:
        if self.mmax is not None:
            return self.mmax
        return min(self.resolved_lmax, self.internal_grid.nlon // 2 - 1)

    @property
    def grid_invariant(self) -> bool:
        """Whether the weights can be evaluated on another grid."""
        return self.pos_embed != PosEmbedKind.GRID_LEARNED
