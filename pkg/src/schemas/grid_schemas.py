from enum import Enum
from pydantic import BaseModel, ConfigDict, Field

from src.constants import RING_PLACEMENT
from src.exceptions import ConfigError


class GridKind(str, Enum):
    EQUIANGULAR_RIEMANN = "equiangular-riemann"
    EQUIANGULAR_CLENSHAW_CURTIS = "equiangular-clenshaw-curtis"
    GAUSS_LEGENDRE = "gauss-legendre"


GRID_KIND_ALIASES = {
    "gauss": GridKind.GAUSS_LEGENDRE,
    "legendre-gauss": GridKind.GAUSS_LEGENDRE,
    "gauss-legendre": GridKind.GAUSS_LEGENDRE,
    "equiangular": GridKind.EQUIANGULAR_RIEMANN,
    "riemann": GridKind.EQUIANGULAR_RIEMANN,
    "equiangular-riemann": GridKind.EQUIANGULAR_RIEMANN,
    "clenshaw-curtis": GridKind.EQUIANGULAR_CLENSHAW_CURTIS,
    "equiangular-clenshaw-curtis": GridKind.EQUIANGULAR_CLENSHAW_CURTIS,
}


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: GridKind = GridKind.GAUSS_LEGENDRE
    nlat: int = Field(default=32, ge=1)
    nlon: int = Field(default=64, ge=1)

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parses `kind:HxW` (e.g. `gauss:32x64`); a bare `HxW` means gauss-legendre."""
        kind_text, _, size_text = text.rpartition(":")
        kind = GRID_KIND_ALIASES.get(kind_text.strip().lower() or "gauss")
        if kind is None:
            raise ConfigError(f"Unknown grid kind '{kind_text}'. Available: {sorted(GRID_KIND_ALIASES)}")
        try:
            nlat_text, nlon_text = size_text.lower().split("x")
            return cls(kind=kind, nlat=int(nlat_text), nlon=int(nlon_text))
        except ValueError:
            raise ConfigError(f"Grid size must look like HxW, got '{size_text}'")

    def label(self) -> str:
        return f"{self.kind.value}:{self.nlat}x{self.nlon}"

    def scaled(self, factor: int) -> "GridSpec":
        return GridSpec(kind=self.kind, nlat=self.nlat // factor, nlon=self.nlon // factor)

    def header(self) -> dict:
        return {
            "kind": self.kind.value,
            "nlat": self.nlat,
            "nlon": self.nlon,
            "ring_placement": RING_PLACEMENT,
        }
