from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.models.spectral import SpectralCoeffs


@dataclass(frozen=True, eq=False)
class SWEState:
    """Spectral prognostic state of the shallow-water solver.

    Stacked layout is [geopotential, vorticity, divergence] along axis 0,
    matching the dataset channel order.
    """

    time: float
    geopotential: SpectralCoeffs
    vorticity: SpectralCoeffs
    divergence: SpectralCoeffs
    cache: Dict[str, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    @property
    def truncation(self) -> int:
        return self.geopotential.lmax

    def stacked(self) -> np.ndarray:
        return np.stack([self.geopotential.data, self.vorticity.data, self.divergence.data])

    @classmethod
    def from_stacked(cls, time: float, data: np.ndarray) -> "SWEState":
        lmax, mmax = data.shape[-2] - 1, data.shape[-1] - 1
        return cls(
            time=time,
            geopotential=SpectralCoeffs(lmax, mmax, data[0]),
            vorticity=SpectralCoeffs(lmax, mmax, data[1]),
            divergence=SpectralCoeffs(lmax, mmax, data[2]),
        )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.stacked())))
