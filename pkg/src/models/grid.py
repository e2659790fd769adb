"""Discretizations of the sphere: ring colatitudes, longitudes and quadrature weights."""

import functools
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from config.settings import settings
from src.exceptions import ConvergenceError, GridSizeError
from src.schemas.grid_schemas import GridKind, GridSpec
from src.utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """One discretization of S².

    Attributes:
      kind: ring placement and quadrature rule.
      colatitudes: θ_j in (0, π), strictly increasing, length nlat.
      longitudes: φ_k = 2πk/nlon, length nlon.
      quadrature_weights: w(θ_j) approximating ∫ sinθ dθ, length nlat.
    """

    kind: GridKind
    nlat: int
    nlon: int
    colatitudes: np.ndarray
    longitudes: np.ndarray
    quadrature_weights: np.ndarray

    @property
    def spec(self) -> GridSpec:
        return GridSpec(kind=self.kind, nlat=self.nlat, nlon=self.nlon)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nlat, self.nlon)

    @property
    def latitudes(self) -> np.ndarray:
        return np.pi / 2 - self.colatitudes

    @property
    def max_degree(self) -> int:
        """Largest degree a table on this grid may carry."""
        return self.nlat - 1

    @property
    def max_order(self) -> int:
        """Largest retained azimuthal order; the Nyquist column is dropped."""
        return self.nlon // 2 - 1

    def header(self) -> dict:
        return self.spec.header()


def gauss_legendre_nodes(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes (descending in x, so θ ascends) and weights by Newton iteration."""
    tolerance = settings.gauss_newton_tolerance
    max_iterations = settings.gauss_newton_max_iterations
    i = np.arange(1, n + 1, dtype=np.float64)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    residual = np.inf
    for iteration in range(max_iterations):
        p_prev = np.ones_like(x)
        p = x.copy()
        for k in range(2, n + 1):
            p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
        dp = n * (x * p - p_prev) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        residual = float(np.max(np.abs(dx)))
        if residual < tolerance:
            break
    else:
        raise ConvergenceError("Gauss-Legendre root iteration", max_iterations, residual)

    # weights from the converged nodes
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    weights = 2.0 / ((1.0 - x * x) * dp * dp)
    return x, weights


def _centered_colatitudes(nlat: int) -> np.ndarray:
    return (np.arange(nlat, dtype=np.float64) + 0.5) * np.pi / nlat


def _riemann_weights(theta: np.ndarray) -> np.ndarray:
    return np.sin(theta) * np.pi / theta.shape[0]


def _clenshaw_curtis_weights(theta: np.ndarray) -> np.ndarray:
    # Cell-centered rings: the open (first Fejér) variant of Clenshaw-Curtis.
    n = theta.shape[0]
    k = np.arange(1, n // 2 + 1, dtype=np.float64)
    series = np.cos(2.0 * np.outer(theta, k)) / (4.0 * k * k - 1.0)
    return (2.0 / n) * (1.0 - 2.0 * series.sum(axis=1))


def _validate_size(nlat: int, nlon: int):
    if nlat < 2:
        raise GridSizeError(nlat, nlon, "nlat must be at least 2")
    if nlon < 4:
        raise GridSizeError(nlat, nlon, "nlon must be at least 4")
    if nlon % 2 != 0:
        raise GridSizeError(nlat, nlon, "nlon must be even")


@functools.lru_cache(maxsize=64)
def _build_grid_cached(kind: GridKind, nlat: int, nlon: int) -> SphericalGrid:
    if kind == GridKind.GAUSS_LEGENDRE:
        x, weights = gauss_legendre_nodes(nlat)
        colatitudes = np.arccos(x)
    elif kind == GridKind.EQUIANGULAR_RIEMANN:
        colatitudes = _centered_colatitudes(nlat)
        weights = _riemann_weights(colatitudes)
    else:
        colatitudes = _centered_colatitudes(nlat)
        weights = _clenshaw_curtis_weights(colatitudes)

    longitudes = 2.0 * np.pi * np.arange(nlon, dtype=np.float64) / nlon
    for array in (colatitudes, longitudes, weights):
        array.flags.writeable = False

    logger.debug("Grid built", kind=kind.value, nlat=nlat, nlon=nlon, weight_sum=float(weights.sum()))
    return SphericalGrid(
        kind=kind,
        nlat=nlat,
        nlon=nlon,
        colatitudes=colatitudes,
        longitudes=longitudes,
        quadrature_weights=weights,
    )


def build_grid(kind: Union[GridKind, str], nlat: int, nlon: int) -> SphericalGrid:
    kind = GridKind(kind)
    _validate_size(nlat, nlon)
    return _build_grid_cached(kind, int(nlat), int(nlon))


def grid_from_spec(spec: GridSpec) -> SphericalGrid:
    return build_grid(spec.kind, spec.nlat, spec.nlon)


def sphere_measure_weights(grid: SphericalGrid) -> np.ndarray:
    """Per-node area weights w(θ_j)·2π/W on the (nlat, nlon) raster; they sum to ≈ 4π."""
    ring = grid.quadrature_weights * (2.0 * np.pi / grid.nlon)
    return np.repeat(ring[:, None], grid.nlon, axis=1)
