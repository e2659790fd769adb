"""Discrete spherical harmonic transforms: longitude FFT plus Legendre contraction.

Conventions
-----------
The azimuthal DFT carries the 2π/W longitude quadrature factor on the forward
side, so coefficients are the L²(S²) projections û(l,m) = ∫ u·conj(Y_l^m) dΩ
and a constant field 1 maps to û(0,0) = √(4π). The inverse evaluates the
harmonic series directly, u = Σ_l Σ_m û(l,m)·Y_l^m, which is W·irfft(·).

The Nyquist column m = W/2 never takes part in either direction.

Adjoints are stated over the real parameterization: a complex cotangent g
stands for ∂L/∂Re + i·∂L/∂Im, and ⟨a, b⟩ = Σ Re(a)·Re(b) + Im(a)·Im(b).
"""

import time
from typing import Optional, Tuple

import numpy as np

from src.exceptions import ResolutionError, ShapeError
from src.models.grid import SphericalGrid, build_grid
from src.models.legendre import (
    LegendreTable,
    build_tables,
    legendre_analysis,
    legendre_synthesis,
    normalized_legendre,
)
from src.models.spectral import SpectralCoeffs, order_multiplicity
from src.utils.logging import get_logger
from src.utils.prometheus import prometheus_metrics

logger = get_logger(__name__)


def _retained_orders(mmax: int, nlon: int) -> int:
    """Number of rfft columns that carry retained orders (Nyquist excluded)."""
    return min(mmax + 1, nlon // 2)


def rfft_lon(field: np.ndarray, mmax: int) -> np.ndarray:
    """(2π/W)·Σ_k u_k e^{−imφ_k} for m = 0..mmax on the trailing axis."""
    nlon = field.shape[-1]
    spectrum = np.zeros(field.shape[:-1] + (mmax + 1,), dtype=np.complex128)
    keep = _retained_orders(mmax, nlon)
    spectrum[..., :keep] = np.fft.rfft(field, axis=-1)[..., :keep] * (2.0 * np.pi / nlon)
    return spectrum


def rfft_lon_adjoint(cotangent: np.ndarray, nlon: int) -> np.ndarray:
    keep = _retained_orders(cotangent.shape[-1] - 1, nlon)
    padded = np.zeros(cotangent.shape[:-1] + (nlon // 2 + 1,), dtype=np.complex128)
    padded[..., :keep] = cotangent[..., :keep] / order_multiplicity(keep - 1)
    padded[..., 0] = padded[..., 0].real
    return np.fft.irfft(padded, n=nlon, axis=-1) * (2.0 * np.pi)


def irfft_lon(spectrum: np.ndarray, nlon: int) -> np.ndarray:
    """Σ_m V_m e^{imφ_k} over m = −mmax..mmax for a Hermitian-implicit V."""
    keep = _retained_orders(spectrum.shape[-1] - 1, nlon)
    padded = np.zeros(spectrum.shape[:-1] + (nlon // 2 + 1,), dtype=np.complex128)
    padded[..., :keep] = spectrum[..., :keep]
    padded[..., 0] = padded[..., 0].real
    return np.fft.irfft(padded, n=nlon, axis=-1) * nlon


def irfft_lon_adjoint(cotangent: np.ndarray, mmax: int) -> np.ndarray:
    nlon = cotangent.shape[-1]
    keep = _retained_orders(mmax, nlon)
    out = np.zeros(cotangent.shape[:-1] + (mmax + 1,), dtype=np.complex128)
    out[..., :keep] = np.fft.rfft(cotangent, axis=-1)[..., :keep] * order_multiplicity(keep - 1)
    return out


def _check_field(field: np.ndarray, table: LegendreTable):
    expected = (table.grid_nlat, table.grid_nlon)
    if field.ndim < 2 or tuple(field.shape[-2:]) != expected:
        raise ShapeError(expected, tuple(field.shape[-2:]), "grid field")


def _check_coeffs(data: np.ndarray, table: LegendreTable):
    expected = (table.lmax + 1, table.mmax + 1)
    if data.ndim < 2 or tuple(data.shape[-2:]) != expected:
        raise ShapeError(expected, tuple(data.shape[-2:]), "spectral coefficients")


def sht_forward(field: np.ndarray, table: LegendreTable) -> SpectralCoeffs:
    """û[..., l, m] = Σ_j P[l,m,j]·FT[field][..., j, m]; leading axes are batch."""
    field = np.asarray(field, dtype=np.float64)
    _check_field(field, table)
    spectrum = rfft_lon(field, table.mmax)
    return SpectralCoeffs(table.lmax, table.mmax, legendre_analysis(table.analysis_kernel, spectrum))


def inverse_table_for(coeffs_lmax: int, coeffs_mmax: int, table: LegendreTable,
                      out_grid: Optional[SphericalGrid]) -> LegendreTable:
    """Picks the synthesis table for `out_grid`.

    `table` is reused when it lives on the out grid and covers the coefficients;
    otherwise a table for the out grid is built at the coefficients' truncation.
    """
    same_grid = out_grid is None or table.matches_grid(out_grid)
    if same_grid and coeffs_lmax <= table.lmax and coeffs_mmax <= table.mmax:
        return table
    grid = build_grid(table.grid_kind, table.grid_nlat, table.grid_nlon) if same_grid else out_grid
    if coeffs_lmax > grid.max_degree:
        raise ResolutionError(coeffs_lmax, grid.max_degree, "lmax")
    if coeffs_mmax > grid.max_order:
        raise ResolutionError(coeffs_mmax, grid.max_order, "mmax")
    return build_tables(grid, coeffs_lmax, coeffs_mmax)


def sht_inverse(coeffs: SpectralCoeffs, table: LegendreTable,
                out_grid: Optional[SphericalGrid] = None) -> np.ndarray:
    """Evaluates Σ_l Σ_m û(l,m)·Y_l^m on `out_grid` (the table's grid when omitted).

    When the coefficients exceed the table's truncation, or the out grid differs,
    a synthesis table for the out grid is built at the coefficients' own
    truncation; every supplied coefficient is used. Spectral up-sampling is
    evaluating coarse coefficients on a finer out grid.
    """
    table = inverse_table_for(coeffs.lmax, coeffs.mmax, table, out_grid)
    data = coeffs.resized(table.lmax, table.mmax).data
    spectrum = legendre_synthesis(table.synthesis_kernel, data)
    return irfft_lon(spectrum, table.grid_nlon)


def sht_forward_adjoint(cotangent: SpectralCoeffs, table: LegendreTable) -> np.ndarray:
    """Transpose of `sht_forward` under the real inner product."""
    _check_coeffs(cotangent.data, table)
    spectrum = legendre_synthesis(table.analysis_transpose_kernel, cotangent.data)
    return rfft_lon_adjoint(spectrum, table.grid_nlon)


def sht_inverse_adjoint(cotangent: np.ndarray, table: LegendreTable) -> SpectralCoeffs:
    """Transpose of `sht_inverse` (on the table's own grid) under the real inner product."""
    cotangent = np.asarray(cotangent, dtype=np.float64)
    _check_field(cotangent, table)
    spectrum = irfft_lon_adjoint(cotangent, table.mmax)
    return SpectralCoeffs(table.lmax, table.mmax, legendre_analysis(table.synthesis_transpose_kernel, spectrum))


def harmonic_field(l: int, m: int, grid: SphericalGrid, part: str = "real") -> np.ndarray:
    """Re or Im of Y_l^m sampled on `grid` (phase-free orthonormal convention)."""
    p = normalized_legendre(l, np.cos(grid.colatitudes))[l, m]
    phase = m * grid.longitudes
    angular = np.cos(phase) if part == "real" else np.sin(phase)
    return np.outer(p, angular)


class SphericalHarmonicTransform:
    """Forward/inverse pair bound to one grid and truncation."""

    def __init__(self, grid: SphericalGrid, lmax: Optional[int] = None, mmax: Optional[int] = None):
        self.grid = grid
        self.table = build_tables(grid, lmax, mmax)

    @classmethod
    def for_shape(cls, kind, nlat: int, nlon: int, lmax: Optional[int] = None,
                  mmax: Optional[int] = None) -> "SphericalHarmonicTransform":
        return cls(build_grid(kind, nlat, nlon), lmax, mmax)

    @property
    def lmax(self) -> int:
        return self.table.lmax

    @property
    def mmax(self) -> int:
        return self.table.mmax

    @property
    def modal_shape(self) -> Tuple[int, int]:
        return (self.table.lmax + 1, self.table.mmax + 1)

    def forward(self, field: np.ndarray) -> SpectralCoeffs:
        start = time.perf_counter()
        coeffs = sht_forward(field, self.table)
        prometheus_metrics.record_transform("forward", "1x1", time.perf_counter() - start)
        return coeffs

    def inverse(self, coeffs: SpectralCoeffs, out_grid: Optional[SphericalGrid] = None) -> np.ndarray:
        start = time.perf_counter()
        field = sht_inverse(coeffs, self.table, out_grid)
        prometheus_metrics.record_transform("inverse", "1x1", time.perf_counter() - start)
        return field

    def project(self, field: np.ndarray) -> np.ndarray:
        """Band-limits `field` to this transform's truncation on the same grid."""
        return self.inverse(self.forward(field))
