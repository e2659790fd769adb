"""Fourier-domain mixing used inside the neural-operator blocks.

Spherical variants act on SHT coefficients laid out [..., C, l, m]; planar
variants act on the 2-D DFT of the lat-lon raster laid out [..., C, kx, ky]
with kx covering the signed latitude wavenumbers -K..K-1.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.autodiff import Tensor, ops
from src.exceptions import ResolutionError, ShapeError
from src.models.legendre import LegendreTable, normalized_legendre
from src.models.spectral import SpectralCoeffs, triangular_mask
from src.schemas.model_schemas import FilterVariant
from src.services.sht_service import sht_forward, sht_inverse
from src.utils.logging import get_logger

logger = get_logger(__name__)


def _complex_normal(rng: np.random.Generator, shape: Tuple[int, ...], variance: float) -> np.ndarray:
    """Real pairs with independent parts of the given variance."""
    return rng.standard_normal(shape + (2,)) * math.sqrt(variance)


def _as_pairs(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.complex128)
    return np.stack([values.real, values.imag], axis=-1)


@dataclass
class SpectralFilter:
    """Learnable mixing over retained modes.

    `lmax`/`mmax` bound the retained degrees and orders (spherical) or the
    latitude half-width K−1 and longitude wavenumbers (planar). Complex
    parameters are stored as real pairs in `params`.
    """

    variant: FilterVariant
    c_in: int
    c_out: int
    lmax: int
    mmax: int
    params: Dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def create(cls, variant: Union[FilterVariant, str], c_in: int, c_out: int, lmax: int, mmax: int,
               rng: np.random.Generator, mlp_ratio: float = 2.0) -> "SpectralFilter":
        variant = FilterVariant(variant)
        spec = cls(variant, c_in, c_out, lmax, mmax)
        if variant.is_nonlinear:
            hidden = max(1, int(round(mlp_ratio * c_in)))
            spec.params = {
                "w1": _complex_normal(rng, (hidden, c_in), 2.0 / c_in),
                "b1": np.zeros((hidden, 2)),
                "w2": _complex_normal(rng, (c_out, hidden), 2.0 / hidden),
                "b2": np.zeros((c_out, 2)),
            }
        elif variant == FilterVariant.SFNO_LINEAR:
            spec.params = {"weight": _complex_normal(rng, (lmax + 1, c_out, c_in), 1.0 / (c_in * (lmax + 1)))}
        else:
            spec.params = {
                "weight": _complex_normal(rng, spec.planar_modes + (c_out, c_in), 1.0 / (c_in * spec.planar_modes[0]))
            }
        spec.params = {name: Tensor(value, requires_grad=True, name=name) for name, value in spec.params.items()}
        return spec

    @classmethod
    def from_weights(cls, variant: Union[FilterVariant, str], weights: np.ndarray) -> "SpectralFilter":
        """Linear filter with given complex weights [l, o, c] (spherical) or [kx, ky, o, c] (planar)."""
        variant = FilterVariant(variant)
        if variant.is_nonlinear:
            raise ValueError("from_weights builds linear filters only")
        weights = np.asarray(weights)
        c_out, c_in = weights.shape[-2:]
        if variant == FilterVariant.SFNO_LINEAR:
            lmax, mmax = weights.shape[0] - 1, weights.shape[0] - 1
        else:
            lmax, mmax = weights.shape[0] // 2 - 1, weights.shape[1] - 1
        return cls(variant, c_in, c_out, lmax, mmax,
                   {"weight": Tensor(_as_pairs(weights), requires_grad=True, name="weight")})

    @classmethod
    def identity(cls, variant: Union[FilterVariant, str], channels: int, lmax: int, mmax: int) -> "SpectralFilter":
        variant = FilterVariant(variant)
        eye = np.eye(channels, dtype=np.complex128)
        if variant == FilterVariant.SFNO_LINEAR:
            spec = cls.from_weights(variant, np.broadcast_to(eye, (lmax + 1, channels, channels)))
            spec.mmax = mmax
            return spec
        return cls.from_weights(variant, np.broadcast_to(eye, (2 * (lmax + 1), mmax + 1, channels, channels)))

    @property
    def planar_modes(self) -> Tuple[int, int]:
        return (2 * (self.lmax + 1), self.mmax + 1)

    def parameter_count(self) -> int:
        """Number of complex values."""
        return sum(tensor.data.size // 2 for tensor in self.params.values())

    def complex_param(self, name: str) -> Tensor:
        return ops.complex_join(self.params[name])


def _check_channels(x: Tensor, expected: int, context: str):
    if x.ndim < 3 or x.shape[-3] != expected:
        raise ShapeError(f"[..., {expected}, *, *]", x.shape, context)


def _frequency_mlp(spec: SpectralFilter, x: Tensor) -> Tensor:
    """Two-layer complex MLP over channels applied identically at every mode."""
    w1, w2 = spec.complex_param("w1"), spec.complex_param("w2")
    b1, b2 = spec.complex_param("b1"), spec.complex_param("b2")
    hidden = ops.einsum("hc,...cij->...hij", w1, x) + ops.reshape(b1, (w1.shape[0], 1, 1))
    hidden = ops.crelu(hidden)
    return ops.einsum("oh,...hij->...oij", w2, hidden) + ops.reshape(b2, (spec.c_out, 1, 1))


def _mix_spherical(spec: SpectralFilter, x: Tensor) -> Tensor:
    lkeep, mkeep = x.shape[-2] - 1, x.shape[-1] - 1
    if spec.variant == FilterVariant.SFNO_NONLINEAR:
        return ops.mul(_frequency_mlp(spec, x), triangular_mask(lkeep, mkeep).astype(np.float64))
    weight = spec.complex_param("weight")
    if lkeep < spec.lmax:
        weight = ops.take(weight, list(range(lkeep + 1)), axis=0)
    return ops.einsum("loc,...clm->...olm", weight, x)


def _mix_planar(spec: SpectralFilter, x: Tensor) -> Tensor:
    if spec.variant == FilterVariant.FNO_NONLINEAR:
        return _frequency_mlp(spec, x)
    return ops.einsum("xyoc,...cxy->...oxy", spec.complex_param("weight"), x)


def apply_filter(spec: SpectralFilter, coeffs: Union[Tensor, SpectralCoeffs]) -> Union[Tensor, SpectralCoeffs]:
    """Mixes channels mode by mode; modes beyond the filter's truncation come out zero.

    The output keeps the input's modal shape. A `SpectralCoeffs` input gives a
    `SpectralCoeffs` output.
    """
    if isinstance(coeffs, SpectralCoeffs):
        return SpectralCoeffs(coeffs.lmax, coeffs.mmax, apply_filter(spec, Tensor(coeffs.data)).data)
    if spec.variant.is_planar:
        raise ValueError(f"{spec.variant.value} filters act on planar spectra; use planar_fft_layer")
    _check_channels(coeffs, spec.c_in, "spectral filter input")

    lmax_in, mmax_in = coeffs.shape[-2] - 1, coeffs.shape[-1] - 1
    lkeep, mkeep = min(spec.lmax, lmax_in), min(spec.mmax, mmax_in)
    x = coeffs
    if lkeep < lmax_in:
        x = ops.take(x, list(range(lkeep + 1)), axis=-2)
    if mkeep < mmax_in:
        x = ops.take(x, list(range(mkeep + 1)), axis=-1)
    out = _mix_spherical(spec, x)
    if mkeep < mmax_in:
        out = ops.embed(out, list(range(mkeep + 1)), mmax_in + 1, axis=-1)
    if lkeep < lmax_in:
        out = ops.embed(out, list(range(lkeep + 1)), lmax_in + 1, axis=-2)
    return out


def spherical_conv_layer(u: Tensor, spec: SpectralFilter, table_in: LegendreTable,
                         table_out: Optional[LegendreTable] = None, out_grid=None) -> Tensor:
    """Inverse SHT of the filtered forward SHT; `out_grid` differing from the input grid rescales."""
    coeffs = ops.sht_forward(u, table_in)
    filtered = apply_filter(spec, coeffs)
    return ops.sht_inverse(filtered, table_out or table_in, out_grid)


def _signed_indices(half: int, size: int) -> List[int]:
    return list(range(half)) + list(range(size - half, size))


def _planar_transform(u: Tensor, mix, half: int, n_orders: int, out_shape: Optional[Tuple[int, int]]) -> Tensor:
    nlat, nlon = u.shape[-2:]
    out_nlat, out_nlon = out_shape or (nlat, nlon)
    if 2 * half > min(nlat, out_nlat):
        raise ResolutionError(2 * half, min(nlat, out_nlat), "latitude modes")
    if n_orders > min(nlon, out_nlon) // 2:
        raise ResolutionError(n_orders, min(nlon, out_nlon) // 2, "longitude modes")

    spectrum = ops.fft_lat(ops.rfft_lon(u, n_orders - 1))
    spectrum = ops.take(spectrum, _signed_indices(half, nlat), axis=-2)
    if mix is not None:
        spectrum = mix(spectrum)
    spectrum = ops.embed(spectrum, _signed_indices(half, out_nlat), out_nlat, axis=-2)
    spectrum = ops.scale(spectrum, out_nlat / (nlat * 2.0 * np.pi))
    return ops.irfft_lon(ops.ifft_lat(spectrum), out_nlon)


def planar_fft_layer(u: Tensor, spec: SpectralFilter, out_shape: Optional[Tuple[int, int]] = None) -> Tensor:
    """2-D DFT mixing on the lat-lon raster; identity weights reproduce the retained modes.

    Latitude is treated as a periodic axis. Amplitudes are preserved when
    `out_shape` resamples the raster.
    """
    if not spec.variant.is_planar:
        raise ValueError(f"{spec.variant.value} filters act on SHT coefficients; use spherical_conv_layer")
    _check_channels(u, spec.c_in, "planar layer input")
    return _planar_transform(u, lambda x: _mix_planar(spec, x), spec.lmax + 1, spec.mmax + 1, out_shape)


def planar_resample(u: Tensor, out_shape: Tuple[int, int], half: int, n_orders: int) -> Tensor:
    """Truncates the 2-D spectrum to |kx| < half, ky < n_orders and evaluates it on `out_shape`."""
    return _planar_transform(u, None, half, n_orders, out_shape)


def zonal_convolution(field: np.ndarray, kernel_coeffs: Sequence[float], table: LegendreTable) -> np.ndarray:
    """Convolution with a fixed zonal kernel given by its coefficients κ̂(l, 0).

    F[κ⋆u](l, m) = 2π·√(4π/(2l+1))·κ̂(l, 0)·û(l, m).
    """
    kernel = np.zeros(table.lmax + 1, dtype=np.complex128)
    kernel_coeffs = np.asarray(kernel_coeffs)[: table.lmax + 1]
    kernel[: kernel_coeffs.size] = kernel_coeffs
    degrees = np.arange(table.lmax + 1)
    factors = 2.0 * np.pi * np.sqrt(4.0 * np.pi / (2 * degrees + 1)) * kernel
    coeffs = sht_forward(field, table)
    return sht_inverse(coeffs.scaled_by_degree(factors), table)


def zonal_kernel_values(kernel_coeffs: Sequence[float], cos_angle: np.ndarray) -> np.ndarray:
    """κ(t) = Σ_l κ̂(l, 0)·P̂_l^0(t) for t = cos of the angle to the north pole."""
    kernel_coeffs = np.asarray(kernel_coeffs, dtype=np.float64)
    lmax = kernel_coeffs.size - 1
    p = normalized_legendre(lmax, np.clip(cos_angle, -1.0, 1.0))[:, 0]
    return np.tensordot(kernel_coeffs, p, axes=(0, 0))


def _euler_zyz(alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Rotation matrices Rz(α)·Ry(β)·Rz(γ) with a trailing (3, 3) block."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    return np.stack([
        np.stack([ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb], axis=-1),
        np.stack([sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb], axis=-1),
        np.stack([-sb * cg, sb * sg, cb], axis=-1),
    ], axis=-2)


def euler_angle_convolution(kernel_coeffs: Sequence[float], field: np.ndarray, grid,
                            n_gamma: int = 4) -> np.ndarray:
    """Brute-force (κ⋆u)(x) = ∫_SO(3) κ(R⁻¹x)·u(Rn) dR by nested quadrature over Euler angles.

    α runs over the grid longitudes and β over its colatitudes (so u(Rn) is
    read off the grid), γ over `n_gamma` uniform points. Exact for
    band-limited kernels and fields the grid integrates exactly.
    """
    theta, phi = grid.colatitudes, grid.longitudes
    points = np.stack([
        np.sin(theta)[:, None] * np.cos(phi)[None, :],
        np.sin(theta)[:, None] * np.sin(phi)[None, :],
        np.broadcast_to(np.cos(theta)[:, None], grid.shape),
    ], axis=-1).reshape(-1, 3)

    gamma = 2.0 * np.pi * np.arange(n_gamma) / n_gamma
    beta, alpha, gam = np.meshgrid(theta, phi, gamma, indexing="ij")
    rotations = _euler_zyz(alpha, beta, gam)
    measure = (grid.quadrature_weights[:, None, None] * (2.0 * np.pi / grid.nlon) * (2.0 * np.pi / n_gamma))

    result = np.zeros(points.shape[0])
    for index, x in enumerate(points):
        # third component of R⁻¹x = Rᵀx
        cos_angle = np.einsum("...i,i->...", rotations[..., :, 2], x)
        kernel = zonal_kernel_values(kernel_coeffs, cos_angle)
        result[index] = np.sum(kernel * field[:, :, None] * measure)
    return result.reshape(grid.shape)


def parameter_count_formula(variant: Union[FilterVariant, str], c_in: int, c_out: int, lmax: int, mmax: int) -> int:
    """Complex parameters of a linear filter at the given truncation."""
    variant = FilterVariant(variant)
    if variant == FilterVariant.SFNO_LINEAR:
        return (lmax + 1) * c_in * c_out
    if variant == FilterVariant.FNO_LINEAR:
        return 2 * (lmax + 1) * (mmax + 1) * c_in * c_out
    raise ValueError("closed-form counts exist for linear filters only")
