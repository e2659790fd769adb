"""Normalized associated Legendre functions and the weight matrices of the discrete SHT.

Tables are stored m-major: ``forward_weights[m, l, j]`` holds P[l, m, j] and
``inverse_weights[m, l, j]`` holds P̂[l, m, j]. The (−1)^m factor is folded
into the stored values together with the Condon-Shortley phase of P_l^m, so
the tables hold the phase-free orthonormal functions.
"""

import functools
import json
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.settings import settings
from src.constants import LEGENDRE_CACHE_FORMAT_VERSION
from src.exceptions import DomainError, ResolutionError, TableCacheCorruptError
from src.models.grid import SphericalGrid
from src.schemas.grid_schemas import GridKind
from src.utils.logging import get_logger

logger = get_logger(__name__)


def _legendre_mlj(lmax: int, mmax: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal P̂_l^m(x) laid out as [m, l, j]; zero where m > l."""
    x = np.asarray(x, dtype=np.float64)
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    p = np.zeros((mmax + 1, lmax + 1) + x.shape, dtype=np.float64)

    diagonal = np.full(x.shape, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(mmax + 1):
        if m > 0:
            diagonal = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * diagonal
        if m > lmax:
            break
        p[m, m] = diagonal
        if m + 1 <= lmax:
            p[m, m + 1] = np.sqrt(2.0 * m + 3.0) * x * diagonal
        for l in range(m + 2, lmax + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[m, l] = a * (x * p[m, l - 1] - b * p[m, l - 2])
    return p


def normalized_legendre(lmax: int, x) -> np.ndarray:
    """P̂_l^m(x) = (−1)^m c_l^m P_l^m(x) indexed [l, m, ...] for 0 ≤ m ≤ l ≤ lmax."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1.0) or np.any(~np.isfinite(x)):
        raise DomainError(f"Legendre argument must lie in [-1, 1], got max |x| = {float(np.max(np.abs(x)))}")
    return np.swapaxes(_legendre_mlj(lmax, lmax, x), 0, 1)


def _epsilon(l: np.ndarray, m: int) -> np.ndarray:
    l = np.asarray(l, dtype=np.float64)
    return np.sqrt(np.maximum(0.0, (l * l - m * m) / (4.0 * l * l - 1.0)))


def legendre_theta_derivative(lmax: int, mmax: int, theta: np.ndarray) -> np.ndarray:
    """dP̂_l^m(cosθ)/dθ laid out as [m, l, j]; requires sinθ > 0 at every node."""
    theta = np.asarray(theta, dtype=np.float64)
    p = _legendre_mlj(lmax + 1, mmax, np.cos(theta))
    sin_theta = np.sin(theta)
    derivative = np.zeros((mmax + 1, lmax + 1) + theta.shape, dtype=np.float64)
    for m in range(min(mmax, lmax) + 1):
        l = np.arange(m, lmax + 1)
        upper = (l * _epsilon(l + 1, m))[:, None] * p[m, m + 1:lmax + 2]
        lower = ((l + 1) * _epsilon(l, m))[:, None] * np.concatenate(
            [np.zeros((1,) + theta.shape), p[m, m:lmax]], axis=0
        )
        derivative[m, m:] = (upper - lower) / sin_theta
    return derivative


@dataclass(frozen=True, eq=False)
class LegendreTable:
    """Precomputed forward (quadrature-weighted) and inverse Legendre matrices for one grid."""

    lmax: int
    mmax: int
    grid_nlat: int
    grid_nlon: int
    grid_kind: GridKind
    forward_weights: np.ndarray
    inverse_weights: np.ndarray

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.forward_weights.shape

    def matches_grid(self, grid: SphericalGrid) -> bool:
        return self.grid_nlat == grid.nlat and self.grid_nlon == grid.nlon and self.grid_kind == grid.kind

    @functools.cached_property
    def analysis_kernel(self) -> np.ndarray:
        return ring_major(self.forward_weights)

    @functools.cached_property
    def synthesis_kernel(self) -> np.ndarray:
        return degree_major(self.inverse_weights)

    @functools.cached_property
    def analysis_transpose_kernel(self) -> np.ndarray:
        """Forward weights in synthesis layout: the transpose of the analysis contraction."""
        return degree_major(self.forward_weights)

    @functools.cached_property
    def synthesis_transpose_kernel(self) -> np.ndarray:
        return ring_major(self.inverse_weights)

    def m_block(self, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray]:
        """Forward and inverse weights for orders [start, stop), zero-padded past mmax."""
        size = stop - start
        forward = np.zeros((size, self.lmax + 1, self.grid_nlat))
        inverse = np.zeros_like(forward)
        available = max(0, min(stop, self.mmax + 1) - start)
        forward[:available] = self.forward_weights[start:start + available]
        inverse[:available] = self.inverse_weights[start:start + available]
        return forward, inverse

    def header(self) -> dict:
        return {
            "format_version": LEGENDRE_CACHE_FORMAT_VERSION,
            "lmax": self.lmax,
            "mmax": self.mmax,
            "nlat": self.grid_nlat,
            "nlon": self.grid_nlon,
            "grid_kind": self.grid_kind.value,
            "endianness": "little",
        }


def ring_major(weights_mlj: np.ndarray) -> np.ndarray:
    """[m, l, j] -> [j, l, m] contiguous, the layout consumed by `legendre_analysis`."""
    return np.ascontiguousarray(np.transpose(weights_mlj, (2, 1, 0)))


def degree_major(weights_mlj: np.ndarray) -> np.ndarray:
    """[m, l, j] -> [l, j, m] contiguous, the layout consumed by `legendre_synthesis`."""
    return np.ascontiguousarray(np.transpose(weights_mlj, (1, 2, 0)))


def legendre_analysis(kernel_jlm: np.ndarray, spectrum: np.ndarray) -> np.ndarray:
    """Σ_j P[l,m,j]·X[..., j, m] accumulated ring by ring in ascending j.

    The accumulation order is fixed and every output entry only sees its own
    operands, so splitting the leading axes or m across callers reproduces the
    same bits.
    """
    nrings, nl, nm = kernel_jlm.shape
    out = np.zeros(spectrum.shape[:-2] + (nl, nm), dtype=np.complex128)
    term = np.empty_like(out)
    for j in range(nrings):
        np.multiply(kernel_jlm[j], spectrum[..., j, None, :], out=term)
        out += term
    return out


def legendre_synthesis(kernel_ljm: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Σ_l P̂[l,m,j]·û[..., l, m] accumulated degree by degree in ascending l."""
    nl, nrings, nm = kernel_ljm.shape
    out = np.zeros(coeffs.shape[:-2] + (nrings, nm), dtype=np.complex128)
    term = np.empty_like(out)
    for l in range(min(nl, coeffs.shape[-2])):
        np.multiply(kernel_ljm[l], coeffs[..., l, None, :], out=term)
        out += term
    return out


def _cache_path(grid: SphericalGrid, lmax: int, mmax: int) -> Optional[str]:
    if not settings.legendre_cache_dir:
        return None
    name = f"legendre_{grid.kind.value}_{grid.nlat}x{grid.nlon}_l{lmax}_m{mmax}.bin"
    return os.path.join(settings.legendre_cache_dir, name)


def save_table(table: LegendreTable, path: str):
    header = json.dumps(table.header(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(header + b"\n")
        handle.write(table.forward_weights.astype("<f8").tobytes())
        handle.write(table.inverse_weights.astype("<f8").tobytes())


def load_table(path: str, expected: Optional[dict] = None) -> LegendreTable:
    with open(path, "rb") as handle:
        header_line = handle.readline()
        payload = handle.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TableCacheCorruptError(path, f"unreadable header ({e})")
    if header.get("format_version") != LEGENDRE_CACHE_FORMAT_VERSION:
        raise TableCacheCorruptError(path, f"unsupported format {header.get('format_version')}")
    if expected is not None:
        differences = [key for key, value in expected.items() if header.get(key) != value]
        if differences:
            raise TableCacheCorruptError(path, f"header mismatch in {differences}")
    shape = (header["mmax"] + 1, header["lmax"] + 1, header["nlat"])
    count = int(np.prod(shape))
    if len(payload) != 2 * count * 8:
        raise TableCacheCorruptError(path, f"payload has {len(payload)} bytes, expected {2 * count * 8}")
    dtype = "<f8" if header.get("endianness") == "little" else ">f8"
    data = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    forward = data[:count].reshape(shape)
    inverse = data[count:].reshape(shape)
    forward.flags.writeable = False
    inverse.flags.writeable = False
    return LegendreTable(
        lmax=header["lmax"],
        mmax=header["mmax"],
        grid_nlat=header["nlat"],
        grid_nlon=header["nlon"],
        grid_kind=GridKind(header["grid_kind"]),
        forward_weights=forward,
        inverse_weights=inverse,
    )


@functools.lru_cache(maxsize=128)
def _build_tables_cached(grid_key: Tuple[GridKind, int, int], lmax: int, mmax: int) -> LegendreTable:
    from src.models.grid import build_grid

    grid = build_grid(*grid_key)
    path = _cache_path(grid, lmax, mmax)
    if path and os.path.exists(path):
        table = load_table(path, expected={
            "lmax": lmax, "mmax": mmax, "nlat": grid.nlat, "nlon": grid.nlon, "grid_kind": grid.kind.value
        })
        logger.debug("Legendre table loaded from cache", path=path)
        return table

    inverse = _legendre_mlj(lmax, mmax, np.cos(grid.colatitudes))
    forward = inverse * grid.quadrature_weights
    forward.flags.writeable = False
    inverse.flags.writeable = False
    table = LegendreTable(
        lmax=lmax,
        mmax=mmax,
        grid_nlat=grid.nlat,
        grid_nlon=grid.nlon,
        grid_kind=grid.kind,
        forward_weights=forward,
        inverse_weights=inverse,
    )
    if path:
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_table(table, path)
        logger.debug("Legendre table cached", path=path)
    return table


def build_tables(grid: SphericalGrid, lmax: Optional[int] = None, mmax: Optional[int] = None) -> LegendreTable:
    lmax = grid.max_degree if lmax is None else int(lmax)
    if lmax < 0 or lmax > grid.max_degree:
        raise ResolutionError(lmax, grid.max_degree, "lmax")
    mmax = min(lmax, grid.max_order) if mmax is None else int(mmax)
    if mmax < 0 or mmax > min(lmax, grid.nlon // 2):
        raise ResolutionError(mmax, min(lmax, grid.nlon // 2), "mmax")
    return _build_tables_cached((grid.kind, grid.nlat, grid.nlon), lmax, mmax)
