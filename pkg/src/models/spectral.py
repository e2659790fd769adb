from dataclasses import dataclass

import numpy as np

from src.exceptions import ShapeError


def triangular_mask(lmax: int, mmax: int) -> np.ndarray:
    l = np.arange(lmax + 1)[:, None]
    m = np.arange(mmax + 1)[None, :]
    return m <= l


def degree_eigenvalues(lmax: int, radius: float = 1.0) -> np.ndarray:
    """Eigenvalues −l(l+1)/a² of the Laplace-Beltrami operator, one per degree."""
    l = np.arange(lmax + 1, dtype=np.float64)
    return -l * (l + 1.0) / (radius * radius)


def order_multiplicity(mmax: int) -> np.ndarray:
    """g_m: 1 for m = 0, 2 otherwise (accounts for the implicit negative orders)."""
    g = np.full(mmax + 1, 2.0)
    g[0] = 1.0
    return g


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Triangular complex coefficients û[..., l, m], 0 ≤ m ≤ min(l, mmax), l ≤ lmax.

    Negative orders are implied by û(l,−m) = (−1)^m conj(û(l,m)) and never stored.
    """

    lmax: int
    mmax: int
    data: np.ndarray

    def __post_init__(self):
        expected = (self.lmax + 1, self.mmax + 1)
        if self.data.ndim < 2 or tuple(self.data.shape[-2:]) != expected:
            raise ShapeError(expected, tuple(self.data.shape[-2:]), "spectral coefficients")

    @classmethod
    def zeros(cls, lmax: int, mmax: int, leading=()) -> "SpectralCoeffs":
        return cls(lmax, mmax, np.zeros(tuple(leading) + (lmax + 1, mmax + 1), dtype=np.complex128))

    @property
    def leading_shape(self):
        return self.data.shape[:-2]

    def resized(self, lmax: int, mmax: int) -> "SpectralCoeffs":
        """Truncates or zero-pads to (lmax, mmax)."""
        out = np.zeros(self.leading_shape + (lmax + 1, mmax + 1), dtype=np.complex128)
        nl = min(lmax, self.lmax) + 1
        nm = min(mmax, self.mmax) + 1
        out[..., :nl, :nm] = self.data[..., :nl, :nm]
        return SpectralCoeffs(lmax, mmax, out)

    def scaled_by_degree(self, factors: np.ndarray) -> "SpectralCoeffs":
        return SpectralCoeffs(self.lmax, self.mmax, self.data * factors[:, None])

    def power_spectrum(self) -> np.ndarray:
        """Σ_m g_m |û(l,m)|² per degree l."""
        return np.sum(np.abs(self.data) ** 2 * order_multiplicity(self.mmax), axis=-1)

    def energy(self) -> np.ndarray:
        return self.power_spectrum().sum(axis=-1)

    def __add__(self, other: "SpectralCoeffs") -> "SpectralCoeffs":
        return SpectralCoeffs(self.lmax, self.mmax, self.data + other.data)

    def __sub__(self, other: "SpectralCoeffs") -> "SpectralCoeffs":
        return SpectralCoeffs(self.lmax, self.mmax, self.data - other.data)

    def __mul__(self, scalar) -> "SpectralCoeffs":
        return SpectralCoeffs(self.lmax, self.mmax, self.data * scalar)

    __rmul__ = __mul__
