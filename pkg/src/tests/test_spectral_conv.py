"""
Tests de la convolución espectral: filtros esféricos, capa FFT plana,
teorema de convolución zonal y equivariancia discreta.
"""

import numpy as np
import pytest

from src.autodiff import Tape, Tensor, no_grad
from src.exceptions import ResolutionError, ShapeError
from src.models.grid import build_grid
from src.models.legendre import build_tables
from src.models.spectral import SpectralCoeffs, triangular_mask
from src.schemas.grid_schemas import GridKind
from src.services.sht_service import sht_forward, sht_inverse
from src.services.spectral_conv_service import (
    SpectralFilter,
    apply_filter,
    euler_angle_convolution,
    parameter_count_formula,
    planar_fft_layer,
    spherical_conv_layer,
    zonal_convolution,
)


def bandlimited_field(rng, table, lmax, leading=()):
    data = rng.standard_normal(leading + (table.lmax + 1, table.mmax + 1)) \
        + 1j * rng.standard_normal(leading + (table.lmax + 1, table.mmax + 1))
    data *= triangular_mask(table.lmax, table.mmax)
    data[..., lmax + 1:, :] = 0.0
    data[..., :, 0] = data[..., :, 0].real
    return sht_inverse(SpectralCoeffs(table.lmax, table.mmax, data), table)


def run(layer, *args, **kwargs) -> np.ndarray:
    with no_grad():
        return layer(*args, **kwargs).data


@pytest.mark.unit
class TestApplyFilter:
    """Tests del filtro espectral sobre coeficientes."""

    @pytest.fixture
    def coeffs(self):
        rng = np.random.default_rng(1)
        data = (rng.standard_normal((2, 12, 12)) + 1j * rng.standard_normal((2, 12, 12))) * triangular_mask(11, 11)
        return SpectralCoeffs(11, 11, data)

    def test_identity_filter(self, coeffs):
        """Valida que el filtro identidad devuelve los mismos coeficientes."""
        spec = SpectralFilter.identity("sfno-linear", 2, 11, 11)
        assert np.allclose(apply_filter(spec, coeffs).data, coeffs.data, atol=1e-14)

    def test_degree_projector(self):
        """Valida que κ(l) = δ_{l,2} conserva solo la fila l = 2."""
        rng = np.random.default_rng(2)
        data = (rng.standard_normal((1, 6, 6)) + 1j * rng.standard_normal((1, 6, 6))) * triangular_mask(5, 5)
        weights = np.zeros((6, 1, 1), dtype=np.complex128)
        weights[2] = 1.0
        out = apply_filter(SpectralFilter.from_weights("sfno-linear", weights), SpectralCoeffs(5, 5, data)).data
        expected = np.zeros_like(data)
        expected[:, 2] = data[:, 2]
        assert np.array_equal(out, expected)

    def test_modes_beyond_truncation_are_zero(self, coeffs):
        """Valida que los modos por encima de la truncación del filtro salen nulos."""
        spec = SpectralFilter.create("sfno-linear", 2, 3, 5, 4, np.random.default_rng(0))
        out = apply_filter(spec, coeffs).data
        assert out.shape == (3, 12, 12)
        assert np.all(out[:, 6:, :] == 0) and np.all(out[:, :, 5:] == 0)
        assert np.any(out[:, :6, :5] != 0)

    def test_channel_mismatch(self, coeffs):
        """Valida que un número de canales incorrecto es un error de forma."""
        spec = SpectralFilter.create("sfno-linear", 3, 3, 11, 11, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            apply_filter(spec, coeffs)

    def test_nonlinear_filter_is_deterministic_and_triangular(self, coeffs):
        """Valida que la variante no lineal es determinista, conserva la forma y respeta m ≤ l."""
        first = SpectralFilter.create("sfno-nonlinear", 2, 4, 11, 11, np.random.default_rng(9))
        second = SpectralFilter.create("sfno-nonlinear", 2, 4, 11, 11, np.random.default_rng(9))
        first.params["b1"].data[:] = 0.3
        second.params["b1"].data[:] = 0.3
        out_first, out_second = apply_filter(first, coeffs).data, apply_filter(second, coeffs).data
        assert out_first.shape == (4, 12, 12)
        assert out_first.tobytes() == out_second.tobytes()
        assert np.all(out_first[:, ~triangular_mask(11, 11)] == 0)

    def test_parameter_counts(self):
        """Valida los conteos de parámetros de los filtros lineales."""
        rng = np.random.default_rng(0)
        sfno = SpectralFilter.create("sfno-linear", 4, 6, 15, 15, rng)
        fno = SpectralFilter.create("fno-linear", 4, 6, 7, 15, rng)
        assert sfno.parameter_count() == 16 * 4 * 6 == parameter_count_formula("sfno-linear", 4, 6, 15, 15)
        assert fno.parameter_count() == 16 * 16 * 4 * 6 == parameter_count_formula("fno-linear", 4, 6, 7, 15)
        assert sfno.params["weight"].shape == (16, 6, 4, 2)
        assert fno.params["weight"].shape == (16, 16, 6, 4, 2)

    def test_linear_initialization_variance(self):
        """Valida la varianza de inicialización 1/(C_in·(L+1)) por parte real e imaginaria."""
        spec = SpectralFilter.create("sfno-linear", 16, 16, 31, 31, np.random.default_rng(4))
        variance = spec.params["weight"].data.var()
        assert variance == pytest.approx(1.0 / (16 * 32), rel=0.05)


@pytest.mark.numerics
class TestSphericalConvolution:
    """Tests de la capa de convolución esférica."""

    @pytest.fixture
    def grid(self):
        return build_grid(GridKind.GAUSS_LEGENDRE, 16, 32)

    @pytest.fixture
    def table(self, grid):
        return build_tables(grid)

    def test_identity_layer_on_bandlimited_input(self, table):
        """Valida que el filtro identidad reproduce una entrada limitada en banda."""
        u = bandlimited_field(np.random.default_rng(3), table, 15, (2,))
        spec = SpectralFilter.identity("sfno-linear", 2, table.lmax, table.mmax)
        out = run(spherical_conv_layer, Tensor(u), spec, table)
        assert np.max(np.abs(out - u)) < 1e-10

    @pytest.mark.parametrize("shift", [1, 5, 17])
    def test_longitude_shift_equivariance(self, table, shift):
        """Valida que desplazar en longitud conmuta con la capa sfno-linear."""
        rng = np.random.default_rng(shift)
        u = rng.standard_normal((3,) + (table.grid_nlat, table.grid_nlon))
        spec = SpectralFilter.create("sfno-linear", 3, 2, table.lmax, table.mmax, rng)
        shifted_then_layer = run(spherical_conv_layer, Tensor(np.roll(u, shift, axis=-1)), spec, table)
        layer_then_shift = np.roll(run(spherical_conv_layer, Tensor(u), spec, table), shift, axis=-1)
        assert np.max(np.abs(shifted_then_layer - layer_then_shift)) < 1e-10

    def test_down_then_up_equals_truncation(self):
        """Valida que bajar 64×128 → 32×64 con L=15 y volver equivale a truncar a L=15."""
        fine = build_grid(GridKind.GAUSS_LEGENDRE, 64, 128)
        coarse = build_grid(GridKind.GAUSS_LEGENDRE, 32, 64)
        table_fine = build_tables(fine, 15, 15)
        u = np.random.default_rng(8).standard_normal((1,) + fine.shape)
        spec = SpectralFilter.identity("sfno-linear", 1, 15, 15)

        down = run(spherical_conv_layer, Tensor(u), spec, table_fine, None, coarse)
        assert down.shape == (1,) + coarse.shape
        up = run(spherical_conv_layer, Tensor(down), spec, build_tables(coarse, 15, 15), None, fine)
        direct = sht_inverse(sht_forward(u, table_fine), table_fine)
        assert np.max(np.abs(up - direct)) < 1e-10

    def test_zonal_convolution_matches_euler_quadrature(self, grid, table):
        """Valida el teorema de convolución contra la integral sobre SO(3) por ángulos de Euler."""
        rng = np.random.default_rng(6)
        kernel = rng.standard_normal(7)
        u = bandlimited_field(rng, table, 6)
        spectral = zonal_convolution(u, kernel, table)
        brute = euler_angle_convolution(kernel, u, grid)
        assert np.max(np.abs(spectral - brute)) < 1e-6 * max(1.0, np.max(np.abs(brute)))

    def test_layer_gradient_matches_finite_differences(self, table):
        """Valida el gradiente de los pesos del filtro frente a diferencias centrales."""
        rng = np.random.default_rng(12)
        u = rng.standard_normal((2, table.grid_nlat, table.grid_nlon))
        target = rng.standard_normal((2, table.grid_nlat, table.grid_nlon))
        spec = SpectralFilter.create("sfno-linear", 2, 2, 7, 7, rng)
        weight = spec.params["weight"]

        def loss_value():
            with no_grad():
                return float(np.sum((spherical_conv_layer(Tensor(u), spec, table).data - target) ** 2))

        with Tape() as tape:
            out = spherical_conv_layer(Tensor(u), spec, table)
            diff = out - target
            grads = tape.backward((diff * diff).sum(), wrt=[weight])

        eps = 1e-4
        for index in [(0, 0, 0, 0), (3, 1, 0, 1), (7, 1, 1, 0), (5, 0, 1, 1)]:
            original = weight.data[index]
            weight.data[index] = original + eps
            plus = loss_value()
            weight.data[index] = original - eps
            minus = loss_value()
            weight.data[index] = original
            assert grads[weight][index] == pytest.approx((plus - minus) / (2 * eps), rel=1e-5, abs=1e-8)


@pytest.mark.numerics
class TestPlanarLayer:
    """Tests de la capa FFT plana usada como línea base."""

    @staticmethod
    def raster_mode(nlat, nlon, k, m, phase=0.3):
        rows = np.arange(nlat)[:, None] * 2.0 * np.pi / nlat
        cols = np.arange(nlon)[None, :] * 2.0 * np.pi / nlon
        return np.cos(k * rows + m * cols + phase)

    def test_identity_on_retained_modes(self):
        """Valida que pesos identidad reproducen los modos retenidos."""
        u = (self.raster_mode(16, 32, 2, 3) + 0.5 * self.raster_mode(16, 32, -3, 1, 1.1)
             + self.raster_mode(16, 32, 1, 0, 0.7))[None]
        spec = SpectralFilter.identity("fno-linear", 1, 3, 3)
        out = run(planar_fft_layer, Tensor(u), spec)
        assert np.max(np.abs(out - u)) < 1e-10

    def test_resampling_preserves_amplitude(self):
        """Valida que cambiar la resolución del ráster conserva la amplitud de cada modo."""
        u = self.raster_mode(16, 32, 2, 3)[None]
        spec = SpectralFilter.identity("fno-linear", 1, 3, 3)
        out = run(planar_fft_layer, Tensor(u), spec, (32, 64))
        assert np.max(np.abs(out - self.raster_mode(32, 64, 2, 3)[None])) < 1e-10

    def test_circular_shift_commutes(self):
        """Valida que la traslación circular en ambos ejes conmuta con la capa."""
        rng = np.random.default_rng(21)
        u = rng.standard_normal((2, 16, 32))
        spec = SpectralFilter.create("fno-linear", 2, 3, 3, 5, rng)
        shifted_then_layer = run(planar_fft_layer, Tensor(np.roll(u, (3, 7), axis=(-2, -1))), spec)
        layer_then_shift = np.roll(run(planar_fft_layer, Tensor(u), spec), (3, 7), axis=(-2, -1))
        assert np.max(np.abs(shifted_then_layer - layer_then_shift)) < 1e-10

    def test_too_many_modes(self):
        """Valida que más modos de los que admite el ráster es un error de resolución."""
        spec = SpectralFilter.identity("fno-linear", 1, 8, 3)
        with pytest.raises(ResolutionError):
            run(planar_fft_layer, Tensor(np.zeros((1, 16, 32))), spec)
