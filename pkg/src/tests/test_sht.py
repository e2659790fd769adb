"""
Tests unitarios para las transformadas armónicas esféricas discretas.
Cubre exactitud, Parseval, linealidad, desplazamientos y adjuntos.
"""

import numpy as np
import pytest

from src.exceptions import ResolutionError, ShapeError
from src.models.grid import build_grid, sphere_measure_weights
from src.models.legendre import build_tables
from src.models.spectral import SpectralCoeffs, order_multiplicity, triangular_mask
from src.schemas.grid_schemas import GridKind
from src.services.sht_service import (
    harmonic_field,
    irfft_lon,
    irfft_lon_adjoint,
    rfft_lon,
    rfft_lon_adjoint,
    sht_forward,
    sht_forward_adjoint,
    sht_inverse,
    sht_inverse_adjoint,
)


def random_coeffs(lmax: int, mmax: int, leading=(), seed: int = 0) -> SpectralCoeffs:
    rng = np.random.default_rng(seed)
    shape = tuple(leading) + (lmax + 1, mmax + 1)
    data = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * triangular_mask(lmax, mmax)
    data[..., 0] = data[..., 0].real
    return SpectralCoeffs(lmax, mmax, data)


def real_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a.real * b.real + a.imag * b.imag))


@pytest.mark.unit
@pytest.mark.numerics
class TestForwardInverse:
    """Tests del par directo/inverso."""

    @pytest.fixture
    def grid(self):
        return build_grid(GridKind.GAUSS_LEGENDRE, 16, 32)

    @pytest.fixture
    def table(self, grid):
        return build_tables(grid)

    def test_constant_field(self, grid, table):
        """Valida que u ≡ 1 tiene û(0,0) = √(4π) y el resto nulo."""
        coeffs = sht_forward(np.ones(grid.shape), table).data
        assert abs(coeffs[0, 0] - np.sqrt(4 * np.pi)) < 1e-12
        coeffs[0, 0] = 0
        assert np.max(np.abs(coeffs)) < 1e-12

    def test_single_harmonic_concentrates_energy(self, grid, table):
        """Valida que Re Y₃² concentra la energía en (3,2)."""
        coeffs = sht_forward(harmonic_field(3, 2, grid), table).data
        assert abs(coeffs[3, 2] - 0.5) < 1e-12
        coeffs[3, 2] = 0
        assert np.max(np.abs(coeffs)) < 1e-10

    def test_batch_equals_independent_transforms(self, grid, table):
        """Valida que transformar un lote equivale bit a bit a transformar cada campo."""
        fields = np.random.default_rng(1).standard_normal((3, 2) + grid.shape)
        batched = sht_forward(fields, table).data
        for i in range(3):
            for c in range(2):
                assert batched[i, c].tobytes() == sht_forward(fields[i, c], table).data.tobytes()

    def test_round_trip_on_gauss_grid(self, grid, table):
        """Valida que inverse(forward(u)) = u para u de banda limitada."""
        field = sht_inverse(random_coeffs(15, 15, (4,)), table)
        np.testing.assert_allclose(sht_inverse(sht_forward(field, table), table), field, atol=1e-10)

    def test_delta_coefficient_gives_constant(self, table):
        """Valida que δ(0,0)·√(4π) produce el campo constante 1."""
        coeffs = SpectralCoeffs.zeros(table.lmax, table.mmax)
        coeffs.data[0, 0] = np.sqrt(4 * np.pi)
        np.testing.assert_allclose(sht_inverse(coeffs, table), 1.0, atol=1e-12)

    def test_upsample_then_analyze(self):
        """Valida que evaluar coeficientes l ≤ 7 en 32×64 y reanalizar los recupera."""
        fine = build_grid(GridKind.GAUSS_LEGENDRE, 32, 64)
        coarse_table = build_tables(build_grid(GridKind.GAUSS_LEGENDRE, 8, 16), 7, 7)
        coeffs = random_coeffs(7, 7, seed=3)
        field = sht_inverse(coeffs, coarse_table, out_grid=fine)
        assert field.shape == (32, 64)
        recovered = sht_forward(field, build_tables(fine)).data
        np.testing.assert_allclose(recovered[:8, :8], coeffs.data, atol=1e-10)
        assert np.max(np.abs(recovered[8:])) < 1e-10

    def test_coefficients_beyond_table_are_kept(self, grid):
        """Valida que coeficientes por encima de la truncación de la tabla se evalúan en lugar de descartarse."""
        small_table = build_tables(grid, 5, 5)
        coeffs = random_coeffs(12, 12, seed=8)
        field = sht_inverse(coeffs, small_table)
        recovered = sht_forward(field, build_tables(grid, 12, 12)).data
        np.testing.assert_allclose(recovered, coeffs.data, atol=1e-10)

    def test_parseval_on_gauss_grid(self, grid, table):
        """Valida Σ w_i u² = Σ g_m|û|² para campos de banda limitada."""
        weights = sphere_measure_weights(grid)
        for seed in range(10):
            coeffs = random_coeffs(15, 15, seed=seed)
            field = sht_inverse(coeffs, table)
            spatial = np.sum(weights * field ** 2)
            spectral = np.sum(order_multiplicity(15) * np.abs(coeffs.data) ** 2)
            assert abs(spatial - spectral) / spectral < 1e-10

    def test_linearity(self, grid, table):
        """Valida la linealidad de la transformada directa."""
        rng = np.random.default_rng(5)
        u, v = rng.standard_normal((2,) + grid.shape)
        combined = sht_forward(2.5 * u - 0.75 * v, table).data
        separate = 2.5 * sht_forward(u, table).data - 0.75 * sht_forward(v, table).data
        np.testing.assert_allclose(combined, separate, atol=1e-12)

    def test_longitude_shift_is_phase_rotation(self, grid, table):
        """Valida que desplazar s pasos en longitud multiplica û(l,m) por exp(−i2πms/W)."""
        field = np.random.default_rng(7).standard_normal(grid.shape)
        base = sht_forward(field, table).data
        for s in (1, 5, 13):
            shifted = sht_forward(np.roll(field, s, axis=-1), table).data
            phase = np.exp(-2j * np.pi * np.arange(table.mmax + 1) * s / grid.nlon)
            np.testing.assert_allclose(shifted, base * phase, atol=1e-12)

    def test_riemann_round_trip_error_decreases(self):
        """Valida que el error de ida y vuelta en grillas equiangulares decrece con la resolución."""
        errors = []
        for nlat in (16, 32, 64):
            grid = build_grid(GridKind.EQUIANGULAR_RIEMANN, nlat, 2 * nlat)
            table = build_tables(grid, 7, 7)
            field = sht_inverse(random_coeffs(7, 7, seed=11), table)
            errors.append(np.max(np.abs(sht_inverse(sht_forward(field, table), table) - field)))
        assert errors[0] > errors[1] > errors[2]

    def test_wrong_field_shape(self, table):
        """Valida que un campo con dimensiones incorrectas produce un error de forma."""
        with pytest.raises(ShapeError):
            sht_forward(np.zeros((16, 30)), table)

    def test_inverse_on_too_coarse_grid(self):
        """Valida que evaluar coeficientes en una grilla demasiado gruesa falla."""
        table = build_tables(build_grid(GridKind.GAUSS_LEGENDRE, 16, 32))
        coarse = build_grid(GridKind.GAUSS_LEGENDRE, 8, 16)
        with pytest.raises(ResolutionError):
            sht_inverse(random_coeffs(15, 15), table, out_grid=coarse)


@pytest.mark.unit
@pytest.mark.numerics
class TestAdjoints:
    """Tests de adjuntos con producto interno real."""

    @pytest.fixture
    def table(self):
        return build_tables(build_grid(GridKind.GAUSS_LEGENDRE, 12, 24), 11, 9)

    def test_forward_dot_product(self, table):
        """Valida ⟨F x, y⟩ = ⟨x, Fᵀ y⟩."""
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 12, 24))
        y = random_coeffs(11, 9, (2,), seed=4)
        lhs = real_inner(sht_forward(x, table).data, y.data)
        rhs = float(np.sum(x * sht_forward_adjoint(y, table)))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_inverse_dot_product(self, table):
        """Valida ⟨G y, x⟩ = ⟨y, Gᵀ x⟩ incluyendo la parte imaginaria de m = 0."""
        rng = np.random.default_rng(6)
        x = rng.standard_normal((12, 24))
        shape = (12, 10)
        y = SpectralCoeffs(11, 9, (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * triangular_mask(11, 9))
        lhs = float(np.sum(sht_inverse(y, table) * x))
        rhs = real_inner(y.data, sht_inverse_adjoint(x, table).data)
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_zero_cotangent(self, table):
        """Valida que un cotangente nulo produce salida nula."""
        assert np.all(sht_forward_adjoint(SpectralCoeffs.zeros(11, 9), table) == 0.0)
        assert np.all(sht_inverse_adjoint(np.zeros((12, 24)), table).data == 0.0)

    def test_adjoint_of_adjoint(self, table):
        """Valida que el adjunto del adjunto reproduce el operador directo."""
        rng = np.random.default_rng(8)
        x = rng.standard_normal((12, 24))
        y = random_coeffs(11, 9, seed=9)
        # ⟨Fᵀy, x⟩ evaluated through F recovers ⟨y, F x⟩ for every test vector y
        direct = sht_forward(x, table).data
        for seed in range(3):
            vector = random_coeffs(11, 9, seed=seed + 20)
            assert abs(real_inner(direct, vector.data) - float(np.sum(sht_forward_adjoint(vector, table) * x))) < 1e-10
        assert abs(real_inner(direct, y.data) - float(np.sum(sht_forward_adjoint(y, table) * x))) < 1e-10

    def test_azimuthal_kernels_are_adjoint(self):
        """Valida los adjuntos de las FFT de longitud, incluida la columna de Nyquist descartada."""
        rng = np.random.default_rng(12)
        field = rng.standard_normal((5, 16))
        spectrum = rng.standard_normal((5, 9)) + 1j * rng.standard_normal((5, 9))
        lhs = real_inner(rfft_lon(field, 8), spectrum)
        rhs = float(np.sum(field * rfft_lon_adjoint(spectrum, 16)))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))
        lhs = float(np.sum(irfft_lon(spectrum, 16) * field))
        rhs = real_inner(spectrum, irfft_lon_adjoint(field, 8))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))
