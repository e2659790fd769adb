"""
Tests unitarios para las funciones de Legendre normalizadas y sus tablas.
Cubre recurrencia, ortonormalidad discreta, derivadas y caché binaria.
"""

import math

import numpy as np
import pytest
from scipy.special import lpmv

from config.settings import settings
from src.exceptions import DomainError, ResolutionError, TableCacheCorruptError
from src.models.grid import build_grid
from src.models.legendre import (
    _build_tables_cached,
    _legendre_mlj,
    build_tables,
    legendre_theta_derivative,
    load_table,
    normalized_legendre,
    save_table,
)
from src.schemas.grid_schemas import GridKind


def closed_form(l: int, m: int, x: np.ndarray) -> np.ndarray:
    norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))
    return (-1) ** m * norm * lpmv(m, l, x)


@pytest.mark.unit
@pytest.mark.numerics
class TestNormalizedLegendre:
    """Tests de la recurrencia normalizada."""

    def test_constant_mode(self):
        """Valida que P̂₀⁰ = 1/(2√π) para cualquier x."""
        values = normalized_legendre(0, np.array([-1.0, 0.0, 0.7]))
        np.testing.assert_allclose(values[0, 0], 1 / (2 * np.sqrt(np.pi)), rtol=1e-15)

    def test_first_degree_at_pole(self):
        """Valida que P̂₁⁰(1) = √(3/4π)."""
        assert abs(normalized_legendre(1, 1.0)[1, 0] - np.sqrt(3 / (4 * np.pi))) < 1e-15

    def test_matches_closed_form_for_low_degrees(self):
        """Valida la concordancia con la forma cerrada para l ≤ 8 en 1000 puntos aleatorios."""
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 1000)
        values = normalized_legendre(8, x)
        for l in range(9):
            for m in range(l + 1):
                assert np.max(np.abs(values[l, m] - closed_form(l, m, x))) < 1e-12

    def test_single_point_at_x_03(self):
        """Valida el caso l = 8, x = 0.3 contra la forma cerrada."""
        values = normalized_legendre(8, 0.3)
        for m in range(9):
            assert abs(values[8, m] - closed_form(8, m, np.array(0.3))) < 1e-12

    def test_upper_triangle_is_zero(self):
        """Valida que las entradas con m > l son exactamente cero."""
        values = normalized_legendre(6, np.linspace(-1, 1, 11))
        for l in range(7):
            assert np.all(values[l, l + 1:] == 0.0)

    def test_argument_outside_domain(self):
        """Valida que |x| > 1 produce un error de dominio."""
        with pytest.raises(DomainError):
            normalized_legendre(3, np.array([0.5, 1.2]))

    @pytest.mark.slow
    def test_bounded_up_to_degree_512(self):
        """Valida ausencia de overflow y la cota |P̂| ≤ √((2l+1)/4π) hasta l = 512."""
        x = np.array([-0.999, -0.3, 0.0, 0.5, 0.9999])
        values = _legendre_mlj(512, 512, x)
        assert np.all(np.isfinite(values))
        bound = np.sqrt((2 * np.arange(513) + 1) / (4 * np.pi))
        assert np.all(np.abs(values) <= bound[None, :, None] * (1 + 1e-10))


@pytest.mark.unit
@pytest.mark.numerics
class TestLegendreTables:
    """Tests de las matrices de pesos directas e inversas."""

    @pytest.fixture
    def gauss_grid(self):
        return build_grid(GridKind.GAUSS_LEGENDRE, 16, 32)

    def test_discrete_orthonormality(self, gauss_grid):
        """Valida Σ_j P[l,m,j]·P̂[l′,m,j] = δ_ll′/(2π) para todo m."""
        table = build_tables(gauss_grid, lmax=15)
        for m in range(table.mmax + 1):
            gram = table.forward_weights[m] @ table.inverse_weights[m].T
            expected = np.zeros_like(gram)
            idx = np.arange(m, 16)
            expected[idx, idx] = 1 / (2 * np.pi)
            assert np.max(np.abs(gram - expected)) < 1e-13

    def test_forward_is_inverse_times_weights(self, gauss_grid):
        """Valida que P = P̂·w elemento a elemento."""
        table = build_tables(gauss_grid)
        np.testing.assert_array_equal(table.forward_weights, table.inverse_weights * gauss_grid.quadrature_weights)

    def test_lmax_beyond_grid_is_rejected(self, gauss_grid):
        """Valida que lmax = nlat produce un error de resolución."""
        with pytest.raises(ResolutionError):
            build_tables(gauss_grid, lmax=16)

    def test_mmax_beyond_lmax_is_rejected(self, gauss_grid):
        """Valida que mmax > lmax se rechaza."""
        with pytest.raises(ResolutionError):
            build_tables(gauss_grid, lmax=4, mmax=5)

    def test_default_mmax_drops_nyquist(self):
        """Valida que mmax por defecto es min(lmax, W/2 − 1)."""
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 32, 32)
        assert build_tables(grid).mmax == 15

    def test_rebuild_is_bit_identical(self, gauss_grid):
        """Valida que reconstruir la tabla produce los mismos bytes."""
        first = build_tables(gauss_grid, 10, 8)
        second = _build_tables_cached.__wrapped__((gauss_grid.kind, 16, 32), 10, 8)
        assert first.forward_weights.tobytes() == second.forward_weights.tobytes()
        assert first.inverse_weights.tobytes() == second.inverse_weights.tobytes()

    def test_m_block_pads_past_mmax(self, gauss_grid):
        """Valida que los bloques por orden se rellenan con ceros más allá de mmax."""
        table = build_tables(gauss_grid, 15, 5)
        forward, inverse = table.m_block(4, 8)
        assert forward.shape == (4, 16, 16)
        np.testing.assert_array_equal(forward[:2], table.forward_weights[4:6])
        assert np.all(inverse[2:] == 0.0)

    def test_theta_derivative_matches_finite_difference(self):
        """Valida la tabla dP̂/dθ contra diferencias centradas."""
        theta = np.linspace(0.2, 2.9, 7)
        h = 1e-6
        derivative = legendre_theta_derivative(10, 6, theta)
        plus = _legendre_mlj(10, 6, np.cos(theta + h))
        minus = _legendre_mlj(10, 6, np.cos(theta - h))
        np.testing.assert_allclose(derivative, (plus - minus) / (2 * h), atol=1e-7)


@pytest.mark.integration
class TestLegendreCache:
    """Tests de la caché binaria de tablas."""

    @pytest.fixture
    def table(self):
        return build_tables(build_grid(GridKind.EQUIANGULAR_RIEMANN, 12, 24), 8, 6)

    def test_cache_round_trip(self, table, tmp_path):
        """Valida que guardar y recargar la tabla conserva los bytes y el encabezado."""
        path = tmp_path / "table.bin"
        save_table(table, str(path))
        loaded = load_table(str(path), expected={"lmax": 8, "mmax": 6, "nlat": 12})
        assert loaded.forward_weights.tobytes() == table.forward_weights.tobytes()
        assert loaded.inverse_weights.tobytes() == table.inverse_weights.tobytes()
        assert loaded.grid_kind == GridKind.EQUIANGULAR_RIEMANN

    def test_truncated_payload_is_corrupt(self, table, tmp_path):
        """Valida que un archivo truncado se reporta como caché corrupta."""
        path = tmp_path / "table.bin"
        save_table(table, str(path))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(TableCacheCorruptError) as exc_info:
            load_table(str(path))
        assert exc_info.value.exit_code == 4

    def test_header_mismatch_is_corrupt(self, table, tmp_path):
        """Valida que un encabezado que no coincide con lo esperado se rechaza."""
        path = tmp_path / "table.bin"
        save_table(table, str(path))
        with pytest.raises(TableCacheCorruptError):
            load_table(str(path), expected={"lmax": 9})

    def test_builder_uses_cache_directory(self, tmp_path, monkeypatch):
        """Valida que el constructor escribe y luego reutiliza la caché configurada."""
        monkeypatch.setattr(settings, "legendre_cache_dir", str(tmp_path))
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 10, 20)
        built = _build_tables_cached.__wrapped__((grid.kind, 10, 20), 7, 7)
        assert len(list(tmp_path.iterdir())) == 1
        reloaded = _build_tables_cached.__wrapped__((grid.kind, 10, 20), 7, 7)
        assert reloaded.inverse_weights.tobytes() == built.inverse_weights.tobytes()
