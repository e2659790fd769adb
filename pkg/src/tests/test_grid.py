"""
Tests unitarios para las discretizaciones de la esfera.
Cubre nodos, pesos de cuadratura, validación de tamaños y descriptores.
"""

import numpy as np
import pytest
from scipy.special import roots_legendre

from src.exceptions import ConfigError, GridSizeError
from src.models.grid import (
    _build_grid_cached,
    build_grid,
    gauss_legendre_nodes,
    grid_from_spec,
    sphere_measure_weights,
)
from src.schemas.grid_schemas import GridKind, GridSpec
from src.services.sht_service import SphericalHarmonicTransform, harmonic_field


@pytest.mark.unit
class TestGridConstruction:
    """Tests de construcción de grillas."""

    @pytest.fixture
    def all_kinds(self):
        return [GridKind.GAUSS_LEGENDRE, GridKind.EQUIANGULAR_RIEMANN, GridKind.EQUIANGULAR_CLENSHAW_CURTIS]

    def test_two_point_gauss_integrates_sine_exactly(self):
        """Valida que la regla de Gauss de dos puntos suma exactamente 2."""
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 2, 4)
        assert abs(grid.quadrature_weights.sum() - 2.0) < 1e-15

    def test_riemann_weights_approximate_sine_integral(self):
        """Valida que la regla de Riemann equiangular aproxima ∫sinθ dθ = 2."""
        grid = build_grid(GridKind.EQUIANGULAR_RIEMANN, 128, 256)
        assert abs(grid.quadrature_weights.sum() - 2.0) < 1e-3
        np.testing.assert_allclose(
            grid.quadrature_weights, np.sin(grid.colatitudes) * np.pi / 128, rtol=0, atol=0
        )

    def test_clenshaw_curtis_weights_approximate_sine_integral(self):
        """Valida que la variante Clenshaw-Curtis integra sinθ con alta precisión."""
        grid = build_grid(GridKind.EQUIANGULAR_CLENSHAW_CURTIS, 64, 128)
        assert abs(grid.quadrature_weights.sum() - 2.0) < 1e-10

    def test_odd_nlon_is_rejected(self):
        """Valida que un número impar de longitudes produce un error de tamaño."""
        with pytest.raises(GridSizeError):
            build_grid(GridKind.EQUIANGULAR_RIEMANN, 3, 3)

    @pytest.mark.parametrize("nlat,nlon", [(1, 8), (4, 2), (0, 0)])
    def test_degenerate_sizes_are_rejected(self, nlat, nlon):
        """Valida que tamaños por debajo del mínimo se rechazan."""
        with pytest.raises(GridSizeError) as exc_info:
            build_grid(GridKind.GAUSS_LEGENDRE, nlat, nlon)
        assert exc_info.value.exit_code == 2

    def test_colatitudes_increase_and_weights_positive(self, all_kinds):
        """Valida que θ es estrictamente creciente y los pesos son positivos."""
        for kind in all_kinds:
            grid = build_grid(kind, 17, 32)
            assert np.all(np.diff(grid.colatitudes) > 0)
            assert np.all(grid.quadrature_weights > 0)
            assert grid.colatitudes[0] > 0 and grid.colatitudes[-1] < np.pi

    def test_gauss_nodes_match_reference_roots(self):
        """Valida que los nodos y pesos de Gauss coinciden con la referencia de scipy."""
        x, w = gauss_legendre_nodes(48)
        ref_x, ref_w = roots_legendre(48)
        np.testing.assert_allclose(np.sort(x), ref_x, atol=1e-14)
        np.testing.assert_allclose(w[np.argsort(x)], ref_w, atol=1e-14)

    def test_construction_is_deterministic(self, all_kinds):
        """Valida que construir dos veces produce arreglos idénticos bit a bit."""
        for kind in all_kinds:
            first = build_grid(kind, 24, 48)
            second = _build_grid_cached.__wrapped__(kind, 24, 48)
            assert first.colatitudes.tobytes() == second.colatitudes.tobytes()
            assert first.quadrature_weights.tobytes() == second.quadrature_weights.tobytes()

    def test_grid_arrays_are_read_only(self):
        """Valida que la grilla es inmutable una vez construida."""
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 8, 16)
        with pytest.raises(ValueError):
            grid.quadrature_weights[0] = 1.0


@pytest.mark.unit
class TestSphereMeasure:
    """Tests de los pesos de área por nodo."""

    def test_gauss_measure_sums_to_sphere_area(self):
        """Valida que Σ w_i = 4π en la grilla de Gauss 64×128."""
        weights = sphere_measure_weights(build_grid(GridKind.GAUSS_LEGENDRE, 64, 128))
        assert weights.shape == (64, 128)
        assert abs(weights.sum() - 4 * np.pi) < 1e-12

    def test_riemann_measure_close_to_sphere_area(self):
        """Valida que la grilla equiangular aproxima 4π con error relativo menor a 1%."""
        weights = sphere_measure_weights(build_grid(GridKind.EQUIANGULAR_RIEMANN, 64, 128))
        assert abs(weights.sum() - 4 * np.pi) < 1e-2 * 4 * np.pi
        assert weights.min() > 0

    def test_gauss_quadrature_of_harmonics_is_exact(self):
        """Valida que ∫Y_l^m dΩ = √(4π)·δ_l0·δ_m0 para l ≤ nlat−1 en Gauss."""
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 12, 24)
        weights = sphere_measure_weights(grid)
        for l in range(12):
            for m in range(0, min(l, 11) + 1):
                integral = np.sum(weights * harmonic_field(l, m, grid))
                expected = np.sqrt(4 * np.pi) if (l, m) == (0, 0) else 0.0
                assert abs(integral - expected) < 1e-12


@pytest.mark.unit
class TestGridSpec:
    """Tests de los descriptores de grilla."""

    @pytest.mark.parametrize("text,kind", [
        ("gauss:32x64", GridKind.GAUSS_LEGENDRE),
        ("equiangular:64x128", GridKind.EQUIANGULAR_RIEMANN),
        ("clenshaw-curtis:16x32", GridKind.EQUIANGULAR_CLENSHAW_CURTIS),
        ("64x128", GridKind.GAUSS_LEGENDRE),
    ])
    def test_parse_descriptor(self, text, kind):
        """Valida que los descriptores `kind:HxW` se interpretan correctamente."""
        spec = GridSpec.parse(text)
        assert spec.kind == kind
        assert spec.label().endswith(text.split(":")[-1])

    def test_unknown_kind_is_config_error(self):
        """Valida que un tipo de grilla desconocido produce un error de configuración."""
        with pytest.raises(ConfigError):
            GridSpec.parse("healpix:32x64")

    def test_header_records_ring_placement(self):
        """Valida que el encabezado serializado registra la colocación centrada de anillos."""
        grid = grid_from_spec(GridSpec.parse("equiangular:8x16"))
        assert grid.header() == {
            "kind": "equiangular-riemann", "nlat": 8, "nlon": 16, "ring_placement": "centered"
        }

    def test_scaled_descriptor(self):
        """Valida que el descriptor escalado divide ambas dimensiones."""
        assert GridSpec.parse("gauss:64x128").scaled(2) == GridSpec(kind=GridKind.GAUSS_LEGENDRE, nlat=32, nlon=64)

    def test_transform_helper_builds_matching_table(self):
        """Valida que el transformador ligado a una grilla usa la truncación por defecto."""
        sht = SphericalHarmonicTransform.for_shape("gauss-legendre", 16, 32)
        assert sht.modal_shape == (16, 16)
