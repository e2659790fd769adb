"""
Tests del modelo SFNO: contrato de formas, bloques, embebido posicional,
equivariancia, gradientes, checkpointing y persistencia de checkpoints.
"""

import json
import os

import numpy as np
import pytest

from src.autodiff import Tape, Tensor, no_grad
from src.exceptions import CheckpointCorruptError, ShapeError
from src.models.grid import build_grid
from src.models.legendre import build_tables
from src.models.spectral import SpectralCoeffs, triangular_mask
from src.schemas.grid_schemas import GridKind, GridSpec
from src.schemas.model_schemas import SFNOConfig
from src.schemas.report_schemas import ChannelStats
from src.services.sfno_service import SFNOModel, load_checkpoint, rescale_block, save_checkpoint
from src.services.sht_service import sht_forward, sht_inverse


def small_config(**overrides) -> SFNOConfig:
    values = dict(
        grid=GridSpec(kind=GridKind.GAUSS_LEGENDRE, nlat=16, nlon=32),
        n_blocks=2,
        embed_dim=6,
        scale_factor=2,
        pos_embed="none",
        mlp_ratio=1.5,
        seed=3,
    )
    values.update(overrides)
    return SFNOConfig(**values)


def predict(model: SFNOModel, u: np.ndarray, grid=None) -> np.ndarray:
    with no_grad():
        return model.forward(Tensor(u), grid).data


def zero_blocks(model: SFNOModel):
    for block in model.blocks:
        for tensor in block.parameters():
            tensor.data[...] = 0.0


@pytest.mark.unit
class TestModelContract:
    """Tests del contrato de entrada y salida del modelo."""

    def test_output_shape_matches_input(self):
        """Valida que [B, C, H, W] produce [B, C, H, W] en la misma malla."""
        model = SFNOModel(small_config())
        u = np.random.default_rng(0).standard_normal((2, 3, 16, 32))
        out = predict(model, u)
        assert out.shape == (2, 3, 16, 32)
        assert np.all(np.isfinite(out))

    def test_wrong_channel_count(self):
        """Valida que un número de canales incorrecto es un error de forma."""
        model = SFNOModel(small_config())
        with pytest.raises(ShapeError):
            predict(model, np.zeros((1, 2, 16, 32)))

    def test_same_seed_same_weights(self):
        """Valida que la inicialización es determinista para una semilla."""
        first, second = SFNOModel(small_config()), SFNOModel(small_config())
        u = np.random.default_rng(1).standard_normal((1, 3, 16, 32))
        assert predict(first, u).tobytes() == predict(second, u).tobytes()

    def test_parameter_names_are_unique_and_ordered(self):
        """Valida que el registro de parámetros tiene nombres únicos y orden estable."""
        model = SFNOModel(small_config())
        names = list(model.parameters())
        assert len(names) == len(set(names))
        assert names[0] == "encoder.w1"
        assert names[-1] == "decoder.b2"
        assert "blocks.1.filter.weight" in names

    def test_sfno_has_fewer_parameters_than_fno(self):
        """Valida que el filtro esférico usa menos parámetros que el plano con la misma truncación."""
        sfno = SFNOModel(small_config(filter="sfno-linear", lmax=7, mmax=7))
        fno = SFNOModel(small_config(filter="fno-linear", lmax=7, mmax=7))
        assert sfno.parameter_count() < fno.parameter_count()
        sfno_filter = sfno.parameter_breakdown()["blocks.0.filter"]
        fno_filter = fno.parameter_breakdown()["blocks.0.filter"]
        assert sfno_filter == 8 * 6 * 6 * 2
        assert fno_filter == 8 * 8 * 6 * 6 * 2


@pytest.mark.unit
@pytest.mark.numerics
class TestBlocks:
    """Tests de los bloques y del reescalado espectral."""

    def test_zero_blocks_reduce_to_encoder_decoder(self):
        """Valida que con bloques nulos el modelo es decoder(2·encode(u)) sin reescalado."""
        model = SFNOModel(small_config(scale_factor=1))
        zero_blocks(model)
        u = np.random.default_rng(2).standard_normal((2, 3, 16, 32))
        with no_grad():
            encoded = model.encode(Tensor(u), model.plans()[0])
            expected = model.decoder(encoded + encoded).data
        assert np.max(np.abs(predict(model, u) - expected)) < 1e-12

    def test_zero_blocks_compose_positional_embedding(self):
        """Valida que con bloques nulos la salida es decoder(encode(u) + pos + encode(u))."""
        model = SFNOModel(small_config(scale_factor=1, pos_embed="spherical-harmonic", pos_embed_lmax=4))
        zero_blocks(model)
        u = np.random.default_rng(12).standard_normal((1, 3, 16, 32))
        with no_grad():
            encoded = model.encode(Tensor(u), model.plans()[0])
            pos = model.positional_embedding()
            expected = model.decoder((encoded + pos) + encoded).data
            without_skip = model.decoder(encoded + pos).data
        assert np.max(np.abs(pos.data)) > 0
        assert np.max(np.abs(predict(model, u) - expected)) < 1e-12
        assert np.max(np.abs(predict(model, u) - without_skip)) > 1e-6

    def test_zero_blocks_with_rescaling_truncate(self):
        """Valida que con bloques nulos y factor 2 el camino residual es bajar y volver a subir."""
        model = SFNOModel(small_config(scale_factor=2))
        zero_blocks(model)
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 16, 32)
        u = np.random.default_rng(4).standard_normal((1, 3, 16, 32))
        with no_grad():
            encoded = model.encode(Tensor(u), model.plans()[0])
            down = rescale_block(encoded, grid, "down", 2, model.lmax, model.mmax)
            up = rescale_block(down, build_grid(GridKind.GAUSS_LEGENDRE, 8, 16), "up", 2, model.lmax, model.mmax)
            expected = model.decoder(up + encoded).data
        assert np.max(np.abs(predict(model, u) - expected)) < 1e-10

    @staticmethod
    def weighted_moments(values: np.ndarray, weights: np.ndarray):
        mean = np.sum(values * weights, axis=(-2, -1))
        variance = np.sum((values - mean[..., None, None]) ** 2 * weights, axis=(-2, -1))
        return mean, variance

    def test_instance_norm_after_encoder_and_block_mlps(self):
        """Valida media nula y varianza unidad por canal tras el codificador y tras cada MLP de bloque."""
        model = SFNOModel(small_config(scale_factor=2, n_blocks=3))
        plans = model.plans()
        u = np.random.default_rng(13).standard_normal((2, 3, 16, 32))
        with no_grad():
            x = model.encode(Tensor(u), plans[0])
            mean, variance = self.weighted_moments(x.data, plans[0].in_norm_weights)
            assert np.max(np.abs(mean)) < 1e-12
            assert np.allclose(variance, 1.0, atol=1e-2)
            for block, plan in zip(model.blocks, plans):
                residual = block._resample(x, plan)
                out = block(x, plan)
                mean, variance = self.weighted_moments(out.data - residual.data, plan.norm_weights)
                assert np.max(np.abs(mean)) < 1e-10
                assert np.allclose(variance, 1.0, atol=1e-2)
                x = out

    def test_rescale_round_trip_on_bandlimited_field(self):
        """Valida que bajar y subir resolución conserva un campo limitado en banda."""
        fine = build_grid(GridKind.GAUSS_LEGENDRE, 32, 64)
        table = build_tables(fine, 10, 10)
        rng = np.random.default_rng(5)
        data = (rng.standard_normal((2, 11, 11)) + 1j * rng.standard_normal((2, 11, 11))) * triangular_mask(10, 10)
        data[..., 0] = data[..., 0].real
        u = sht_inverse(SpectralCoeffs(10, 10, data), table)

        with no_grad():
            down = rescale_block(Tensor(u), fine, "down", 2)
            up = rescale_block(down, build_grid(GridKind.GAUSS_LEGENDRE, 16, 32), "up", 2)
        assert down.shape == (2, 16, 32)
        assert np.max(np.abs(up.data - u)) < 1e-10

    def test_rescale_rejects_unknown_direction(self):
        """Valida que una dirección desconocida se rechaza."""
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 16, 32)
        with pytest.raises(ValueError):
            rescale_block(Tensor(np.zeros((16, 32))), grid, "sideways", 2)

    def test_factor_one_is_identity(self):
        """Valida que el factor 1 devuelve la entrada."""
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 16, 32)
        u = np.random.default_rng(6).standard_normal((16, 32))
        assert np.array_equal(rescale_block(Tensor(u), grid, "down", 1).data, u)


@pytest.mark.numerics
class TestPositionalEmbedding:
    """Tests del embebido posicional."""

    def test_harmonic_embedding_is_resolution_consistent(self):
        """Valida que el embebido armónico representa la misma función en dos mallas."""
        model = SFNOModel(small_config(pos_embed="spherical-harmonic", pos_embed_lmax=5, scale_factor=1))
        coarse = build_grid(GridKind.GAUSS_LEGENDRE, 16, 32)
        fine = build_grid(GridKind.GAUSS_LEGENDRE, 24, 48)
        with no_grad():
            on_coarse = model.positional_embedding(coarse).data
            on_fine = model.positional_embedding(fine).data
        coeffs_coarse = sht_forward(on_coarse, build_tables(coarse, 5, 5)).data
        coeffs_fine = sht_forward(on_fine, build_tables(fine, 5, 5)).data
        assert np.max(np.abs(coeffs_coarse - coeffs_fine)) < 1e-10

    def test_grid_invariant_model_runs_on_other_grid(self):
        """Valida que un modelo sin embebido de malla evalúa en otra resolución."""
        model = SFNOModel(small_config(pos_embed="spherical-harmonic", pos_embed_lmax=3, lmax=7, mmax=7))
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 24, 48)
        out = predict(model, np.random.default_rng(7).standard_normal((1, 3, 24, 48)), grid)
        assert out.shape == (1, 3, 24, 48)

    def test_grid_learned_embedding_rejects_other_grid(self):
        """Valida que el embebido aprendido en malla no se evalúa en otra resolución."""
        model = SFNOModel(small_config(pos_embed="grid-learned"))
        grid = build_grid(GridKind.GAUSS_LEGENDRE, 24, 48)
        with pytest.raises(ShapeError):
            predict(model, np.zeros((1, 3, 24, 48)), grid)


@pytest.mark.numerics
class TestEquivariance:
    """Tests de equivariancia del modelo completo."""

    @pytest.mark.parametrize("shift", [2, 6, 14])
    def test_longitude_shift_equivariance(self, shift):
        """Valida que rotar en longitud conmuta con el modelo SFNO completo."""
        model = SFNOModel(small_config(filter="sfno-linear"))
        u = np.random.default_rng(shift).standard_normal((1, 3, 16, 32))
        rotated_then_model = predict(model, np.roll(u, shift, axis=-1))
        model_then_rotated = np.roll(predict(model, u), shift, axis=-1)
        assert np.max(np.abs(rotated_then_model - model_then_rotated)) < 1e-6


@pytest.mark.numerics
class TestGradients:
    """Tests del gradiente del modelo frente a diferencias finitas."""

    @pytest.fixture
    def setup(self):
        config = small_config(
            grid=GridSpec(kind=GridKind.GAUSS_LEGENDRE, nlat=8, nlon=16),
            embed_dim=4,
            pos_embed="spherical-harmonic",
            pos_embed_lmax=2,
        )
        rng = np.random.default_rng(11)
        u = rng.standard_normal((1, 3, 8, 16))
        target = rng.standard_normal((1, 3, 8, 16))
        return SFNOModel(config), u, target

    @staticmethod
    def loss_and_grads(model, u, target):
        params = list(model.parameters().values())
        with Tape() as tape:
            diff = model.forward(Tensor(u)) - target
            loss = (diff * diff).sum()
            grads = tape.backward(loss, wrt=params)
        return float(loss.data), grads

    def test_finite_difference_checks(self, setup):
        """Valida el gradiente de varios parámetros frente a diferencias centrales."""
        model, u, target = setup
        _, grads = self.loss_and_grads(model, u, target)
        params = model.parameters()

        def loss_value():
            with no_grad():
                diff = model.forward(Tensor(u)).data - target
            return float(np.sum(diff * diff))

        eps = 1e-5
        checked = [("encoder.w1", (0, 1)), ("blocks.0.filter.weight", (1, 2, 3, 0)),
                  ("blocks.1.mlp2.w2", (2, 3)), ("decoder.b2", (1,)), ("pos_embed", (0, 2, 1, 1))]
        for name, index in checked:
            tensor = params[name]
            original = tensor.data[index]
            tensor.data[index] = original + eps
            plus = loss_value()
            tensor.data[index] = original - eps
            minus = loss_value()
            tensor.data[index] = original
            assert grads[tensor][index] == pytest.approx((plus - minus) / (2 * eps), rel=1e-4, abs=1e-7)

    def test_gradient_checkpointing_matches(self, setup):
        """Valida que el checkpointing por bloque produce los mismos gradientes."""
        model, u, target = setup
        loss_plain, plain = self.loss_and_grads(model, u, target)
        model.gradient_checkpointing = True
        loss_ckpt, replayed = self.loss_and_grads(model, u, target)
        assert loss_ckpt == pytest.approx(loss_plain, rel=1e-14)
        for tensor in model.parameters().values():
            assert np.allclose(replayed[tensor], plain[tensor], rtol=1e-12, atol=1e-14)


@pytest.mark.integration
class TestCheckpoints:
    """Tests de guardado y carga de checkpoints."""

    @pytest.fixture
    def saved(self, tmp_path):
        model = SFNOModel(small_config(pos_embed="grid-learned"))
        stats = {"geopotential": ChannelStats(mean=9806.0, std=1100.0)}
        path = save_checkpoint(model, str(tmp_path / "ckpt"), normalization=stats, metadata={"epoch": 3})
        return model, path

    def test_round_trip_reproduces_outputs(self, saved):
        """Valida que cargar un checkpoint reproduce exactamente las salidas."""
        model, path = saved
        loaded, manifest = load_checkpoint(path)
        u = np.random.default_rng(9).standard_normal((1, 3, 16, 32))
        assert predict(loaded, u).tobytes() == predict(model, u).tobytes()
        assert manifest.normalization["geopotential"].std == 1100.0
        assert manifest.metadata["epoch"] == 3

    def test_shape_mismatch_lists_differences(self, saved):
        """Valida que un manifiesto alterado produce un error con las diferencias."""
        _, path = saved
        manifest_path = os.path.join(path, "manifest.json")
        with open(manifest_path) as handle:
            raw = json.load(handle)
        raw["parameters"][0]["shape"] = [99, 1]
        raw["parameters"][1]["name"] = "encoder.renamed"
        with open(manifest_path, "w") as handle:
            json.dump(raw, handle)

        with pytest.raises(CheckpointCorruptError) as excinfo:
            load_checkpoint(path)
        differences = "\n".join(excinfo.value.differences)
        assert "encoder.w1" in differences
        assert "encoder.renamed" in differences
        assert excinfo.value.exit_code == 4

    def test_payload_tampering_detected(self, saved):
        """Valida que modificar el payload se detecta por su hash."""
        _, path = saved
        payload_path = os.path.join(path, "parameters.f8")
        with open(payload_path, "r+b") as handle:
            handle.seek(8)
            handle.write(b"\x00" * 8)
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)

    def test_unknown_format_version(self, saved):
        """Valida que una versión de formato desconocida se rechaza."""
        _, path = saved
        manifest_path = os.path.join(path, "manifest.json")
        with open(manifest_path) as handle:
            raw = json.load(handle)
        raw["format_version"] = "something-else/9"
        with open(manifest_path, "w") as handle:
            json.dump(raw, handle)
        with pytest.raises(CheckpointCorruptError):
            load_checkpoint(path)
