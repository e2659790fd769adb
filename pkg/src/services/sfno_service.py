"""The spherical (and planar) neural operator network and its checkpoints.

Layout of one forward pass on the outer grid:

    encoder MLP → + positional embedding → block 1 (down) → … → block N (up)
    → + encoder output → decoder MLP

Blocks compute MLP₂(norm(K[u] + MLP₁(R u))) + R u where R resamples to the
block's output grid (identity inside the network).
"""

import os
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.settings import settings
from src.autodiff import Tensor, as_tensor, checkpoint, ops
from src.constants import CHECKPOINT_FORMAT_VERSION
from src.exceptions import CheckpointCorruptError, ResolutionError, ShapeError
from src.models.grid import SphericalGrid, build_grid, grid_from_spec, sphere_measure_weights
from src.models.legendre import LegendreTable, build_tables
from src.models.spectral import triangular_mask
from src.schemas.model_schemas import PosEmbedKind, SFNOConfig
from src.schemas.report_schemas import ChannelStats, CheckpointManifest, ParameterEntry
from src.services.spectral_conv_service import (
    SpectralFilter,
    planar_fft_layer,
    planar_resample,
    spherical_conv_layer,
)
from src.utils.logging import get_logger
from src.utils.serialization import read_blob, read_json, sha256, write_blob, write_json

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.json"
PAYLOAD_FILE = "parameters.f8"


class PointwiseMLP:
    """Channel MLP applied independently at every grid point (axis -3 holds channels)."""

    def __init__(self, prefix: str, c_in: int, c_out: int, hidden: Optional[int], rng: np.random.Generator):
        self.prefix = prefix
        self.hidden = hidden
        widths = [c_in, hidden, c_out] if hidden else [c_in, c_out]
        self.layers: List[Tuple[Tensor, Tensor]] = []
        for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weight = Tensor(rng.uniform(-bound, bound, (fan_out, fan_in)), requires_grad=True,
                            name=f"{prefix}.w{index}")
            bias = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{prefix}.b{index}")
            self.layers.append((weight, bias))

    def parameters(self) -> List[Tensor]:
        return [tensor for layer in self.layers for tensor in layer]

    def __call__(self, x: Tensor) -> Tensor:
        for index, (weight, bias) in enumerate(self.layers):
            x = ops.einsum("oc,...chw->...ohw", weight, x) + ops.reshape(bias, (bias.shape[0], 1, 1))
            if index < len(self.layers) - 1:
                x = ops.gelu(x)
        return x


@dataclass
class BlockPlan:
    """Grid-dependent pieces of one block; parameters live on the block itself."""

    in_grid: SphericalGrid
    out_grid: SphericalGrid
    table_in: Optional[LegendreTable]
    table_out: Optional[LegendreTable]
    norm_weights: np.ndarray
    in_norm_weights: np.ndarray

    @property
    def rescales(self) -> bool:
        return self.in_grid.shape != self.out_grid.shape


def rescale_block(u: Tensor, grid: SphericalGrid, direction: str, factor: int,
                  lmax: Optional[int] = None, mmax: Optional[int] = None) -> Tensor:
    """Spectral down/up-scaling by an integer factor through truncated SHTs."""
    if factor < 1:
        raise ResolutionError(factor, 1, "scale factor")
    if factor == 1:
        return as_tensor(u)
    if direction == "down":
        if grid.nlat % factor or grid.nlon % factor:
            raise ResolutionError(factor, 1, f"scale factor for {grid.nlat}x{grid.nlon}")
        target = build_grid(grid.kind, grid.nlat // factor, grid.nlon // factor)
        coarse = target
    elif direction == "up":
        target = build_grid(grid.kind, grid.nlat * factor, grid.nlon * factor)
        coarse = grid
    else:
        raise ValueError(f"direction must be 'down' or 'up', got '{direction}'")
    lmax = coarse.max_degree if lmax is None else lmax
    mmax = min(lmax, coarse.max_order) if mmax is None else mmax
    table = build_tables(grid, lmax, mmax)
    return ops.sht_inverse(ops.sht_forward(u, table), build_tables(target, lmax, mmax), target)


class SFNOBlock:
    def __init__(self, index: int, config: SFNOConfig, lmax: int, mmax: int, rng: np.random.Generator):
        width = config.embed_dim
        self.index = index
        self.variant = config.filter
        self.filter = SpectralFilter.create(config.filter, width, width, lmax, mmax, rng, config.mlp_ratio)
        for name, tensor in self.filter.params.items():
            tensor.name = f"blocks.{index}.filter.{name}"
        self.mlp1 = PointwiseMLP(f"blocks.{index}.mlp1", width, width, None, rng)
        self.mlp2 = PointwiseMLP(f"blocks.{index}.mlp2", width, width, int(round(config.mlp_ratio * width)), rng)

    def parameters(self) -> List[Tensor]:
        return list(self.filter.params.values()) + self.mlp1.parameters() + self.mlp2.parameters()

    def _resample(self, u: Tensor, plan: BlockPlan) -> Tensor:
        if not plan.rescales:
            return u
        if self.variant.is_planar:
            return planar_resample(u, plan.out_grid.shape, self.filter.lmax + 1, self.filter.mmax + 1)
        return ops.sht_inverse(ops.sht_forward(u, plan.table_in), plan.table_out, plan.out_grid)

    def _convolve(self, u: Tensor, plan: BlockPlan) -> Tensor:
        if self.variant.is_planar:
            return planar_fft_layer(u, self.filter, plan.out_grid.shape)
        return spherical_conv_layer(u, self.filter, plan.table_in, plan.table_out, plan.out_grid)

    def __call__(self, u: Tensor, plan: BlockPlan) -> Tensor:
        residual = self._resample(u, plan)
        hidden = self._convolve(u, plan) + self.mlp1(residual)
        hidden = ops.instance_norm(hidden, plan.norm_weights)
        return ops.instance_norm(self.mlp2(hidden), plan.norm_weights) + residual


class SFNOModel:
    """Parameter store plus forward pass; grid-dependent plans are built per outer grid."""

    def __init__(self, config: SFNOConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        width = config.embed_dim
        hidden = int(round(config.mlp_ratio * width))
        self.lmax, self.mmax = self._truncation(config)

        self.encoder = PointwiseMLP("encoder", len(config.in_channels), width, hidden, rng)
        self.blocks = [SFNOBlock(i, config, self.lmax, self.mmax, rng) for i in range(config.n_blocks)]
        self.decoder = PointwiseMLP("decoder", width, len(config.out_channels), hidden, rng)
        self.pos_embed = self._init_pos_embed(rng)
        self.gradient_checkpointing = False
        self._plans: Dict[Tuple, List[BlockPlan]] = {}

        logger.info(
            "Model initialized",
            variant=config.filter.value,
            blocks=config.n_blocks,
            embed_dim=width,
            parameters=self.parameter_count(),
        )

    @staticmethod
    def _truncation(config: SFNOConfig) -> Tuple[int, int]:
        if not config.filter.is_planar:
            return config.resolved_lmax, config.resolved_mmax
        internal = config.internal_grid
        half = min(config.resolved_lmax + 1, internal.nlat // 2)
        orders = min(config.resolved_mmax + 1, internal.nlon // 2)
        return half - 1, orders - 1

    def _init_pos_embed(self, rng: np.random.Generator) -> Optional[Tensor]:
        config = self.config
        width = config.embed_dim
        if config.pos_embed == PosEmbedKind.GRID_LEARNED:
            values = rng.standard_normal((width,) + (config.grid.nlat, config.grid.nlon)) * 0.02
        elif config.pos_embed == PosEmbedKind.SPHERICAL_HARMONIC:
            lmax = config.pos_embed_lmax
            values = rng.standard_normal((width, lmax + 1, lmax + 1, 2)) * 0.02
            values *= triangular_mask(lmax, lmax)[..., None]
            values[:, :, 0, 1] = 0.0
        else:
            return None
        return Tensor(values, requires_grad=True, name="pos_embed")

    # ------------------------------------------------------------------ parameters

    def parameters(self) -> "OrderedDict[str, Tensor]":
        ordered = self.encoder.parameters()
        if self.pos_embed is not None:
            ordered.append(self.pos_embed)
        for block in self.blocks:
            ordered.extend(block.parameters())
        ordered.extend(self.decoder.parameters())
        return OrderedDict((tensor.name, tensor) for tensor in ordered)

    def parameter_count(self) -> int:
        """Real scalars (a complex weight counts twice)."""
        return sum(tensor.data.size for tensor in self.parameters().values())

    def parameter_breakdown(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for name, tensor in self.parameters().items():
            component = ".".join(name.split(".")[:3]) if name.startswith("blocks.") else name.split(".")[0]
            counts[component] = counts.get(component, 0) + tensor.data.size
        return counts

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, tensor.data.copy()) for name, tensor in self.parameters().items())

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        params = self.parameters()
        for name, tensor in params.items():
            tensor.data = np.array(state[name], dtype=np.float64).reshape(tensor.shape)

    # ------------------------------------------------------------------ grids

    def _outer_grid(self, grid: Optional[SphericalGrid]) -> SphericalGrid:
        if grid is None:
            return grid_from_spec(self.config.grid)
        if grid.shape != (self.config.grid.nlat, self.config.grid.nlon) or grid.kind != self.config.grid.kind:
            if not self.config.grid_invariant:
                raise ShapeError(self.config.grid.label(), grid.spec.label(), "grid-learned positional embedding")
        return grid

    def plans(self, grid: Optional[SphericalGrid] = None) -> List[BlockPlan]:
        outer = self._outer_grid(grid)
        key = (outer.kind, outer.nlat, outer.nlon)
        if key not in self._plans:
            self._plans[key] = self._build_plans(outer)
        return self._plans[key]

    def _build_plans(self, outer: SphericalGrid) -> List[BlockPlan]:
        factor = self.config.scale_factor
        if outer.nlat % factor or outer.nlon % factor:
            raise ResolutionError(factor, 1, f"scale factor for {outer.nlat}x{outer.nlon}")
        internal = build_grid(outer.kind, outer.nlat // factor, outer.nlon // factor)
        spherical = not self.config.filter.is_planar
        if spherical and (self.lmax > internal.max_degree or self.mmax > internal.max_order):
            raise ResolutionError(self.lmax, internal.max_degree, "lmax on the internal grid")

        plans = []
        count = len(self.blocks)
        for index in range(count):
            in_grid = outer if index == 0 else internal
            out_grid = outer if index == count - 1 else internal
            table_in = build_tables(in_grid, self.lmax, self.mmax) if spherical else None
            table_out = build_tables(out_grid, self.lmax, self.mmax) if spherical else None
            weights = sphere_measure_weights(out_grid)
            in_weights = sphere_measure_weights(in_grid)
            plans.append(BlockPlan(in_grid, out_grid, table_in, table_out, weights / weights.sum(),
                                   in_weights / in_weights.sum()))
        return plans

    def positional_embedding(self, grid: Optional[SphericalGrid] = None) -> Optional[Tensor]:
        if self.pos_embed is None:
            return None
        kind = self.config.pos_embed
        outer = grid or grid_from_spec(self.config.grid)
        if kind == PosEmbedKind.GRID_LEARNED:
            if outer.shape != tuple(self.pos_embed.shape[-2:]):
                raise ShapeError(tuple(self.pos_embed.shape[-2:]), outer.shape, "grid-learned positional embedding")
            return self.pos_embed
        lmax = self.config.pos_embed_lmax
        if lmax > outer.max_degree or lmax > outer.max_order:
            raise ResolutionError(lmax, min(outer.max_degree, outer.max_order), "positional embedding lmax")
        coeffs = ops.mul(ops.complex_join(self.pos_embed), triangular_mask(lmax, lmax).astype(np.float64))
        return ops.sht_inverse(coeffs, build_tables(outer, lmax, lmax))

    # ------------------------------------------------------------------ forward

    def encode(self, u, plan: BlockPlan) -> Tensor:
        """Encoder MLP followed by instance norm on the outer grid."""
        return ops.instance_norm(self.encoder(as_tensor(u)), plan.in_norm_weights)

    def forward(self, u, grid: Optional[SphericalGrid] = None) -> Tensor:
        """One model step u_n → u_{n+1}; `u` is [..., C_in, H, W] on `grid` (the configured grid when omitted)."""
        u = as_tensor(u)
        plans = self.plans(grid)
        outer = plans[0].in_grid
        expected_channels = len(self.config.in_channels)
        if u.ndim < 3 or u.shape[-3] != expected_channels or tuple(u.shape[-2:]) != outer.shape:
            raise ShapeError((expected_channels,) + outer.shape, u.shape, "model input")

        encoded = self.encode(u, plans[0])
        x = encoded
        pos = self.positional_embedding(outer)
        if pos is not None:
            x = x + pos
        for block, plan in zip(self.blocks, plans):
            if self.gradient_checkpointing:
                x = checkpoint(lambda t, b=block, p=plan: b(t, p), x, params=block.parameters())
            else:
                x = block(x, plan)
        return self.decoder(x + encoded)

    __call__ = forward

    def rollout(self, u, n: int, grid: Optional[SphericalGrid] = None) -> List[Tensor]:
        """[u, F(u), F²(u), …, Fⁿ(u)]."""
        states = [as_tensor(u)]
        for _ in range(n):
            states.append(self.forward(states[-1], grid))
        return states


# ---------------------------------------------------------------------- checkpoints

def save_checkpoint(model: SFNOModel, path: str, normalization: Optional[Dict[str, ChannelStats]] = None,
                    metadata: Optional[dict] = None, config: Optional[dict] = None) -> str:
    """Writes `path/manifest.json` plus the float64 parameter payload; returns `path`."""
    os.makedirs(path, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, tensor in model.parameters().items():
        entries.append(ParameterEntry(name=name, shape=list(tensor.shape), offset=offset))
        chunks.append(tensor.data.ravel())
        offset += tensor.data.size
    payload = np.concatenate(chunks) if chunks else np.zeros(0)
    n_bytes, digest = write_blob(os.path.join(path, PAYLOAD_FILE), payload, "<f8")
    manifest = CheckpointManifest(
        format_version=CHECKPOINT_FORMAT_VERSION,
        code_version=settings.app_version,
        model=model.config,
        parameters=entries,
        payload_file=PAYLOAD_FILE,
        payload_bytes=n_bytes,
        payload_sha256=digest,
        normalization=normalization or {},
        metadata=metadata or {},
        config=config or {},
    )
    write_json(os.path.join(path, MANIFEST_FILE), manifest.model_dump(mode="json"))
    logger.info("Checkpoint saved", path=path, parameters=offset)
    return path


def read_manifest(path: str) -> CheckpointManifest:
    manifest_path = os.path.join(path, MANIFEST_FILE)
    try:
        raw = read_json(manifest_path)
    except (OSError, ValueError) as e:
        raise CheckpointCorruptError(path, [f"manifest unreadable: {e}"])
    if raw.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointCorruptError(
            path, [f"format_version: expected {CHECKPOINT_FORMAT_VERSION}, found {raw.get('format_version')}"]
        )
    try:
        return CheckpointManifest.model_validate(raw)
    except ValueError as e:
        raise CheckpointCorruptError(path, [f"manifest invalid: {e}"])


def _registry_differences(model: SFNOModel, manifest: CheckpointManifest) -> List[str]:
    expected = {name: list(tensor.shape) for name, tensor in model.parameters().items()}
    stored = {entry.name: entry.shape for entry in manifest.parameters}
    differences = [f"missing parameter {name}" for name in expected if name not in stored]
    differences += [f"unexpected parameter {name}" for name in stored if name not in expected]
    differences += [
        f"{name}: expected shape {expected[name]}, found {stored[name]}"
        for name in expected if name in stored and stored[name] != expected[name]
    ]
    return differences


def load_checkpoint(path: str) -> Tuple[SFNOModel, CheckpointManifest]:
    manifest = read_manifest(path)
    model = SFNOModel(manifest.model)
    differences = _registry_differences(model, manifest)

    payload_path = os.path.join(path, manifest.payload_file)
    try:
        payload = read_blob(payload_path)
    except OSError as e:
        raise CheckpointCorruptError(path, differences + [f"payload unreadable: {e}"])
    if len(payload) != manifest.payload_bytes:
        differences.append(f"payload_bytes: expected {manifest.payload_bytes}, found {len(payload)}")
    elif sha256(payload) != manifest.payload_sha256:
        differences.append("payload_sha256 mismatch")
    if differences:
        raise CheckpointCorruptError(path, differences)

    values = np.frombuffer(payload, dtype="<f8")
    state = {}
    for entry in manifest.parameters:
        count = int(np.prod(entry.shape)) if entry.shape else 1
        state[entry.name] = values[entry.offset: entry.offset + count].reshape(entry.shape)
    model.load_state_dict(state)
    logger.info("Checkpoint loaded", path=path)
    return model, manifest
