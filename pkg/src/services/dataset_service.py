"""Shallow-water training data: trajectory generation, dataset files, z-scoring and batching.

A dataset directory holds

    manifest.json     DatasetManifest (grid, channels, stats, split, hashes, config)
    samples.f4        little-endian float32 [n_samples, n_leads + 1, C, H, W]
    climatology.f8    little-endian float64 [C, H, W], mean over the training split
"""

import os
import queue
import threading
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from src.constants import DATASET_FORMAT_VERSION, SWE_CHANNELS
from src.exceptions import ConfigError, DatasetCorruptError
from src.models.grid import SphericalGrid, grid_from_spec
from src.schemas.report_schemas import ChannelStats, DatasetManifest
from src.schemas.run_schemas import DataConfig
from src.schemas.solver_schemas import SWEParams
from src.services.swe_service import ShallowWaterSolver, random_initial_condition
from src.utils.instrumentation import instrumented
from src.utils.logging import get_logger
from src.utils.serialization import read_blob, read_json, sha256, write_blob, write_json

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.json"
SAMPLES_FILE = "samples.f4"
CLIMATOLOGY_FILE = "climatology.f8"


def lead_steps(params: SWEParams, lead_time_hours: float) -> int:
    try:
        return params.steps_per_lead(lead_time_hours)
    except ValueError as e:
        raise ConfigError(str(e))


def generate_trajectory(solver: ShallowWaterSolver, seed: int, index: int, n_leads: int,
                        steps_per_lead: int) -> np.ndarray:
    """Grid fields [n_leads + 1, C, H, W] of sample `index`, seeded with (seed, index)."""
    solver.reset_history()
    state = random_initial_condition([seed, index], solver.grid, solver.params, solver)
    frames = [solver.to_grid(state)]
    for _ in range(n_leads):
        state = solver.run(state, steps_per_lead)
        frames.append(solver.to_grid(state))
    return np.stack(frames)


def stream_pairs(grid: SphericalGrid, params: SWEParams, lead_time_hours: float, seed: int,
                 n_leads: int = 1, start: int = 0) -> Iterator[Tuple[int, np.ndarray]]:
    """Endless on-the-fly trajectories (index, [n_leads + 1, C, H, W]) without touching disk."""
    solver = ShallowWaterSolver(grid, params)
    steps = lead_steps(params, lead_time_hours)
    index = start
    while True:
        yield index, generate_trajectory(solver, seed, index, n_leads, steps)
        index += 1


def split_indices(n_samples: int, validation_fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    n_validation = int(round(validation_fraction * n_samples))
    if validation_fraction > 0 and n_samples > 1:
        n_validation = min(max(n_validation, 1), n_samples - 1)
    order = np.random.default_rng([seed, n_samples]).permutation(n_samples)
    validation = sorted(int(i) for i in order[:n_validation])
    train = sorted(int(i) for i in order[n_validation:])
    return train, validation


def channel_statistics(samples: np.ndarray, channels: Sequence[str]) -> Dict[str, ChannelStats]:
    """Per-channel mean and standard deviation over samples, time levels and grid points."""
    values = np.asarray(samples, dtype=np.float64)
    axes = tuple(i for i in range(values.ndim) if i != values.ndim - 3)
    means = values.mean(axis=axes)
    stds = values.std(axis=axes)
    return {
        name: ChannelStats(mean=float(mean), std=float(std) if std > 0 else 1.0)
        for name, mean, std in zip(channels, means, stds)
    }


@instrumented("swe_generate_dataset")
def generate_dataset(path: str, grid: SphericalGrid, params: SWEParams, data: DataConfig,
                     config: Optional[dict] = None) -> DatasetManifest:
    """Runs the solver for every sample and writes the dataset directory at `path`."""
    steps = lead_steps(params, data.lead_time_hours)
    solver = ShallowWaterSolver(grid, params)
    channels = list(SWE_CHANNELS)
    logger.info(
        "Generating dataset",
        path=path,
        samples=data.n_samples,
        leads=data.n_leads,
        steps_per_lead=steps,
        grid=grid.spec.label(),
    )

    samples = np.empty((data.n_samples, data.n_leads + 1, len(channels)) + grid.shape, dtype=np.float32)
    for index in range(data.n_samples):
        samples[index] = generate_trajectory(solver, data.seed, index, data.n_leads, steps)
        logger.debug("Sample generated", index=index)

    train, validation = split_indices(data.n_samples, data.validation_fraction, data.seed)
    train_samples = samples[train]
    normalization = channel_statistics(train_samples, channels)
    climatology = train_samples.astype(np.float64).mean(axis=(0, 1))

    os.makedirs(path, exist_ok=True)
    _, samples_digest = write_blob(os.path.join(path, SAMPLES_FILE), samples, "<f4")
    _, climatology_digest = write_blob(os.path.join(path, CLIMATOLOGY_FILE), climatology, "<f8")

    manifest = DatasetManifest(
        format_version=DATASET_FORMAT_VERSION,
        code_version=settings.app_version,
        grid=grid.spec,
        channels=channels,
        n_samples=data.n_samples,
        n_leads=data.n_leads,
        lead_time_hours=data.lead_time_hours,
        steps_per_lead=steps,
        seed=data.seed,
        params=params,
        normalization=normalization,
        train_indices=train,
        validation_indices=validation,
        samples_file=SAMPLES_FILE,
        samples_sha256=samples_digest,
        climatology_file=CLIMATOLOGY_FILE,
        climatology_sha256=climatology_digest,
        config=config or {},
    )
    write_json(os.path.join(path, MANIFEST_FILE), manifest.model_dump(mode="json"))
    logger.info("Dataset written", path=path, train=len(train), validation=len(validation))
    return manifest


@dataclass
class SWEDataset:
    path: str
    manifest: DatasetManifest
    samples: np.ndarray
    climatology: np.ndarray

    @property
    def grid(self) -> SphericalGrid:
        return grid_from_spec(self.manifest.grid)

    @property
    def channels(self) -> List[str]:
        return self.manifest.channels

    @property
    def means(self) -> np.ndarray:
        return np.array([self.manifest.normalization[c].mean for c in self.channels])

    @property
    def stds(self) -> np.ndarray:
        return np.array([self.manifest.normalization[c].std for c in self.channels])

    def indices(self, split: str) -> List[int]:
        if split == "train":
            return list(self.manifest.train_indices)
        if split == "validation":
            return list(self.manifest.validation_indices)
        if split == "all":
            return list(range(self.manifest.n_samples))
        raise ValueError(f"Unknown split '{split}'")

    def normalize(self, fields: np.ndarray) -> np.ndarray:
        """z-scores [..., C, H, W] with the stored training statistics."""
        return (np.asarray(fields, dtype=np.float64) - self.means[:, None, None]) / self.stds[:, None, None]

    def denormalize(self, fields: np.ndarray) -> np.ndarray:
        return np.asarray(fields, dtype=np.float64) * self.stds[:, None, None] + self.means[:, None, None]

    def trajectory(self, index: int) -> np.ndarray:
        """Raw float64 fields [n_leads + 1, C, H, W]."""
        return self.samples[index].astype(np.float64)


def load_dataset(path: str) -> SWEDataset:
    """Loads and verifies a dataset directory; any mismatch is a DatasetCorruptError."""
    try:
        raw = read_json(os.path.join(path, MANIFEST_FILE))
    except (OSError, ValueError) as e:
        raise DatasetCorruptError(path, f"manifest unreadable: {e}")
    if raw.get("format_version") != DATASET_FORMAT_VERSION:
        raise DatasetCorruptError(path, f"unsupported format_version {raw.get('format_version')}")
    try:
        manifest = DatasetManifest.model_validate(raw)
    except ValueError as e:
        raise DatasetCorruptError(path, f"manifest invalid: {e}")

    blobs = {}
    for name, digest in ((manifest.samples_file, manifest.samples_sha256),
                         (manifest.climatology_file, manifest.climatology_sha256)):
        try:
            payload = read_blob(os.path.join(path, name))
        except OSError as e:
            raise DatasetCorruptError(path, f"{name} unreadable: {e}")
        if sha256(payload) != digest:
            raise DatasetCorruptError(path, f"{name} sha256 mismatch")
        blobs[name] = payload

    grid_shape = (manifest.grid.nlat, manifest.grid.nlon)
    sample_shape = (manifest.n_samples, manifest.n_leads + 1, len(manifest.channels)) + grid_shape
    samples = np.frombuffer(blobs[manifest.samples_file], dtype="<f4")
    climatology = np.frombuffer(blobs[manifest.climatology_file], dtype="<f8")
    if samples.size != int(np.prod(sample_shape)):
        raise DatasetCorruptError(path, f"samples hold {samples.size} values, expected shape {sample_shape}")
    if climatology.size != len(manifest.channels) * grid_shape[0] * grid_shape[1]:
        raise DatasetCorruptError(path, "climatology size does not match the grid")

    logger.info("Dataset loaded", path=path, samples=manifest.n_samples, grid=manifest.grid.label())
    return SWEDataset(
        path=path,
        manifest=manifest,
        samples=samples.reshape(sample_shape),
        climatology=climatology.reshape((len(manifest.channels),) + grid_shape),
    )


_END = object()


class PrefetchLoader:
    """Batches (inputs [B, C, H, W], targets [n_steps, B, C, H, W]) produced by a background thread.

    Windows start at every time level s with s + n_steps ≤ n_leads; the order
    is a permutation seeded with (seed, epoch), so iteration is deterministic.
    """

    def __init__(self, dataset: SWEDataset, split: str, batch_size: int, n_steps: int = 1,
                 seed: int = 0, epoch: int = 0, shuffle: bool = True, normalize: bool = True,
                 capacity: Optional[int] = None):
        if n_steps > dataset.manifest.n_leads:
            raise ConfigError(f"n_steps {n_steps} exceeds the {dataset.manifest.n_leads} stored lead steps")
        self.dataset = dataset
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.normalize = normalize
        self.capacity = capacity or settings.prefetch_batches
        windows = [
            (index, start)
            for index in dataset.indices(split)
            for start in range(dataset.manifest.n_leads - n_steps + 1)
        ]
        if shuffle:
            order = np.random.default_rng([seed, epoch]).permutation(len(windows))
            windows = [windows[i] for i in order]
        self.windows = windows

    def __len__(self) -> int:
        return (len(self.windows) + self.batch_size - 1) // self.batch_size

    def _batch(self, chunk: Sequence[Tuple[int, int]]) -> Tuple[np.ndarray, np.ndarray]:
        frames = np.stack([
            self.dataset.samples[index, start:start + self.n_steps + 1] for index, start in chunk
        ]).astype(np.float64)
        if self.normalize:
            frames = self.dataset.normalize(frames)
        return frames[:, 0], np.moveaxis(frames[:, 1:], 1, 0)

    def _produce(self, out: queue.Queue, stop: threading.Event):
        try:
            for begin in range(0, len(self.windows), self.batch_size):
                if stop.is_set():
                    return
                out.put(self._batch(self.windows[begin:begin + self.batch_size]))
            out.put(_END)
        except Exception as e:  # forwarded to the consumer
            out.put(e)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
        out: queue.Queue = queue.Queue(maxsize=self.capacity)
        stop = threading.Event()
        worker = threading.Thread(target=self._produce, args=(out, stop), daemon=True, name="prefetch")
        worker.start()
        try:
            while True:
                item = out.get()
                if item is _END:
                    return
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            stop.set()
            while worker.is_alive():
                try:
                    out.get_nowait()
                except queue.Empty:
                    worker.join(timeout=0.05)
