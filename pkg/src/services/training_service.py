"""Training of the neural operator on shallow-water data, plus autoregressive rollout.

Stage one trains single steps under a cosine learning-rate cycle; stage two
fine-tunes on unrolled sequences of increasing depth at a constant rate. Both
stages optimize the relative geometric loss with Adam and read z-scored
batches from the prefetch loader.
"""

import hashlib
import math
import os
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import settings
from src.autodiff import Tape, Tensor, as_tensor, no_grad, ops
from src.constants import METRICS_LOG_FORMAT_VERSION, TRAJECTORY_FORMAT_VERSION
from src.exceptions import NaNDetectedError, WriteFailedError, ZeroNormTargetError
from src.models.grid import SphericalGrid, grid_from_spec, sphere_measure_weights
from src.schemas.report_schemas import MetricsRecord, TrajectoryManifest
from src.schemas.training_schemas import ChannelReduction, TrainConfig, TrainingStage
from src.services.dataset_service import PrefetchLoader, SWEDataset
from src.services.sfno_service import SFNOModel, save_checkpoint
from src.utils.instrumentation import instrumented
from src.utils.logging import get_logger
from src.utils.prometheus import prometheus_metrics
from src.utils.serialization import append_ndjson, write_csv, write_json

logger = get_logger(__name__)

METRICS_FILE = "metrics.ndjson"
LOSS_CURVE_FILE = "loss_curve.csv"
BEST_DIR = "best"
FINAL_DIR = "final"
NAN_DIR = "nan_diagnostic"
TRAJECTORY_FILE = "trajectory.f4"
TRAJECTORY_MANIFEST = "manifest.json"
ROLLOUT_STATS_FILE = "rollout_stats.csv"


# ---------------------------------------------------------------------- losses

def geometric_loss(pred, target: np.ndarray, grid: SphericalGrid, p: float = 2.0,
                   reduction: Union[ChannelReduction, str] = ChannelReduction.SUM) -> Tensor:
    """Relative Lᵖ error on the sphere for [..., C, H, W] fields.

    Per channel (Σ w|pred − target|ᵖ / Σ w|target|ᵖ)^(1/p) with w the
    quadrature area weights; channels are summed (or averaged), leading batch
    dimensions averaged.
    """
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if tuple(pred.shape) != target.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    weights = sphere_measure_weights(grid)

    denominator = np.sum(weights * np.abs(target) ** p, axis=(-2, -1))
    empty = np.argwhere(denominator <= 0)
    if empty.size:
        raise ZeroNormTargetError(int(empty[0][-1]))

    diff = pred - target
    error = diff * diff if p == 2 else ops.absolute(diff) ** p
    numerator = (error * weights).sum(axis=(-2, -1))
    per_channel = (numerator / denominator) ** (1.0 / p)

    if ChannelReduction(reduction) == ChannelReduction.MEAN:
        loss = per_channel.mean(axis=-1)
    else:
        loss = per_channel.sum(axis=-1)
    return loss.mean() if loss.ndim else loss


def autoregressive_loss(model: SFNOModel, u0, targets: np.ndarray, grid: Optional[SphericalGrid] = None,
                        p: float = 2.0, reduction: Union[ChannelReduction, str] = ChannelReduction.SUM) -> Tensor:
    """(1/S)·Σ_s L(Fˢ(u₀), u_s) over the S = len(targets) unrolled steps."""
    targets = np.asarray(targets)
    n_steps = targets.shape[0]
    if n_steps < 1:
        raise ValueError("autoregressive loss needs at least one target step")
    outer = grid or grid_from_spec(model.config.grid)
    state = as_tensor(u0)
    total = None
    for step in range(n_steps):
        state = model(state, grid)
        term = geometric_loss(state, targets[step], outer, p, reduction)
        total = term if total is None else total + term
    return total * (1.0 / n_steps)


# ---------------------------------------------------------------------- optimizer

class Adam:
    """Adam over named real parameters; moments are kept per parameter name."""

    def __init__(self, params: "OrderedDict[str, Tensor]", beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(tensor.data) for name, tensor in params.items()}
        self.v = {name: np.zeros_like(tensor.data) for name, tensor in params.items()}

    def step(self, grads: Dict[Tensor, np.ndarray], lr: float):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for name, tensor in self.params.items():
            grad = grads.get(tensor)
            if grad is None:
                continue
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def cosine_lr(lr0: float, epoch: int, epochs: int) -> float:
    """One cosine cycle from lr0 at epoch 0 towards 0 at `epochs`."""
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * epoch / epochs))


def training_schedule(config: TrainConfig) -> List[Tuple[int, float]]:
    """(n_steps, lr) for every epoch of the configured stage."""
    if config.stage == TrainingStage.SINGLE_STEP:
        return [(1, cosine_lr(config.lr, epoch, config.epochs)) for epoch in range(config.epochs)]
    schedule = []
    for n_steps in range(2, config.resolved_n_steps + 1):
        schedule += [(n_steps, config.finetune_lr)] * config.finetune_epochs_per_level
    return schedule


# ---------------------------------------------------------------------- training loop

@dataclass
class TrainingResult:
    best_checkpoint: str
    final_checkpoint: str
    best_epoch: int
    best_loss: float
    history: List[MetricsRecord] = field(default_factory=list)

    @property
    def train_losses(self) -> List[float]:
        return [record.train_loss for record in self.history]


def _check_finite(loss: Tensor, model: SFNOModel, out_dir: str, stage: str, epoch: int, batch: int,
                  normalization):
    if np.isfinite(loss.data).all():
        return
    path = save_checkpoint(
        model,
        os.path.join(out_dir, NAN_DIR),
        normalization=normalization,
        metadata={"stage": stage, "epoch": epoch, "batch": batch, "reason": "non-finite loss"},
    )
    prometheus_metrics.record_nan_abort("training")
    logger.error("Non-finite training loss", stage=stage, epoch=epoch, batch=batch, diagnostic=path)
    raise NaNDetectedError(f"training loss (epoch {epoch}, diagnostic checkpoint {path})", step=batch)


def evaluate_loss(model: SFNOModel, dataset: SWEDataset, split: str, n_steps: int, batch_size: int,
                  p: float = 2.0, reduction: Union[ChannelReduction, str] = ChannelReduction.SUM,
                  grid: Optional[SphericalGrid] = None) -> Optional[float]:
    """Mean autoregressive loss over a split without recording gradients; None for an empty split."""
    if not dataset.indices(split):
        return None
    grid = grid or dataset.grid
    total, count = 0.0, 0
    with no_grad():
        for inputs, targets in PrefetchLoader(dataset, split, batch_size, n_steps=n_steps, shuffle=False):
            loss = autoregressive_loss(model, inputs, targets, grid, p, reduction)
            total += loss.item() * inputs.shape[0]
            count += inputs.shape[0]
    return total / count


@instrumented("train")
def train(model: SFNOModel, dataset: SWEDataset, config: TrainConfig, out_dir: str,
          run_config: Optional[dict] = None, grid: Optional[SphericalGrid] = None) -> TrainingResult:
    """Runs the configured stage, logging one metrics record per epoch.

    Writes `metrics.ndjson`, `loss_curve.csv` and the `best/` and `final/`
    checkpoints under `out_dir`. Best is judged by validation loss, or by
    training loss when the dataset has no validation split.
    """
    grid = grid or dataset.grid
    stage = config.stage.value
    normalization = dataset.manifest.normalization
    run_config = run_config or {}
    model.gradient_checkpointing = config.gradient_checkpointing
    params = model.parameters()
    optimizer = Adam(params, config.beta1, config.beta2, config.eps)
    schedule = training_schedule(config)

    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, METRICS_FILE)
    if os.path.exists(metrics_path):
        os.remove(metrics_path)
    append_ndjson(metrics_path, {
        "format_version": METRICS_LOG_FORMAT_VERSION,
        "code_version": settings.app_version,
        "config": run_config,
    })
    logger.info("Training started", stage=stage, epochs=len(schedule), parameters=model.parameter_count())

    history: List[MetricsRecord] = []
    best_loss, best_epoch = math.inf, -1
    best_path = os.path.join(out_dir, BEST_DIR)
    start = time.perf_counter()
    step = 0
    for epoch, (n_steps, lr) in enumerate(schedule):
        loader = PrefetchLoader(dataset, "train", config.batch_size, n_steps=n_steps, seed=config.seed, epoch=epoch)
        total, count = 0.0, 0
        for inputs, targets in loader:
            with Tape() as tape:
                loss = autoregressive_loss(model, inputs, targets, grid, config.p, config.channel_reduction)
                _check_finite(loss, model, out_dir, stage, epoch, step, normalization)
                grads = tape.backward(loss, params.values())
            optimizer.step(grads, lr)
            total += loss.item() * inputs.shape[0]
            count += inputs.shape[0]
            step += 1

        train_loss = total / count
        val_loss = evaluate_loss(model, dataset, "validation", n_steps, config.batch_size, config.p,
                                 config.channel_reduction, grid)
        record = MetricsRecord(
            epoch=epoch,
            stage=stage,
            n_steps=n_steps,
            lr=lr,
            train_loss=train_loss,
            val_loss=val_loss,
            wall_time=time.perf_counter() - start,
        )
        history.append(record)
        append_ndjson(metrics_path, record.model_dump(mode="json"))
        prometheus_metrics.record_epoch(stage, train_loss, val_loss)
        logger.info("Epoch completed", epoch=epoch, n_steps=n_steps, lr=lr, train_loss=train_loss, val_loss=val_loss)

        monitored = val_loss if val_loss is not None else train_loss
        if monitored < best_loss:
            best_loss, best_epoch = monitored, epoch
            save_checkpoint(
                model, best_path, normalization=normalization,
                metadata={"stage": stage, "epoch": epoch, "n_steps": n_steps, "monitored_loss": monitored},
                config=run_config,
            )

    final_path = save_checkpoint(
        model, os.path.join(out_dir, FINAL_DIR), normalization=normalization,
        metadata={"stage": stage, "epoch": len(schedule) - 1, "best_epoch": best_epoch, "best_loss": best_loss},
        config=run_config,
    )
    write_csv(
        os.path.join(out_dir, LOSS_CURVE_FILE),
        ["epoch", "stage", "n_steps", "lr", "train_loss", "val_loss"],
        [[r.epoch, r.stage, r.n_steps, repr(r.lr), repr(r.train_loss), "" if r.val_loss is None else repr(r.val_loss)]
         for r in history],
    )
    logger.info("Training finished", stage=stage, best_epoch=best_epoch, best_loss=best_loss)
    return TrainingResult(best_path, final_path, best_epoch, best_loss, history)


# ---------------------------------------------------------------------- rollout

class TrajectoryWriter:
    """Streams de-normalized float32 frames to disk and seals them with a manifest."""

    def __init__(self, path: str, grid: SphericalGrid, channels: Sequence[str], lead_time_hours: float,
                 checkpoint: Optional[str] = None, config: Optional[dict] = None):
        self.path = path
        self.grid = grid
        self.channels = list(channels)
        self.lead_time_hours = lead_time_hours
        self.checkpoint = checkpoint
        self.config = config or {}
        self.frames = 0
        self._digest = hashlib.sha256()
        os.makedirs(path, exist_ok=True)
        try:
            self._handle = open(os.path.join(path, TRAJECTORY_FILE), "wb")
        except OSError as e:
            raise WriteFailedError(path, str(e))

    def write(self, frame: np.ndarray):
        data = np.ascontiguousarray(frame, dtype="<f4").tobytes()
        self._handle.write(data)
        self._digest.update(data)
        self.frames += 1

    def abort(self):
        """Closes the payload without sealing it; no manifest is written."""
        self._handle.close()

    def close(self, stats: Sequence[dict] = ()) -> TrajectoryManifest:
        self._handle.close()
        manifest = TrajectoryManifest(
            format_version=TRAJECTORY_FORMAT_VERSION,
            code_version=settings.app_version,
            grid=self.grid.spec,
            channels=self.channels,
            n_steps=self.frames - 1,
            lead_time_hours=self.lead_time_hours,
            payload_file=TRAJECTORY_FILE,
            payload_sha256=self._digest.hexdigest(),
            checkpoint=self.checkpoint,
            config=self.config,
        )
        write_json(os.path.join(self.path, TRAJECTORY_MANIFEST), manifest.model_dump(mode="json"))
        write_csv(
            os.path.join(self.path, ROLLOUT_STATS_FILE),
            ["step", "lead_hours", "channel", "min", "max", "mean", "std"],
            [[s["step"], s["lead_hours"], s["channel"], repr(s["min"]), repr(s["max"]), repr(s["mean"]), repr(s["std"])]
             for s in stats],
        )
        return manifest


@dataclass
class RolloutResult:
    trajectory: np.ndarray
    stats: List[dict]


def frame_statistics(frame: np.ndarray, step: int, lead_time_hours: float, channels: Sequence[str]) -> List[dict]:
    return [
        {
            "step": step,
            "lead_hours": step * lead_time_hours,
            "channel": name,
            "min": float(values.min()),
            "max": float(values.max()),
            "mean": float(values.mean()),
            "std": float(values.std()),
        }
        for name, values in zip(channels, frame)
    ]


def rollout(model: SFNOModel, u0: np.ndarray, n: int, means: np.ndarray, stds: np.ndarray,
            grid: Optional[SphericalGrid] = None, lead_time_hours: float = 1.0,
            writer: Optional[TrajectoryWriter] = None) -> RolloutResult:
    """n-fold model composition from the normalized state u0 [C, H, W].

    Returns the de-normalized trajectory [n + 1, C, H, W] (index 0 is u0) and
    per-step channel statistics; frames go to `writer` as they are produced.
    """
    channels = model.config.out_channels
    means = np.asarray(means, dtype=np.float64)[:, None, None]
    stds = np.asarray(stds, dtype=np.float64)[:, None, None]
    state = as_tensor(np.asarray(u0, dtype=np.float64))
    frames, stats = [], []

    def emit(step: int, normalized: np.ndarray):
        frame = normalized * stds + means
        frames.append(frame)
        stats.extend(frame_statistics(frame, step, lead_time_hours, channels))
        if writer is not None:
            writer.write(frame)

    emit(0, state.data)
    with no_grad():
        for step in range(1, n + 1):
            state = model(state, grid)
            if not np.isfinite(state.data).all():
                prometheus_metrics.record_nan_abort("rollout")
                logger.error("Rollout produced non-finite values", step=step)
                raise NaNDetectedError("rollout", step=step)
            emit(step, state.data)
            logger.debug("Rollout step", step=step)

    logger.info("Rollout finished", steps=n)
    return RolloutResult(np.stack(frames), stats)
