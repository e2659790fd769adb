"""Forecast verification: latitude-weighted ACC, relative Lᵖ errors and evaluation reports.

Latitude is π/2 − θ. Anomalies are taken against the training-split
climatology stored with the dataset.
"""

import os
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from src.autodiff import no_grad
from src.constants import REPORT_FORMAT_VERSION
from src.exceptions import ConfigError, UndefinedACCError, ZeroNormTargetError
from src.models.grid import SphericalGrid, sphere_measure_weights
from src.schemas.report_schemas import ChannelStats, EvaluationRecord, EvaluationReport
from src.services.dataset_service import SWEDataset
from src.services.sfno_service import SFNOModel
from src.utils.instrumentation import instrumented
from src.utils.logging import get_logger
from src.utils.serialization import write_csv, write_json

logger = get_logger(__name__)

REPORT_FILE = "evaluation.json"
ACC_CURVE_FILE = "acc_by_lead.csv"


def latitude_weights(grid: SphericalGrid) -> np.ndarray:
    """cos(lat) per ring, normalized to mean 1 over rings."""
    cosine = np.cos(grid.latitudes)
    return cosine / cosine.mean()


def acc(pred: np.ndarray, truth: np.ndarray, climatology: np.ndarray, grid: SphericalGrid,
        channel: int = 0) -> float:
    """Latitude-weighted anomaly correlation of one [H, W] field pair."""
    weights = latitude_weights(grid)[:, None]
    forecast = np.asarray(pred, dtype=np.float64) - climatology
    observed = np.asarray(truth, dtype=np.float64) - climatology
    norm = np.sqrt(np.sum(weights * forecast ** 2) * np.sum(weights * observed ** 2))
    if norm == 0:
        raise UndefinedACCError(channel)
    return float(np.clip(np.sum(weights * forecast * observed) / norm, -1.0, 1.0))


def acc_per_channel(pred: np.ndarray, truth: np.ndarray, climatology: np.ndarray,
                    grid: SphericalGrid) -> np.ndarray:
    """ACC of every channel of [C, H, W] fields."""
    return np.array([
        acc(pred[c], truth[c], climatology[c], grid, channel=c) for c in range(pred.shape[0])
    ])


def relative_lp(pred: np.ndarray, truth: np.ndarray, grid: SphericalGrid, p: float = 2.0) -> np.ndarray:
    """Per-channel (Σ w|pred − truth|ᵖ / Σ w|truth|ᵖ)^(1/p) for [..., C, H, W] fields."""
    weights = sphere_measure_weights(grid)
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    denominator = np.sum(weights * np.abs(truth) ** p, axis=(-2, -1))
    empty = np.argwhere(denominator <= 0)
    if empty.size:
        raise ZeroNormTargetError(int(empty[0][-1]))
    numerator = np.sum(weights * np.abs(pred - truth) ** p, axis=(-2, -1))
    return (numerator / denominator) ** (1.0 / p)


def summarize(channel: str, lead_hours: float, accs: Sequence[float], rel_l1: Sequence[float],
              rel_l2: Sequence[float]) -> EvaluationRecord:
    q1, q3 = np.percentile(accs, [25, 75])
    return EvaluationRecord(
        channel=channel,
        lead_hours=lead_hours,
        acc_mean=float(np.mean(accs)),
        acc_q1=float(q1),
        acc_q3=float(q3),
        rel_l1=float(np.mean(rel_l1)),
        rel_l2=float(np.mean(rel_l2)),
    )


def normalization_arrays(channels: Sequence[str], dataset: SWEDataset,
                         normalization: Optional[Dict[str, ChannelStats]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-channel (means, stds); checkpoint statistics win over the dataset's when complete."""
    if normalization and all(name in normalization for name in channels):
        return (np.array([normalization[name].mean for name in channels]),
                np.array([normalization[name].std for name in channels]))
    return dataset.means, dataset.stds


@instrumented("evaluate")
def evaluate(model: SFNOModel, dataset: SWEDataset, leads: Optional[Sequence[int]] = None,
             split: str = "validation", grid: Optional[SphericalGrid] = None,
             normalization: Optional[Dict[str, ChannelStats]] = None) -> List[EvaluationRecord]:
    """Scores model rollouts against stored trajectories for every channel and lead.

    Each initial condition of `split` is rolled out to the largest requested
    lead; ACC is summarized by mean and quartiles across initial conditions.
    States are z-scored with `normalization` (the checkpoint's training
    statistics) when given, else with the dataset's own.
    """
    n_leads = dataset.manifest.n_leads
    leads = sorted(set(leads)) if leads else list(range(1, n_leads + 1))
    if leads[0] < 1 or leads[-1] > n_leads:
        raise ConfigError(f"Evaluation leads {leads} outside the stored range 1..{n_leads}")
    indices = dataset.indices(split)
    if not indices:
        raise ConfigError(f"Dataset split '{split}' is empty")
    grid = grid or dataset.grid
    channels = dataset.channels
    means, stds = normalization_arrays(channels, dataset, normalization)
    means, stds = means[:, None, None], stds[:, None, None]

    shape = (len(indices), len(leads), len(channels))
    accs, rel_l1, rel_l2 = np.empty(shape), np.empty(shape), np.empty(shape)
    with no_grad():
        for row, index in enumerate(indices):
            truth = dataset.trajectory(index)
            state = (truth[0] - means) / stds
            states = model.rollout(state, leads[-1], grid)
            for column, lead in enumerate(leads):
                pred = states[lead].data * stds + means
                accs[row, column] = acc_per_channel(pred, truth[lead], dataset.climatology, grid)
                rel_l1[row, column] = relative_lp(pred, truth[lead], grid, p=1)
                rel_l2[row, column] = relative_lp(pred, truth[lead], grid, p=2)

    lead_time = dataset.manifest.lead_time_hours
    records = [
        summarize(name, lead * lead_time, accs[:, column, c], rel_l1[:, column, c], rel_l2[:, column, c])
        for column, lead in enumerate(leads)
        for c, name in enumerate(channels)
    ]
    for record in records:
        logger.info("Lead scored", **record.model_dump())
    return records


def write_report(out_dir: str, records: Sequence[EvaluationRecord], checkpoint: str, dataset: str,
                 grid_changed: bool = False, config: Optional[dict] = None) -> EvaluationReport:
    """Writes the JSON report and the ACC-by-lead CSV series into `out_dir`."""
    report = EvaluationReport(
        format_version=REPORT_FORMAT_VERSION,
        code_version=settings.app_version,
        checkpoint=checkpoint,
        dataset=dataset,
        grid_changed=grid_changed,
        records=list(records),
        config=config or {},
    )
    write_json(os.path.join(out_dir, REPORT_FILE), report.model_dump(mode="json"))
    write_csv(
        os.path.join(out_dir, ACC_CURVE_FILE),
        ["channel", "lead_hours", "acc_mean", "acc_q1", "acc_q3", "rel_l1", "rel_l2"],
        [[r.channel, repr(r.lead_hours), repr(r.acc_mean), repr(r.acc_q1), repr(r.acc_q3), repr(r.rel_l1),
          repr(r.rel_l2)] for r in records],
    )
    return report
