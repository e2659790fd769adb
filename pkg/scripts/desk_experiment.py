#!/usr/bin/env python3
"""
Desk-scale SWE experiment: SFNO against FNO on the same shallow-water data.

Generates a 64x128 dataset, trains sfno-linear and fno-linear networks
(2 blocks, 64 channels) on single-step prediction, fine-tunes both on two
steps, compares their 10-step rollout losses and audits a 240-step SFNO
rollout for stability. A JSON summary goes to stdout; the exit code is 1
when an acceptance threshold is missed.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from config.settings import settings
from src.exceptions import NaNDetectedError
from src.models.grid import grid_from_spec
from src.schemas.grid_schemas import GridSpec
from src.schemas.model_schemas import FilterVariant, SFNOConfig
from src.schemas.run_schemas import DataConfig
from src.schemas.solver_schemas import SWEParams
from src.schemas.training_schemas import ChannelReduction, TrainConfig
from src.services.dataset_service import generate_dataset, load_dataset
from src.services.sfno_service import SFNOModel, load_checkpoint
from src.services.training_service import evaluate_loss, rollout, train
from src.utils.logging import configure_logging, get_logger
from src.utils.serialization import dumps

SINGLE_STEP_THRESHOLD = 5e-2
STABILITY_BAND = 3.0


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--out", default=os.path.join(settings.artifacts_dir, "desk_experiment"))
    parser.add_argument("--grid", default="gauss:64x128")
    parser.add_argument("--samples", type=int, default=52, help="Initial conditions; 10 leads each")
    parser.add_argument("--embed-dim", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--finetune-epochs", type=int, default=5)
    parser.add_argument("--batch-size", type=int, default=4)
    parser.add_argument("--stability-steps", type=int, default=240)
    parser.add_argument("--seed", type=int, default=0)
    return parser.parse_args(argv)


def train_variant(variant: FilterVariant, dataset, args, logger) -> str:
    out = os.path.join(args.out, variant.value)
    config = SFNOConfig(grid=dataset.manifest.grid, n_blocks=2, embed_dim=args.embed_dim, filter=variant,
                        pos_embed="spherical-harmonic", seed=args.seed)
    single = train(SFNOModel(config), dataset, TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                                                          seed=args.seed), os.path.join(out, "single-step"))
    logger.info("Single-step training finished", variant=variant.value, best_loss=single.best_loss)

    model, _ = load_checkpoint(single.best_checkpoint)
    finetune = TrainConfig(stage="finetune", n_steps=2, finetune_epochs_per_level=args.finetune_epochs,
                           batch_size=args.batch_size, seed=args.seed)
    tuned = train(model, dataset, finetune, os.path.join(out, "finetune"))
    return tuned.best_checkpoint


def stability_audit(checkpoint: str, dataset, n_steps: int) -> dict:
    model, _ = load_checkpoint(checkpoint)
    index = dataset.indices("validation")[0]
    u0 = dataset.normalize(dataset.trajectory(index)[0])
    try:
        result = rollout(model, u0, n_steps, dataset.means, dataset.stds, dataset.grid,
                         lead_time_hours=dataset.manifest.lead_time_hours)
    except NaNDetectedError as e:
        return {"steps": n_steps, "finite": False, "failed_step": e.step, "max_std_ratio": {}, "min_std_ratio": {}}
    spread = result.trajectory.std(axis=(-2, -1)) / dataset.stds[None, :]
    return {
        "steps": n_steps,
        "finite": bool(np.isfinite(result.trajectory).all()),
        "max_std_ratio": {name: float(spread[:, c].max()) for c, name in enumerate(dataset.channels)},
        "min_std_ratio": {name: float(spread[:, c].min()) for c, name in enumerate(dataset.channels)},
    }


def main(argv=None) -> int:
    args = parse_args(argv)
    configure_logging()
    logger = get_logger("desk_experiment")

    data_dir = os.path.join(args.out, "dataset")
    grid = grid_from_spec(GridSpec.parse(args.grid))
    generate_dataset(data_dir, grid, SWEParams(),
                     DataConfig(n_samples=args.samples, n_leads=10, lead_time_hours=1.0, seed=args.seed))
    dataset = load_dataset(data_dir)

    summary = {"grid": grid.spec.label(), "pairs": args.samples * 10, "variants": {}}
    for variant in (FilterVariant.SFNO_LINEAR, FilterVariant.FNO_LINEAR):
        checkpoint = train_variant(variant, dataset, args, logger)
        model, _ = load_checkpoint(checkpoint)
        summary["variants"][variant.value] = {
            "checkpoint": checkpoint,
            "single_step_rel_l2": evaluate_loss(model, dataset, "validation", 1, args.batch_size,
                                                reduction=ChannelReduction.MEAN),
            "rollout_10_loss": evaluate_loss(model, dataset, "validation", 10, args.batch_size,
                                             reduction=ChannelReduction.MEAN),
        }

    sfno = summary["variants"][FilterVariant.SFNO_LINEAR.value]
    fno = summary["variants"][FilterVariant.FNO_LINEAR.value]
    summary["stability"] = stability_audit(sfno["checkpoint"], dataset, args.stability_steps)

    accepted = (
        sfno["single_step_rel_l2"] < SINGLE_STEP_THRESHOLD
        and fno["single_step_rel_l2"] < SINGLE_STEP_THRESHOLD
        and sfno["rollout_10_loss"] <= fno["rollout_10_loss"]
        and summary["stability"]["finite"]
        and all(ratio <= STABILITY_BAND for ratio in summary["stability"]["max_std_ratio"].values())
        and all(ratio >= 1.0 / STABILITY_BAND for ratio in summary["stability"]["min_std_ratio"].values())
    )
    summary["accepted"] = accepted
    sys.stdout.write(dumps(summary))
    logger.info("Desk experiment finished", accepted=accepted)
    return 0 if accepted else 1


if __name__ == "__main__":
    sys.exit(main())
