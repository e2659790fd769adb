import argparse
from typing import List, Optional

from src.cli.common import add_config_argument, check_grid_change, emit, load_run_config
from src.constants import EXIT_OK
from src.exceptions import ConfigError
from src.schemas.model_schemas import FilterVariant
from src.schemas.training_schemas import TrainingStage
from src.services.dataset_service import load_dataset
from src.services.metrics_service import evaluate, normalization_arrays, write_report
from src.services.sfno_service import SFNOModel, load_checkpoint
from src.services.training_service import TrajectoryWriter, rollout, train
from src.utils.logging import get_logger

logger = get_logger(__name__)


def parse_leads(text: Optional[str]) -> Optional[List[int]]:
    if not text:
        return None
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"--leads must be comma-separated integers, got '{text}'")


def train_command(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.dataset)
    config = load_run_config(args, {
        "grid": dataset.manifest.grid.model_dump(mode="json"),
        "model.filter": args.filter,
        "model.n_blocks": args.n_blocks,
        "model.embed_dim": args.embed_dim,
        "training.stage": args.stage,
        "training.epochs": args.epochs,
        "training.n_steps": args.n_steps,
        "training.lr": args.lr,
        "training.batch_size": args.batch_size,
        "training.seed": args.seed,
        "training.gradient_checkpointing": args.gradient_checkpointing,
    })
    if args.resume:
        # weights only; optimizer moments restart
        model, manifest = load_checkpoint(args.resume)
        check_grid_change(model.config, dataset.manifest.grid, allow=False)
        logger.info("Resuming from checkpoint", checkpoint=args.resume, stage=manifest.metadata.get("stage"))
    else:
        model = SFNOModel(config.resolved_model())

    result = train(model, dataset, config.training, args.out, run_config=config.model_dump(mode="json"))
    emit({
        "out": args.out,
        "stage": config.training.stage.value,
        "epochs": len(result.history),
        "parameters": model.parameter_count(),
        "best_checkpoint": result.best_checkpoint,
        "best_epoch": result.best_epoch,
        "best_loss": result.best_loss,
        "final_checkpoint": result.final_checkpoint,
        "final_train_loss": result.train_losses[-1] if result.history else None,
    })
    return EXIT_OK


def eval_command(args: argparse.Namespace) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    config = load_run_config(args, {"evaluation.leads": parse_leads(args.leads)})
    grid_changed = check_grid_change(model.config, dataset.manifest.grid, args.allow_grid_change)

    records = evaluate(model, dataset, config.evaluation.leads, args.split, dataset.grid,
                       normalization=manifest.normalization)
    report = write_report(args.out, records, args.checkpoint, args.dataset, grid_changed,
                          config=config.model_dump(mode="json"))
    emit({
        "out": args.out,
        "grid_changed": grid_changed,
        "records": [record.model_dump(mode="json") for record in report.records],
    })
    return EXIT_OK


def rollout_command(args: argparse.Namespace) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.ic)
    config = load_run_config(args, {"evaluation.rollout_steps": args.steps})
    grid_changed = check_grid_change(model.config, dataset.manifest.grid, args.allow_grid_change)

    if args.index is None:
        candidates = dataset.indices("validation") or dataset.indices("all")
        index = candidates[0]
    else:
        index = args.index
    if not 0 <= index < dataset.manifest.n_samples:
        raise ConfigError(f"--index {index} outside 0..{dataset.manifest.n_samples - 1}")

    channels = model.config.out_channels
    means, stds = normalization_arrays(channels, dataset, manifest.normalization)
    u0 = (dataset.trajectory(index)[0] - means[:, None, None]) / stds[:, None, None]
    lead_time = dataset.manifest.lead_time_hours
    writer = TrajectoryWriter(args.out, dataset.grid, channels, lead_time, checkpoint=args.checkpoint,
                              config=config.model_dump(mode="json"))
    try:
        result = rollout(model, u0, config.evaluation.rollout_steps, means, stds, dataset.grid,
                         lead_time_hours=lead_time, writer=writer)
    except Exception:
        writer.abort()
        raise
    writer.close(result.stats)

    # spread relative to the climatological band of each channel
    spread = result.trajectory.std(axis=(-2, -1)) / dataset.stds[None, :]
    emit({
        "out": args.out,
        "index": index,
        "steps": config.evaluation.rollout_steps,
        "grid_changed": grid_changed,
        "max_std_ratio": {name: float(spread[:, c].max()) for c, name in enumerate(channels)},
    })
    return EXIT_OK


def register(subparsers):
    parser = subparsers.add_parser("train", help="Train an SFNO on a generated dataset")
    add_config_argument(parser)
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--out", required=True, help="Run directory for checkpoints and logs")
    parser.add_argument("--stage", choices=[stage.value for stage in TrainingStage])
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--n-steps", type=int, help="Autoregressive steps per loss")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--resume", help="Checkpoint directory whose weights seed the run")
    parser.add_argument("--gradient-checkpointing", action="store_true", default=None)
    parser.add_argument("--filter", choices=[variant.value for variant in FilterVariant])
    parser.add_argument("--n-blocks", type=int)
    parser.add_argument("--embed-dim", type=int)
    parser.set_defaults(handler=train_command)

    parser = subparsers.add_parser("eval", help="Score a checkpoint by ACC and relative errors per lead")
    add_config_argument(parser)
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--leads", help="Comma-separated lead steps, e.g. 1,2,4")
    parser.add_argument("--split", choices=["train", "validation", "all"], default="validation")
    parser.add_argument("--allow-grid-change", action="store_true")
    parser.set_defaults(handler=eval_command)

    parser = subparsers.add_parser("rollout", help="Stream an autoregressive rollout to disk")
    add_config_argument(parser)
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--ic", required=True, help="Dataset holding the initial condition")
    parser.add_argument("--index", type=int, help="Sample index; first validation sample by default")
    parser.add_argument("--steps", type=int)
    parser.add_argument("--out", required=True)
    parser.add_argument("--allow-grid-change", action="store_true")
    parser.set_defaults(handler=rollout_command)
