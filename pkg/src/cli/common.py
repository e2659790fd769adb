import argparse
import sys
from typing import Any, Dict, Optional

from src.exceptions import ConfigError, GridKindMismatchError
from src.schemas.grid_schemas import GridSpec
from src.schemas.model_schemas import SFNOConfig
from src.schemas.run_schemas import RunConfig
from src.utils.serialization import dumps


def add_config_argument(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON run configuration (grid, model, solver, data, training, evaluation)")


def load_run_config(args: argparse.Namespace, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Config file (or defaults) with non-empty CLI flags applied on top."""
    config = RunConfig.load(getattr(args, "config", None))
    try:
        return config.with_overrides(overrides or {})
    except ValueError as e:
        raise ConfigError(f"Invalid configuration override: {e}")


def grid_override(text: Optional[str]) -> Optional[dict]:
    return GridSpec.parse(text).model_dump(mode="json") if text else None


def check_grid_change(model_config: SFNOConfig, dataset_grid: GridSpec, allow: bool) -> bool:
    """True when the model runs on a grid other than its training grid; refused unless allowed."""
    if model_config.grid == dataset_grid:
        return False
    if not allow:
        raise GridKindMismatchError(model_config.grid.label(), dataset_grid.label())
    if not model_config.grid_invariant:
        raise ConfigError(
            "--allow-grid-change needs a spherical-harmonic or no positional embedding; "
            f"this checkpoint uses {model_config.pos_embed.value}"
        )
    return True


def emit(payload: Any):
    sys.stdout.write(dumps(payload))
    sys.stdout.flush()
