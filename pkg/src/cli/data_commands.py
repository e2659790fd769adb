import argparse

from src.cli.common import add_config_argument, emit, grid_override, load_run_config
from src.constants import EXIT_OK
from src.models.grid import grid_from_spec
from src.services.dataset_service import generate_dataset

def swe_gen(args: argparse.Namespace) -> int:
    config = load_run_config(args, {
        "grid": grid_override(args.grid),
        "data.n_samples": args.samples,
        "data.n_leads": args.leads,
        "data.lead_time_hours": args.lead_hours,
        "data.seed": args.seed,
        "data.validation_fraction": args.validation_fraction,
    })
    manifest = generate_dataset(
        args.out,
        grid_from_spec(config.grid),
        config.solver,
        config.data,
        config=config.model_dump(mode="json"),
    )
    emit({
        "dataset": args.out,
        "grid": manifest.grid.label(),
        "samples": manifest.n_samples,
        "n_leads": manifest.n_leads,
        "lead_time_hours": manifest.lead_time_hours,
        "steps_per_lead": manifest.steps_per_lead,
        "train": len(manifest.train_indices),
        "validation": len(manifest.validation_indices),
        "samples_sha256": manifest.samples_sha256,
    })
    return EXIT_OK

def register(subparsers):
    parser = subparsers.add_parser("swe-gen", help="Generate a shallow-water dataset with the spectral solver")
    add_config_argument(parser)
    parser.add_argument("--out", required=True, help="Output dataset directory")
    parser.add_argument("--samples", type=int, help="Number of initial conditions")
    parser.add_argument("--leads", type=int, help="Stored lead steps per trajectory")
    parser.add_argument("--lead-hours", type=float, help="Hours between stored states")
    parser.add_argument("--grid", help="Grid as kind:HxW, e.g. gauss:64x128")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--validation-fraction", type=float)
    parser.set_defaults(handler=swe_gen)
