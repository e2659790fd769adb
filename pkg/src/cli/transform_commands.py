import argparse
import csv
import sys

from src.config.topology_config import topology_config
from src.constants import EXIT_OK
from src.exceptions import VerificationFailedError
from src.models.grid import grid_from_spec
from src.schemas.grid_schemas import GRID_KIND_ALIASES, GridSpec
from src.services.verification_service import BENCH_HEADER, parse_sizes, run_benchmark, run_verification
from src.utils.serialization import write_csv, write_json


def sht_verify(args: argparse.Namespace) -> int:
    grid = grid_from_spec(GridSpec.parse(args.grid))
    report = run_verification(
        grid,
        lmax=args.lmax,
        mmax=args.mmax,
        topology=topology_config.parse_workers(args.workers),
        n_fields=args.fields,
        seed=args.seed,
    )
    for line in report.lines():
        sys.stdout.write(line + "\n")
    sys.stdout.flush()
    if args.out:
        write_json(args.out, report.to_dict())
    if not report.passed:
        raise VerificationFailedError(report.failed)
    return EXIT_OK


def sht_bench(args: argparse.Namespace) -> int:
    rows = run_benchmark(
        parse_sizes(args.sizes),
        topology=topology_config.parse_workers(args.workers),
        kind=GRID_KIND_ALIASES[args.kind],
        repeats=args.repeats,
        n_fields=args.fields,
    )
    if args.out:
        write_csv(args.out, BENCH_HEADER, rows)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        writer.writerows(rows)
        sys.stdout.flush()
    return EXIT_OK


def register(subparsers):
    parser = subparsers.add_parser("sht-verify", help="Check transform invariants and serial/parallel bit equality")
    parser.add_argument("--grid", default="gauss:32x64", help="Grid as kind:HxW")
    parser.add_argument("--lmax", type=int)
    parser.add_argument("--mmax", type=int)
    parser.add_argument("--workers", help="Worker grid AxB (A over latitudes/degrees, B over longitudes/orders)")
    parser.add_argument("--fields", type=int, default=8, help="Random fields per check")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="Write the report as JSON")
    parser.set_defaults(handler=sht_verify)

    parser = subparsers.add_parser("sht-bench", help="Time forward and inverse transforms")
    parser.add_argument("--sizes", default="32x64,64x128", help="Comma-separated HxW sizes")
    parser.add_argument("--workers")
    parser.add_argument("--kind", choices=sorted(GRID_KIND_ALIASES), default="gauss")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--fields", type=int, default=1)
    parser.add_argument("--out", help="CSV path; stdout when omitted")
    parser.set_defaults(handler=sht_bench)
