import argparse
import sys
from typing import List, Optional

from config.settings import settings
from src.cli import data_commands, model_commands, transform_commands
from src.exceptions import CheckpointCorruptError
from src.utils.error_utils import describe_exception, exit_code_for
from src.utils.instrumentation import run_context
from src.utils.logging import configure_logging, get_logger
from src.utils.prometheus import prometheus_metrics
from src.utils.serialization import dumps


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphereop",
        description=f"{settings.app_name} {settings.app_version}: spherical transforms, SFNO training and SWE data",
    )
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Overrides LOG_LEVEL")
    parser.add_argument("--metrics-file", help="Write Prometheus metrics in text format on exit")
    subparsers = parser.add_subparsers(dest="command", required=True)
    transform_commands.register(subparsers)
    data_commands.register(subparsers)
    model_commands.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    logger = get_logger(__name__)

    with run_context(args.command) as correlation_id:
        logger.info("Command started", version=settings.app_version)
        try:
            code = args.handler(args)
        except Exception as e:
            code = exit_code_for(e)
            error = describe_exception(e)
            if isinstance(e, CheckpointCorruptError):
                error["differences"] = e.differences
            error["correlation_id"] = correlation_id
            sys.stderr.write(dumps({"error": error}))
            sys.stderr.flush()
            logger.error("Command failed", exit_code=code, **error)
        else:
            logger.info("Command finished", exit_code=code)

    metrics_file = args.metrics_file or settings.metrics_textfile
    if metrics_file:
        prometheus_metrics.write_textfile(metrics_file)
    return code


if __name__ == "__main__":
    sys.exit(main())
