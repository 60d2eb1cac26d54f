import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path

import click

from pixlab.config import get_settings
from pixlab.handlers import bench, cost, fuse, gradcheck, network_cost, train
from pixlab.middlewares.error_logging import ErrorLoggingGroup

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"

logger = logging.getLogger(__name__)


# --- LOGGING SETUP --- #
def setup_logging(level: str = "INFO", log_file: str | Path | None = None):
    formatter = logging.Formatter(LOG_FORMAT)

    # stdout is reserved for CSV output
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    handlers: list[logging.Handler] = [console_handler]

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(log_path, maxBytes=5 * 1024 * 1024, backupCount=3, encoding="utf-8")
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    logging.basicConfig(level=level.upper(), handlers=handlers, force=True)

    logging.getLogger("numexpr").setLevel(logging.WARNING)


@click.group(cls=ErrorLoggingGroup)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="KEY=VALUE file with PIX_* defaults.")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Overrides PIX_LOG_LEVEL.")
@click.option("--log-file", type=click.Path(dir_okay=False), default=None,
              help="Also log to a rotating file.")
@click.pass_context
def cli(ctx: click.Context, config_path, log_level, log_file):
    """Pick-or-Mix channel sampling: cost analysis, operator runs, checks and training."""
    settings = get_settings(config_path)
    setup_logging(log_level or settings.logging.level, log_file or settings.logging.file)
    ctx.obj = settings
    logger.debug("settings: %s", settings)


for _command in (cost.command, network_cost.command, fuse.command, gradcheck.command, train.command, bench.command):
    cli.add_command(_command)


def main():
    cli(prog_name="pixlab")


if __name__ == "__main__":
    main()
