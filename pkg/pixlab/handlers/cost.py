import logging

import click

from pixlab.costmodel import ModuleName, module_cost, module_from_name
from pixlab.utils.default import MEGA, OUTPUT_FORMATS, emit_frame, validate_zeta

logger = logging.getLogger(__name__)


@click.command("cost")
@click.option("--module", "module_name", type=click.Choice([m.value for m in ModuleName]), required=True)
@click.option("--channels", type=click.IntRange(min=1), required=True)
@click.option("--height", type=click.IntRange(min=1), required=True)
@click.option("--width", type=click.IntRange(min=1), required=True)
@click.option("--zeta", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--topk", type=click.IntRange(min=1), default=1, show_default=True, help="FBS top-k.")
@click.option("--format", "fmt", type=click.Choice(OUTPUT_FORMATS), default="csv", show_default=True)
def command(module_name, channels, height, width, zeta, topk, fmt):
    """FLOPs and memory of one SE/CBAM/FBS/PiX/squeeze module instance."""
    problem = validate_zeta(zeta, channels)
    if problem:
        raise click.BadParameter(problem, param_hint="--zeta")
    if topk > channels:
        raise click.BadParameter(f"top-k={topk} exceeds the {channels} channels", param_hint="--topk")

    report = module_cost(module_from_name(module_name, zeta=zeta, topk=topk), channels, height, width)
    logger.debug("%s @ %dx%dx%d: %d FLOPs", module_name, channels, height, width, report.total_flops)

    emit_frame(report.to_frame(), fmt)
    if fmt == "table":
        click.echo(f"total: {report.total_flops / MEGA:.3f} MFLOPs, {report.memory_mb:.6f} MB")
