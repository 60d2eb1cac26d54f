import logging

import click

from pixlab.services.bench_service import BenchOp, bench, parse_sizes
from pixlab.utils.default import OUTPUT_FORMATS, emit_frame
from pixlab.utils.time_tools import format_seconds

logger = logging.getLogger(__name__)


@click.command("bench")
@click.option("--op", type=click.Choice([o.value for o in BenchOp]), required=True)
@click.option("--sizes", default="512x28x28,512x56x56", show_default=True, help="Comma-separated CxHxW list.")
@click.option("--reps", type=click.IntRange(min=1), default=25, show_default=True)
@click.option("--zeta", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Defaults to PIX_SEED.")
@click.option("--format", "fmt", type=click.Choice(OUTPUT_FORMATS), default="csv", show_default=True)
@click.pass_obj
def command(settings, op, sizes, reps, zeta, seed, fmt):
    """Median wall-clock time per size with the analytic FLOP count alongside."""
    try:
        dims = parse_sizes(sizes)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="--sizes")
    if op == BenchOp.FUSE.value:
        too_small = [d for d in dims if d[0] < zeta]
        if too_small:
            raise click.BadParameter(f"zeta={zeta} exceeds C in {too_small}", param_hint="--zeta")

    frame = bench(op, dims, reps, zeta, settings.training.seed if seed is None else seed)
    if fmt == "table":
        frame = frame.assign(median_s=[format_seconds(v) for v in frame["median_s"]])
    emit_frame(frame, fmt)
