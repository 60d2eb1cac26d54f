import logging

import click
import pandas as pd

from pixlab.pix import Activation, OpMode, PixConfig
from pixlab.services.gradcheck_service import OP_TOLERANCE, pix_gradcheck
from pixlab.utils.default import OUTPUT_FORMATS, emit_frame, validate_zeta

logger = logging.getLogger(__name__)


@click.command("gradcheck")
@click.option("--channels", type=click.IntRange(min=1), default=8, show_default=True)
@click.option("--height", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--width", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--zeta", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Defaults to PIX_SEED.")
@click.option("--trials", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--tau", type=click.FloatRange(0.0, 1.0), default=None, help="Defaults to PIX_TAU.")
@click.option("--mode", type=click.Choice([m.value for m in OpMode]), default="pick_or_mix", show_default=True)
@click.option("--activation", type=click.Choice([a.value for a in Activation]), default="sigmoid", show_default=True)
@click.option("--format", "fmt", type=click.Choice(OUTPUT_FORMATS), default="csv", show_default=True)
@click.pass_context
def command(ctx, channels, height, width, zeta, seed, trials, tau, mode, activation, fmt):
    """Finite-difference check of the PiX backward pass (float64).

    Trial t uses seed + t. Exits 0 only if every gradient is within tolerance.
    """
    problem = validate_zeta(zeta, channels)
    if problem:
        raise click.BadParameter(problem, param_hint="--zeta")
    settings = ctx.obj
    seed = settings.training.seed if seed is None else seed
    cfg = PixConfig(zeta=zeta, tau=settings.training.tau if tau is None else tau, op_mode=mode, activation=activation)

    worst: dict[str, float] = {}
    for trial in range(trials):
        result = pix_gradcheck(channels, height, width, cfg, seed + trial)
        for name, error in result.errors.items():
            worst[name] = max(worst.get(name, 0.0), error)

    frame = pd.DataFrame(
        [
            {"gradient": name, "max_rel_error": error, "tolerance": OP_TOLERANCE, "passed": error <= OP_TOLERANCE}
            for name, error in worst.items()
        ],
        columns=["gradient", "max_rel_error", "tolerance", "passed"],
    )
    emit_frame(frame, fmt)

    if not frame["passed"].all():
        logger.error("gradient check failed: %s", worst)
        click.echo("error: gradient check failed", err=True)
        ctx.exit(1)
