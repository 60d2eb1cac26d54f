import logging

import click
import numpy as np

from pixlab.pix import Activation, OpMode, PixConfig, PixParams, PixShapeError, pix_forward_batch
from pixlab.tensor import Tensor, read_pxt, write_pxt

logger = logging.getLogger(__name__)


def _squeeze_leading(t: Tensor, keep: int, what: str) -> np.ndarray:
    """theta is stored as (1, 1, S, C), beta as (1, 1, 1, S)."""
    lead = t.dims[:4 - keep]
    if any(d != 1 for d in lead):
        raise PixShapeError(f"{what}: expected leading dims of 1, got dims {t.dims}")
    return np.array(t.data.reshape(t.dims[4 - keep:]))


@click.command("fuse")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--theta", "theta_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--beta", "beta_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--zeta", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--tau", type=click.FloatRange(0.0, 1.0), default=None, help="Defaults to PIX_TAU.")
@click.option("--mode", type=click.Choice([m.value for m in OpMode]), default="pick_or_mix", show_default=True)
@click.option("--activation", type=click.Choice([a.value for a in Activation]), default="sigmoid", show_default=True)
@click.option("--output", "output_path", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
def command(settings, input_path, theta_path, beta_path, zeta, tau, mode, activation, output_path):
    """Run the PiX forward pass on PXT1 tensors and write the result."""
    cfg = PixConfig(zeta=zeta, tau=settings.training.tau if tau is None else tau, op_mode=mode, activation=activation)
    x = read_pxt(input_path)
    params = PixParams(
        theta=_squeeze_leading(read_pxt(theta_path), 2, "theta"),
        beta=_squeeze_leading(read_pxt(beta_path), 1, "beta"),
    )

    y, _ = pix_forward_batch(x.data, params, cfg)
    write_pxt(Tensor(y), output_path)
    logger.info("fused %s -> %s dims=%s", input_path, output_path, y.shape)
