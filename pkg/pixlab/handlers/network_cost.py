import logging
from pathlib import Path

import click

from pixlab.costmodel import PixSubstitution, SubstitutionMode, network_comparison, network_flops
from pixlab.netspec import bundled_spec, load_network_spec
from pixlab.utils.default import GIGA, MEGA, OUTPUT_FORMATS, emit_frame

logger = logging.getLogger(__name__)


def _load(spec: str):
    path = Path(spec)
    if path.exists():
        return load_network_spec(path)
    return bundled_spec(spec)


@click.command("network-cost")
@click.option("--spec", "spec_ref", required=True, help="Spec file, or a bundled name such as resnet50.")
@click.option("--pix-zeta", type=click.IntRange(min=1), default=None)
@click.option("--mode", type=click.Choice([m.value for m in SubstitutionMode]), default="squeeze", show_default=True)
@click.option("--format", "fmt", type=click.Choice(OUTPUT_FORMATS), default="csv", show_default=True)
@click.option("--breakdown", is_flag=True, help="Per-layer FLOPs instead of the summary.")
def command(spec_ref, pix_zeta, mode, fmt, breakdown):
    """Whole-network FLOPs and parameters, with and without PiX substitution."""
    spec = _load(spec_ref)
    pix = PixSubstitution(zeta=pix_zeta, mode=mode) if pix_zeta else None

    if breakdown:
        emit_frame(network_flops(spec, pix).to_frame(), fmt)
        return

    frame = network_comparison(spec, pix)
    if fmt == "table":
        frame = frame.assign(
            flops=[f"{v / GIGA:.2f}B" for v in frame["flops"]],
            params=[f"{v / MEGA:.1f}M" for v in frame["params"]],
            reduction_pct=[f"{v:.1f}%" for v in frame["reduction_pct"]],
        )
    emit_frame(frame, fmt)
