import click
import pandas as pd

OUTPUT_FORMATS = ("csv", "table")

# Human units used by the table format
MEGA = 1e6
GIGA = 1e9


def validate_zeta(zeta: int, channels: int) -> str | None:
    """
    Returns a message when zeta cannot split `channels`, or None if it is fine.
    """
    if zeta < 1:
        return f"zeta must be >= 1, got {zeta}"
    if zeta > channels:
        return f"zeta={zeta} exceeds the {channels} channels"
    return None


def emit_frame(frame: pd.DataFrame, fmt: str = "csv") -> None:
    """Writes a report to stdout as CSV or as an aligned table."""
    if fmt == "csv":
        click.echo(frame.to_csv(index=False, lineterminator="\n"), nl=False)
    else:
        click.echo(frame.to_string(index=False))
