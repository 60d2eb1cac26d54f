"""Maintenance script and small helpers."""

import pytest

from pixlab.utils.time_tools import format_seconds, time_call
from scripts.reproduce_cost_table import cost_table


def test_cost_table_largest_size():
    """At 512x112x112 the table reproduces the four per-instance FLOP counts."""
    table = cost_table()
    assert len(table) == 12
    row = table[table["size"] == "512x112x112"].set_index("module")
    assert row.loc["SE", "flops"] == 12_879_904
    assert row.loc["CBAM", "flops"] == 38_645_792
    assert row.loc["FBS", "flops"] == 45_222_399
    assert row.loc["PiX", "flops"] == 6_686_720
    assert row.loc["PiX", "memory_mb"] == pytest.approx(25.694208)


def test_cost_table_shrinks_with_zeta():
    wide = cost_table(pix_zeta=1).set_index(["size", "module"])
    narrow = cost_table(pix_zeta=4).set_index(["size", "module"])
    key = ("512x28x28", "PiX")
    assert narrow.loc[key, "flops"] < wide.loc[key, "flops"]
    assert narrow.loc[("512x28x28", "SE"), "flops"] == wide.loc[("512x28x28", "SE"), "flops"]


@pytest.mark.parametrize("seconds, text", [(0.000123, "123.0 us"), (0.5, "500.0 ms"), (2, "2.00 s")])
def test_format_seconds(seconds, text):
    assert format_seconds(seconds) == text


def test_time_call_counts_reps():
    calls = []
    samples = time_call(lambda: calls.append(1), reps=4)
    assert len(samples) == 4 and len(calls) == 4
    assert (samples >= 0).all()
    with pytest.raises(ValueError):
        time_call(lambda: None, reps=0)
