"""Analytic FLOP and memory accounting for primitives, attention modules and whole networks."""

import math

import pytest

from pixlab.costmodel import (
    CBAM,
    FBS,
    SE,
    BatchNorm,
    ChannelSampling,
    Conv,
    GlobalPool,
    PiX,
    PixSubstitution,
    ReLU,
    Sigmoid,
    SqueezeConv,
    SubstitutionMode,
    module_cost,
    module_flops,
    module_flops_closed_form,
    module_from_name,
    module_memory,
    module_memory_closed_form,
    network_comparison,
    network_flops,
    network_params,
    primitive_flops,
    squeeze_memory,
)
from pixlab.netspec import bundled_spec, parse_network_spec

# (module, C, H, W) -> (printed MFLOPs, decimals shown, printed MB)
COST_TABLE = [
    (SE(), 112, 12.8, 1, 25.694336),
    (CBAM(), 112, 38.6, 1, 51.639424),
    (FBS(k=1), 112, 45.2, 1, 51.384320),
    (PiX(zeta=1), 112, 6.6, 1, 25.694208),
    (SE(), 56, 3.2, 1, 6.426752),
    (CBAM(), 56, 9.6, 1, 12.916096),
    (FBS(k=1), 56, 11.5, 1, 12.849152),
    (PiX(zeta=1), 56, 1.8, 1, 6.426624),
    (SE(), 28, 0.837, 3, 1.609856),
    (CBAM(), 28, 2.4, 1, 3.235264),
    (FBS(k=1), 28, 3.0, 1, 3.215360),
    (PiX(zeta=1), 28, 0.6, 1, 1.609728),
]


# --- primitives --- #

def test_worked_example_squeeze_layer_components():
    """Dense 1x1 squeeze of 12x5x5 to 3 channels: conv 900, BN 300, ReLU 75."""
    assert primitive_flops(Conv(3, 12, 1, 5, 5)) == 900
    assert primitive_flops(BatchNorm(3, 5, 5)) == 300
    assert primitive_flops(ReLU(3, 5, 5)) == 75


def test_worked_example_channel_sampling():
    assert primitive_flops(ChannelSampling(12, 5, 5, zeta=4)) == 225


def test_primitive_rules():
    assert primitive_flops(Sigmoid(3, 1, 1)) == 12
    assert primitive_flops(GlobalPool(12, 5, 5)) == 300
    assert primitive_flops(ChannelSampling(7, 2, 2, zeta=1)) == 0
    # non-divisible: subsets of sizes 4, 4, 2 compare 3 + 3 + 1 times per pixel
    assert primitive_flops(ChannelSampling(10, 1, 1, zeta=4)) == 7


@pytest.mark.parametrize("bad", [lambda: Conv(0, 3, 1, 1, 1), lambda: ReLU(3, -1, 2), lambda: ChannelSampling(4, 2, 2, zeta=5)])
def test_primitives_reject_invalid_dims(bad):
    with pytest.raises(ValueError):
        bad()


# --- modules --- #

def test_pix_worked_example_components():
    """PiX at 12x5x5, zeta=4: 300 + 36 + 12 + 225 = 573."""
    report = module_flops(PiX(zeta=4), 12, 5, 5)
    assert [flops for _, flops, _ in report.breakdown()] == [300, 36, 12, 225]
    assert report.total_flops == 573


def test_squeeze_conv_worked_example_total():
    assert module_flops(SqueezeConv(zeta=4), 12, 5, 5).total_flops == 1275


def test_exact_table_totals_at_largest_size():
    assert module_flops(SE(), 512, 112, 112).total_flops == 12_879_904
    assert module_flops(CBAM(), 512, 112, 112).total_flops == 38_645_792
    assert module_flops(PiX(zeta=1), 512, 112, 112).total_flops == 6_686_720
    assert module_flops(FBS(k=1), 512, 112, 112).total_flops == 45_222_399


@pytest.mark.parametrize("module, size, mflops, decimals, mb", COST_TABLE)
def test_cost_table_cells(module, size, mflops, decimals, mb):
    """Printed FLOPs are the truncated MFLOP value; memory matches to six decimals."""
    flops = module_flops(module, 512, size, size).total_flops
    scale = 10 ** decimals
    assert math.floor(flops / 1e6 * scale) == round(mflops * scale)
    assert round(module_memory(module, 512, size, size).memory_mb, 6) == mb


def test_pix_memory_elements_at_largest_size():
    report = module_memory(PiX(zeta=1), 512, 112, 112)
    assert report.total_memory_elements == 6_422_528 + 1_024
    assert report.memory_bytes == 25_694_208


def test_unit_zeta_pix_flops_closed_form():
    for channels, size in [(64, 7), (512, 28), (3, 1)]:
        chw = channels * size * size
        assert module_flops(PiX(zeta=1), channels, size, size).total_flops == chw + channels ** 2 + 4 * channels


def test_breakdown_agrees_with_closed_form(rng):
    """100 random (C, H, W, zeta) per module: term sums equal the integer closed forms."""
    for _ in range(100):
        channels = int(rng.integers(1, 300))
        height, width = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        zeta = int(rng.integers(1, channels + 1))
        topk = int(rng.integers(1, channels + 1))
        for module in (SE(), CBAM(), FBS(k=topk), PiX(zeta=zeta), SqueezeConv(zeta=zeta)):
            assert module_flops(module, channels, height, width).total_flops == module_flops_closed_form(
                module, channels, height, width
            )
            assert module_memory(module, channels, height, width).total_memory_elements == module_memory_closed_form(
                module, channels, height, width
            )


def test_costs_are_monotone_in_each_dimension(rng):
    for _ in range(30):
        c, h, w = (int(v) for v in rng.integers(2, 64, size=3))
        for module in (SE(), CBAM(), FBS(k=1), PiX(zeta=2)):
            base = module_flops(module, c, h, w).total_flops
            base_mem = module_memory(module, c, h, w).total_memory_elements
            for grown in ((c + 1, h, w), (c, h + 1, w), (c, h, w + 1)):
                assert module_flops(module, *grown).total_flops >= base
                assert module_memory(module, *grown).total_memory_elements >= base_mem


def test_squeeze_memory_comparison():
    """Squeezing 12x5x5 by 4: 75 elements for the conv, 12 + 3 + 75 for PiX."""
    assert squeeze_memory(12, 5, 5, 4) == (75, 90)


def test_module_cost_merges_flops_and_memory():
    frame = module_cost(PiX(zeta=4), 12, 5, 5).to_frame()
    assert list(frame.columns) == ["label", "flops", "bytes"]
    assert list(frame["label"]) == ["global_pool", "conv_squeeze", "sigmoid", "channel_fusion", "total"]
    total = frame.iloc[-1]
    assert total["flops"] == 573
    assert total["bytes"] == 4 * (12 + 3 + 300)


def test_merged_breakdown_keeps_flops_and_elements_apart():
    """At zeta=1 channel fusion costs no FLOPs but still holds the full C*H*W output."""
    chw = 512 * 112 * 112
    report = module_cost(PiX(zeta=1), 512, 112, 112)
    terms = {label: (flops, elements) for label, flops, elements in report.breakdown()}
    assert terms["channel_fusion"] == (0, chw)
    assert terms["global_pool"] == (chw, 512)
    assert sum(flops for flops, _ in terms.values()) == 6_686_720
    assert sum(elements for _, elements in terms.values()) == report.total_memory_elements


def test_module_validation():
    with pytest.raises(ValueError, match="top-k"):
        module_flops(FBS(k=13), 12, 5, 5)
    with pytest.raises(ValueError, match="zeta"):
        module_memory(PiX(zeta=13), 12, 5, 5)
    with pytest.raises(ValueError):
        module_flops(SE(), 0, 5, 5)


def test_module_from_name():
    assert module_from_name("pix", zeta=4) == PiX(zeta=4)
    assert module_from_name("fbs", topk=3) == FBS(k=3)
    assert module_from_name("squeeze", zeta=2) == SqueezeConv(zeta=2)
    with pytest.raises(ValueError):
        module_from_name("eca")


# --- networks --- #

SQUEEZE_TARGETS = [
    # name, baseline FLOPs, PiX squeeze FLOPs, reduction %
    ("resnet50", 4.12e9, 3.18e9, 22.8),
    ("resnet101", 7.85e9, 6.05e9, 22.9),
    ("resnet152", 11.58e9, 8.91e9, 23.0),
]


@pytest.mark.parametrize("name, baseline, reduced, pct", SQUEEZE_TARGETS)
def test_squeeze_replace_reduction(name, baseline, reduced, pct):
    """Bundled ResNets within 3% of the published totals and 1 point of the reduction."""
    table = network_comparison(bundled_spec(name), PixSubstitution(zeta=4))
    base_row, pix_row = table.iloc[0], table.iloc[1]
    assert base_row["variant"] == "baseline"
    assert pix_row["variant"] == "pix_squeeze_z4"
    assert base_row["flops"] == pytest.approx(baseline, rel=0.03)
    assert pix_row["flops"] == pytest.approx(reduced, rel=0.03)
    assert pix_row["reduction_pct"] == pytest.approx(pct, abs=1.0)


def test_resnet50_squeeze_replace_at_zeta_8():
    """Inner width out/8: about 1.85B baseline FLOPs down to 1.39B, a 24.8% cut."""
    table = network_comparison(bundled_spec("resnet50"), PixSubstitution(zeta=8))
    assert list(table["variant"]) == ["baseline", "pix_squeeze_z8"]
    assert table.iloc[0]["flops"] == pytest.approx(1.85e9, rel=0.03)
    assert table.iloc[1]["flops"] == pytest.approx(1.39e9, rel=0.03)
    assert table.iloc[1]["reduction_pct"] == pytest.approx(24.8, abs=1.0)
    assert table.iloc[0]["params"] == table.iloc[1]["params"]


@pytest.mark.parametrize("name", ["resnet50", "resnet101", "resnet152"])
def test_squeeze_replace_keeps_parameter_count(name):
    table = network_comparison(bundled_spec(name), PixSubstitution(zeta=4))
    assert table.iloc[0]["params"] == table.iloc[1]["params"]


def test_resnet50_parameter_count():
    assert network_params(bundled_spec("resnet50")) == 25_502_912
    assert network_params(bundled_spec("resnet50")) == pytest.approx(25.5e6, rel=0.02)


def test_vgg16_parameter_count_with_vectors():
    spec = bundled_spec("vgg16")
    assert network_params(spec, include_vectors=True) == 138_357_544
    assert network_params(spec) == 138_344_128


def test_vgg16_and_resnet18_flops():
    assert 15.4e9 < network_flops(bundled_spec("vgg16")).total_flops < 15.6e9
    assert network_flops(bundled_spec("resnet18")).total_flops == pytest.approx(1.82e9, rel=0.03)


def test_single_conv_parameter_count():
    spec = parse_network_spec("input 64 8 8\nconv out=64 k=3 pad=1\n")
    assert network_params(spec) == 36_864
    assert network_flops(spec).total_flops == 36_864 * 64


def test_squeeze_replace_without_squeeze_convs_changes_nothing():
    spec = bundled_spec("resnet18")
    table = network_comparison(spec, PixSubstitution(zeta=4))
    assert table.iloc[0]["flops"] == table.iloc[1]["flops"]
    assert table.iloc[1]["reduction_pct"] == 0.0


def test_downscale_insert_shrinks_flops_and_params():
    spec = bundled_spec("resnet18")
    pix = PixSubstitution(zeta=2, mode=SubstitutionMode.DOWNSCALE)
    table = network_comparison(spec, pix)
    assert list(table["variant"]) == ["baseline", "pix_downscale_z2"]
    assert table.iloc[1]["flops"] < table.iloc[0]["flops"]
    assert table.iloc[1]["params"] < table.iloc[0]["params"]
    assert 30.0 < table.iloc[1]["reduction_pct"] < 60.0


def test_network_report_total_is_sum_of_layers():
    report = network_flops(bundled_spec("resnet18"))
    assert report.total_flops == sum(flops for _, flops, _ in report.breakdown())
    labels = [label for label, _, _ in report.breakdown()]
    assert "conv1" in labels and "fc" in labels
    assert any(label.endswith(".add") for label in labels)


def test_substitution_rejects_bad_zeta():
    with pytest.raises(ValueError):
        PixSubstitution(zeta=0)
