"""End-to-end command runs through the click entry point."""

import io

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from pixlab.costmodel import ChannelSampling, primitive_flops
from pixlab.main import cli
from pixlab.tensor import Tensor, random_tensor, read_pxt, write_pxt


@pytest.fixture
def runner():
    return CliRunner()


def _frame(result) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(result.stdout))


# --- cost --- #

def test_cost_pix_table_cell(runner):
    result = runner.invoke(cli, ["cost", "--module", "pix", "--channels", "512", "--height", "112", "--width", "112", "--zeta", "1"])
    assert result.exit_code == 0, result.output
    total = _frame(result).set_index("label").loc["total"]
    assert total["flops"] == 6_686_720
    assert total["bytes"] == 25_694_208


def test_cost_se_smallest_size(runner):
    result = runner.invoke(cli, ["cost", "--module", "se", "--channels", "512", "--height", "28", "--width", "28"])
    assert result.exit_code == 0, result.output
    assert _frame(result).iloc[-1]["flops"] == 837_664


def test_cost_table_format(runner):
    result = runner.invoke(
        cli, ["cost", "--module", "pix", "--channels", "512", "--height", "112", "--width", "112", "--format", "table"]
    )
    assert result.exit_code == 0
    assert "6.687 MFLOPs, 25.694208 MB" in result.stdout


@pytest.mark.parametrize(
    "args",
    [
        ["--module", "pix", "--zeta", "0"],
        ["--module", "pix", "--zeta", "600"],
        ["--module", "eca"],
        ["--module", "fbs", "--topk", "513"],
    ],
)
def test_cost_usage_errors_exit_2(runner, args):
    result = runner.invoke(cli, ["cost", "--channels", "512", "--height", "28", "--width", "28", *args])
    assert result.exit_code == 2


# --- network-cost --- #

@pytest.mark.parametrize("spec, pct", [("resnet50", 22.8), ("resnet101", 22.9)])
def test_network_cost_squeeze(runner, spec, pct):
    result = runner.invoke(cli, ["network-cost", "--spec", spec, "--pix-zeta", "4", "--mode", "squeeze"])
    assert result.exit_code == 0, result.output
    frame = _frame(result)
    assert list(frame["variant"]) == ["baseline", "pix_squeeze_z4"]
    assert frame["reduction_pct"].iloc[1] == pytest.approx(pct, abs=1.0)
    assert frame["params"].iloc[0] == frame["params"].iloc[1]


def test_network_cost_table_and_breakdown(runner):
    table = runner.invoke(cli, ["network-cost", "--spec", "resnet18", "--format", "table"])
    assert table.exit_code == 0
    assert "baseline" in table.stdout and "B" in table.stdout
    breakdown = runner.invoke(cli, ["network-cost", "--spec", "resnet18", "--breakdown"])
    assert breakdown.exit_code == 0
    frame = _frame(breakdown)
    assert frame["label"].iloc[0] == "conv1"
    assert frame["flops"].iloc[-1] == frame["flops"].iloc[:-1].sum()


def test_network_cost_from_file(runner, tmp_path):
    path = tmp_path / "one.net"
    path.write_text("input 64 8 8\nconv out=64 k=3 pad=1\n")
    result = runner.invoke(cli, ["network-cost", "--spec", str(path)])
    assert result.exit_code == 0
    assert _frame(result)["params"].iloc[0] == 36_864


def test_malformed_spec_exits_1_with_line_number(runner, tmp_path):
    path = tmp_path / "broken.net"
    path.write_text("input 3 8 8\nconv out=banana\n")
    result = runner.invoke(cli, ["network-cost", "--spec", str(path)])
    assert result.exit_code == 1
    assert "line 2" in result.stderr


# --- fuse --- #

def _fuse_inputs(tmp_path, channels, zeta, theta=None, seed=5):
    subsets = -(-channels // zeta)
    x = random_tensor((1, channels, 5, 5), seed=seed)
    if theta is None:
        theta = random_tensor((1, 1, subsets, channels), seed=seed + 1)
    beta = Tensor.zeros((1, 1, 1, subsets))
    paths = {name: tmp_path / f"{name}.pxt" for name in ("x", "theta", "beta")}
    write_pxt(x, paths["x"])
    write_pxt(theta, paths["theta"])
    write_pxt(beta, paths["beta"])
    return x, paths


def _fuse_args(paths, zeta, output):
    return [
        "fuse", "--input", str(paths["x"]), "--theta", str(paths["theta"]), "--beta", str(paths["beta"]),
        "--zeta", str(zeta), "--output", str(output),
    ]


def test_fuse_output_dims(runner, tmp_path):
    _, paths = _fuse_inputs(tmp_path, 12, 4)
    result = runner.invoke(cli, _fuse_args(paths, 4, tmp_path / "y.pxt"))
    assert result.exit_code == 0, result.output
    assert read_pxt(tmp_path / "y.pxt").dims == (1, 3, 5, 5)


def test_fuse_zero_predictor_halves_input(runner, tmp_path):
    x, paths = _fuse_inputs(tmp_path, 6, 1, theta=Tensor.zeros((1, 1, 6, 6)))
    result = runner.invoke(cli, _fuse_args(paths, 1, tmp_path / "y.pxt"))
    assert result.exit_code == 0, result.output
    assert np.array_equal(read_pxt(tmp_path / "y.pxt").data, 0.5 * x.data)


def test_fuse_is_byte_identical_across_runs(runner, tmp_path):
    _, paths = _fuse_inputs(tmp_path, 10, 4)
    for name in ("a.pxt", "b.pxt"):
        assert runner.invoke(cli, _fuse_args(paths, 4, tmp_path / name)).exit_code == 0
    assert (tmp_path / "a.pxt").read_bytes() == (tmp_path / "b.pxt").read_bytes()


def test_fuse_shape_mismatch_exits_1_with_dims(runner, tmp_path):
    _, paths = _fuse_inputs(tmp_path, 12, 4)
    result = runner.invoke(cli, _fuse_args(paths, 3, tmp_path / "y.pxt"))
    assert result.exit_code == 1
    assert "(4, 12)" in result.stderr and "(3, 12)" in result.stderr


def test_fuse_corrupt_input_exits_1(runner, tmp_path):
    _, paths = _fuse_inputs(tmp_path, 12, 4)
    paths["x"].write_bytes(paths["x"].read_bytes()[:-4])
    result = runner.invoke(cli, _fuse_args(paths, 4, tmp_path / "y.pxt"))
    assert result.exit_code == 1
    assert "(1, 12, 5, 5)" in result.stderr


# --- gradcheck --- #

@pytest.mark.parametrize("zeta", ["2", "3"])
def test_gradcheck_passes(runner, zeta):
    result = runner.invoke(
        cli, ["gradcheck", "--channels", "8", "--height", "4", "--width", "4", "--zeta", zeta, "--seed", "42"]
    )
    assert result.exit_code == 0, result.output
    frame = _frame(result)
    assert set(frame["gradient"]) == {"dx", "dtheta", "dbeta"}
    assert frame["passed"].all()


def test_gradcheck_zeta_above_channels_is_usage_error(runner):
    result = runner.invoke(cli, ["gradcheck", "--channels", "8", "--zeta", "9"])
    assert result.exit_code == 2


# --- train --- #

def test_train_smoke_and_determinism(runner, cifar_dir):
    args = ["train", "--data", str(cifar_dir), "--limit", "10", "--epochs", "1", "--batch-size", "5", "--seed", "1"]
    first = runner.invoke(cli, args)
    second = runner.invoke(cli, args)
    assert first.exit_code == 0, first.output
    frame = _frame(first)
    assert list(frame.columns) == ["epoch", "loss", "accuracy"]
    assert np.isfinite(frame["loss"]).all()
    assert "final train accuracy" in first.stderr
    assert first.stdout == second.stdout


def test_train_writes_log_file_and_evaluates(runner, cifar_dir, tmp_path):
    log = tmp_path / "log.csv"
    result = runner.invoke(
        cli,
        ["train", "--data", str(cifar_dir), "--limit", "8", "--epochs", "2", "--batch-size", "4",
         "--log-csv", str(log), "--eval-data", str(cifar_dir)],
    )
    assert result.exit_code == 0, result.output
    assert result.stdout == ""
    assert len(pd.read_csv(log)) == 2
    assert "eval loss" in result.stderr


def test_train_missing_batches_exits_1(runner, tmp_path):
    result = runner.invoke(cli, ["train", "--data", str(tmp_path), "--epochs", "1"])
    assert result.exit_code == 1
    assert "data_batch_1.bin" in result.stderr


def test_train_rejects_zeta_above_width(runner, cifar_dir):
    result = runner.invoke(cli, ["train", "--data", str(cifar_dir), "--zeta", "33"])
    assert result.exit_code == 2


# --- bench --- #

def test_bench_fuse_reports_costmodel_flops(runner):
    result = runner.invoke(cli, ["bench", "--op", "fuse", "--sizes", "16x8x8,16x16x16", "--reps", "3", "--zeta", "4"])
    assert result.exit_code == 0, result.output
    frame = _frame(result)
    assert list(frame["size"]) == ["16x8x8", "16x16x16"]
    assert (frame["median_s"] > 0).all()
    assert list(frame["flops"]) == [
        primitive_flops(ChannelSampling(16, 8, 8, 4)),
        primitive_flops(ChannelSampling(16, 16, 16, 4)),
    ]


@pytest.mark.parametrize("op", ["gca", "conv"])
def test_bench_other_ops(runner, op):
    result = runner.invoke(cli, ["bench", "--op", op, "--sizes", "8x6x6", "--reps", "2", "--format", "table"])
    assert result.exit_code == 0, result.output
    assert op in result.stdout


def test_bench_bad_sizes_is_usage_error(runner):
    assert runner.invoke(cli, ["bench", "--op", "fuse", "--sizes", "16x8"]).exit_code == 2
    assert runner.invoke(cli, ["bench", "--op", "fuse", "--sizes", "2x8x8", "--zeta", "4"]).exit_code == 2


# --- global options --- #

def test_config_file_sets_default_tau(runner, tmp_path):
    """theta=0 gives p=0.5: Max under the default tau, Avg once PIX_TAU=0."""
    _, paths = _fuse_inputs(tmp_path, 8, 4, theta=Tensor.zeros((1, 1, 2, 8)))
    config = tmp_path / "pix.env"
    config.write_text("PIX_TAU=0\n")
    assert runner.invoke(cli, _fuse_args(paths, 4, tmp_path / "default.pxt")).exit_code == 0
    result = runner.invoke(cli, ["--config", str(config), *_fuse_args(paths, 4, tmp_path / "avg.pxt")])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "default.pxt").read_bytes() != (tmp_path / "avg.pxt").read_bytes()


def test_invalid_config_exits_1(runner, tmp_path):
    config = tmp_path / "bad.env"
    config.write_text("PIX_SEED=abc\n")
    result = runner.invoke(cli, ["--config", str(config), "cost", "--module", "se", "--channels", "8",
                                 "--height", "2", "--width", "2"])
    assert result.exit_code == 1
    assert "PIX_SEED" in result.stderr


def test_log_file_option(runner, tmp_path):
    log_file = tmp_path / "logs" / "pix.log"
    result = runner.invoke(
        cli, ["--log-level", "DEBUG", "--log-file", str(log_file), "cost", "--module", "se", "--channels", "8",
              "--height", "2", "--width", "2"]
    )
    assert result.exit_code == 0
    assert " | DEBUG    | pixlab.handlers.cost | " in log_file.read_text(encoding="utf-8")
