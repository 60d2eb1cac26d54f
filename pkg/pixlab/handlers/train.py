import logging

import click

from pixlab.nn import build_network
from pixlab.pix import PixConfig
from pixlab.services.training_service import evaluate, train
from pixlab.utils.loader import load_cifar10

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--epochs", type=click.IntRange(min=1), default=None, help="Defaults to PIX_EPOCHS.")
@click.option("--zeta", type=click.IntRange(1, 32), default=2, show_default=True)
@click.option("--lr", type=click.FloatRange(min=0.0), default=None, help="Defaults to PIX_LR.")
@click.option("--momentum", type=click.FloatRange(0.0, 1.0), default=None, help="Defaults to PIX_MOMENTUM.")
@click.option("--batch-size", type=click.IntRange(min=1), default=None, help="Defaults to PIX_BATCH_SIZE.")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Defaults to PIX_SEED.")
@click.option("--tau", type=click.FloatRange(0.0, 1.0), default=None, help="Defaults to PIX_TAU.")
@click.option("--limit", type=click.IntRange(min=1), default=None, help="Use only the first N images.")
@click.option("--arch", type=click.Choice(["tiny_pixnet", "tiny_baseline"]), default="tiny_pixnet", show_default=True)
@click.option("--log-csv", type=click.Path(dir_okay=False), default=None, help="Write the epoch log here instead of stdout.")
@click.option("--checkpoint-dir", type=click.Path(file_okay=False), default=None)
@click.option("--eval-data", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory with test_batch.bin for a held-out evaluation.")
@click.pass_obj
def command(settings, data_dir, epochs, zeta, lr, momentum, batch_size, seed, tau, limit, arch,
            log_csv, checkpoint_dir, eval_data):
    """Train a tiny CIFAR-10 network and emit the epoch log as CSV."""
    defaults = settings.training
    seed = defaults.seed if seed is None else seed
    cfg = PixConfig(zeta=zeta, tau=defaults.tau if tau is None else tau)

    data = load_cifar10(data_dir, split="train", limit=limit)
    model = build_network(
        arch, cfg, seed,
        lr=defaults.lr if lr is None else lr,
        momentum=defaults.momentum if momentum is None else momentum,
    )
    model, log = train(
        model, data,
        epochs=defaults.epochs if epochs is None else epochs,
        batch_size=defaults.batch_size if batch_size is None else batch_size,
        seed=seed,
        checkpoint_dir=checkpoint_dir,
    )

    csv = log.to_csv(index=False, lineterminator="\n")
    if log_csv:
        with open(log_csv, "w", encoding="utf-8", newline="") as f:
            f.write(csv)
        logger.info("training log written to %s", log_csv)
    else:
        click.echo(csv, nl=False)

    click.echo(f"final train accuracy: {log['accuracy'].iloc[-1]:.4f}", err=True)
    if eval_data:
        loss, accuracy = evaluate(model, load_cifar10(eval_data, split="test"))
        click.echo(f"eval loss: {loss:.4f} accuracy: {accuracy:.4f}", err=True)
