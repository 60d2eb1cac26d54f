from dataclasses import dataclass, field
from pathlib import Path

from dotenv import dotenv_values


@dataclass
class TrainingDefaults:
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 10
    tau: float = 0.5
    seed: int = 1


@dataclass
class LoggingConfig:
    level: str = "INFO"
    file: str | None = None


@dataclass
class Settings:
    training: TrainingDefaults = field(default_factory=TrainingDefaults)
    logging: LoggingConfig = field(default_factory=LoggingConfig)


def _number(values: dict, key: str, default, cast):
    raw = values.get(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw.strip())
    except ValueError as exc:
        raise RuntimeError(f"{key} must be a {cast.__name__}, got {raw!r}") from exc


def get_settings(config_path: str | Path | None = None) -> Settings:
    """Code defaults, overridden by KEY=VALUE lines of an optional config file.

    The process environment is not consulted.
    """
    values: dict = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file {path} does not exist")
        values = dotenv_values(path)

    defaults = TrainingDefaults()
    training = TrainingDefaults(
        lr=_number(values, "PIX_LR", defaults.lr, float),
        momentum=_number(values, "PIX_MOMENTUM", defaults.momentum, float),
        batch_size=_number(values, "PIX_BATCH_SIZE", defaults.batch_size, int),
        epochs=_number(values, "PIX_EPOCHS", defaults.epochs, int),
        tau=_number(values, "PIX_TAU", defaults.tau, float),
        seed=_number(values, "PIX_SEED", defaults.seed, int),
    )
    if not 0.0 <= training.tau <= 1.0:
        raise RuntimeError(f"PIX_TAU must lie in [0, 1], got {training.tau}")
    if training.batch_size < 1 or training.epochs < 1:
        raise RuntimeError("PIX_BATCH_SIZE and PIX_EPOCHS must be positive")

    level = (values.get("PIX_LOG_LEVEL") or "INFO").strip().upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise RuntimeError(f"PIX_LOG_LEVEL must be a logging level name, got {level!r}")
    log_file = (values.get("PIX_LOG_FILE") or "").strip() or None

    return Settings(training=training, logging=LoggingConfig(level=level, file=log_file))
