"""mixtts: a desk-scale mixed-lingual (Mandarin + English) encoder-decoder TTS system."""
import logging
import os
import sys
from dataclasses import dataclass
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Optional

from mixtts.autodiff.tensor import set_default_dtype
from mixtts.config import config
from mixtts.database import init_db
from mixtts.dsp.audio import AudioConfig

__version__ = '0.1.0'

PACKAGE_LOGGER = 'mixtts'


@dataclass
class Runtime:
    """Resolved settings, output directory and logger for one invocation."""
    name: str
    settings: type
    out_dir: Path
    logger: logging.Logger

    @property
    def audio_config(self) -> AudioConfig:
        return AudioConfig.from_settings(self.settings)

    @property
    def seed(self) -> int:
        return self.settings.SEED

    @property
    def deterministic(self) -> bool:
        return self.settings.DETERMINISTIC


def _configure_logging(settings: type, out_dir: Path) -> logging.Logger:
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        if getattr(handler, '_mixtts', False):
            logger.removeHandler(handler)
            handler.close()
    level = getattr(logging, settings.LOG_LEVEL.upper())
    formatter = logging.Formatter(settings.LOG_FORMAT)

    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(formatter)
    stream._mixtts = True
    logger.addHandler(stream)
    if not settings.DEBUG:
        file_handler = RotatingFileHandler(
            out_dir / 'logs' / settings.LOG_FILE_NAME,
            maxBytes=settings.LOG_MAX_BYTES,
            backupCount=settings.LOG_BACKUP_COUNT
        )
        file_handler.setFormatter(formatter)
        file_handler.setLevel(level)
        file_handler._mixtts = True
        logger.addHandler(file_handler)
    logger.setLevel(level)
    logger.propagate = True
    return logger


# PUBLIC_INTERFACE
def create_runtime(config_name: Optional[str] = None, out_dir: Optional[Path] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> Runtime:
    """Create and configure a runtime.

    Args:
        config_name: Name of the configuration to use (default: None, uses MIXTTS_ENV or 'default')
        out_dir: Directory all outputs of this invocation go under
        overrides: Setting values that take precedence over the config class (e.g. CLI flags)

    Returns:
        Runtime: settings, output directory and package logger
    """
    if config_name is None:
        config_name = os.environ.get('MIXTTS_ENV', 'default')

    logger = logging.getLogger(PACKAGE_LOGGER)
    if config_name not in config:
        logger.error(f'Invalid configuration name: {config_name}')
        config_name = 'default'

    base = config[config_name]
    settings = type(base.__name__, (base,), dict(overrides or {})) if overrides else base
    out_dir = Path(out_dir or '.').resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    runtime = Runtime(name=config_name, settings=settings, out_dir=out_dir, logger=logger)

    settings.init_app(runtime)
    runtime.logger = _configure_logging(settings, out_dir)
    set_default_dtype(settings.PRECISION)
    init_db(settings.database_url(out_dir))

    runtime.logger.info(f'Loaded configuration: {config_name}')
    runtime.logger.info(f'Precision: {settings.PRECISION}, deterministic: {settings.DETERMINISTIC}, '
                        f'seed: {settings.SEED}')
    return runtime
