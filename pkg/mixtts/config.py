"""Configuration module for mixtts.

This module provides configuration classes for different environments:
- BaseConfig: Base configuration with common settings
- DevelopmentConfig: Configuration for interactive experimentation
- ProductionConfig: Configuration for long unattended runs
- TestingConfig: Configuration for the test suite

The configuration can be selected using the MIXTTS_ENV environment variable:
- development (default)
- production
- testing

Environment variables:
    - LOG_LEVEL: Logging level (INFO, DEBUG, etc.)
    - LOG_FILE_NAME: Log file name inside <out-dir>/logs
    - DATABASE_URL: Run-registry URL (defaults to <out-dir>/registry.db)
    - SEED: Global random seed
    - DETERMINISTIC: Force ordered single-worker data loading (1 or 0)
    - PRECISION: Default tensor precision (f32 or f64)
    - SAMPLE_RATE, N_FFT, WIN_MS, HOP_MS, N_MELS, FMIN, FMAX, MAG_FLOOR,
      TRIM_DB, TAIL_MS, GRIFFIN_LIM_ITERS: audio analysis settings
    - SHOW_PROGRESS: Draw progress bars on stderr (1 or 0)
    - DEBUG_FREEZE_CHECKS: Hash frozen parameter groups after every step (1 or 0)
"""
import os
from pathlib import Path
from typing import Any, Dict, Optional

from mixtts.errors import ConfigurationError


def get_env_var(name: str, default: Any = None, var_type: type = str) -> Any:
    """Get environment variable with type conversion.

    Args:
        name: Name of the environment variable
        default: Default value if environment variable is not set
        var_type: Type to convert the value to

    Returns:
        The environment variable value converted to the specified type
    """
    value = os.environ.get(name)
    if value is None:
        return default
    try:
        if var_type == bool:
            return value.lower() in ('true', '1', 'yes')
        return var_type(value)
    except (ValueError, TypeError):
        return default


class BaseConfig:
    """Base configuration class for mixtts.

    Attributes:
        DEBUG (bool): Debug mode flag (no rotating log file)
        LOG_LEVEL (str): Logging level
        LOG_FORMAT (str): Log record format
        LOG_FILE_NAME (str): Log file name under <out-dir>/logs
        LOG_MAX_BYTES (int): Rotation size
        LOG_BACKUP_COUNT (int): Rotated files kept
        DATABASE_URL (str): Run-registry URL; None means <out-dir>/registry.db
        SEED (int): Global seed
        DETERMINISTIC (bool): Ordered single-worker loading
        PRECISION (str): Default tensor precision
        SHOW_PROGRESS (bool): tqdm progress bars
        DEBUG_FREEZE_CHECKS (bool): Per-step frozen-group hashing
    """
    DEBUG = get_env_var('MIXTTS_DEBUG', False, bool)

    # Logging configuration
    LOG_LEVEL = get_env_var('LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
    LOG_FILE_NAME = get_env_var('LOG_FILE_NAME', 'mixtts.log')
    LOG_MAX_BYTES = get_env_var('LOG_MAX_BYTES', 10485760, int)  # 10MB
    LOG_BACKUP_COUNT = get_env_var('LOG_BACKUP_COUNT', 10, int)

    # Run registry
    DATABASE_URL: Optional[str] = get_env_var('DATABASE_URL', None)

    # Reproducibility
    SEED = get_env_var('SEED', 1234, int)
    DETERMINISTIC = get_env_var('DETERMINISTIC', True, bool)
    PRECISION = get_env_var('PRECISION', 'f32')

    # Audio analysis
    SAMPLE_RATE = get_env_var('SAMPLE_RATE', 24000, int)
    N_FFT = get_env_var('N_FFT', 2048, int)
    WIN_MS = get_env_var('WIN_MS', 50.0, float)
    HOP_MS = get_env_var('HOP_MS', 12.5, float)
    N_MELS = get_env_var('N_MELS', 80, int)
    FMIN = get_env_var('FMIN', 0.0, float)
    FMAX = get_env_var('FMAX', 12000.0, float)
    MAG_FLOOR = get_env_var('MAG_FLOOR', 1e-5, float)
    TRIM_DB = get_env_var('TRIM_DB', -40.0, float)
    TAIL_MS = get_env_var('TAIL_MS', 200.0, float)
    GRIFFIN_LIM_ITERS = get_env_var('GRIFFIN_LIM_ITERS', 60, int)

    SHOW_PROGRESS = get_env_var('SHOW_PROGRESS', True, bool)
    DEBUG_FREEZE_CHECKS = get_env_var('DEBUG_FREEZE_CHECKS', False, bool)

    @classmethod
    def init_app(cls, runtime) -> None:
        """Prepare the output directory layout and validate settings.

        Args:
            runtime: Runtime being configured
        """
        (runtime.out_dir / 'logs').mkdir(parents=True, exist_ok=True)
        cls.validate_config(cls)

    @classmethod
    def database_url(cls, out_dir: Path) -> str:
        return cls.DATABASE_URL or f'sqlite:///{Path(out_dir) / "registry.db"}'

    @classmethod
    def as_dict(cls) -> Dict[str, Any]:
        return {key: getattr(cls, key) for key in dir(cls) if key.isupper()}

    @staticmethod
    def validate_config(settings) -> None:
        """Validate configuration settings.

        Args:
            settings: configuration class (or any object with the same attributes)

        Raises:
            ConfigurationError: If any configuration validation fails
        """
        if settings.PRECISION not in ('f32', 'f64'):
            raise ConfigurationError(f'PRECISION must be f32 or f64, got {settings.PRECISION!r}')
        if settings.SAMPLE_RATE <= 0:
            raise ConfigurationError(f'SAMPLE_RATE must be positive, got {settings.SAMPLE_RATE}')
        hop = round(settings.HOP_MS * settings.SAMPLE_RATE / 1000)
        win = round(settings.WIN_MS * settings.SAMPLE_RATE / 1000)
        if not 0 < hop <= win <= settings.N_FFT:
            raise ConfigurationError(
                f'need 0 < hop <= window <= n_fft, got {hop}/{win}/{settings.N_FFT} samples'
            )
        if settings.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ConfigurationError(f'unknown LOG_LEVEL {settings.LOG_LEVEL!r}')


class DevelopmentConfig(BaseConfig):
    """Development configuration."""
    DEBUG = get_env_var('MIXTTS_DEBUG', False, bool)


class ProductionConfig(BaseConfig):
    """Production configuration.

    Attributes:
        SHOW_PROGRESS (bool): Progress bars off for unattended runs
    """
    DEBUG = False
    SHOW_PROGRESS = get_env_var('SHOW_PROGRESS', False, bool)


class TestingConfig(BaseConfig):
    """Testing configuration.

    Attributes:
        TESTING (bool): Enable testing mode
        DATABASE_URL (str): In-memory registry
        SHOW_PROGRESS (bool): No progress bars
        DEBUG_FREEZE_CHECKS (bool): Hash frozen groups every step
    """
    TESTING = True
    DEBUG = True
    DATABASE_URL = 'sqlite:///:memory:'
    SHOW_PROGRESS = False
    DEBUG_FREEZE_CHECKS = True


# Configuration dictionary
config: Dict[str, type] = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
