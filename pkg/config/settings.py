"""Configuration and environment variable management for the SBP solver"""
import os
import logging
import yaml
from dotenv import load_dotenv

from services.errors import ConfigError

logger = logging.getLogger(__name__)

# Load environment variables
load_dotenv()

DEFAULTS_PATH = os.path.join(os.path.dirname(__file__), 'config.yaml')


def load_defaults(path: str = DEFAULTS_PATH) -> dict:
    """Load the default run configuration; an unusable file falls back to the shipped config.yaml"""
    try:
        with open(path, 'r', encoding='utf-8') as file:
            data = yaml.safe_load(file)
        if isinstance(data, dict):
            return data
        logger.error(f"Configuration file {path} does not hold a mapping")
    except FileNotFoundError:
        logger.warning(f"Configuration file not found: {path}. Using defaults.")
    except yaml.YAMLError as e:
        logger.error(f"Error parsing YAML configuration: {e}")
    if os.path.abspath(path) == os.path.abspath(DEFAULTS_PATH):
        raise ConfigError(f"shipped defaults {DEFAULTS_PATH} are missing or unreadable")
    return load_defaults(DEFAULTS_PATH)


# Worker cap for FFTs and verification trials
def _threads_from_env() -> int:
    raw = os.getenv("SBP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning(f"Ignoring non-integer SBP_THREADS={raw!r}")
        return 1


SBP_THREADS = _threads_from_env()

# Root directory for timestamped run directories
OUTPUT_ROOT = os.getenv("SBP_OUTPUT_ROOT", "runs")

# Logging Configuration
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")


def setup_logging():
    """Configure application logging"""
    level = getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler()]
    )

    # Reduce noise from external libraries
    logging.getLogger('hypothesis').setLevel(logging.WARNING)


def log_configuration(config=None):
    """Log configuration information"""
    logger.info("SBP Solver Configuration:")
    logger.info(f"   - Worker threads: {SBP_THREADS}")
    logger.info(f"   - Output root: {OUTPUT_ROOT}")
    logger.info(f"   - Log Level: {LOG_LEVEL}")
    if config is None:
        return
    logger.info(f"   - Grid: L={config.grid.half_length}, N={config.grid.points_per_axis}")
    model = config.model
    logger.info(
        f"   - Model: a={model.a}, q={model.q}, nonlinearity={model.nonlinearity}, "
        f"p={model.p}, v0={model.v0}, omega={model.omega}"
    )
    solve = config.solve
    logger.info(
        f"   - Solve: max_iters={solve.max_iters}, grad_tol={solve.grad_tol}, "
        f"seed={solve.seed}, initializer={solve.initializer}"
    )
