import logging
import os

from dotenv import load_dotenv

load_dotenv()

logger = logging.getLogger(__name__)

_ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def _env_int(name: str, default: int, minimum: int = 0) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring %s=%r: not an integer, using %d", name, raw, default)
        return default
    if value < minimum:
        logger.warning("Ignoring %s=%r: must be >= %d, using %d", name, raw, minimum, default)
        return default
    return value


class Config:
    """Settings loaded from environment variables (and a local .env file)."""

    # Runtime
    THREADS = _env_int('MAMBAYOLO_THREADS', 1, minimum=1)
    LOG_LEVEL = os.getenv('MAMBAYOLO_LOG_LEVEL', 'WARNING').upper()
    DEFAULT_SEED = _env_int('MAMBAYOLO_SEED', 0)

    # Shipped model configs
    CONFIG_DIR = os.getenv('MAMBAYOLO_CONFIG_DIR', os.path.join(_ROOT_DIR, 'static', 'configs'))
    SHIPPED_CONFIGS = ('tiny', 't', 'b', 'l')

    # Numerics
    NORM_EPS = 1e-5
    ZOH_SERIES_THRESHOLD = 1e-8
    STRIDE_MULTIPLE = 32

    # Verification tolerances
    SCAN_TOL_F32 = 1e-4
    SCAN_TOL_F64 = 1e-9
    GRAD_STEP = 1e-5
    GRAD_TOL = 1e-5

    # Informational reference sizes (millions of params, GFLOPs at 640x640)
    REFERENCE_SIZES = {
        't': {'params_m': 6.1, 'gflops': 14.3},
        'b': {'params_m': 21.8, 'gflops': 49.7},
        'l': {'params_m': 57.6, 'gflops': 156.2},
    }
