from concurrent.futures import ThreadPoolExecutor
import logging

from mambayolo.config import Config

__version__ = '0.3.0'

logger = logging.getLogger(__name__)

# Worker pool (initialized lazily)
_executor = None
_thread_cap = Config.THREADS


def get_thread_cap() -> int:
    """Current cap on internal parallelism."""
    return _thread_cap


def set_thread_cap(threads: int) -> None:
    """Change the thread cap; the pool is rebuilt on next use."""
    global _executor, _thread_cap
    if threads < 1:
        raise ValueError(f"thread cap must be >= 1, got {threads}")
    if threads != _thread_cap and _executor is not None:
        _executor.shutdown(wait=True)
        _executor = None
    _thread_cap = threads


def get_executor():
    """Get the shared worker pool, or None when running single-threaded."""
    global _executor
    if _thread_cap <= 1:
        return None
    if _executor is None:
        logger.debug("Starting worker pool with %d threads", _thread_cap)
        _executor = ThreadPoolExecutor(max_workers=_thread_cap, thread_name_prefix='mambayolo')
    return _executor


def parallel_map(fn, items):
    """Map fn over items on the shared pool, preserving order."""
    items = list(items)
    executor = get_executor()
    if executor is None or len(items) < 2:
        return [fn(item) for item in items]
    return list(executor.map(fn, items))


def create_cli():
    """Command-line parser factory."""
    import argparse

    parser = argparse.ArgumentParser(
        prog='mambayolo',
        description='State-space-model detection primitives: verification, accounting and feature extraction.'
    )
    parser.add_argument('--version', action='version', version=f'mambayolo {__version__}')

    # Options every command honors
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=None,
                        help='random seed (default: MAMBAYOLO_SEED, or the config seed for extract)')
    common.add_argument('--threads', type=int, default=Config.THREADS, help='cap on internal parallelism')
    common.add_argument('--verbose', action='store_true', help='debug logging on stderr')

    subparsers = parser.add_subparsers(dest='command', metavar='command')
    subparsers.required = True

    # Register command groups
    from mambayolo.routes.verify import register as register_verify
    from mambayolo.routes.accounting import register as register_accounting
    from mambayolo.routes.features import register as register_features
    from mambayolo.routes.bench import register as register_bench

    register_verify(subparsers, common)
    register_accounting(subparsers, common)
    register_features(subparsers, common)
    register_bench(subparsers, common)

    return parser
