"""Wall-clock micro-benchmarks of the scan kernels."""
from dataclasses import dataclass
import logging
import time

import numpy as np

from mambayolo.exceptions import UsageError
from mambayolo.models.scan_direction import MERGE_ORDER
from mambayolo.models.ssm import SequenceBatch, SsmParams
from mambayolo.services.ss2d import dt_rank, selective_cross_scan
from mambayolo.services.ssm_scan import build_kernel, scan_convolutional, scan_recurrent, selective_scan, zoh_discretize

logger = logging.getLogger(__name__)

BENCH_OPS = ('scan-recurrent', 'scan-conv', 'selective', 'ss2d')
DEFAULT_SIZES = {
    'scan-recurrent': (1024, 2048, 4096, 8192),
    'scan-conv': (1024, 2048, 4096, 8192),
    'selective': (1024, 2048, 4096, 8192),
    # side of a square map; the scanned length is side ** 2
    'ss2d': (8, 16, 24, 32),
}

STATE_DIM = 16
SELECTIVE_CHANNELS = 4
SS2D_CHANNELS = 4


@dataclass(frozen=True)
class BenchRow:
    size: int
    length: int
    median: float
    iqr: float


@dataclass(frozen=True)
class BenchReport:
    op: str
    rows: tuple
    repeats: int
    slope: float
    loglog_slope: float

    def ratios(self) -> list:
        """Median time ratio between consecutive sizes."""
        return [b.median / a.median if a.median > 0 else float('nan') for a, b in zip(self.rows, self.rows[1:])]


def _workload(op: str, size: int, rng: np.random.Generator):
    """(scanned length, zero-argument callable) for one benchmark point."""
    if op in ('scan-recurrent', 'scan-conv'):
        params = SsmParams(A=-rng.uniform(0.05, 1.0, STATE_DIM), B=rng.standard_normal(STATE_DIM),
                           C=rng.standard_normal(STATE_DIM), delta=0.1)
        disc = zoh_discretize(params)
        x = rng.standard_normal(size)
        if op == 'scan-recurrent':
            return size, lambda: scan_recurrent(disc, params.C, x)
        kernel = build_kernel(disc, params.C, size)
        return size, lambda: scan_convolutional(kernel, x)
    if op == 'selective':
        batch = SequenceBatch(
            values=rng.standard_normal((SELECTIVE_CHANNELS, size)),
            delta=rng.uniform(0.01, 0.2, (SELECTIVE_CHANNELS, size)),
            b=rng.standard_normal((STATE_DIM, size)),
            c=rng.standard_normal((STATE_DIM, size)),
        )
        A = -rng.uniform(0.5, 2.0, (SELECTIVE_CHANNELS, STATE_DIM))
        return size, lambda: selective_scan(batch, A)
    if op == 'ss2d':
        channels = SS2D_CHANNELS
        rank = dt_rank(channels)
        x = rng.standard_normal((channels, size, size)).astype(np.float32)
        params = {
            d: {
                'x_proj': rng.uniform(-0.5, 0.5, (rank + 2 * STATE_DIM, channels)),
                'dt_weight': rng.uniform(-0.5, 0.5, (channels, rank)),
                'dt_bias': np.full(channels, -2.0),
                'a_log': np.log(np.tile(np.arange(1, STATE_DIM + 1, dtype=np.float64), (channels, 1))),
                'd_skip': np.ones(channels),
            }
            for d in MERGE_ORDER
        }
        return size * size, lambda: selective_cross_scan(x, params)
    raise UsageError(f"unknown bench op {op!r} (choose from {', '.join(BENCH_OPS)})")


def run_bench(op: str, sizes=None, repeats: int = 5, warmup: int = 1, seed: int = 0) -> BenchReport:
    """Median and interquartile wall time per size, with linear and log-log fits."""
    if op not in BENCH_OPS:
        raise UsageError(f"unknown bench op {op!r} (choose from {', '.join(BENCH_OPS)})")
    if repeats < 1:
        raise UsageError(f"--repeats must be >= 1, got {repeats}")
    if warmup < 1:
        raise UsageError(f"--warmup must be >= 1, got {warmup}")
    sizes = tuple(sizes) if sizes else DEFAULT_SIZES[op]
    if any(s < 1 for s in sizes):
        raise UsageError(f"bench sizes must be positive, got {sizes}")

    rng = np.random.default_rng(seed)
    rows = []
    for size in sizes:
        length, fn = _workload(op, size, rng)
        for _ in range(warmup):
            fn()
        times = []
        for _ in range(repeats):
            start = time.perf_counter()
            fn()
            times.append(time.perf_counter() - start)
        q1, median, q3 = np.percentile(times, [25, 50, 75])
        logger.debug("bench %s size=%d median=%.6f", op, size, median)
        rows.append(BenchRow(size=size, length=length, median=float(median), iqr=float(q3 - q1)))

    lengths = np.array([r.length for r in rows], dtype=np.float64)
    medians = np.array([r.median for r in rows], dtype=np.float64)
    slope = loglog = float('nan')
    if len(rows) >= 2 and np.ptp(lengths) > 0:
        slope = float(np.polyfit(lengths, medians, 1)[0])
        if np.all(medians > 0):
            loglog = float(np.polyfit(np.log(lengths), np.log(medians), 1)[0])
    return BenchReport(op=op, rows=tuple(rows), repeats=repeats, slope=slope, loglog_slope=loglog)
