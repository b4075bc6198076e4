import numpy as np
import pytest

from mambayolo.exceptions import UsageError
from mambayolo.services.benchmark import BENCH_OPS, run_bench


def test_small_run_reports_every_size():
    report = run_bench('scan-conv', sizes=(8, 16, 32), repeats=1, warmup=1)
    assert [row.size for row in report.rows] == [8, 16, 32]
    assert all(row.median >= 0 and row.iqr >= 0 for row in report.rows)
    assert len(report.ratios()) == 2


def test_ss2d_lengths_are_squared_sides():
    report = run_bench('ss2d', sizes=(2, 3), repeats=1, warmup=1)
    assert [row.length for row in report.rows] == [4, 9]


def test_invalid_arguments():
    with pytest.raises(UsageError):
        run_bench('selective', repeats=0)
    with pytest.raises(UsageError):
        run_bench('fft')
    with pytest.raises(UsageError):
        run_bench('selective', sizes=(0,))
    with pytest.raises(UsageError, match='warmup'):
        run_bench('selective', warmup=0)


@pytest.mark.slow
def test_selective_scan_scales_linearly():
    report = run_bench('selective', sizes=(1024, 2048, 4096, 8192), repeats=5, warmup=1)
    assert all(1.6 <= ratio <= 2.6 for ratio in report.ratios()), report.ratios()
    assert 0.8 <= report.loglog_slope <= 1.2


@pytest.mark.slow
@pytest.mark.parametrize('op', BENCH_OPS)
def test_runtime_grows_with_size(op):
    report = run_bench(op, repeats=3, warmup=1)
    medians = np.array([row.median for row in report.rows])
    assert medians[-1] > medians[0]
