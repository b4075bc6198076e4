"""Benchmark command."""
from mambayolo.routes import resolve_seed
from mambayolo.services.benchmark import BENCH_OPS, run_bench
from mambayolo.utils.reporting import stamp, write_pairs, write_table
from mambayolo.utils.validators import int_list, positive_int


def bench(args, out) -> int:
    """Median and IQR wall time per size with a linear-scaling fit."""
    report = run_bench(args.op, sizes=args.sizes, repeats=args.repeats, warmup=args.warmup, seed=resolve_seed(args))
    stamp(out, 'bench')
    write_pairs(out, [('op', report.op), ('repeats', report.repeats)])
    write_table(out, ['size', 'length', 'median_s', 'iqr_s'],
                ((r.size, r.length, r.median, r.iqr) for r in report.rows))
    pairs = [('slope_s_per_step', report.slope), ('loglog_slope', report.loglog_slope)]
    pairs += [(f"ratio_{a.size}_{b.size}", ratio)
              for (a, b), ratio in zip(zip(report.rows, report.rows[1:]), report.ratios())]
    write_pairs(out, pairs)
    return 0


def register(subparsers, common) -> None:
    parser = subparsers.add_parser('bench', parents=[common], help='time the scan kernels')
    parser.add_argument('--op', choices=BENCH_OPS, default='selective')
    parser.add_argument('--sizes', type=int_list, help='comma list of lengths (side lengths for ss2d)')
    parser.add_argument('--repeats', type=positive_int, default=5)
    parser.add_argument('--warmup', type=positive_int, default=1)
    parser.set_defaults(handler=bench)
