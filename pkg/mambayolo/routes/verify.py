"""Verification commands: selftest, scan-equiv, gradcheck."""
import logging

import numpy as np

from mambayolo.config import Config
from mambayolo.routes import resolve_seed
from mambayolo.services.analysis import SelectiveScanTarget, corrupted_backward, grad_check, scan_equivalence
from mambayolo.services.selftest import run_selftest
from mambayolo.utils.reporting import stamp, write_pairs, write_table
from mambayolo.utils.validators import positive_float, positive_int

logger = logging.getLogger(__name__)


def selftest(args, out) -> int:
    """Run the property suite; any failing property fails the command."""
    results = run_selftest(seed=resolve_seed(args), quick=args.quick)
    stamp(out, 'selftest')
    write_table(out, ['property', 'status', 'detail'],
                ((r.name, 'ok' if r.passed else 'FAILED', r.detail) for r in results))
    failed = [r.name for r in results if not r.passed]
    write_pairs(out, [('passed', len(results) - len(failed)), ('failed', len(failed))])
    if failed:
        logger.error("selftest failed: %s", ', '.join(failed))
        return 1
    return 0


def scan_equiv(args, out) -> int:
    """Recurrent vs convolutional scan on random time-invariant instances."""
    dtypes = ('f32', 'f64') if args.dtype == 'both' else (args.dtype,)
    seed = resolve_seed(args)
    reports = [scan_equivalence(args.n, args.l, args.trials, seed, dtype) for dtype in dtypes]
    stamp(out, 'scan-equiv')
    write_table(out, ['dtype', 'n', 'l', 'trials', 'max_deviation', 'tol', 'passed'],
                ((r.dtype, r.state_dim, r.length, r.trials, r.max_deviation, r.tol, r.passed) for r in reports))
    return 0 if all(r.passed for r in reports) else 1


def gradcheck(args, out) -> int:
    """Selective-scan backward vs central differences, plus a sign-flip negative control."""
    rng = np.random.default_rng(resolve_seed(args))
    rows = []
    target = None
    for trial in range(args.trials):
        target = SelectiveScanTarget.random(
            rng,
            channels=int(rng.integers(1, args.max_channels + 1)),
            state_dim=int(rng.integers(1, args.max_state + 1)),
            length=int(rng.integers(1, args.max_length + 1)),
        )
        report = grad_check(target, step=args.step, tol=args.tol)
        worst = '' if report.worst is None else f"{report.worst[0]}{list(report.worst[1])}"
        rows.append((trial, target.batch.channels, target.batch.state_dim, target.batch.length,
                     report.coordinates, report.max_rel_error, worst, report.passed))
    mutant = grad_check(corrupted_backward(target, 'A'), step=args.step, tol=args.tol)

    stamp(out, 'gradcheck')
    write_table(out, ['trial', 'd', 'n', 'l', 'coordinates', 'max_rel_error', 'worst', 'passed'], rows)
    passed = all(row[-1] for row in rows)
    write_pairs(out, [
        ('tol', args.tol),
        ('mutant_rel_error', mutant.max_rel_error),
        ('mutant_detected', not mutant.passed),
        ('passed', passed),
    ])
    if not passed or mutant.passed:
        return 1
    return 0


def register(subparsers, common) -> None:
    parser = subparsers.add_parser('selftest', parents=[common], help='run the built-in property suite')
    parser.add_argument('--quick', action='store_true', help='reduced trial counts, skip slow properties')
    parser.set_defaults(handler=selftest)

    parser = subparsers.add_parser('scan-equiv', parents=[common], help='recurrent vs convolutional scan')
    parser.add_argument('--n', type=positive_int, default=16, help='state dimension')
    parser.add_argument('--l', type=positive_int, default=64, help='sequence length')
    parser.add_argument('--trials', type=positive_int, default=200)
    parser.add_argument('--dtype', choices=('f32', 'f64', 'both'), default='both')
    parser.set_defaults(handler=scan_equiv)

    parser = subparsers.add_parser('gradcheck', parents=[common], help='finite-difference check of the scan backward')
    parser.add_argument('--trials', type=positive_int, default=20)
    parser.add_argument('--step', type=positive_float, default=Config.GRAD_STEP)
    parser.add_argument('--tol', type=positive_float, default=Config.GRAD_TOL)
    parser.add_argument('--max-channels', type=positive_int, default=2)
    parser.add_argument('--max-state', type=positive_int, default=4)
    parser.add_argument('--max-length', type=positive_int, default=8)
    parser.set_defaults(handler=gradcheck)
