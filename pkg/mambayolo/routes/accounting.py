"""Accounting commands: shapes and count."""
import logging

from mambayolo.models.model_config import ModelConfig
from mambayolo.services.analysis import block_table, count_macs, reference_comparison
from mambayolo.utils.reporting import stamp, write_csv, write_pairs, write_table
from mambayolo.utils.validators import parse_size

logger = logging.getLogger(__name__)

COUNT_HEADER = ['path', 'kind', 'params', 'macs', 'aux_ops']


def shapes(args, out) -> int:
    """Per-block shapes and costs, derived in closed form."""
    config = ModelConfig.resolve(args.config)
    blocks = block_table(config, args.input)
    stamp(out, 'shapes')
    write_pairs(out, [('variant', config.variant), ('input', (3,) + tuple(args.input))])
    write_table(out, ['block', 'in_shape', 'out_shape', 'params', 'macs'],
                ((b.name, b.in_shape, b.out_shape, b.params, b.macs) for b in blocks))
    return 0


def count(args, out) -> int:
    """Per-layer params and MACs with backbone and neck subtotals."""
    config = ModelConfig.resolve(args.config)
    report = count_macs(config, args.input)
    rows = [(r.path, r.kind, r.params, r.macs, r.aux_ops) for r in report.rows]

    stamp(out, 'count')
    write_table(out, COUNT_HEADER, rows)
    backbone_params, backbone_macs = report.subtotal('backbone')
    neck_params, neck_macs = report.subtotal('neck')
    summary = [
        ('variant', config.variant),
        ('input', (3,) + tuple(args.input)),
        ('backbone_params', backbone_params),
        ('backbone_macs', backbone_macs),
        ('neck_params', neck_params),
        ('neck_macs', neck_macs),
        ('total_params', report.total_params),
        ('total_macs', report.total_macs),
        ('total_aux_ops', report.total_aux_ops),
        # one MAC = two FLOPs
        ('total_flops', report.flops),
    ]
    comparison = reference_comparison(report, config.variant)
    if comparison is not None:
        summary += list(comparison.items())
    write_pairs(out, summary)

    if args.csv:
        write_csv(args.csv, COUNT_HEADER, rows)
        logger.info("Wrote %d rows to %s", len(rows), args.csv)
    return 0


def register(subparsers, common) -> None:
    parser = subparsers.add_parser('shapes', parents=[common], help='per-block shape and cost table')
    parser.add_argument('--config', required=True, help='shipped config name or config file path')
    parser.add_argument('--input', type=parse_size, default=(640, 640), help='input size HxW (default 640x640)')
    parser.set_defaults(handler=shapes)

    parser = subparsers.add_parser('count', parents=[common], help='parameter and MAC counts')
    parser.add_argument('--config', required=True, help='shipped config name or config file path')
    parser.add_argument('--input', type=parse_size, default=(640, 640), help='input size HxW (default 640x640)')
    parser.add_argument('--csv', help='also write the per-layer rows as CSV')
    parser.set_defaults(handler=count)
