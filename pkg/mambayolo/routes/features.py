"""Feature extraction command."""
import logging
import os

from mambayolo.exceptions import TensorFormatError, UsageError
from mambayolo.models.model_config import ModelConfig
from mambayolo.routes import resolve_seed
from mambayolo.services.backbone import model_forward
from mambayolo.services.image_loader import load_ppm, pad_to_multiple
from mambayolo.services.initializer import init_weights
from mambayolo.services.tensor_io import read_tensor, write_tensor
from mambayolo.utils.reporting import stamp, write_pairs, write_table
from mambayolo.utils.validators import dump_filename, require_file

logger = logging.getLogger(__name__)


def _load_input(args):
    """The image as a 3 x H x W tensor, from a PPM or an MYT1 dump."""
    if args.image:
        return args.image, load_ppm(require_file(args.image))
    image = read_tensor(require_file(args.tensor_in))
    if image.ndim != 3 or image.shape[0] != 3:
        raise TensorFormatError(f"{args.tensor_in}: expected a 3 x H x W tensor, got shape {image.shape}")
    return args.tensor_in, image


def _prepare_out_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"{path}: cannot create output directory ({exc.strerror})")


def extract(args, out) -> int:
    """Run the backbone and neck on an image and dump P3/P4/P5 as MYT1 files."""
    source, image = _load_input(args)
    config = ModelConfig.resolve(args.config)
    seed = resolve_seed(args, config.seed)
    _prepare_out_dir(args.out)
    padded = pad_to_multiple(image)
    weights = init_weights(config, seed)

    trace = {} if args.dump_intermediate else None
    pyramid = model_forward(padded, config, weights, trace=trace)

    written = []
    for name, fm in pyramid.items():
        path = os.path.join(args.out, f"{name}.myt")
        write_tensor(path, fm.tensor)
        written.append((name, fm.shape, path))
    if trace:
        dump_dir = os.path.join(args.out, 'intermediate')
        for key in sorted(trace):
            path = os.path.join(dump_dir, dump_filename(key))
            write_tensor(path, trace[key])
            written.append((key, trace[key].shape, path))

    stamp(out, 'extract')
    write_pairs(out, [
        ('image', source),
        ('input', image.shape),
        ('padded', padded.shape),
        ('variant', config.variant),
        ('seed', seed),
        ('weights_checksum', weights.checksum()),
    ])
    write_table(out, ['tensor', 'shape', 'path'], written)
    logger.info("Wrote %d tensors to %s", len(written), args.out)
    return 0


def register(subparsers, common) -> None:
    parser = subparsers.add_parser('extract', parents=[common], help='extract pyramid features from an image')
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--image', help='binary PPM (P6) image')
    source.add_argument('--in', dest='tensor_in', metavar='TENSOR', help='3 x H x W MYT1 tensor in [0, 1]')
    parser.add_argument('--config', required=True, help='shipped config name or config file path')
    parser.add_argument('--out', required=True, help='output directory')
    parser.add_argument('--dump-intermediate', action='store_true', help='also dump every post-SS2D tensor')
    parser.set_defaults(handler=extract)
