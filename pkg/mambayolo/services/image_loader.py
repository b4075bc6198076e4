"""Binary PPM (P6) image input."""
import logging

import numpy as np
from PIL import Image

from mambayolo.config import Config
from mambayolo.exceptions import TensorFormatError
from mambayolo.models.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)


def load_ppm(path: str) -> Tensor:
    """Load an 8-bit binary PPM as a 3 x H x W tensor scaled to [0, 1]."""
    with open(path, 'rb') as fh:
        magic = fh.read(2)
    if magic != b'P6':
        raise TensorFormatError(f"{path}: expected a binary PPM (P6), found magic {magic!r}")
    try:
        with Image.open(path) as img:
            if img.mode != 'RGB':
                raise TensorFormatError(f"{path}: expected 8-bit RGB samples, got mode {img.mode}")
            pixels = np.asarray(img, dtype=np.uint8)
    except OSError as exc:
        # UnidentifiedImageError and truncated payloads both land here
        raise TensorFormatError(f"{path}: could not decode PPM ({exc})") from exc
    return as_tensor(pixels.transpose(2, 0, 1).astype(np.float32) / 255.0, name=path)


def save_ppm(path: str, image: Tensor) -> str:
    """Write a 3 x H x W tensor in [0, 1] as an 8-bit binary PPM."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise TensorFormatError(f"save_ppm: expected 3 x H x W, got {arr.shape}")
    pixels = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(pixels).save(path, format='PPM')
    return path


def pad_to_multiple(image: Tensor, multiple: int = Config.STRIDE_MULTIPLE) -> Tensor:
    """Zero-pad bottom and right edges so H and W are multiples of `multiple`."""
    _, height, width = image.shape
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if not pad_h and not pad_w:
        return image
    logger.warning("Padding %dx%d image to %dx%d (multiple of %d)",
                   height, width, height + pad_h, width + pad_w, multiple)
    padded = np.pad(np.asarray(image), ((0, 0), (0, pad_h), (0, pad_w)))
    return as_tensor(padded, name='padded image')
