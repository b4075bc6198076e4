"""Command-line input validation."""
import argparse
import os
import re


def parse_size(value: str) -> tuple:
    """Parse an 'HxW' size string such as '640x640'."""
    if not value:
        raise argparse.ArgumentTypeError("size must look like 640x640")

    match = re.match(r'^\s*(\d+)\s*[xX]\s*(\d+)\s*$', str(value))
    if not match:
        raise argparse.ArgumentTypeError(f"invalid size {value!r}, expected HxW such as 640x640")

    height, width = int(match.group(1)), int(match.group(2))
    if height < 1 or width < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {value!r}")
    return height, width


def positive_int(value) -> int:
    """argparse type for integers >= 1."""
    try:
        number = int(value)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"expected an integer, got {value!r}")
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {number}")
    return number


def positive_float(value) -> float:
    try:
        number = float(value)
    except (ValueError, TypeError):
        raise argparse.ArgumentTypeError(f"expected a number, got {value!r}")
    if not number > 0:
        raise argparse.ArgumentTypeError(f"expected a number > 0, got {number}")
    return number


def int_list(value: str) -> tuple:
    """Parse a comma-separated list of positive integers."""
    parts = [p.strip() for p in str(value).split(',') if p.strip()]
    if not parts:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")
    return tuple(positive_int(p) for p in parts)


def require_file(path: str) -> str:
    """Return path if it names an existing file, else raise FileNotFoundError naming it."""
    if not path or not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    return path


def dump_filename(key: str, suffix: str = '.myt') -> str:
    """File name for a trace key; unsafe runs become '_' and dot runs collapse."""
    name = re.sub(r'[^A-Za-z0-9._-]+', '_', key)
    name = re.sub(r'\.{2,}', '.', name).strip('._')
    return f"{name}{suffix}" if name else ''
