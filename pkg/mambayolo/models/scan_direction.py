"""Directional flattenings of a 2-D grid for cross-scanning."""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from mambayolo.exceptions import ShapeError


class ScanDirection(str, Enum):
    ROW_MAJOR = 'row_major'
    ROW_MAJOR_REVERSED = 'row_major_reversed'
    COL_MAJOR = 'col_major'
    COL_MAJOR_REVERSED = 'col_major_reversed'

    def order(self, height: int, width: int) -> np.ndarray:
        """Flat (h * width + w) index visited at each sequence position t."""
        if height < 1 or width < 1:
            raise ShapeError(f"scan grid must be at least 1x1, got {height}x{width}")
        flat = np.arange(height * width).reshape(height, width)
        if self in (ScanDirection.COL_MAJOR, ScanDirection.COL_MAJOR_REVERSED):
            flat = flat.T
        order = flat.ravel()
        if self.reversed:
            order = order[::-1]
        return np.ascontiguousarray(order)

    @property
    def reversed(self) -> bool:
        return self in (ScanDirection.ROW_MAJOR_REVERSED, ScanDirection.COL_MAJOR_REVERSED)

    @property
    def transposed(self) -> 'ScanDirection':
        """Direction that visits the transposed grid in the same order."""
        return _TRANSPOSED[self]

    def position(self, t: int, height: int, width: int) -> tuple:
        """Grid coordinate (h, w) visited at step t."""
        length = height * width
        if not 0 <= t < length:
            raise ShapeError(f"step {t} outside [0, {length})")
        if self.reversed:
            t = length - 1 - t
        if self in (ScanDirection.COL_MAJOR, ScanDirection.COL_MAJOR_REVERSED):
            return t % height, t // height
        return t // width, t % width

    def index(self, h: int, w: int, height: int, width: int) -> int:
        """Step t at which grid coordinate (h, w) is visited."""
        if not (0 <= h < height and 0 <= w < width):
            raise ShapeError(f"({h}, {w}) outside the {height}x{width} grid")
        if self in (ScanDirection.COL_MAJOR, ScanDirection.COL_MAJOR_REVERSED):
            t = w * height + h
        else:
            t = h * width + w
        if self.reversed:
            t = height * width - 1 - t
        return t


_TRANSPOSED = {
    ScanDirection.ROW_MAJOR: ScanDirection.COL_MAJOR,
    ScanDirection.COL_MAJOR: ScanDirection.ROW_MAJOR,
    ScanDirection.ROW_MAJOR_REVERSED: ScanDirection.COL_MAJOR_REVERSED,
    ScanDirection.COL_MAJOR_REVERSED: ScanDirection.ROW_MAJOR_REVERSED,
}

# Fixed merge summation order, also the order of stacked per-direction weights.
MERGE_ORDER = (
    ScanDirection.ROW_MAJOR,
    ScanDirection.ROW_MAJOR_REVERSED,
    ScanDirection.COL_MAJOR,
    ScanDirection.COL_MAJOR_REVERSED,
)


@dataclass(frozen=True)
class DirectionalSequences:
    """Four C x (H*W) sequences, one per scan direction, of an H x W map."""

    sequences: dict = field(repr=False)
    height: int
    width: int

    def __post_init__(self):
        missing = [d.value for d in MERGE_ORDER if d not in self.sequences]
        if missing:
            raise ShapeError(f"directional sequences missing: {', '.join(missing)}")
        length = self.height * self.width
        channels = None
        for direction in MERGE_ORDER:
            seq = self.sequences[direction]
            if seq.ndim != 2 or seq.shape[1] != length:
                raise ShapeError(
                    f"{direction.value} sequence must be C x {length} for a {self.height}x{self.width} map, "
                    f"got {seq.shape}"
                )
            if channels is None:
                channels = seq.shape[0]
            elif seq.shape[0] != channels:
                raise ShapeError(f"{direction.value} sequence has {seq.shape[0]} channels, expected {channels}")

    def __getitem__(self, direction: ScanDirection) -> np.ndarray:
        return self.sequences[ScanDirection(direction)]

    @property
    def channels(self) -> int:
        return self.sequences[ScanDirection.ROW_MAJOR].shape[0]

    @property
    def length(self) -> int:
        return self.height * self.width

    def replace(self, sequences: dict) -> 'DirectionalSequences':
        return DirectionalSequences(sequences=sequences, height=self.height, width=self.width)
