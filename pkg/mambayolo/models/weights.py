"""Named model parameters and buffers."""
from dataclasses import dataclass
import hashlib

import numpy as np

from mambayolo.exceptions import ShapeError


@dataclass(frozen=True)
class ParamSpec:
    """One tensor a layer declares: where it lives, its shape and how it starts."""

    path: str
    shape: tuple
    init: str = 'uniform'
    fan_in: int = 1
    buffer: bool = False

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


class Weights:
    """
    Read-only mapping of dotted layer paths to float32 arrays.

    Learnable parameters and buffers (batch-norm running statistics) are kept
    apart so parameter counts only see the former. `scope(prefix)` returns a
    view whose keys are relative to `prefix`.
    """

    def __init__(self, params: dict = None, buffers: dict = None, prefix: str = ''):
        self._params = params if params is not None else {}
        self._buffers = buffers if buffers is not None else {}
        self._prefix = prefix

    def _full(self, key: str) -> str:
        return f"{self._prefix}{key}"

    def __getitem__(self, key: str) -> np.ndarray:
        path = self._full(key)
        if path in self._params:
            return self._params[path]
        if path in self._buffers:
            return self._buffers[path]
        raise KeyError(f"no weight named {path!r}")

    def __contains__(self, key: str) -> bool:
        path = self._full(key)
        return path in self._params or path in self._buffers

    def get(self, key: str, default=None):
        try:
            return self[key]
        except KeyError:
            return default

    def scope(self, prefix: str) -> 'Weights':
        return Weights(self._params, self._buffers, prefix=f"{self._full(prefix)}.")

    def set(self, key: str, value, buffer: bool = None) -> None:
        """Replace or add a tensor (used by tests and ablation tooling)."""
        path = self._full(key)
        arr = np.ascontiguousarray(value, dtype=np.float32)
        existing = self._params.get(path, self._buffers.get(path))
        if existing is not None and existing.shape != arr.shape:
            raise ShapeError(f"{path}: replacement shape {arr.shape} != existing {existing.shape}")
        arr.flags.writeable = False
        if buffer is None:
            buffer = path in self._buffers
        (self._buffers if buffer else self._params)[path] = arr

    def copy(self) -> 'Weights':
        return Weights(dict(self._params), dict(self._buffers), prefix=self._prefix)

    def parameters(self) -> dict:
        return {k: v for k, v in self._params.items() if k.startswith(self._prefix)}

    def buffers(self) -> dict:
        return {k: v for k, v in self._buffers.items() if k.startswith(self._prefix)}

    def parameter_count(self) -> int:
        return sum(int(v.size) for v in self.parameters().values())

    def checksum(self, path: str = None) -> str:
        """blake2b digest of one tensor, or of every tensor in path order."""
        digest = hashlib.blake2b(digest_size=16)
        if path is not None:
            digest.update(np.ascontiguousarray(self[path]).tobytes())
            return digest.hexdigest()
        merged = {**self.parameters(), **self.buffers()}
        for key in sorted(merged):
            digest.update(key.encode())
            digest.update(np.ascontiguousarray(merged[key]).tobytes())
        return digest.hexdigest()

    def __len__(self) -> int:
        return len(self.parameters()) + len(self.buffers())
