from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .tensor import DTYPE, Tensor

CHECKPOINT_MAGIC = b"FSICSF01"


class CheckpointError(ValueError):
    pass


class ParameterSet(dict):
    """Ordered ``name -> Tensor`` mapping of trainable arrays."""

    def __init__(self, items: Mapping[str, Tensor] | Iterable[tuple[str, Tensor]] = ()):
        super().__init__(items)

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], requires_grad: bool = True) -> ParameterSet:
        return cls((name, Tensor(value, requires_grad=requires_grad)) for name, value in arrays.items())

    def arrays(self) -> dict[str, np.ndarray]:
        """Copies of the current values."""
        return {name: t.data.copy() for name, t in self.items()}

    def clone(self, requires_grad: bool = True) -> ParameterSet:
        """Detached deep copy; gradients are not carried over."""
        return ParameterSet.from_arrays(self.arrays(), requires_grad=requires_grad)

    def subset(self, prefix: str) -> ParameterSet:
        return ParameterSet((n, t) for n, t in self.items() if n.startswith(prefix))

    def zero_grad(self) -> None:
        for t in self.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.size for t in self.values())


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...] | None = None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def save_checkpoint(path: str | Path, params: Mapping[str, Tensor | np.ndarray]) -> None:
    """Write ``params`` in the ``FSICSF01`` binary layout.

    Per parameter: uint32 name length, UTF-8 name, uint32 rank, uint64 dims,
    then the little-endian float64 payload in C order. All integers are
    little-endian.
    """
    chunks = [CHECKPOINT_MAGIC]
    for name, value in params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=DTYPE)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    pos = len(CHECKPOINT_MAGIC)
    out: dict[str, np.ndarray] = {}
    try:
        while pos < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(dims)) if rank else 1
            nbytes = 8 * count
            if pos + nbytes > len(blob):
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(DTYPE).reshape(dims)
            pos += nbytes
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return out
