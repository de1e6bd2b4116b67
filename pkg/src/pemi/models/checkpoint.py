"""Named-array container shared by encoder and trainable-state checkpoints.

Layout (little-endian):
    magic (8 ASCII bytes) | version u32 | header length u32 | header JSON
    | array count u32 | per array: name length u32, name UTF-8, ndim u32,
      dims u32 x ndim, float32 payload
"""

import json
import struct
from pathlib import Path
from typing import Any, Mapping, Union

import numpy as np

from pemi.errors import CheckpointError

FORMAT_VERSION = 1
ENCODER_MAGIC = b"PEMI-ENC"
TRAINABLE_MAGIC = b"PEMI-TRN"

PathLike = Union[str, Path]


def write_container(
    path: PathLike,
    magic: bytes,
    header: Mapping[str, Any],
    arrays: Mapping[str, np.ndarray],
) -> None:
    """Write ``arrays`` (in iteration order) with a JSON ``header``."""
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    chunks = [magic, struct.pack("<II", FORMAT_VERSION, len(header_bytes)), header_bytes]
    chunks.append(struct.pack("<I", len(arrays)))
    for name, array in arrays.items():
        encoded = name.encode("utf-8")
        values = np.ascontiguousarray(array, dtype="<f4")
        chunks.append(struct.pack("<II", len(encoded), values.ndim))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(values.tobytes())
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e


class _Reader:
    def __init__(self, payload: bytes, path: PathLike) -> None:
        self._payload = payload
        self._offset = 0
        self._path = path

    def take(self, size: int) -> bytes:
        end = self._offset + size
        if end > len(self._payload):
            raise CheckpointError(f"checkpoint {self._path} is truncated")
        chunk = self._payload[self._offset : end]
        self._offset = end
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_container(path: PathLike, magic: bytes) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """
    Read a container written by write_container.

    Returns:
        (header, arrays) with arrays as float32 in file order

    Raises:
        CheckpointError: On unreadable file, wrong magic/version or truncation
    """
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    reader = _Reader(payload, path)
    found = reader.take(len(magic))
    if found != magic:
        raise CheckpointError(f"checkpoint {path} has magic {found!r}, expected {magic!r}")
    version, header_length = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint {path} has format version {version}, expected {FORMAT_VERSION}")
    try:
        header = json.loads(reader.take(header_length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"checkpoint {path} has a corrupt header: {e}") from e

    (count,) = reader.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_length, ndim = reader.unpack("<II")
        name = reader.take(name_length).decode("utf-8")
        shape = reader.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape)
        arrays[name] = values.astype(np.float32)
    return header, arrays


def expect_shape(name: str, array: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Check a loaded array's shape, naming it on mismatch."""
    if array.shape != tuple(shape):
        raise CheckpointError(f"array {name!r} has shape {array.shape}, expected {tuple(shape)}")
    return array
