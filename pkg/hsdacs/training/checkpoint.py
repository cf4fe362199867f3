"""Binary checkpoint format.

Little-endian layout:

    magic            8 bytes  b"HSDACS01"
    version          u32
    model config     u32 length + UTF-8 `key=value` lines
    parameters       u32 count, then per tensor:
                         u32 name length + UTF-8 name, u32 rank, rank x u32 dims, float32 values
    optimiser moments  same tensor encoding
    RNG state        4 x u64 (PCG64 state high, state low, increment high, increment low)
    step counter     u64
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np
from numpy.typing import NDArray
from pydantic import ValidationError

import hsdacs
from hsdacs.models.config import ModelConfig
from hsdacs.types import CheckpointError

MAGIC = b"HSDACS01"
FORMAT_VERSION = 1
_MASK64 = (1 << 64) - 1


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, NDArray[np.float64]]
    moments: dict[str, NDArray[np.float64]]
    rng_state: tuple[int, int, int, int]
    step: int
    version: int = FORMAT_VERSION


def snap_to_float32(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Round to the nearest float32 and widen back, i.e. exactly what a save/load round trip yields."""
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def pack_rng_state(rng: np.random.Generator) -> tuple[int, int, int, int]:
    state = rng.bit_generator.state
    if state["bit_generator"] != "PCG64":
        raise CheckpointError(f"unsupported bit generator {state['bit_generator']}")
    s, inc = state["state"]["state"], state["state"]["inc"]
    return (s >> 64) & _MASK64, s & _MASK64, (inc >> 64) & _MASK64, inc & _MASK64


def unpack_rng_state(words: tuple[int, int, int, int]) -> np.random.Generator:
    bit_generator = np.random.PCG64()
    bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": (words[0] << 64) | words[1], "inc": (words[2] << 64) | words[3]},
        "has_uint32": 0,
        "uinteger": 0,
    }
    return np.random.Generator(bit_generator)


################################################################################
# Encoding
################################################################################
def _write_str(f: BinaryIO, text: str) -> None:
    data = text.encode("utf-8")
    f.write(struct.pack("<I", len(data)))
    f.write(data)


def _write_tensors(f: BinaryIO, tensors: dict[str, NDArray[np.float64]]) -> None:
    f.write(struct.pack("<I", len(tensors)))
    for name, values in tensors.items():
        values = np.asarray(values)
        _write_str(f, name)
        f.write(struct.pack("<I", values.ndim))
        for dim in values.shape:
            f.write(struct.pack("<I", dim))
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def _read_exact(f: BinaryIO, size: int) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_u32(f: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(f, 4))[0]


def _read_str(f: BinaryIO) -> str:
    try:
        return _read_exact(f, _read_u32(f)).decode("utf-8")
    except UnicodeDecodeError as e:
        raise CheckpointError(f"invalid UTF-8 in checkpoint: {e}") from e


def _read_tensors(f: BinaryIO) -> dict[str, NDArray[np.float64]]:
    tensors: dict[str, NDArray[np.float64]] = {}
    for _ in range(_read_u32(f)):
        name = _read_str(f)
        shape = tuple(_read_u32(f) for _ in range(_read_u32(f)))
        count = int(np.prod(shape, dtype=np.int64))
        raw = _read_exact(f, 4 * count)
        tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
    return tensors


def _parse_config(text: str) -> ModelConfig:
    values: dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed config line in checkpoint: {line!r}")
        values[key.strip()] = value.strip()
    try:
        return ModelConfig(**values)
    except ValidationError as e:
        raise CheckpointError(f"checkpoint holds an invalid model config: {e}") from e


################################################################################
# Public API
################################################################################
def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_text = "".join(f"{key}={value}\n" for key, value in checkpoint.config.to_pairs())
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", checkpoint.version))
        _write_str(f, config_text)
        _write_tensors(f, checkpoint.params)
        _write_tensors(f, checkpoint.moments)
        f.write(struct.pack("<4Q", *checkpoint.rng_state))
        f.write(struct.pack("<Q", checkpoint.step))
    hsdacs.logger.info(f"Wrote checkpoint {path} at step {checkpoint.step}")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Read a checkpoint written by `save_checkpoint`.

    Raises:
        CheckpointError: On a bad magic, an unsupported version or a truncated file.
        OSError: If the file cannot be opened.
    """
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not an hsdacs checkpoint")
        version = _read_u32(f)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        config = _parse_config(_read_str(f))
        params = _read_tensors(f)
        moments = _read_tensors(f)
        rng_state = struct.unpack("<4Q", _read_exact(f, 32))
        (step,) = struct.unpack("<Q", _read_exact(f, 8))
    return Checkpoint(config, params, moments, tuple(rng_state), int(step), version)  # type: ignore[arg-type]
