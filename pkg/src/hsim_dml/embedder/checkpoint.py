"""Versioned binary checkpoints of ``MlpModel``.

Layout (little-endian): magic ``HSIM1``, ``u32`` layer count ``L``, ``L + 1``
``u32`` widths, then per layer the weight matrix ``(in, out)`` and the bias as
row-major ``f64``.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from ..errors import InconsistentDimensionsError, MalformedFileError, UnknownMagicError
from .model import MlpModel

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"HSIM1"
_HEADER = struct.Struct("<5sI")


def checkpoint_bytes(model: MlpModel) -> bytes:
    widths = model.widths
    parts = [_HEADER.pack(CHECKPOINT_MAGIC, len(model.layers)), struct.pack(f"<{len(widths)}I", *widths)]
    for w, b in model.layers:
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model: MlpModel, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(checkpoint_bytes(model))
    logger.info(f"wrote checkpoint {out} (widths {model.widths})")
    return out


def load_checkpoint(path: str | Path) -> MlpModel:
    """Rebuild the model stored at ``path``.

    Raises
    ------
    UnknownMagicError
        If the file is not an ``HSIM1`` checkpoint.
    MalformedFileError
        If the header is truncated.
    InconsistentDimensionsError
        If the payload size disagrees with the declared widths.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedFileError("checkpoint shorter than its header", offset=len(raw))
    magic, n_layers = _HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise UnknownMagicError(f"expected magic {CHECKPOINT_MAGIC!r}, found {magic!r}")
    widths_end = _HEADER.size + 4 * (n_layers + 1)
    if n_layers < 1 or len(raw) < widths_end:
        raise MalformedFileError(f"truncated width table for {n_layers} layers", offset=_HEADER.size)
    widths = struct.unpack_from(f"<{n_layers + 1}I", raw, _HEADER.size)
    expected = widths_end + 8 * sum(a * b + b for a, b in zip(widths[:-1], widths[1:], strict=True))
    if len(raw) != expected:
        raise InconsistentDimensionsError(f"widths {list(widths)} need {expected} bytes, file has {len(raw)}")

    offset = widths_end
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:], strict=True):
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset).astype(np.float64).reshape(fan_in, fan_out)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset).astype(np.float64)
        offset += 8 * fan_out
        layers.append((w, b))
    return MlpModel(layers)
