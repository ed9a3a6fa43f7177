"""Binary checkpoints for residual MLPs and nodal PDE models.

Layout (little-endian)::

    b"FSFM1"                  magic, includes the format version
    uint8    kind             0 = residual MLP, 1 = nodal PDE model
    uint8    activation id    see ``net.ACTIVATIONS``
    uint32   n_layers
    uint64   layer_sizes[n_layers]
    -- kind 1 only --
    uint64   n_channels, n_nodes, n_components
    uint32   n_channel_hidden;  uint64 channel_hidden[...]
    uint32   n_assembly_hidden; uint64 assembly_hidden[...]
    uint32   grid_len;          bytes grid (UTF-8 JSON)
    -- all kinds --
    uint32   meta_len;          bytes meta (UTF-8 JSON, free-form)
    uint64   n_params
    float64  params[n_params]

For the MLP the parameters are, per layer, ``W`` row-major ``(out, in)``
followed by ``b``. The PDE model stores its channels in order and then the
assembly net, each in the MLP layout; ``layer_sizes`` holds the channel
layout ``(N, *channel_hidden, N)``.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .net import ACTIVATIONS, MlpParams, n_params
from .pde_net import PdeFlowMapModel

__all__ = ["CheckpointFormatError", "load_checkpoint", "save_checkpoint"]

MAGIC = b"FSFM1"
KIND_MLP, KIND_PDE = 0, 1
_ACTIVATION_NAMES = {v: k for k, v in ACTIVATIONS.items()}


class CheckpointFormatError(ValueError):
    """File is not a checkpoint, has the wrong version, or is truncated."""


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _sizes(values) -> bytes:
    values = [int(v) for v in values]
    return struct.pack(f"<I{len(values)}Q", len(values), *values)


def _blob(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def save_checkpoint(model, path, metadata: dict | None = None) -> None:
    """Write ``model`` and a JSON-serializable ``metadata`` dict to ``path``."""
    parts = [MAGIC]
    if isinstance(model, PdeFlowMapModel):
        n = model.size
        parts.append(struct.pack("<BB", KIND_PDE, ACTIVATIONS[model.activation]))
        parts.append(_sizes((n, *model.channel_hidden, n)))
        parts.append(struct.pack("<QQQ", model.n_channels, model.n_nodes, model.n_components))
        parts.append(_sizes(model.channel_hidden))
        parts.append(_sizes(model.assembly_hidden))
        parts.append(_blob(_json_bytes(model.grid)))
    elif isinstance(model, MlpParams):
        parts.append(struct.pack("<BB", KIND_MLP, ACTIVATIONS[model.activation]))
        parts.append(_sizes(model.layer_sizes))
    else:
        raise TypeError(f"cannot checkpoint a {type(model).__name__}")
    parts.append(_blob(_json_bytes(metadata or {})))
    flat = np.ascontiguousarray(model.flat, dtype="<f8")
    parts.append(struct.pack("<Q", flat.size))
    parts.append(flat.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def unpack(self, fmt: str):
        values = struct.unpack_from("<" + fmt, self.raw, self.pos)
        self.pos += struct.calcsize("<" + fmt)
        return values

    def sizes(self) -> tuple:
        (count,) = self.unpack("I")
        return tuple(int(v) for v in self.unpack(f"{count}Q"))

    def json(self):
        (length,) = self.unpack("I")
        data = self.raw[self.pos : self.pos + length]
        if len(data) != length:
            raise struct.error("string field truncated")
        self.pos += length
        return json.loads(data)


def load_checkpoint(path):
    """Return ``(model, metadata)`` from a file written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointFormatError(f"{path}: not an FSFM1 checkpoint")
    reader = _Reader(raw)
    reader.pos = len(MAGIC)
    try:
        kind, act_id = reader.unpack("BB")
        layer_sizes = reader.sizes()
        if kind == KIND_PDE:
            n_channels, n_nodes, n_components = reader.unpack("QQQ")
            channel_hidden = reader.sizes()
            assembly_hidden = reader.sizes()
            grid = reader.json()
        elif kind != KIND_MLP:
            raise CheckpointFormatError(f"{path}: unknown model kind {kind}")
        metadata = reader.json()
        (count,) = reader.unpack("Q")
    except (struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: truncated or corrupt header ({exc})") from None
    if act_id not in _ACTIVATION_NAMES:
        raise CheckpointFormatError(f"{path}: unknown activation id {act_id}")
    if len(raw) - reader.pos != 8 * count:
        raise CheckpointFormatError(
            f"{path}: payload has {len(raw) - reader.pos} bytes, header promises {8 * count}"
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=reader.pos).astype(np.float64)
    activation = _ACTIVATION_NAMES[act_id]
    try:
        if kind == KIND_MLP:
            if count != n_params(layer_sizes):
                raise ValueError("parameter count does not match layer sizes")
            model = MlpParams(layer_sizes, flat, activation)
        else:
            model = PdeFlowMapModel(n_nodes, n_components, n_channels, channel_hidden,
                                    assembly_hidden, flat, activation, grid)
    except ValueError as exc:
        raise CheckpointFormatError(f"{path}: inconsistent header ({exc})") from None
    return model, metadata
