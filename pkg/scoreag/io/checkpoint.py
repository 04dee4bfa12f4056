"""
Checkpoint files for the score model and the classifier.

Layout (little-endian):

    b"SAGC" | u32 version | u64 header length | header JSON (sorted keys)
    | live parameters as f64 in header order | EMA parameters in the same order

The header records model kind, input shape, class count, parameter names and
shapes and the model configuration. Loading rebuilds the model from the
header alone, so save(load(file)) reproduces the file byte for byte.
"""

import json
import logging
import os
import struct
from typing import Union

import numpy as np

from scoreag.core.exception_handlers import CheckpointError
from scoreag.diffusion.vpsde import NoiseSchedule
from scoreag.models.base import Module
from scoreag.models.classifier import Classifier
from scoreag.models.score_model import ScoreModel
from scoreag.schemas.config import ClassifierConfig, ScoreModelConfig

# Set up logger
logger = logging.getLogger(__name__)

MAGIC = b"SAGC"
VERSION = 1
_PREAMBLE = struct.Struct("<4sIQ")


def encode(model: Module) -> bytes:
    header = json.dumps(model.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_PREAMBLE.pack(MAGIC, VERSION, len(header)), header]
    for which in ("live", "ema"):
        parts.extend(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in model.param_list(which))
    return b"".join(parts)


def save(model: Module, path: str) -> None:
    """
    Write a model and its EMA shadow to ``path``.

    Raises:
        CheckpointError: If the file cannot be written
    """
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(encode(model))
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint: {str(e)}", path)
    logger.info(f"Saved {model.model_kind} checkpoint to {path}")


def _build(header: dict, path: str) -> Module:
    kind = header.get("model_kind")
    config = header.get("config", {})
    try:
        if kind == ScoreModel.model_kind:
            return ScoreModel(
                header["input_shape"],
                header["num_classes"],
                NoiseSchedule(**config["schedule"]),
                ScoreModelConfig(**config["score_model"]),
            )
        if kind == Classifier.model_kind:
            return Classifier(header["input_shape"], header["num_classes"], ClassifierConfig(**config["classifier"]))
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Invalid checkpoint header: {str(e)}", path)
    raise CheckpointError(f"Unknown model kind {kind!r}", path)


def decode(raw: bytes, path: str = "<bytes>") -> Module:
    if len(raw) < _PREAMBLE.size:
        raise CheckpointError("File too short for a checkpoint preamble", path)
    magic, version, header_len = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"Bad checkpoint magic {magic!r}", path)
    if version != VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}", path)
    start = _PREAMBLE.size
    try:
        header = json.loads(raw[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt checkpoint header: {str(e)}", path)

    model = _build(header, path)
    if model.names != header.get("names") or [list(s) for s in model.shapes] != header.get("shapes"):
        raise CheckpointError("Checkpoint parameters do not match the model architecture", path)

    offset = start + header_len
    sizes = [int(np.prod(s)) for s in model.shapes]
    expected = offset + 2 * 8 * sum(sizes)
    if len(raw) != expected:
        raise CheckpointError(f"Checkpoint payload is {len(raw)} bytes, expected {expected}", path)
    for which in ("live", "ema"):
        values = []
        for shape, size in zip(model.shapes, sizes):
            values.append(np.frombuffer(raw, dtype="<f8", count=size, offset=offset).astype(np.float64).reshape(shape))
            offset += 8 * size
        model.set_params(values, which)
    return model


def load(path: str) -> Union[ScoreModel, Classifier]:
    """
    Read a checkpoint written by ``save``.

    Raises:
        CheckpointError: If the file is missing, truncated or inconsistent
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint: {str(e)}", path)
    model = decode(raw, path)
    logger.info(f"Loaded {model.model_kind} checkpoint from {path}")
    return model
