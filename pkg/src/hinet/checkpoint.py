"""Single-file model checkpoints.

Layout (all integers little-endian):

    bytes 0..7    magic ``HINETv1\\n``
    bytes 8..11   uint32 length H of the JSON header
    bytes 12..    H bytes of UTF-8 JSON, then raw array data

The header names the model kind (``hinet`` or ``flatten``), the SHA-256
of the canonical hierarchy file, the dimensions, and an ordered list of
``[name, shape]`` array sections.  Array data follows as contiguous
little-endian float64 in header order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .baseline import FlatParams
from .hierarchy import HierarchySpec, build_masks, canonical_hash, enumerate_traces
from .network import ModelParams

__all__ = ["CheckpointError", "load_model", "save_model"]

MAGIC = b"HINETv1\n"


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


def _named_arrays(model) -> list[tuple[str, np.ndarray]]:
    if isinstance(model, ModelParams):
        arrays = [("trunk_w", model.trunk_w), ("trunk_b", model.trunk_b)]
        for l in range(1, model.height + 2):
            arrays.append((f"level{l}_w", model.level_w[l - 1]))
            arrays.append((f"level{l}_b", model.level_b[l - 1]))
        return arrays
    if isinstance(model, FlatParams):
        return [
            ("trunk_w", model.trunk_w),
            ("trunk_b", model.trunk_b),
            ("out_w", model.out_w),
            ("out_b", model.out_b),
        ]
    raise TypeError(f"unsupported model type {type(model).__name__}")


def save_model(path, spec: HierarchySpec, model) -> None:
    kind = "hinet" if isinstance(model, ModelParams) else "flatten"
    arrays = _named_arrays(model)
    header = {
        "kind": kind,
        "spec_sha256": canonical_hash(spec),
        "d_in": int(model.d_in),
        "k": int(model.k),
        "height": spec.height,
        "level_sizes": list(spec.level_sizes),
        "arrays": [[name, list(a.shape)] for name, a in arrays],
    }
    blob = json.dumps(header, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path, spec: HierarchySpec):
    """Load a checkpoint and rebuild the model against ``spec``.

    Raises CheckpointError when the file is malformed or was written for
    a different hierarchy.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic: not a model checkpoint")
    if len(raw) < len(MAGIC) + 4:
        raise CheckpointError("truncated checkpoint header")
    (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    if len(raw) < start + hlen:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(raw[start : start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from None

    if header.get("spec_sha256") != canonical_hash(spec):
        raise CheckpointError("checkpoint was written for a different hierarchy")
    if header.get("level_sizes") != list(spec.level_sizes):
        raise CheckpointError("checkpoint level sizes disagree with hierarchy")

    offset = start + hlen
    named: dict[str, np.ndarray] = {}
    for entry in header.get("arrays", []):
        name, shape = entry[0], tuple(int(s) for s in entry[1])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise CheckpointError(f"truncated array data for {name!r}")
        named[name] = np.frombuffer(
            raw, dtype="<f8", count=count, offset=offset
        ).astype(np.float64).reshape(shape)
        offset = end
    if offset != len(raw):
        raise CheckpointError("trailing bytes after array data")

    kind = header.get("kind")
    try:
        if kind == "hinet":
            h = spec.height
            model = ModelParams(
                trunk_w=named["trunk_w"],
                trunk_b=named["trunk_b"],
                level_w=[named[f"level{l}_w"] for l in range(1, h + 2)],
                level_b=[named[f"level{l}_b"] for l in range(1, h + 2)],
                masks=build_masks(spec),
            )
            model.validate()
            return model
        if kind == "flatten":
            model = FlatParams(
                trunk_w=named["trunk_w"],
                trunk_b=named["trunk_b"],
                out_w=named["out_w"],
                out_b=named["out_b"],
            )
            if model.n_classes != len(enumerate_traces(spec)):
                raise CheckpointError("flat output size disagrees with trace count")
            return model
    except KeyError as exc:
        raise CheckpointError(f"missing array section {exc}") from None
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
    raise CheckpointError(f"unknown model kind {kind!r}")
