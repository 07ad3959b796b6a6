"""Deterministic model generation and serialization.

Parameter stream.  Parameters are drawn from SplitMix64, a published 64-bit
mixing generator: draw i of seed s is mix64(s + (i+1) * 0x9E3779B97F4A7C15),
mapped to a double in [0, 1) via the top 53 bits, then to [-1, 1).  The
arithmetic is pure integer mixing plus IEEE-754 scaling, so a seed yields the
identical parameter bytes on every platform.  Draws are consumed in a fixed
order: the embedding table first, then per layer w_a, b_a, W_B, W_C, W_x,
W_out (normalization scales are initialized to one and consume no draws).
Every drawn tensor is scaled by 1/sqrt(fan_in) of the projection it feeds
(channel count d for input projections, head count H for the output one).

File format.  A model file is a single JSON header line (model spec, payload
byte count, sha256 checksum), a newline, then the raw parameter payload:
row-major float64, little-endian, in the draw order above including the
all-ones normalization scales.  Loading verifies structure first (length
mismatches are FormatError) and the checksum second (IntegrityError), and
reproduces the saved model bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .errors import FormatError, IntegrityError
from .stack import LAYER_FIELDS, LayerParams, ModelSpec, StackedModel

__all__ = [
    "generate_model",
    "model_payload",
    "expected_payload_bytes",
    "save_model",
    "load_model",
    "spec_to_config",
    "spec_from_config",
    "save_model_spec",
    "load_model_spec",
]

FORMAT_NAME = "ssdkit-model"
FORMAT_VERSION = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SPEC_FIELDS = ("seed", "L", "d", "H", "N", "vocab_size", "Q", "V", "dense_limit")


def _splitmix64(seed: int, start: int, count: int) -> np.ndarray:
    """Draws start .. start+count-1 of the SplitMix64 stream for ``seed``."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed) + idx * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _uniform_signed(seed: int, start: int, count: int) -> np.ndarray:
    u = (_splitmix64(seed, start, count) >> np.uint64(11)).astype(np.float64)
    return u * (2.0 / 9007199254740992.0) - 1.0  # [0, 2^53) -> [-1, 1)


def generate_model(spec: ModelSpec | None = None, **kwargs) -> StackedModel:
    """Build a model whose parameters are fully determined by spec.seed.

    Accepts either a ModelSpec or its keyword fields.  Calling twice with the
    same spec yields bit-identical parameters.
    """
    if spec is None:
        spec = ModelSpec(**kwargs)
    d, h, n = spec.d, spec.H, spec.N
    offset = 0

    def draw(shape, fan_in):
        nonlocal offset
        count = math.prod(shape)
        vals = _uniform_signed(spec.seed, offset, count) / math.sqrt(fan_in)
        offset += count
        return vals.reshape(shape)

    embedding = draw((spec.vocab_size, d), d)
    layers = []
    for _ in range(spec.L):
        layers.append(LayerParams(
            w_a=draw((h, d), d),
            b_a=draw((h,), d),
            W_B=draw((h, n, d), d),
            W_C=draw((h, n, d), d),
            W_x=draw((h, d), d),
            W_out=draw((h, d), h),
            gamma=np.ones(d, dtype=np.float64),
        ))
    return StackedModel(spec, embedding, layers)


def _iter_tensors(model: StackedModel):
    yield model.embedding
    for layer in model.layers:
        for name in LAYER_FIELDS:
            yield getattr(layer, name)


def model_payload(model: StackedModel) -> bytes:
    """Parameter payload: row-major float64, little-endian, fixed field order."""
    return b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in _iter_tensors(model))


def expected_payload_bytes(spec: ModelSpec) -> int:
    d, h, n = spec.d, spec.H, spec.N
    per_layer = h * d + h + 2 * h * n * d + h * d + h * d + d
    return 8 * (spec.vocab_size * d + spec.L * per_layer)


def _checksum(payload: bytes) -> str:
    return "sha256:" + hashlib.sha256(payload).hexdigest()


def spec_to_config(spec: ModelSpec) -> dict:
    return {name: getattr(spec, name) for name in _SPEC_FIELDS}


def spec_from_config(doc: dict) -> ModelSpec:
    if not isinstance(doc, dict):
        raise FormatError("model spec document must be a JSON object")
    extra = set(doc) - set(_SPEC_FIELDS)
    if extra:
        raise FormatError(f"unknown model spec fields: {sorted(extra)}")
    try:
        return ModelSpec(**{k: int(v) for k, v in doc.items()})
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid model spec document: {exc}") from exc


def save_model_spec(path, spec: ModelSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_config(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model_spec(path) -> ModelSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"model spec file is not valid JSON: {exc}") from exc
    return spec_from_config(doc)


def save_model(path, model: StackedModel) -> None:
    payload = model_payload(model)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "spec": spec_to_config(model.spec),
        "payload_bytes": len(payload),
        "checksum": _checksum(payload),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def load_model(path) -> StackedModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError("model file has no header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"model header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise FormatError("not a model file (missing format marker)")
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {header.get('version')}")
    spec = spec_from_config(header.get("spec"))

    payload = raw[newline + 1:]
    declared = header.get("payload_bytes")
    expected = expected_payload_bytes(spec)
    if len(payload) != declared or len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes; header declares {declared}, "
            f"spec requires {expected}")
    if _checksum(payload) != header.get("checksum"):
        raise IntegrityError("model payload checksum mismatch")

    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    d, h, n = spec.d, spec.H, spec.N
    shapes = {"w_a": (h, d), "b_a": (h,), "W_B": (h, n, d), "W_C": (h, n, d),
              "W_x": (h, d), "W_out": (h, d), "gamma": (d,)}
    pos = 0

    def take(shape):
        nonlocal pos
        count = math.prod(shape)
        out = flat[pos:pos + count].reshape(shape)
        pos += count
        return out

    embedding = take((spec.vocab_size, d))
    layers = []
    for _ in range(spec.L):
        layers.append(LayerParams(**{name: take(shapes[name]) for name in LAYER_FIELDS}))
    return StackedModel(spec, embedding, layers)
