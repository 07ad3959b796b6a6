"""Text embedding on top of a stacked model.

A sequence is embedded by appending the reserved end-of-sequence token (the
highest vocabulary id) and reading the final layer's hidden state at that
terminal position, so the pooled vector has seen every input token under the
causal kernel.  Instruction-style queries are rendered through a fixed
template before tokenization; similarity is cosine; the contrastive loss is
the standard softmax-over-similarities form evaluated with a max-shifted
log-sum-exp so small temperatures cannot overflow.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .stack import StackedModel, horizontal_infer, vertical_infer

__all__ = [
    "QUERY_TEMPLATE",
    "LossConfig",
    "EmbeddingOutput",
    "format_query",
    "tokenize_words",
    "embed_sequence",
    "cosine_similarity",
    "info_nce_loss",
]

QUERY_TEMPLATE = "Instruction: {prompt}\nQuery: {query}"


def format_query(prompt: str, query: str) -> str:
    """Render the instruction template.

    One-shot substitution: braces inside prompt or query are left untouched,
    never re-expanded.
    """
    if not isinstance(prompt, str) or not isinstance(query, str):
        raise ValidationError("prompt and query must be strings")
    return f"Instruction: {prompt}\nQuery: {query}"


def tokenize_words(text: str, vocab_size: int) -> list[int]:
    """Whitespace-split hashing tokenizer.

    Each word maps to crc32(utf-8 bytes) mod (vocab_size - 1), so ids never
    collide with the reserved end-of-sequence id and any caller gets the same
    ids for the same text on any platform.
    """
    if vocab_size < 2:
        raise ValidationError("vocab_size must be >= 2 (one id is reserved)")
    return [zlib.crc32(w.encode("utf-8")) % (vocab_size - 1) for w in text.split()]


@dataclass
class EmbeddingOutput:
    vector: np.ndarray  # (d,)
    source_len: int     # tokens consumed, including the appended terminal id


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.02

    def __post_init__(self):
        if not (self.temperature > 0.0 and np.isfinite(self.temperature)):
            raise ValidationError(f"temperature must be positive, got {self.temperature}")


def embed_sequence(model: StackedModel, tokens, *, strategy: str = "horizontal",
                   chunk_size: int | None = None, block_len: int | None = None,
                   fault=None) -> EmbeddingOutput:
    """Embed one token sequence: append the terminal id, pool its hidden state.

    Args:
        tokens:   1-D sequence of ids below the reserved terminal id.
        strategy: "horizontal" or "vertical"; both yield the same vector up to
                  accumulated rounding (identical for sequences within one
                  vertical block).
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 1:
        raise DimensionError(f"embed_sequence takes a single 1-D sequence, got {tokens.shape}")
    if tokens.size == 0:
        raise ValidationError("cannot embed an empty token sequence")
    if not np.issubdtype(tokens.dtype, np.integer):
        raise ValidationError(f"token ids must be integers, got dtype {tokens.dtype}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= model.spec.eos_id):
        raise ValidationError(
            f"token ids must lie in [0, {model.spec.eos_id}); the terminal id is reserved")
    full = np.concatenate([tokens.astype(np.int64), [model.spec.eos_id]])

    if strategy == "horizontal":
        result = horizontal_infer(model, full, chunk_size, fault=fault)
    elif strategy == "vertical":
        result = vertical_infer(model, full, block_len, chunk_size, fault=fault)
    else:
        raise ValidationError(f"unknown strategy {strategy!r}")
    return EmbeddingOutput(result.hidden[0, -1].copy(), int(full.size))


def cosine_similarity(e1, e2) -> float:
    """Cosine of the angle between two embeddings, clipped to [-1, 1]."""
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    if e1.ndim != 1 or e2.ndim != 1 or e1.shape != e2.shape:
        raise DimensionError(f"embeddings must be matching 1-D vectors, got {e1.shape}, {e2.shape}")
    if not (np.all(np.isfinite(e1)) and np.all(np.isfinite(e2))):
        raise ValidationError("embeddings contain non-finite values")
    n1 = np.linalg.norm(e1)
    n2 = np.linalg.norm(e2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValidationError("cosine similarity is undefined for zero vectors")
    return float(np.clip(np.dot(e1, e2) / (n1 * n2), -1.0, 1.0))


def info_nce_loss(query, positive, negatives=(), *, temperature: float = 0.02) -> float:
    """Contrastive loss -log softmax(sim(q, p) / T) over positive + negatives.

    Evaluated as logsumexp(s / T) - s_p / T with the max subtracted first, so
    arbitrarily small temperatures stay finite.  With no negatives the loss is
    exactly zero.
    """
    config = LossConfig(temperature)  # validates the temperature
    sims = [cosine_similarity(query, positive)]
    sims.extend(cosine_similarity(query, neg) for neg in negatives)
    scaled = np.asarray(sims, dtype=np.float64) / config.temperature
    shift = np.max(scaled)
    return float(shift + np.log(np.sum(np.exp(scaled - shift))) - scaled[0])
