"""Block-decomposed evaluation of the state-space kernel.

The sequence is partitioned into chunks of at most ``chunk_size`` positions.
Evaluation runs in three stages:

  1. intra   - each chunk's diagonal kernel block is applied to its own
               inputs, producing the chunk-local output and the state
               contribution of the chunk's inputs at its right boundary;
  2. propagate - boundary states are carried across chunks by one
               multiply-add per chunk (the only sequential stage);
  3. correct - each chunk's output is completed by reading out the state
               carried in from everything before it, weighted by the decay
               from the previous boundary to each position.

Cost is O(num_chunks * chunk_size^2) scalar work per batch/head slice and the
only materialized blocks are chunk-local, never a full off-diagonal block.
``dense_dual`` is the single-block special case (chunk_size = sequence
length): the same code path, so the two agree bitwise, with a capacity guard
because it materializes a (length, length) kernel per slice.

Fault injection: the four ``FAULT_MODES`` each disable one algebraic
ingredient (intra-block decay mask, boundary-row weights, carry transition
factor, cross-chunk correction).  They exist so equivalence harnesses can
prove each ingredient is load-bearing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import SsmCoefficients, _check_inputs, _check_state, _kernel_blocks
from .errors import CapacityError, DimensionError, ValidationError
from .instrumentation import ActivationArena, FlopCounter, UNTRACKED

__all__ = [
    "DEFAULT_DENSE_LIMIT",
    "FAULT_MODES",
    "ChunkPlan",
    "ChunkView",
    "ChunkedCoefficients",
    "ChunkStageOutputs",
    "partition",
    "intra_chunk",
    "propagate_states",
    "inter_chunk_correction",
    "chunked_forward",
    "dense_dual",
    "collect_stage_outputs",
]

DEFAULT_DENSE_LIMIT = 4096

# Each mode omits one ingredient of the decomposition.
FAULT_INTRA_MASK = "intra-output-mask"
FAULT_INTRA_WEIGHTS = "intra-state-weights"
FAULT_TRANSITION = "state-transition"
FAULT_CORRECTION = "output-correction"
FAULT_MODES = (FAULT_INTRA_MASK, FAULT_INTRA_WEIGHTS, FAULT_TRANSITION, FAULT_CORRECTION)


def _check_fault(fault):
    if fault is not None and fault not in FAULT_MODES:
        raise ValidationError(f"unknown fault mode {fault!r}; expected one of {FAULT_MODES}")
    return fault


@dataclass(frozen=True)
class ChunkPlan:
    """Partition of a sequence into fixed-size chunks with a ragged tail."""

    seq_len: int
    chunk_size: int
    num_chunks: int
    last_chunk_len: int

    @classmethod
    def for_sequence(cls, seq_len: int, chunk_size: int) -> "ChunkPlan":
        if seq_len < 1:
            raise ValidationError(f"sequence length must be >= 1, got {seq_len}")
        if chunk_size < 1:
            raise ValidationError(f"chunk size must be >= 1, got {chunk_size}")
        num = -(-seq_len // chunk_size)
        last = seq_len - (num - 1) * chunk_size
        return cls(seq_len, chunk_size, num, last)

    def chunk_len(self, c: int) -> int:
        return self.last_chunk_len if c == self.num_chunks - 1 else self.chunk_size

    def bounds(self, c: int) -> tuple[int, int]:
        if not (0 <= c < self.num_chunks):
            raise IndexError(f"chunk index {c} out of range for {self.num_chunks} chunks")
        start = c * self.chunk_size
        return start, start + self.chunk_len(c)


class ChunkView(NamedTuple):
    """Zero-copy slice of the inputs covering one chunk."""

    index: int
    start: int
    length: int
    coeffs: SsmCoefficients
    x: np.ndarray


class ChunkedCoefficients:
    """Chunk-partitioned view of one layer's coefficients and inputs.

    Holds slices only; reassembling the views reproduces the flat arrays
    exactly.  Boundary transitions (the decay product across each chunk's full
    span) are computed on demand.
    """

    def __init__(self, coeffs: SsmCoefficients, x: np.ndarray, plan: ChunkPlan):
        self.coeffs = coeffs
        self.x = x
        self.plan = plan
        self._transitions = None

    def chunk(self, c: int) -> ChunkView:
        start, stop = self.plan.bounds(c)
        return ChunkView(c, start, stop - start,
                         self.coeffs.slice_time(start, stop), self.x[:, start:stop])

    def kernel_block(self, c: int) -> np.ndarray:
        """Diagonal kernel block for chunk c: (batch, heads, len, len)."""
        start, stop = self.plan.bounds(c)
        return _kernel_blocks(self.coeffs.a[:, start:stop])

    @property
    def boundary_transitions(self) -> np.ndarray:
        """(batch, num_chunks, heads) decay products across each chunk."""
        if self._transitions is None:
            b, _, h = self.coeffs.a.shape
            out = np.empty((b, self.plan.num_chunks, h), dtype=np.float64)
            for c in range(self.plan.num_chunks):
                start, stop = self.plan.bounds(c)
                out[:, c] = np.cumprod(self.coeffs.a[:, start:stop], axis=1)[:, -1]
            self._transitions = out
        return self._transitions


def partition(coeffs: SsmCoefficients, x, chunk_size: int) -> ChunkedCoefficients:
    """Split coefficients and inputs into chunk views of at most chunk_size."""
    x = _check_inputs(coeffs, x)
    plan = ChunkPlan.for_sequence(coeffs.length, chunk_size)
    return ChunkedCoefficients(coeffs, x, plan)


def intra_chunk(view: ChunkView, *, fault=None, counter: FlopCounter | None = None,
                arena: ActivationArena | None = None):
    """Stage 1 for one chunk: chunk-local output and boundary-state input.

    Returns:
        y_intra: (batch, len, heads) output from the chunk's own inputs with
                 zero incoming state.
        b_intra: (batch, heads, state) contribution of the chunk's inputs to
                 the state at the chunk's right boundary; each input is
                 weighted by the decay from its position to that boundary.
    """
    _check_fault(fault)
    counter = counter if counter is not None else FlopCounter()
    arena = arena if arena is not None else UNTRACKED
    a, Bm, Cm, x = view.coeffs.a, view.coeffs.Bmat, view.coeffs.Cmat, view.x
    b, q, h = x.shape
    n = Bm.shape[3]

    L = _kernel_blocks(a)
    arena.track(L)
    G = np.einsum("bihn,bjhn->bhij", Cm, Bm)
    arena.track(G)
    if fault == FAULT_INTRA_MASK:
        G *= np.tril(np.ones((q, q)))  # causal only: decay weights dropped
    else:
        G *= L
    y_intra = np.einsum("bhij,bjh->bih", G, x)

    row = L[..., q - 1, :]  # decay from each position to the right boundary
    if fault == FAULT_INTRA_WEIGHTS:
        w = np.ascontiguousarray(x.transpose(0, 2, 1))
    else:
        w = row * x.transpose(0, 2, 1)
    b_intra = np.einsum("bjhn,bhj->bhn", Bm, w)

    arena.release(G)
    arena.release(L)
    counter.intra += b * h * (q * (q - 1) // 2 + q * q * n + 2 * q * q + q + q * n)
    return y_intra, b_intra


def propagate_states(b_intra: np.ndarray, transitions: np.ndarray, b0: np.ndarray,
                     *, fault=None, counter: FlopCounter | None = None,
                     arena: ActivationArena | None = None) -> np.ndarray:
    """Stage 2: carry boundary states across chunks, one multiply-add each.

    Args:
        b_intra:     (batch, num_chunks, heads, state) per-chunk inputs' state.
        transitions: (batch, num_chunks, heads) decay across each chunk's span.
        b0:          (batch, heads, state) state entering the first chunk.

    Returns:
        (batch, num_chunks + 1, heads, state); index 0 is b0, index c is the
        state at chunk c's left boundary for c >= 1.
    """
    _check_fault(fault)
    counter = counter if counter is not None else FlopCounter()
    arena = arena if arena is not None else UNTRACKED
    b_intra = np.asarray(b_intra, dtype=np.float64)
    transitions = np.asarray(transitions, dtype=np.float64)
    b0 = np.asarray(b0, dtype=np.float64)
    if b_intra.ndim != 4:
        raise DimensionError(f"b_intra must be (b,k,h,n), got {b_intra.shape}")
    b, k, h, n = b_intra.shape
    if transitions.shape != (b, k, h):
        raise DimensionError(
            f"transitions shape {transitions.shape} does not match chunks {(b, k, h)}")
    if b0.shape != (b, h, n):
        raise DimensionError(f"b0 shape {b0.shape} does not match {(b, h, n)}")

    states = arena.allocate((b, k + 1, h, n))
    states[:, 0] = b0
    for c in range(k):
        if fault == FAULT_TRANSITION:
            states[:, c + 1] = states[:, c] + b_intra[:, c]
        else:
            states[:, c + 1] = transitions[:, c, :, None] * states[:, c] + b_intra[:, c]
        counter.propagate += b * h * n
    return states


def inter_chunk_correction(view: ChunkView, b_prev: np.ndarray, *, entry_products=None,
                           fault=None, counter: FlopCounter | None = None) -> np.ndarray:
    """Stage 3 for one chunk: read out the state carried in from earlier chunks.

    The weight applied at local position i is the decay product from the
    previous chunk's last position through position i, i.e. the running prefix
    product of this chunk's transition scalars including its entry step.
    """
    _check_fault(fault)
    counter = counter if counter is not None else FlopCounter()
    a, Cm = view.coeffs.a, view.coeffs.Cmat
    b, q, h = a.shape
    n = Cm.shape[3]
    b_prev = np.asarray(b_prev, dtype=np.float64)
    if b_prev.shape != (b, h, n):
        raise DimensionError(f"b_prev shape {b_prev.shape} does not match {(b, h, n)}")
    if fault == FAULT_CORRECTION:
        return np.zeros((b, q, h), dtype=np.float64)
    if entry_products is None:
        entry_products = np.cumprod(a, axis=1)
        counter.intra += b * h * q
    y_inter = entry_products * np.einsum("bihn,bhn->bih", Cm, b_prev)
    counter.inter += b * h * (q * n + q)
    return y_inter


def chunked_forward(coeffs: SsmCoefficients, x, chunk_size: int, h0=None, *,
                    fault=None, counter: FlopCounter | None = None,
                    arena: ActivationArena | None = None):
    """Full block-decomposed forward pass.

    Args:
        coeffs:     per-position coefficients.
        x:          (batch, length, heads) input channels.
        chunk_size: maximum chunk length; the final chunk may be shorter.
        h0:         optional (batch, heads, state) initial state.

    Returns:
        (y, hT) matching recurrent_scan.  When an arena is supplied, all
        intermediate buffers are charged and released here; the returned y
        stays charged and must be released by the caller.
    """
    _check_fault(fault)
    x = _check_inputs(coeffs, x)
    counter = counter if counter is not None else FlopCounter()
    arena = arena if arena is not None else UNTRACKED
    parts = partition(coeffs, x, chunk_size)
    plan = parts.plan
    b, t, h = x.shape
    n = coeffs.state_dim
    k = plan.num_chunks

    if h0 is None:
        b0 = np.zeros((b, h, n), dtype=np.float64)
        carry_in = False
    else:
        b0 = _check_state(h0, b, h, n)
        carry_in = bool(np.any(b0 != 0.0))

    y = arena.allocate((b, t, h))
    entry = arena.allocate((b, t, h))
    b_intra = arena.allocate((b, k, h, n))
    transitions = np.empty((b, k, h), dtype=np.float64)

    for c in range(k):
        view = parts.chunk(c)
        start, stop = plan.bounds(c)
        y_c, b_c = intra_chunk(view, fault=fault, counter=counter, arena=arena)
        y[:, start:stop] = y_c
        b_intra[:, c] = b_c
        entry[:, start:stop] = np.cumprod(view.coeffs.a, axis=1)
        transitions[:, c] = entry[:, stop - 1]
        counter.intra += b * h * (stop - start)

    states = propagate_states(b_intra, transitions, b0, fault=fault,
                              counter=counter, arena=arena)

    for c in range(k):
        if c == 0 and not carry_in:
            continue  # state entering the first chunk is zero: correction is zero
        view = parts.chunk(c)
        start, stop = plan.bounds(c)
        y[:, start:stop] += inter_chunk_correction(
            view, states[:, c], entry_products=entry[:, start:stop],
            fault=fault, counter=counter)

    hT = states[:, k].copy()
    arena.release(states)
    arena.release(b_intra)
    arena.release(entry)
    return y, hT


def dense_dual(coeffs: SsmCoefficients, x, h0=None, *,
               dense_limit: int = DEFAULT_DENSE_LIMIT,
               counter: FlopCounter | None = None,
               arena: ActivationArena | None = None):
    """Single-operator evaluation: one kernel block spanning the sequence.

    Materializes a (length, length) block per batch/head slice, so it is
    guarded by ``dense_limit``.  This is literally chunked_forward with one
    chunk, which is what makes the two agree bitwise at chunk_size = length.
    """
    if coeffs.length > dense_limit:
        raise CapacityError(
            f"sequence length {coeffs.length} exceeds dense limit {dense_limit}")
    return chunked_forward(coeffs, x, coeffs.length, h0,
                           counter=counter, arena=arena)


@dataclass
class ChunkStageOutputs:
    """All intermediate stage products, assembled for inspection."""

    plan: ChunkPlan
    y_intra: np.ndarray          # (b, t, h)
    b_intra: np.ndarray          # (b, k, h, n)
    boundary_states: np.ndarray  # (b, k + 1, h, n); index 0 is b0
    y_inter: np.ndarray          # (b, t, h)
    y: np.ndarray                # (b, t, h)
    hT: np.ndarray               # (b, h, n)


def collect_stage_outputs(coeffs: SsmCoefficients, x, chunk_size: int,
                          h0=None, *, fault=None) -> ChunkStageOutputs:
    """Run the three stages and keep every intermediate product.

    Built from the same public stage operations as chunked_forward; intended
    for tests and equivalence harnesses that check each stage independently.
    """
    _check_fault(fault)
    x = _check_inputs(coeffs, x)
    parts = partition(coeffs, x, chunk_size)
    plan = parts.plan
    b, t, h = x.shape
    n = coeffs.state_dim

    if h0 is None:
        b0 = np.zeros((b, h, n), dtype=np.float64)
        carry_in = False
    else:
        b0 = _check_state(h0, b, h, n)
        carry_in = bool(np.any(b0 != 0.0))

    y_intra = np.empty((b, t, h), dtype=np.float64)
    b_intra = np.empty((b, plan.num_chunks, h, n), dtype=np.float64)
    for c in range(plan.num_chunks):
        start, stop = plan.bounds(c)
        y_c, b_c = intra_chunk(parts.chunk(c), fault=fault)
        y_intra[:, start:stop] = y_c
        b_intra[:, c] = b_c

    states = propagate_states(b_intra, parts.boundary_transitions, b0, fault=fault)

    y_inter = np.zeros((b, t, h), dtype=np.float64)
    for c in range(plan.num_chunks):
        if c == 0 and not carry_in:
            continue
        start, stop = plan.bounds(c)
        y_inter[:, start:stop] = inter_chunk_correction(
            parts.chunk(c), states[:, c], fault=fault)

    return ChunkStageOutputs(plan, y_intra, b_intra, states, y_inter,
                             y_intra + y_inter, states[:, plan.num_chunks].copy())
