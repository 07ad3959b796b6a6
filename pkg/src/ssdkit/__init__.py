"""Memory-bounded inference engine for selective state-space sequence layers.

The same causal map is exposed three ways (a sequential recurrence, a dense
lower-triangular operator, and a chunk-decomposed evaluation whose working
set never exceeds chunk-sized blocks) plus two cross-layer schedules
(horizontal: layer at a time; vertical: fixed-length blocks through all
layers with carried states, activation memory independent of sequence
length).  Instrumentation (activation-memory ledger, per-stage flop counts),
deterministic model generation/serialization, a text-embedding head, and a
benchmarking CLI sit on top.
"""

from .errors import (CapacityError, DimensionError, FormatError, IntegrityError,
                     SsdError, ValidationError)
from .core import (SsmCoefficients, build_kernel_matrix, cumulative_transition,
                   random_coefficients, recurrent_scan)
from .chunked import (DEFAULT_DENSE_LIMIT, FAULT_MODES, ChunkPlan, ChunkStageOutputs,
                      ChunkView, ChunkedCoefficients, chunked_forward,
                      collect_stage_outputs, dense_dual, inter_chunk_correction,
                      intra_chunk, partition, propagate_states)
from .instrumentation import ActivationArena, FlopCounter, MemoryLedger
from .stack import (InferenceResult, LayerParams, ModelSpec, StackedModel,
                    export_state_snapshot, generate_coefficients, horizontal_infer,
                    import_state_snapshot, layer_forward, load_state_snapshot,
                    save_state_snapshot, vertical_infer)
from .embedding import (EmbeddingOutput, LossConfig, QUERY_TEMPLATE, cosine_similarity,
                        embed_sequence, format_query, info_nce_loss, tokenize_words)
from .model_io import (expected_payload_bytes, generate_model, load_model,
                       load_model_spec, model_payload, save_model, save_model_spec)
from .bench import (BenchRecord, CSV_HEADER, EquivalenceConfig, EquivalenceReport,
                    STRATEGIES, SweepConfig, read_records, run_equivalence, run_sweep,
                    summarize_records, write_records)

__version__ = "0.1.0"

__all__ = [
    "SsdError", "DimensionError", "ValidationError", "CapacityError",
    "FormatError", "IntegrityError",
    "SsmCoefficients", "random_coefficients", "cumulative_transition",
    "build_kernel_matrix", "recurrent_scan",
    "DEFAULT_DENSE_LIMIT", "FAULT_MODES", "ChunkPlan", "ChunkView",
    "ChunkedCoefficients", "ChunkStageOutputs", "partition", "intra_chunk",
    "propagate_states", "inter_chunk_correction", "chunked_forward", "dense_dual",
    "collect_stage_outputs",
    "ActivationArena", "FlopCounter", "MemoryLedger",
    "ModelSpec", "LayerParams", "StackedModel", "InferenceResult",
    "generate_coefficients", "layer_forward", "horizontal_infer", "vertical_infer",
    "export_state_snapshot", "import_state_snapshot", "save_state_snapshot",
    "load_state_snapshot",
    "QUERY_TEMPLATE", "EmbeddingOutput", "LossConfig", "format_query",
    "tokenize_words", "embed_sequence", "cosine_similarity", "info_nce_loss",
    "generate_model", "model_payload", "expected_payload_bytes", "save_model",
    "load_model", "save_model_spec", "load_model_spec",
    "STRATEGIES", "CSV_HEADER", "EquivalenceConfig", "EquivalenceReport",
    "run_equivalence", "SweepConfig", "BenchRecord", "run_sweep", "write_records",
    "read_records", "summarize_records",
]
