"""Equivalence suite and timing sweeps over the inference strategies.

The equivalence suite checks, on seeded instances, that every evaluation
route agrees with the sequential recurrence: the dense single-operator form,
the block-decomposed form at several chunk sizes (outputs and final states),
each decomposition stage against its own independent oracle, and the
model-level schedules (chunked/dense kernels and the vertical scheduler
against a recurrent-kernel reference).  A fault injected into one stage must
surface here on every instance whose decomposition actually exercises that
stage; single-chunk instances are expected to stay green.

Sweeps time full forward passes (coefficient generation included) over a
grid of sequence lengths, batch sizes, chunk sizes, and vertical block
lengths, and emit one CSV row per repetition with the ledger peak and
per-stage flop counts.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chunked import (DEFAULT_DENSE_LIMIT, chunked_forward, collect_stage_outputs,
                      dense_dual, partition)
from .core import random_coefficients, recurrent_scan
from .errors import ValidationError
from .model_io import generate_model
from .stack import ModelSpec, StackedModel, horizontal_infer, vertical_infer

__all__ = [
    "STRATEGIES",
    "CSV_HEADER",
    "EquivalenceConfig",
    "CheckResult",
    "EquivalenceReport",
    "run_equivalence",
    "SweepConfig",
    "BenchRecord",
    "run_sweep",
    "write_records",
    "read_records",
    "summarize_records",
]

STRATEGIES = ("recurrent", "dense", "chunked-horizontal", "vertical")
CSV_HEADER = "strategy,T,batch,Q,V,rep,wall_time_s,peak_elems,flops_intra,flops_prop,flops_inter"


def relative_error(got: np.ndarray, ref: np.ndarray) -> float:
    """max |got - ref| normalized by max |ref| (floor guards all-zero refs)."""
    denom = max(float(np.max(np.abs(ref))), 1e-30)
    return float(np.max(np.abs(np.asarray(got) - np.asarray(ref))) / denom)


# ---------------------------------------------------------------------------
# Equivalence suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquivalenceConfig:
    seed: int = 42
    tolerance: float = 1e-9
    t_grid: tuple[int, ...] = (4, 16, 33, 64)
    q_grid: tuple[int, ...] = (2, 4, 8)
    v_grid: tuple[int, ...] = (16, 32)
    batch: int = 2
    heads: int = 2
    state_dim: int = 4
    layers: int = 3
    d: int = 16
    model_q: int = 8
    dense_limit: int = DEFAULT_DENSE_LIMIT
    fault: str | None = None


@dataclass
class CheckResult:
    instance: str
    name: str
    multi_chunk: bool
    max_rel_err: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        multi = "multi" if self.multi_chunk else "single"
        return (f"[{status}] {self.instance} {self.name} ({multi}-chunk) "
                f"max_rel_err={self.max_rel_err:.3e} tol={self.tolerance:.1e}")


@dataclass
class EquivalenceReport:
    config: EquivalenceConfig
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def failed_instances(self) -> list[str]:
        return sorted({c.instance for c in self.checks if not c.passed})

    def multi_chunk_instances(self) -> list[str]:
        return sorted({c.instance for c in self.checks if c.multi_chunk})

    def to_dict(self) -> dict:
        return {
            "seed": self.config.seed,
            "tolerance": self.config.tolerance,
            "fault": self.config.fault,
            "passed": self.passed,
            "max_rel_err": self.max_rel_err,
            "checks": [vars(c) for c in self.checks],
        }


def _pair_err(got_pair, ref_pair) -> float:
    return max(relative_error(got_pair[0], ref_pair[0]),
               relative_error(got_pair[1], ref_pair[1]))


def _stage_checks(report, instance, coeffs, x, h0, q, config):
    """Check each decomposition stage against an independent oracle."""
    add = report.checks.append
    tol = config.tolerance
    stages = collect_stage_outputs(coeffs, x, q, h0, fault=config.fault)
    parts = partition(coeffs, x, q)
    plan = parts.plan
    multi = plan.num_chunks > 1

    # Stage 1: each chunk against the dense operator with zero incoming state.
    err = 0.0
    for c in range(plan.num_chunks):
        start, stop = plan.bounds(c)
        view = parts.chunk(c)
        y_ref, h_ref = dense_dual(view.coeffs, view.x)
        err = max(err, relative_error(stages.y_intra[:, start:stop], y_ref),
                  relative_error(stages.b_intra[:, c], h_ref))
    add(CheckResult(instance, f"stage-intra-q{q}", multi, err, tol, err <= tol))

    # Stage 2: boundary states against the recurrence run chunk by chunk.
    err = 0.0
    h = h0 if h0 is not None else np.zeros((coeffs.batch, coeffs.heads, coeffs.state_dim))
    err = max(err, relative_error(stages.boundary_states[:, 0], h))
    for c in range(plan.num_chunks):
        view = parts.chunk(c)
        _, h = recurrent_scan(view.coeffs, view.x, h)
        err = max(err, relative_error(stages.boundary_states[:, c + 1], h))
    add(CheckResult(instance, f"stage-boundary-q{q}", multi, err, tol, err <= tol))

    # Stage 3: each correction equals reading the carried state out through
    # the chunk with its own inputs silenced (superposition of the two parts).
    err = 0.0
    for c in range(plan.num_chunks):
        start, stop = plan.bounds(c)
        view = parts.chunk(c)
        carried = stages.boundary_states[:, c] if c > 0 else (
            h0 if h0 is not None else np.zeros_like(stages.boundary_states[:, 0]))
        y_ref, _ = recurrent_scan(view.coeffs, np.zeros_like(view.x), carried)
        err = max(err, relative_error(stages.y_inter[:, start:stop], y_ref))
    add(CheckResult(instance, f"stage-correction-q{q}", multi, err, tol, err <= tol))


def run_equivalence(config: EquivalenceConfig = EquivalenceConfig()) -> EquivalenceReport:
    """Run every oracle comparison in the suite; see the module docstring."""
    rng = np.random.default_rng(config.seed)
    report = EquivalenceReport(config)
    add = report.checks.append
    tol = config.tolerance

    for t in config.t_grid:
        instance = f"T={t}"
        coeffs = random_coefficients(rng, config.batch, t, config.heads, config.state_dim)
        x = rng.standard_normal((config.batch, t, config.heads))
        h0 = rng.standard_normal((config.batch, config.heads, config.state_dim))
        ref = recurrent_scan(coeffs, x, h0)

        if t <= config.dense_limit:
            err = _pair_err(dense_dual(coeffs, x, h0), ref)
            add(CheckResult(instance, "dense-vs-recurrent", False, err, tol, err <= tol))

        smallest_multi_q = None
        for q in config.q_grid:
            got = chunked_forward(coeffs, x, q, h0, fault=config.fault)
            multi = math.ceil(t / q) > 1
            if multi and smallest_multi_q is None:
                smallest_multi_q = q
            err = _pair_err(got, ref)
            add(CheckResult(instance, f"chunked-q{q}", multi, err, tol, err <= tol))

        if smallest_multi_q is not None:
            _stage_checks(report, instance, coeffs, x, h0, smallest_multi_q, config)

    # Model-level: schedules over a stacked model, recurrent kernel as oracle.
    spec = ModelSpec(seed=config.seed, L=config.layers, d=config.d, H=config.heads,
                     N=config.state_dim, vocab_size=64, Q=config.model_q,
                     V=2 * config.model_q, dense_limit=config.dense_limit)
    model = generate_model(spec)
    for t in config.t_grid:
        instance = f"T={t}"
        tokens = rng.integers(0, spec.vocab_size - 1, size=(1, t))
        ref = horizontal_infer(model, tokens, config.model_q, kernel="recurrent")
        multi = math.ceil(t / config.model_q) > 1

        got = horizontal_infer(model, tokens, config.model_q, fault=config.fault)
        err = relative_error(got.hidden, ref.hidden)
        add(CheckResult(instance, "model-chunked", multi, err, tol, err <= tol))

        if t <= config.dense_limit:
            got = horizontal_infer(model, tokens, config.model_q, kernel="dense")
            err = relative_error(got.hidden, ref.hidden)
            add(CheckResult(instance, "model-dense", False, err, tol, err <= tol))

        for v in config.v_grid:
            if v % config.model_q != 0:
                continue
            blocks: list[tuple[int, np.ndarray]] = []
            vertical_infer(model, tokens, v, config.model_q, fault=config.fault,
                           sink=lambda start, h: blocks.append((start, h)))
            full = np.concatenate([h for _, h in sorted(blocks)], axis=1)
            err = relative_error(full, ref.hidden)
            add(CheckResult(instance, f"vertical-v{v}", multi, err, tol, err <= tol))
    return report


# ---------------------------------------------------------------------------
# Timing sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    seed: int = 42
    t_grid: tuple[int, ...] = (64, 128, 256, 512, 1024)
    batch_grid: tuple[int, ...] = (1, 8)
    q_grid: tuple[int, ...] = (4, 8, 16, 32)
    v_grid: tuple[int, ...] | None = None  # None: V in {Q, 2Q, 4Q} per Q
    strategies: tuple[str, ...] = STRATEGIES
    reps: int = 3
    warmup: int = 1
    parallel: bool = False
    dense_limit: int | None = None  # None: the model's configured limit


@dataclass(frozen=True)
class BenchRecord:
    strategy: str
    T: int
    batch: int
    Q: int  # 0 when the strategy does not chunk (recurrent, dense)
    V: int  # 0 for non-vertical strategies
    rep: int
    wall_time_s: float
    peak_elems: int
    flops_intra: int
    flops_prop: int
    flops_inter: int

    def sort_key(self):
        return (self.strategy, self.T, self.batch, self.Q, self.V, self.rep)


def _cell_list(config: SweepConfig, dense_limit: int, log) -> list[tuple]:
    """Expand the grids into (strategy, T, batch, Q, V) cells, pruned."""
    cells = []
    for strategy in config.strategies:
        if strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {strategy!r}; expected {STRATEGIES}")
        for t in config.t_grid:
            if strategy == "dense" and t > dense_limit:
                log(f"skip dense T={t}: exceeds dense limit {dense_limit}")
                continue
            for batch in config.batch_grid:
                if strategy in ("recurrent", "dense"):
                    cells.append((strategy, t, batch, 0, 0))
                    continue
                for q in config.q_grid:
                    if strategy == "chunked-horizontal":
                        cells.append((strategy, t, batch, q, 0))
                        continue
                    v_values = config.v_grid if config.v_grid is not None else (q, 2 * q, 4 * q)
                    for v in v_values:
                        if v % q != 0:
                            log(f"skip vertical T={t} Q={q} V={v}: V not a multiple of Q")
                            continue
                        cells.append((strategy, t, batch, q, v))
    return cells


def _time_cell(model: StackedModel, config: SweepConfig, dense_limit: int,
               cell: tuple) -> list[BenchRecord]:
    strategy, t, batch, q, v = cell
    rng = np.random.default_rng([config.seed, t, batch])
    tokens = rng.integers(0, model.spec.vocab_size - 1, size=(batch, t))
    chunk = q if q else model.spec.Q

    def run_once():
        start = time.perf_counter()
        if strategy == "vertical":
            result = vertical_infer(model, tokens, v, chunk)
        elif strategy == "chunked-horizontal":
            result = horizontal_infer(model, tokens, chunk)
        else:
            result = horizontal_infer(model, tokens, chunk, kernel=strategy,
                                      dense_limit=dense_limit)
        return result, time.perf_counter() - start

    for _ in range(config.warmup):
        run_once()
    records = []
    for rep in range(config.reps):
        result, elapsed = run_once()
        records.append(BenchRecord(
            strategy, t, batch, q, v, rep, elapsed,
            result.ledger.peak_elements, result.flops.intra,
            result.flops.propagate, result.flops.inter))
    return records


def run_sweep(model: StackedModel, config: SweepConfig = SweepConfig(),
              *, log=None) -> list[BenchRecord]:
    """Time every grid cell; returns records sorted by the CSV column order.

    Cells run sequentially unless config.parallel is set, in which case
    independent cells run on a small thread pool and records must be treated
    as parallel-timed (counts stay exact; wall times contend).
    """
    log = log if log is not None else (lambda msg: None)
    dense_limit = config.dense_limit if config.dense_limit is not None else model.spec.dense_limit
    cells = _cell_list(config, dense_limit, log)
    if config.parallel:
        with ThreadPoolExecutor(max_workers=4) as pool:
            batches = list(pool.map(
                lambda cell: _time_cell(model, config, dense_limit, cell), cells))
    else:
        batches = [_time_cell(model, config, dense_limit, cell) for cell in cells]
    records = [rec for batch in batches for rec in batch]
    records.sort(key=BenchRecord.sort_key)
    return records


def write_records(path, records: list[BenchRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER.split(","))
        for rec in records:
            writer.writerow([rec.strategy, rec.T, rec.batch, rec.Q, rec.V, rec.rep,
                             repr(rec.wall_time_s), rec.peak_elems, rec.flops_intra,
                             rec.flops_prop, rec.flops_inter])


def read_records(path) -> list[BenchRecord]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows or rows[0] != CSV_HEADER.split(","):
        raise ValidationError(f"unexpected CSV header in {path}")
    records = []
    for row in rows[1:]:
        if len(row) != 11:
            raise ValidationError(f"malformed CSV row: {row}")
        records.append(BenchRecord(
            row[0], int(row[1]), int(row[2]), int(row[3]), int(row[4]), int(row[5]),
            float(row[6]), int(row[7]), int(row[8]), int(row[9]), int(row[10])))
    return records


def summarize_records(records: list[BenchRecord]) -> list[dict]:
    """Aggregate repetitions per cell: wall-time mean/min/max, exact counts."""
    cells: dict[tuple, list[BenchRecord]] = {}
    for rec in records:
        cells.setdefault((rec.strategy, rec.T, rec.batch, rec.Q, rec.V), []).append(rec)
    rows = []
    for key in sorted(cells):
        group = cells[key]
        walls = [r.wall_time_s for r in group]
        rows.append({
            "strategy": key[0], "T": key[1], "batch": key[2], "Q": key[3], "V": key[4],
            "reps": len(group),
            "wall_mean_s": sum(walls) / len(walls),
            "wall_min_s": min(walls),
            "wall_max_s": max(walls),
            "peak_elems": max(r.peak_elems for r in group),
            "flops_total": max(r.flops_intra + r.flops_prop + r.flops_inter for r in group),
        })
    return rows
