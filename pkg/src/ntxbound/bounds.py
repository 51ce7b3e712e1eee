"""Log-sum-exp sandwich bounds and the upper bound on average positive-pair similarity.

Two variants of the similarity bound are computed side by side:

* ``paper``: uses log(2N) and the per-anchor max over *all* columns,
  including the self-similarity (which always dominates at 1/tau).
* ``strict``: uses log(2N-1) and the max over non-self columns only, matching
  the index set actually present in the loss; this variant is tighter and is
  attained exactly when all latents coincide.

Both are valid upper bounds on the average cosine similarity of the N
positive pairs; ``strict_bound <= paper_bound`` always.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInputError, InvalidGridError, UnsupportedModeError
from .loss import AnchorMode, LossBreakdown, LossConfig, anchor_indices, logsumexp, nt_xent_from_sims
from .sim import EmbeddingBatch, similarity_matrix

#: Distributions understood by the Monte Carlo verifier.
DISTRIBUTIONS = ("uniform_sphere", "gaussian", "clustered")

#: Noise scale for the "clustered" distribution (pair = base vector + noise).
CLUSTERED_NOISE_SCALE = 0.1

#: Absolute slack for declaring a bound violated; only rounding noise is tolerated.
VIOLATION_SLACK = 1e-9


@dataclass(frozen=True)
class LseBounds:
    """The sandwich max <= LSE <= max + log(n) for one argument vector.

    The sandwich itself is enforced here. The strict forms (value > lower for
    n > 1, value < upper unless all arguments are equal) hold in real
    arithmetic but can saturate in float64 when the spread of the arguments
    exceeds the exponent range, so they are verified by tests on
    representable inputs rather than asserted at construction.
    """

    lower: float
    upper: float
    value: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise EmptyInputError("LSE bounds need at least one argument")
        if not (self.lower <= self.value <= self.upper):
            raise ValueError(
                f"sandwich violated: lower={self.lower!r}, value={self.value!r}, upper={self.upper!r}"
            )


@dataclass(frozen=True)
class BoundReport:
    """Average positive-pair similarity with both upper-bound variants and gaps.

    Gap signs are deliberately not enforced at construction: the Monte Carlo
    verifier and the trainer exist to *observe* violations, so a violated
    bound must surface as data, not as an exception.
    """

    avg_pos_sim: float
    paper_bound: float
    strict_bound: float
    paper_gap: float
    strict_gap: float

    def __post_init__(self):
        vals = (self.avg_pos_sim, self.paper_bound, self.strict_bound, self.paper_gap, self.strict_gap)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"bound report fields must be finite, got {vals}")


@dataclass(frozen=True)
class BatchEvaluation:
    """Loss breakdown and bound report computed from one similarity matrix."""

    breakdown: LossBreakdown
    report: BoundReport
    min_similarity: float


def lse_bounds(xs) -> LseBounds:
    """Evaluate LSE(xs) together with its lower (max) and upper (max + log n) bounds."""
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("lse_bounds of an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("lse_bounds arguments must be finite")
    lower = float(np.max(arr))
    n = int(arr.size)
    return LseBounds(lower=lower, upper=lower + math.log(n), value=logsumexp(arr), n=n)


def avg_positive_similarity(batch: EmbeddingBatch) -> float:
    """Mean cosine similarity over the N positive pairs (rows 2t and 2t+1)."""
    unit, _ = batch.unit_rows()
    pair_sims = np.sum(unit[0::2] * unit[1::2], axis=1)
    np.clip(pair_sims, -1.0, 1.0, out=pair_sims)
    return float(np.mean(pair_sims))


def similarity_bound(batch: EmbeddingBatch, cfg: LossConfig) -> BoundReport:
    """Upper-bound the average positive-pair similarity via the LSE sandwich."""
    return evaluate_batch(batch, cfg).report


def evaluate_batch(batch: EmbeddingBatch, cfg: LossConfig) -> BatchEvaluation:
    """Loss breakdown plus bound report from a single similarity matrix.

    Requires the N-anchor convention; the bound derivation sums one LSE per
    pair, so the symmetric mode has no matching bound.
    """
    if cfg.anchor_mode is not AnchorMode.PAPER_N:
        raise UnsupportedModeError(f"similarity bound requires PAPER_N anchors, got {cfg.anchor_mode}")
    simmat = similarity_matrix(batch, cfg.tau)
    breakdown = nt_xent_from_sims(simmat, cfg)

    n_rows, n_pairs, tau = simmat.n_rows, simmat.n_pairs, cfg.tau
    anchors, _ = anchor_indices(n_rows, cfg.anchor_mode)
    masked = simmat.scaled.copy()
    np.fill_diagonal(masked, -np.inf)
    max_excl_self = np.max(masked[anchors], axis=1)
    max_incl_self = np.max(simmat.scaled[anchors], axis=1)

    avg = avg_positive_similarity(batch)
    paper = tau * math.log(n_rows) - tau * breakdown.total + tau * float(np.mean(max_incl_self))
    strict = tau * math.log(n_rows - 1) - tau * breakdown.total + tau * float(np.mean(max_excl_self))
    report = BoundReport(
        avg_pos_sim=avg,
        paper_bound=paper,
        strict_bound=strict,
        paper_gap=paper - avg,
        strict_gap=strict - avg,
    )
    return BatchEvaluation(breakdown=breakdown, report=report, min_similarity=float(np.min(simmat.sims)))


def sample_embeddings(distribution: str, n_pairs: int, dim: int, rng: np.random.Generator) -> EmbeddingBatch:
    """Draw a 2N x m batch from one of the named embedding distributions.

    ``uniform_sphere`` normalizes standard normals; ``gaussian`` uses them
    raw; ``clustered`` draws one base vector per pair plus small noise,
    mimicking a trained encoder. Draw order is fixed so runs reproduce.
    """
    if distribution == "uniform_sphere":
        raw = rng.standard_normal((2 * n_pairs, dim))
        return EmbeddingBatch(raw / np.linalg.norm(raw, axis=1, keepdims=True))
    if distribution == "gaussian":
        return EmbeddingBatch(rng.standard_normal((2 * n_pairs, dim)))
    if distribution == "clustered":
        bases = rng.standard_normal((n_pairs, dim))
        noise = CLUSTERED_NOISE_SCALE * rng.standard_normal((2 * n_pairs, dim))
        return EmbeddingBatch(np.repeat(bases, 2, axis=0) + noise)
    raise InvalidGridError(f"unknown embedding distribution {distribution!r}")


@dataclass(frozen=True)
class VerifyGrid:
    """Parameter grid for Monte Carlo bound verification."""

    ns: tuple[int, ...]
    ms: tuple[int, ...]
    taus: tuple[float, ...]
    distributions: tuple[str, ...]

    def __post_init__(self):
        for name, vals in (("ns", self.ns), ("ms", self.ms), ("taus", self.taus), ("distributions", self.distributions)):
            if len(vals) == 0:
                raise InvalidGridError(f"grid axis {name!r} is empty")
        if any(n < 1 for n in self.ns):
            raise InvalidGridError(f"pair counts must be >= 1, got {self.ns}")
        if any(m < 1 for m in self.ms):
            raise InvalidGridError(f"dimensions must be >= 1, got {self.ms}")
        if any(not (math.isfinite(t) and t > 0) for t in self.taus):
            raise InvalidGridError(f"temperatures must be positive, got {self.taus}")
        for d in self.distributions:
            if d not in DISTRIBUTIONS:
                raise InvalidGridError(f"unknown distribution {d!r}; expected one of {DISTRIBUTIONS}")

    def cells(self) -> list[tuple[int, int, float, str]]:
        """Grid cells in their fixed evaluation order."""
        return [(n, m, tau, dist) for n in self.ns for m in self.ms for tau in self.taus for dist in self.distributions]


def default_grid() -> VerifyGrid:
    """The stock verification grid used by the CLI when no config is given."""
    return VerifyGrid(ns=(2, 4, 8, 16, 32), ms=(8,), taus=(0.05, 0.1, 0.5, 1.0), distributions=DISTRIBUTIONS)


@dataclass(frozen=True)
class VerifySummary:
    """Outcome of a Monte Carlo verification run."""

    grid: VerifyGrid
    seed: int
    trials_per_cell: int
    cells: int
    total_trials: int
    violations_paper: int
    violations_strict: int
    min_paper_gap: float
    min_strict_gap: float
    min_variant_margin: float

    @property
    def ok(self) -> bool:
        return self.violations_paper == 0 and self.violations_strict == 0

    def to_dict(self) -> dict:
        """Plain-dict form with a fixed key order, ready for JSON serialization."""
        return {
            "grid": {
                "ns": list(self.grid.ns),
                "ms": list(self.grid.ms),
                "taus": list(self.grid.taus),
                "distributions": list(self.grid.distributions),
            },
            "seed": self.seed,
            "trials_per_cell": self.trials_per_cell,
            "cells": self.cells,
            "total_trials": self.total_trials,
            "violations_paper": self.violations_paper,
            "violations_strict": self.violations_strict,
            "min_paper_gap": self.min_paper_gap,
            "min_strict_gap": self.min_strict_gap,
            "min_variant_margin": self.min_variant_margin,
        }


def _cell_rng(seed: int, cell_index: int) -> np.random.Generator:
    """Independent, scheduling-invariant generator for one grid cell.

    PCG64 streams derived from SeedSequence(seed, spawn_key=(cell_index,)),
    so the summary is identical however cells are distributed over workers.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(cell_index,))))


def _run_cell(payload: tuple[int, int, int, int, float, str, int]) -> tuple[int, int, float, float, float]:
    seed, index, n_pairs, dim, tau, distribution, trials = payload
    rng = _cell_rng(seed, index)
    cfg = LossConfig(tau=tau, anchor_mode=AnchorMode.PAPER_N)
    viol_paper = viol_strict = 0
    min_paper = min_strict = min_margin = math.inf
    for _ in range(trials):
        batch = sample_embeddings(distribution, n_pairs, dim, rng)
        report = similarity_bound(batch, cfg)
        if report.paper_gap < -VIOLATION_SLACK:
            viol_paper += 1
        if report.strict_gap < -VIOLATION_SLACK:
            viol_strict += 1
        min_paper = min(min_paper, report.paper_gap)
        min_strict = min(min_strict, report.strict_gap)
        min_margin = min(min_margin, report.paper_bound - report.strict_bound)
    return viol_paper, viol_strict, min_paper, min_strict, min_margin


def _worker_count(n_cells: int) -> int:
    env = os.environ.get("NTXB_THREADS")
    if env is None:
        cap = os.cpu_count() or 1
    else:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"NTXB_THREADS must be a positive integer, got {env!r}") from None
        if cap < 1:
            raise ConfigError(f"NTXB_THREADS must be >= 1, got {cap}")
    return max(1, min(n_cells, cap))


def monte_carlo_verify(grid: VerifyGrid, trials: int, seed: int) -> VerifySummary:
    """Check both bound variants on random batches over the whole grid.

    Deterministic given ``seed`` regardless of worker scheduling. Violations
    are counted beyond an absolute slack of 1e-9; the minimum observed gap of
    each variant and the minimum paper-strict margin are recorded.
    """
    if trials < 1:
        raise InvalidGridError(f"trials per cell must be >= 1, got {trials}")
    if seed < 0 or seed >= 2**64:
        raise InvalidGridError(f"seed must fit in u64, got {seed}")
    cells = grid.cells()
    payloads = [(seed, i, n, m, tau, dist, trials) for i, (n, m, tau, dist) in enumerate(cells)]
    workers = _worker_count(len(cells))
    if workers == 1:
        results = [_run_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, payloads))

    viol_paper = sum(r[0] for r in results)
    viol_strict = sum(r[1] for r in results)
    return VerifySummary(
        grid=grid,
        seed=seed,
        trials_per_cell=trials,
        cells=len(cells),
        total_trials=trials * len(cells),
        violations_paper=viol_paper,
        violations_strict=viol_strict,
        min_paper_gap=min(r[2] for r in results),
        min_strict_gap=min(r[3] for r in results),
        min_variant_margin=min(r[4] for r in results),
    )
