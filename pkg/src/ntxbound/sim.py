"""Dense-vector kernels: L2 normalization, cosine similarity, batch similarity matrices.

All functions are pure and operate on float64 numpy arrays. Latent vectors are
plain 1-D arrays; a batch of 2N latents with the pairing convention
"rows (2t, 2t+1) form positive pair t" is wrapped in :class:`EmbeddingBatch`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InvalidTemperatureError, ZeroVectorError


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionMismatchError(f"expected a nonempty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector entries must be finite")
    return arr


def _unit_rows(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize a 2-D array, returning (unit rows, Euclidean norms).

    Rows are pre-scaled by their max-abs entry so norms never overflow even
    when entries approach the float64 range.
    """
    scales = np.max(np.abs(rows), axis=1)
    if np.any(scales == 0.0):
        raise ZeroVectorError("row with zero Euclidean norm")
    scaled = rows / scales[:, None]
    partial = np.sqrt(np.sum(scaled * scaled, axis=1))
    return scaled / partial[:, None], scales * partial


class EmbeddingBatch:
    """2N latent vectors in pairing order: rows (2t, 2t+1) are positive pair t.

    Rows are copied to float64 and frozen. Construction validates the batch
    invariants: an even row count >= 2, a shared dimension m >= 1, finite
    entries, and a nonzero norm for every row.
    """

    __slots__ = ("rows",)

    def __init__(self, rows):
        arr = np.array(rows, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"batch must be 2-D, got shape {arr.shape}")
        n, m = arr.shape
        if n < 2 or n % 2 != 0:
            raise ValueError(f"row count must be even and >= 2, got {n}")
        if m < 1:
            raise DimensionMismatchError("latent dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("batch entries must be finite")
        if np.any(np.max(np.abs(arr), axis=1) == 0.0):
            raise ZeroVectorError("batch contains a zero-norm row")
        arr.setflags(write=False)
        self.rows = arr

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.rows.shape[0] // 2

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def unit_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit-norm rows and the original row norms."""
        return _unit_rows(self.rows)

    def __repr__(self) -> str:
        return f"EmbeddingBatch(n_pairs={self.n_pairs}, dim={self.dim})"


@dataclass
class SimilarityMatrix:
    """Full 2N x 2N cosine-similarity matrix and its temperature-scaled view.

    ``scaled[i, k] = sims[i, k] / tau``. The matrix is exactly symmetric, its
    diagonal is exactly 1, and entries are clamped to [-1, 1].
    """

    sims: np.ndarray
    tau: float
    scaled: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.sims.ndim != 2 or self.sims.shape[0] != self.sims.shape[1]:
            raise DimensionMismatchError("similarity matrix must be square")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InvalidTemperatureError(f"tau must be > 0, got {self.tau}")

    @property
    def n_rows(self) -> int:
        return self.sims.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.sims.shape[0] // 2


def l2_normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm, preserving direction.

    Raises ZeroVectorError when the norm is zero (no direction to preserve).
    """
    arr = _as_vector(v)
    scale = np.max(np.abs(arr))
    if scale == 0.0:
        raise ZeroVectorError("cannot normalize the zero vector")
    u = arr / scale
    return u / np.sqrt(np.sum(u * u))


def cosine_sim(a, b) -> float:
    """Cosine similarity (a . b) / (|a| |b|), clamped to [-1, 1].

    The clamp absorbs floating-point rounding so downstream exponentials see
    arguments inside the analytic range.
    """
    va, vb = _as_vector(a), _as_vector(b)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"dimensions differ: {va.shape[0]} vs {vb.shape[0]}")
    dot = float(np.dot(l2_normalize(va), l2_normalize(vb)))
    return min(1.0, max(-1.0, dot))


def similarity_matrix(batch: EmbeddingBatch, tau: float) -> SimilarityMatrix:
    """All-pairs cosine similarities of a batch, plus the tau-scaled view.

    The diagonal is computed (and pinned to exactly 1); the k != i exclusion
    of the loss is applied downstream, because the bound variants need
    diagonal access. Symmetry is enforced exactly by averaging.
    """
    if not (np.isscalar(tau) and np.isfinite(tau) and tau > 0):
        raise InvalidTemperatureError(f"tau must be a finite positive scalar, got {tau!r}")
    unit, _ = batch.unit_rows()
    sims = unit @ unit.T
    sims = 0.5 * (sims + sims.T)
    np.clip(sims, -1.0, 1.0, out=sims)
    np.fill_diagonal(sims, 1.0)
    return SimilarityMatrix(sims=sims, tau=float(tau), scaled=sims / tau)
