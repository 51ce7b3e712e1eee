"""The NT-Xent contrastive loss, its alignment/distribution split, and analytic gradients.

Conventions
-----------
With 2N latents in pairing order, write ``x[i, k] = sim(z_i, z_k) / tau``.
Each anchor ``a`` with partner ``p(a)`` contributes

    -x[a, p(a)] + LSE({x[a, k] : k != a})

and the loss is the sum of contributions divided by N. The anchor set depends
on :class:`AnchorMode`:

* ``PAPER_N``: the first element of each pair anchors it (N terms). With this
  set the alignment + distribution split reproduces the loss exactly.
* ``SYMMETRIC_2N``: every row anchors once (2N terms), both orderings of each
  pair; the normalizer stays N.

The split is ``alignment = -(1/N) sum x[a, p(a)]`` (pulls positives together)
and ``distribution = (1/N) sum LSE`` (pushes everything apart).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, InvalidTemperatureError
from .sim import EmbeddingBatch, SimilarityMatrix, similarity_matrix


class AnchorMode(enum.Enum):
    PAPER_N = "paper_n"
    SYMMETRIC_2N = "symmetric_2n"


@dataclass(frozen=True)
class LossConfig:
    """Temperature and anchor convention for the loss."""

    tau: float
    anchor_mode: AnchorMode = AnchorMode.PAPER_N

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InvalidTemperatureError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss with its alignment and distribution components.

    ``total`` is computed by summing per-anchor terms, the components by
    summing each part separately; the identity ``total = alignment +
    distribution`` is validated to 1e-10 relative at construction.
    """

    total: float
    alignment: float
    distribution: float

    def __post_init__(self):
        vals = (self.total, self.alignment, self.distribution)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"loss components must be finite, got {vals}")
        residual = abs(self.total - (self.alignment + self.distribution))
        if residual > 1e-10 * max(1.0, abs(self.total)):
            raise ValueError(
                f"decomposition identity violated: total={self.total!r}, "
                f"alignment+distribution={self.alignment + self.distribution!r}"
            )


def logsumexp(xs) -> float:
    """log(sum(exp(x_i))) via max-shift; safe for magnitudes up to 1e6.

    Raises EmptyInputError for an empty sequence.
    """
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("logsumexp of an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError("logsumexp arguments must be finite")
    m = float(np.max(arr))
    return m + float(np.log(np.sum(np.exp(arr - m))))


def anchor_indices(n_rows: int, mode: AnchorMode) -> tuple[np.ndarray, np.ndarray]:
    """Anchor rows and their positive partners for a batch of ``n_rows`` latents."""
    if mode is AnchorMode.PAPER_N:
        anchors = np.arange(0, n_rows, 2)
    else:
        anchors = np.arange(n_rows)
    return anchors, anchors ^ 1  # 2t <-> 2t+1


def _masked_lse_rows(scaled: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row LSE over off-diagonal entries, and the softmax weights.

    Returns (lse, weights) where ``lse[i] = LSE({x[i, k] : k != i})`` and
    ``weights[i, k] = exp(x[i, k]) / sum_{k' != i} exp(x[i, k'])`` with a zero
    diagonal. Max-shifted throughout.
    """
    masked = scaled.copy()
    np.fill_diagonal(masked, -np.inf)
    rowmax = np.max(masked, axis=1)
    expd = np.exp(masked - rowmax[:, None])  # diagonal exp(-inf) = 0
    denom = np.sum(expd, axis=1)
    return rowmax + np.log(denom), expd / denom[:, None]


def nt_xent_from_sims(simmat: SimilarityMatrix, cfg: LossConfig) -> LossBreakdown:
    """NT-Xent loss evaluated on a precomputed similarity matrix."""
    if abs(simmat.tau - cfg.tau) > 1e-15 * max(1.0, cfg.tau):
        raise InvalidTemperatureError(
            f"similarity matrix was scaled with tau={simmat.tau}, config has tau={cfg.tau}"
        )
    n_pairs = simmat.n_pairs
    anchors, partners = anchor_indices(simmat.n_rows, cfg.anchor_mode)
    lse, _ = _masked_lse_rows(simmat.scaled)
    pos = simmat.scaled[anchors, partners]
    total = float(np.sum(lse[anchors] - pos) / n_pairs)
    alignment = float(-np.sum(pos) / n_pairs)
    distribution = float(np.sum(lse[anchors]) / n_pairs)
    return LossBreakdown(total=total, alignment=alignment, distribution=distribution)


def nt_xent(batch: EmbeddingBatch, cfg: LossConfig) -> LossBreakdown:
    """NT-Xent loss of a batch of raw latents."""
    return nt_xent_from_sims(similarity_matrix(batch, cfg.tau), cfg)


def nt_xent_grad(batch: EmbeddingBatch, cfg: LossConfig) -> np.ndarray:
    """Gradient of ``nt_xent(batch, cfg).total`` w.r.t. every raw latent row.

    Chains through the normalization inside the cosine similarity, so each
    gradient row is orthogonal to its latent (the loss is scale-invariant
    per row). Returns a 2N x m array matching ``batch.rows``.
    """
    unit, norms = batch.unit_rows()
    simmat = similarity_matrix(batch, cfg.tau)
    n_rows, n_pairs = simmat.n_rows, simmat.n_pairs
    anchors, partners = anchor_indices(n_rows, cfg.anchor_mode)
    _, weights = _masked_lse_rows(simmat.scaled)

    # d(total)/d(sim[a, k]) for anchor rows a; zero elsewhere.
    grad_s = np.zeros((n_rows, n_rows))
    grad_s[anchors] = weights[anchors]
    grad_s[anchors, partners] -= 1.0
    grad_s /= n_pairs * cfg.tau

    # sim[a, k] depends on unit rows a and k symmetrically.
    grad_unit = (grad_s + grad_s.T) @ unit
    radial = np.sum(grad_unit * unit, axis=1, keepdims=True)
    grad = (grad_unit - radial * unit) / norms[:, None]
    if not np.all(np.isfinite(grad)):
        raise ValueError("gradient has non-finite entries")
    return grad
