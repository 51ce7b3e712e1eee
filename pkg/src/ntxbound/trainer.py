"""Desk-scale SimCLR on synthetic data, instrumented with loss and bound diagnostics.

The four classic components, shrunk to laptop size: a stochastic augmentation
(Gaussian noise then coordinate dropout), an MLP encoder, an MLP projection
head with ReLU between layers, and the NT-Xent loss. Every training step
records the loss breakdown and both similarity-bound variants *before* the
parameter update, so the bound can be watched live while training.

Randomness is PCG64 throughout. A run derives three independent streams from
the config seed via SeedSequence spawn keys: (0,) for the dataset, (1,) for
weight init, (2,) for minibatch sampling and augmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import evaluate_batch
from .errors import (
    DimensionMismatchError,
    InvalidDatasetParamsError,
    NonFiniteLossError,
    ZeroVectorError,
)
from .loss import AnchorMode, LossConfig, nt_xent_grad
from .sim import EmbeddingBatch

#: All pairwise similarities at least this close to 1 counts as a collapsed batch.
COLLAPSE_TOL = 1e-12


def _rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass
class MlpTrace:
    """Forward-pass intermediates kept for backpropagation."""

    pre: list[np.ndarray]
    act: list[np.ndarray]  # act[0] is the input; act[-1] the output


@dataclass
class Mlp:
    """Fully connected network, ReLU between layers, identity at the output.

    ``weights[l]`` has shape (fan_in, fan_out); forward maps a (batch, d) array
    through ``x @ W + b`` per layer. The ReLU subgradient at 0 is taken as 0.
    """

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, layer_dims, rng: np.random.Generator) -> "Mlp":
        """Seeded init: weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].

        Biases use a tenth of that range: nonzero, so a fully dead ReLU layer
        still emits a latent with a direction, but small, because the bias is
        shared across rows and would otherwise dominate the initial cosine
        geometry with a common component.
        """
        dims = tuple(int(d) for d in layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise DimensionMismatchError(f"need at least input and output dims >= 1, got {dims}")
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-0.1 * bound, 0.1 * bound, size=fan_out))
        return cls(layer_dims=dims, weights=weights, biases=biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward_trace(self, x: np.ndarray) -> MlpTrace:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.layer_dims[0]:
            raise DimensionMismatchError(
                f"input shape {x.shape} does not match first layer dim {self.layer_dims[0]}"
            )
        pre, act = [], [x]
        # Overflow to inf is a handled divergence signal, not a warning-worthy event.
        with np.errstate(over="ignore", invalid="ignore"):
            for l, (w, b) in enumerate(zip(self.weights, self.biases)):
                z = act[-1] @ w + b
                pre.append(z)
                act.append(np.maximum(z, 0.0) if l < self.n_layers - 1 else z)
        return MlpTrace(pre=pre, act=act)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_trace(x).act[-1]

    def backward(self, trace: MlpTrace, grad_out: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Backpropagate ``grad_out`` (w.r.t. the output) through the trace.

        Returns (weight grads, bias grads, grad w.r.t. the input).
        """
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        g = np.asarray(grad_out, dtype=np.float64)
        for l in reversed(range(self.n_layers)):
            d_pre = g if l == self.n_layers - 1 else g * (trace.pre[l] > 0)
            grads_w[l] = trace.act[l].T @ d_pre
            grads_b[l] = d_pre.sum(axis=0)
            g = d_pre @ self.weights[l].T
        return grads_w, grads_b, g


@dataclass(frozen=True)
class AugmentConfig:
    """Synthetic-data augmentation: additive Gaussian noise, then coordinate dropout."""

    noise_sigma: float = 0.1
    dropout_prob: float = 0.1

    def __post_init__(self):
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InvalidDatasetParamsError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not (0 <= self.dropout_prob < 1):
            raise InvalidDatasetParamsError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")


@dataclass(frozen=True)
class DatasetParams:
    """Gaussian-mixture dataset shape: cluster count, per-cluster spread, total points."""

    clusters: int = 4
    spread: float = 0.1
    points: int = 256

    def __post_init__(self):
        if self.clusters < 1:
            raise InvalidDatasetParamsError(f"clusters must be >= 1, got {self.clusters}")
        if not (np.isfinite(self.spread) and self.spread > 0):
            raise InvalidDatasetParamsError(f"spread must be > 0, got {self.spread}")
        if self.points < 1:
            raise InvalidDatasetParamsError(f"points must be >= 1, got {self.points}")


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs, seed included."""

    n_pairs: int = 16
    input_dim: int = 8
    encoder_dims: tuple[int, ...] = (16, 16)
    projector_dims: tuple[int, ...] = (16, 8)
    tau: float = 0.5
    learning_rate: float = 0.05
    steps: int = 500
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    dataset: DatasetParams = field(default_factory=DatasetParams)

    def __post_init__(self):
        if self.n_pairs < 2:
            raise InvalidDatasetParamsError(f"n_pairs must be >= 2, got {self.n_pairs}")
        dims = (self.input_dim, *self.encoder_dims, *self.projector_dims)
        if len(self.encoder_dims) < 1 or len(self.projector_dims) < 1 or any(d < 1 for d in dims):
            raise DimensionMismatchError(f"all layer dims must be >= 1, got {dims}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise InvalidDatasetParamsError(f"tau must be > 0, got {self.tau}")
        if not (np.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidDatasetParamsError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.steps < 1:
            raise InvalidDatasetParamsError(f"steps must be >= 1, got {self.steps}")
        if not (0 <= self.seed < 2**64):
            raise InvalidDatasetParamsError(f"seed must fit in u64, got {self.seed}")
        if self.dataset.points < 2 * self.n_pairs:
            raise InvalidDatasetParamsError(
                f"dataset needs at least 2*n_pairs={2 * self.n_pairs} points, got {self.dataset.points}"
            )

    @property
    def encoder_out(self) -> int:
        return self.encoder_dims[-1]

    @property
    def latent_dim(self) -> int:
        return self.projector_dims[-1]


@dataclass
class SyntheticDataset:
    """Sampled mixture points plus the ground truth used to generate them."""

    points: np.ndarray  # (points, dim)
    means: np.ndarray  # (clusters, dim)
    labels: np.ndarray  # (points,) cluster index per point


def gen_synthetic(dim: int, params: DatasetParams, seed) -> SyntheticDataset:
    """Gaussian-mixture points in R^dim, deterministic given the seed.

    Cluster means are standard normal; point p belongs to cluster p % clusters
    and equals its mean plus ``spread``-scaled Gaussian noise.
    """
    if dim < 1:
        raise InvalidDatasetParamsError(f"dim must be >= 1, got {dim}")
    rng = _rng_from(seed)
    means = rng.standard_normal((params.clusters, dim))
    labels = np.arange(params.points) % params.clusters
    points = means[labels] + params.spread * rng.standard_normal((params.points, dim))
    return SyntheticDataset(points=points, means=means, labels=labels)


def augment(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two independent stochastic views of one point.

    Each view adds N(0, noise_sigma^2) noise, then zeroes each coordinate
    independently with probability dropout_prob. Four draws per call in fixed
    order (noise, dropout mask, twice), so a seeded generator reproduces.
    """
    x = np.asarray(x, dtype=np.float64)
    views = []
    for _ in range(2):
        v = x + rng.normal(0.0, cfg.noise_sigma, size=x.shape)
        mask = rng.random(x.shape) < cfg.dropout_prob
        views.append(np.where(mask, 0.0, v))
    return views[0], views[1]


def _augment_batch(points: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    views = np.empty((2 * points.shape[0], points.shape[1]))
    for t, x in enumerate(points):
        views[2 * t], views[2 * t + 1] = augment(x, cfg, rng)
    return views


@dataclass
class SimclrModel:
    """Encoder and projection head."""

    encoder: Mlp
    projector: Mlp

    @classmethod
    def init(cls, cfg: TrainConfig, rng: np.random.Generator) -> "SimclrModel":
        encoder = Mlp.init((cfg.input_dim, *cfg.encoder_dims), rng)
        projector = Mlp.init((cfg.encoder_out, *cfg.projector_dims), rng)
        return cls(encoder=encoder, projector=projector)


@dataclass
class ForwardResult:
    """Latent batch in pairing order, with encoder features kept for inspection."""

    batch: EmbeddingBatch
    hidden: np.ndarray
    encoder_trace: MlpTrace
    projector_trace: MlpTrace


def forward(encoder: Mlp, projector: Mlp, views: np.ndarray) -> ForwardResult:
    """Map 2N augmented views through encoder then projector."""
    if encoder.layer_dims[-1] != projector.layer_dims[0]:
        raise DimensionMismatchError(
            f"encoder output dim {encoder.layer_dims[-1]} != projector input dim {projector.layer_dims[0]}"
        )
    etrace = encoder.forward_trace(views)
    ptrace = projector.forward_trace(etrace.act[-1])
    return ForwardResult(
        batch=EmbeddingBatch(ptrace.act[-1]),
        hidden=etrace.act[-1],
        encoder_trace=etrace,
        projector_trace=ptrace,
    )


@dataclass(frozen=True)
class StepRecord:
    """Per-step diagnostics, evaluated before the parameter update."""

    step: int
    loss_total: float
    loss_alignment: float
    loss_distribution: float
    avg_pos_sim: float
    paper_bound: float
    strict_bound: float
    paper_gap: float
    strict_gap: float
    grad_norm: float
    collapsed: bool = False


@dataclass
class TrainTrace:
    """All step records of a run, plus where (if anywhere) the latents collapsed."""

    records: list[StepRecord]

    @property
    def collapse_step(self):
        for rec in self.records:
            if rec.collapsed:
                return rec.step
        return None

    @property
    def collapsed(self) -> bool:
        return self.collapse_step is not None

    def __len__(self) -> int:
        return len(self.records)


def train_step(
    model: SimclrModel,
    points: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    step: int = 0,
) -> StepRecord:
    """One full-batch gradient-descent update; the model is mutated in place.

    Augments the N points into 2N views, evaluates loss and bounds on the
    resulting latents, backpropagates the loss gradient through projector and
    encoder, and applies ``-learning_rate * grad``. The returned record holds
    the pre-update diagnostics. Degenerate latents (non-finite entries or a
    zero-norm row) and non-finite gradients raise NonFiniteLossError.
    """
    views = _augment_batch(np.asarray(points, dtype=np.float64), cfg.augment, rng)
    try:
        fwd = forward(model.encoder, model.projector, views)
    except (ZeroVectorError, ValueError) as exc:
        raise NonFiniteLossError(step, f"degenerate latents: {exc}") from exc

    loss_cfg = LossConfig(tau=cfg.tau, anchor_mode=AnchorMode.PAPER_N)
    evaluation = evaluate_batch(fwd.batch, loss_cfg)
    try:
        grad_z = nt_xent_grad(fwd.batch, loss_cfg)
    except ValueError as exc:
        raise NonFiniteLossError(step, f"non-finite loss gradient: {exc}") from exc

    pw, pb, grad_hidden = model.projector.backward(fwd.projector_trace, grad_z)
    ew, eb, _ = model.encoder.backward(fwd.encoder_trace, grad_hidden)

    sq = 0.0
    for g in (*pw, *pb, *ew, *eb):
        sq += float(np.sum(g * g))
    if not np.isfinite(sq):
        raise NonFiniteLossError(step, "non-finite parameter gradient")
    grad_norm = math.sqrt(sq)

    lr = cfg.learning_rate
    for mlp, gws, gbs in ((model.projector, pw, pb), (model.encoder, ew, eb)):
        for l in range(mlp.n_layers):
            mlp.weights[l] -= lr * gws[l]
            mlp.biases[l] -= lr * gbs[l]

    breakdown, report = evaluation.breakdown, evaluation.report
    return StepRecord(
        step=step,
        loss_total=breakdown.total,
        loss_alignment=breakdown.alignment,
        loss_distribution=breakdown.distribution,
        avg_pos_sim=report.avg_pos_sim,
        paper_bound=report.paper_bound,
        strict_bound=report.strict_bound,
        paper_gap=report.paper_gap,
        strict_gap=report.strict_gap,
        grad_norm=grad_norm,
        collapsed=evaluation.min_similarity >= 1.0 - COLLAPSE_TOL,
    )


def train(cfg: TrainConfig) -> TrainTrace:
    """Run the configured training loop; deterministic given the config.

    Each step samples N dataset points with replacement, augments them, and
    applies :func:`train_step`. On divergence the NonFiniteLossError carries
    the trace accumulated so far in its ``trace`` attribute.
    """
    dataset = gen_synthetic(cfg.input_dim, cfg.dataset, np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,)))
    model = SimclrModel.init(cfg, _rng_from(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,))))
    loop_rng = _rng_from(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2,)))

    records: list[StepRecord] = []
    for step in range(cfg.steps):
        idx = loop_rng.integers(0, cfg.dataset.points, size=cfg.n_pairs)
        try:
            records.append(train_step(model, dataset.points[idx], cfg, loop_rng, step))
        except NonFiniteLossError as exc:
            exc.trace = TrainTrace(records=records)
            raise
    return TrainTrace(records=records)
