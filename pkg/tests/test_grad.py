"""Analytic latent gradients against an independent central-difference oracle."""

import math

import numpy as np
import pytest

from ntxbound import AnchorMode, EmbeddingBatch, LossConfig, nt_xent, nt_xent_grad

FD_STEP = 1e-5


def fd_gradient(rows, cfg, step=FD_STEP):
    """Central differences of the loss w.r.t. every latent entry."""
    grad = np.zeros_like(rows)
    for i in range(rows.shape[0]):
        for j in range(rows.shape[1]):
            plus = rows.copy()
            plus[i, j] += step
            minus = rows.copy()
            minus[i, j] -= step
            grad[i, j] = (
                nt_xent(EmbeddingBatch(plus), cfg).total - nt_xent(EmbeddingBatch(minus), cfg).total
            ) / (2.0 * step)
    return grad


def assert_grads_close(analytic, numeric, rel_tol, floor=1e-8):
    """Per-entry: relative when either magnitude reaches the floor, absolute below it."""
    for a, n in zip(analytic.ravel(), numeric.ravel()):
        denom = max(abs(a), abs(n))
        if denom >= floor:
            assert abs(a - n) <= rel_tol * denom, f"analytic={a!r} numeric={n!r}"
        else:
            assert abs(a - n) <= floor


def unit_rms(x):
    return x / math.sqrt(float(np.mean(x * x)))


class TestGradientVsFiniteDifferences:
    def test_random_batches_paper_mode(self):
        rng = np.random.default_rng(808)
        for _ in range(20):
            n_pairs = int(rng.integers(1, 6))
            m = int(rng.integers(2, 9))
            rows = unit_rms(rng.standard_normal((2 * n_pairs, m)))
            cfg = LossConfig(tau=float(rng.uniform(0.2, 1.0)))
            assert_grads_close(nt_xent_grad(EmbeddingBatch(rows), cfg), fd_gradient(rows, cfg), rel_tol=1e-5)

    def test_random_batches_symmetric_mode(self):
        rng = np.random.default_rng(809)
        for _ in range(10):
            rows = unit_rms(rng.standard_normal((6, 4)))
            cfg = LossConfig(tau=0.5, anchor_mode=AnchorMode.SYMMETRIC_2N)
            assert_grads_close(nt_xent_grad(EmbeddingBatch(rows), cfg), fd_gradient(rows, cfg), rel_tol=1e-5)


class TestGradientOrthogonality:
    def test_gradient_orthogonal_to_each_latent(self):
        """Scale invariance per row forces <grad_i, z_i> = 0."""
        rng = np.random.default_rng(515)
        for mode in AnchorMode:
            for _ in range(50):
                rows = rng.standard_normal((8, 5)) * 10.0 ** rng.uniform(-2, 2)
                grad = nt_xent_grad(EmbeddingBatch(rows), LossConfig(tau=0.4, anchor_mode=mode))
                inner = np.abs(np.sum(grad * rows, axis=1))
                assert np.max(inner) <= 1e-8


class TestGradientUnderRescaling:
    def test_loss_invariant_and_gradient_inverse_scales(self):
        rng = np.random.default_rng(606)
        for _ in range(20):
            rows = unit_rms(rng.standard_normal((6, 4)))
            scales = 10.0 ** rng.uniform(-2, 2, size=(6, 1))
            cfg = LossConfig(tau=0.5)
            base_total = nt_xent(EmbeddingBatch(rows), cfg).total
            scaled_rows = rows * scales
            assert nt_xent(EmbeddingBatch(scaled_rows), cfg).total == pytest.approx(base_total, abs=1e-9)

            grad_base = nt_xent_grad(EmbeddingBatch(rows), cfg)
            grad_scaled = nt_xent_grad(EmbeddingBatch(scaled_rows), cfg)
            # degree-0 homogeneity per row: grad(D z) = grad(z) / D
            np.testing.assert_allclose(grad_scaled, grad_base / scales, rtol=1e-11, atol=1e-14)
            # and the scaled-batch gradient still matches finite differences
            assert_grads_close(grad_scaled, fd_gradient(scaled_rows, cfg), rel_tol=1e-5)

    def test_gradient_shape_and_finiteness(self):
        rng = np.random.default_rng(9)
        rows = rng.standard_normal((10, 7))
        grad = nt_xent_grad(EmbeddingBatch(rows), LossConfig(tau=0.3))
        assert grad.shape == rows.shape
        assert np.all(np.isfinite(grad))
