import math

import numpy as np
import pytest

from omivae.errors import ValidationError
from omivae.losses import (
    LossReport,
    LossWeights,
    bce,
    classification_loss,
    classification_loss_from_logits,
    kl_gaussian,
    total_loss,
    vae_loss,
)
from omivae.numerics import RngState


def mc_kl_estimate(mu, logvar, draws, rng):
    """Monte Carlo E_q[log q(z) - log p(z)] for diagonal Gaussians vs N(0, I)."""
    sigma = np.exp(0.5 * logvar)
    total = 0.0
    for d in range(mu.shape[1]):
        eps = rng.standard_normal(draws, 1)[:, 0]
        z = mu[0, d] + sigma[0, d] * eps
        log_q = -0.5 * (math.log(2 * math.pi) + logvar[0, d] + eps**2)
        log_p = -0.5 * (math.log(2 * math.pi) + z**2)
        total += float((log_q - log_p).mean())
    return total


class TestBce:
    def test_half_everywhere_is_ln2(self):
        t = np.full((3, 4), 0.5)
        assert abs(bce(t, t) - math.log(2.0)) < 1e-12

    def test_perfect_binary_reconstruction_hits_clamp_floor(self):
        t = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert bce(t, t) <= 1e-6

    def test_closed_form_point(self):
        t = np.zeros((1, 1))
        p = np.full((1, 1), 0.9)
        assert abs(bce(t, p) - (-math.log(0.1))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            bce(np.zeros((2, 2)), np.full((2, 3), 0.5))

    def test_target_is_the_minimizer(self):
        rng = RngState(0)
        for _ in range(10):
            t = np.clip(rng.uniform(0.0, 1.0, (4, 6)), 0.0, 1.0)
            p = np.clip(rng.uniform(0.01, 0.99, (4, 6)), 0.01, 0.99)
            assert bce(t, p) >= bce(t, t) - 1e-12


class TestKl:
    def test_matching_distributions(self):
        assert kl_gaussian(np.zeros((5, 3)), np.zeros((5, 3))) == 0.0

    def test_unit_mean_single_dim(self):
        assert abs(kl_gaussian(np.ones((1, 1)), np.zeros((1, 1))) - 0.5) < 1e-15

    def test_nonnegative(self):
        rng = RngState(1)
        for _ in range(20):
            mu = rng.standard_normal(3, 4)
            logvar = rng.standard_normal(3, 4)
            assert kl_gaussian(mu, logvar) >= 0.0

    def test_monte_carlo_oracle(self):
        rng = RngState(2)
        for _ in range(3):
            mu = rng.uniform(-1.5, 1.5, (1, 2))
            logvar = rng.uniform(-1.0, 1.0, (1, 2))
            estimate = mc_kl_estimate(mu, logvar, 400_000, rng)
            assert abs(kl_gaussian(mu, logvar) - estimate) < 1e-2


class TestVaeLoss:
    def test_single_block_equals_plain_bce(self):
        rng = RngState(3)
        t = rng.uniform(0.0, 1.0, (4, 5))
        p = rng.uniform(0.1, 0.9, (4, 5))
        mu = rng.standard_normal(4, 2)
        logvar = rng.standard_normal(4, 2)
        rm, re, kl = vae_loss([t], [p], None, None, mu, logvar)
        assert rm == bce(t, p)
        assert re == 0.0
        assert kl == kl_gaussian(mu, logvar)

    def test_expression_only(self):
        rng = RngState(4)
        t = rng.uniform(0.0, 1.0, (4, 5))
        p = rng.uniform(0.1, 0.9, (4, 5))
        rm, re, kl = vae_loss([], [], t, p, np.zeros((4, 2)), np.zeros((4, 2)))
        assert rm == 0.0
        assert re == bce(t, p)
        assert kl == 0.0

    def test_block_mean(self):
        # two blocks engineered to known BCEs average to their midpoint
        t1 = np.full((2, 3), 0.5)
        p2_t = np.zeros((2, 5))
        p2 = np.full((2, 5), 0.9)
        b1 = bce(t1, t1)
        b2 = bce(p2_t, p2)
        rm, _, _ = vae_loss(
            [t1, p2_t], [t1, p2], None, None, np.zeros((2, 1)), np.zeros((2, 1))
        )
        assert abs(rm - 0.5 * (b1 + b2)) < 1e-15

    def test_block_count_mismatch(self):
        with pytest.raises(ValidationError):
            vae_loss([np.zeros((2, 2))], [], None, None, np.zeros((2, 1)), np.zeros((2, 1)))


class TestClassification:
    def test_perfect_prediction(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert classification_loss(np.array([0, 1]), probs) == 0.0

    def test_uniform_over_34(self):
        probs = np.full((2, 34), 1.0 / 34.0)
        assert abs(classification_loss(np.array([3, 20]), probs) - math.log(34.0)) < 1e-12

    def test_quarter_probability(self):
        probs = np.array([[0.25, 0.75]])
        assert abs(classification_loss(np.array([0]), probs) - math.log(4.0)) < 1e-12

    def test_out_of_range_label(self):
        with pytest.raises(ValidationError):
            classification_loss(np.array([2]), np.full((1, 2), 0.5))

    def test_logit_form_matches_prob_form(self):
        rng = RngState(5)
        logits = rng.standard_normal(6, 4) * 3.0
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        labels = np.array([0, 1, 2, 3, 0, 1])
        a = classification_loss(labels, probs)
        b = classification_loss_from_logits(labels, logits)
        assert abs(a - b) < 1e-12


class TestTotalLoss:
    def test_unsupervised_weighting(self):
        report = total_loss(1.0, 0.5, 0.5, 9.0, LossWeights(alpha=1.0, beta=0.0))
        assert report.total == 2.0

    def test_joint_weighting(self):
        report = total_loss(1.0, 0.5, 0.5, 0.5, LossWeights(alpha=1.0, beta=1.0))
        assert report.total == 2.5

    def test_negative_weights_rejected(self):
        with pytest.raises(ValidationError):
            LossWeights(alpha=-1.0, beta=1.0)
        with pytest.raises(ValidationError):
            LossWeights(alpha=0.0, beta=0.0)

    def test_report_internal_consistency(self):
        rng = RngState(6)
        for _ in range(10):
            rm, re, kl, cls = rng.uniform(0.0, 3.0, (4,)).tolist()
            w = LossWeights(alpha=1.7, beta=0.3)
            report = total_loss(rm, re, kl, cls, w)
            assert abs(report.vae - (rm + re + kl)) <= 1e-12
            assert abs(report.total - (w.alpha * report.vae + w.beta * cls)) <= 1e-12

    def test_report_round_trip_dict(self):
        report = total_loss(0.1, 0.2, 0.3, 0.4, LossWeights(1.0, 1.0))
        assert LossReport(**report.as_dict()) == report
