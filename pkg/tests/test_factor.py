"""Tests for the factor-analysis layer in multicause.factor."""

from __future__ import annotations

import math

import numpy as np
import pytest

from multicause.asymptotics import theta_hat_gram
from multicause.errors import DataError, DegenerateFactorError, DimensionError, DomainError
from multicause.factor import (
    PpcaPosterior,
    add_white_noise,
    pca_substitute,
    ppca_mle,
    ppca_posterior,
    sample_posterior_confounder,
)
from multicause.model import DgpSpec, sample_linear_linear


def med_spec() -> DgpSpec:
    return DgpSpec(
        k=1,
        m=2,
        theta=np.array([[0.3, 0.4]]),
        beta=np.array([0.0, 0.3]),
        gamma=np.array([0.5]),
        sigma2=1.0,
        omega2=1.0,
        focal_idx=(0, 1),
    )


class TestPcaSubstitute:
    def test_orthogonal_design_gives_unit_scores(self):
        n = 6
        A = math.sqrt(n) * np.eye(n)
        sub = pca_substitute(A, k=2)
        assert np.allclose(sub.D, math.sqrt(n), atol=1e-12)
        assert np.allclose(sub.Zhat.T @ sub.Zhat / n, np.eye(2), atol=1e-12)

    def test_score_columns_have_squared_norm_n(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((200, 5))
        sub = pca_substitute(A, k=3)
        norms = np.sum(sub.Zhat**2, axis=0)
        assert np.allclose(norms, 200.0, atol=1e-8)

    def test_product_is_rank_k_truncation(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((50, 4))
        sub = pca_substitute(A, k=2)
        U, D, Vt = np.linalg.svd(A, full_matrices=False)
        trunc = U[:, :2] @ np.diag(D[:2]) @ Vt[:2]
        assert np.allclose(sub.Zhat @ sub.theta_hat, trunc, atol=1e-10)

    def test_full_rank_product_reconstructs_a(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((30, 3))
        sub = pca_substitute(A, k=3)
        assert np.allclose(sub.Zhat @ sub.theta_hat, A, atol=1e-10)

    def test_svd_reconstruction(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((40, 6))
        sub = pca_substitute(A, k=2)
        recon = sub.U @ np.diag(sub.D) @ sub.V.T
        assert np.linalg.norm(recon - A) / np.linalg.norm(A) < 1e-10

    def test_singular_values_estimate_population_scale(self):
        # D_j / sqrt(n) converges to the square root of the j-th
        # eigenvalue of theta' theta + sigma2 I.
        spec = med_spec()
        ds = sample_linear_linear(spec, n=1_000_000, seed=17)
        sub = pca_substitute(ds.A, k=1)
        pop = spec.theta.T @ spec.theta + spec.sigma2 * np.eye(2)
        lam = np.sort(np.linalg.eigvalsh(pop))[::-1]
        assert np.allclose(sub.D / math.sqrt(ds.n), np.sqrt(lam), atol=0.01)

    def test_loading_gram_matches_closed_form(self):
        spec = med_spec()
        ds = sample_linear_linear(spec, n=1_000_000, seed=19)
        sub = pca_substitute(ds.A, k=1)
        target = theta_hat_gram(spec.theta, spec.sigma2)
        assert np.max(np.abs(sub.theta_hat.T @ sub.theta_hat - target)) < 0.02

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((60, 4))
        a = pca_substitute(A, k=2)
        b = pca_substitute(A.copy(), k=2)
        assert np.array_equal(a.Zhat, b.Zhat)
        # Each loading row's largest-magnitude entry is positive.
        for row in a.V.T:
            assert row[np.argmax(np.abs(row))] > 0

    def test_k_above_m_rejected(self):
        with pytest.raises(DimensionError):
            pca_substitute(np.eye(4), k=5)

    def test_n_below_m_rejected(self):
        with pytest.raises(DimensionError):
            pca_substitute(np.ones((2, 3)), k=1)

    def test_non_finite_rejected(self):
        A = np.ones((10, 2))
        A[0, 0] = np.nan
        with pytest.raises(DataError):
            pca_substitute(A, k=1)

    def test_stacked_design_block_structure(self):
        # Appending the score block to A leaves the left singular
        # vectors unchanged up to sign; the augmented squared singular
        # values are D_j^2 + n for the leading k, the remaining D_j for
        # the rest, and k exact zeros.
        rng = np.random.default_rng(5)
        for trial in range(5):
            n = int(rng.integers(40, 120))
            m = int(rng.integers(3, 7))
            k = int(rng.integers(1, m))
            A = rng.standard_normal((n, m))
            sub = pca_substitute(A, k=k)
            X = np.column_stack([A, sub.Zhat])
            U2, D2, _ = np.linalg.svd(X, full_matrices=False)
            pred = np.sort(
                np.concatenate(
                    [np.sqrt(sub.D[:k] ** 2 + n), sub.D[k:], np.zeros(k)]
                )
            )[::-1]
            assert np.max(np.abs(D2 - pred)) / max(1.0, pred[0]) < 1e-8
            aligned = np.abs(U2[:, :m].T @ sub.U)[np.arange(m), np.arange(m)]
            assert np.allclose(aligned, 1.0, atol=1e-8)


class TestPpcaPosterior:
    def test_hand_computed_mean_and_variance(self):
        A = np.array([[1.0, 2.0], [0.0, -1.0], [2.0, 0.5]])
        theta = np.array([[0.3, 0.4]])
        post = ppca_posterior(A, theta, sigma2=1.0)
        assert post.covariance[0, 0] == pytest.approx(0.8, abs=1e-12)
        expected = (0.3 * A[:, 0] + 0.4 * A[:, 1]) / 1.25
        assert np.allclose(post.mean[:, 0], expected, atol=1e-12)

    def test_zero_loadings_give_prior(self):
        A = np.ones((5, 3))
        post = ppca_posterior(A, np.zeros((2, 3)), sigma2=1.0)
        assert np.allclose(post.covariance, np.eye(2), atol=1e-12)
        assert np.allclose(post.mean, 0.0, atol=1e-12)

    def test_covariance_is_symmetric_psd(self):
        rng = np.random.default_rng(6)
        theta = rng.standard_normal((3, 6))
        post = ppca_posterior(rng.standard_normal((10, 6)), theta, sigma2=0.5)
        assert np.allclose(post.covariance, post.covariance.T, atol=1e-12)
        assert np.linalg.eigvalsh(post.covariance).min() > 0

    def test_nonpositive_sigma2_rejected(self):
        with pytest.raises(DomainError):
            ppca_posterior(np.ones((4, 2)), np.ones((1, 2)), sigma2=0.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            ppca_posterior(np.ones((4, 2)), np.ones((1, 3)), sigma2=1.0)


class TestPpcaMle:
    def test_recovers_noise_variance(self):
        spec = med_spec()
        ds = sample_linear_linear(spec, n=1_000_000, seed=23)
        theta_hat, sigma2_hat = ppca_mle(ds.A, k=1)
        assert sigma2_hat == pytest.approx(1.0, abs=0.01)
        gram = theta_hat @ theta_hat.T
        assert gram[0, 0] == pytest.approx(0.25, abs=0.01)

    def test_small_noise_spec(self):
        spec = DgpSpec(
            k=1,
            m=3,
            theta=np.full((1, 3), 10.0),
            beta=np.zeros(3),
            gamma=np.array([1.0]),
            sigma2=0.01,
            omega2=1.0,
            focal_idx=(0,),
        )
        ds = sample_linear_linear(spec, n=100_000, seed=29)
        _, sigma2_hat = ppca_mle(ds.A, k=1)
        assert sigma2_hat == pytest.approx(0.01, abs=0.005)

    def test_k_equal_m_rejected(self):
        rng = np.random.default_rng(7)
        with pytest.raises(DegenerateFactorError):
            ppca_mle(rng.standard_normal((100, 3)), k=3)

    def test_unidentified_factor_rejected(self):
        # Isotropic data: the leading eigenvalue cannot exceed the noise
        # estimate by construction.
        A = np.kron(np.eye(4), np.ones((5, 1)))
        with pytest.raises(DegenerateFactorError):
            ppca_mle(A, k=1)

    def test_n_not_above_m_rejected(self):
        with pytest.raises(DimensionError):
            ppca_mle(np.ones((3, 3)), k=1)


class TestSamplePosteriorConfounder:
    def test_zero_covariance_returns_mean(self):
        mean = np.arange(8.0).reshape(4, 2)
        post = PpcaPosterior(
            mean=mean,
            covariance=np.zeros((2, 2)),
            theta=np.ones((2, 3)),
            sigma2=1.0,
        )
        draw = sample_posterior_confounder(post, seed=0)
        assert np.allclose(draw, mean, atol=1e-12)

    def test_draw_variance_matches_posterior(self):
        A = np.zeros((100_000, 2))
        post = ppca_posterior(A, np.array([[0.3, 0.4]]), sigma2=1.0)
        draw = sample_posterior_confounder(post, seed=31)
        dev = draw - post.mean
        assert np.var(dev[:, 0]) == pytest.approx(0.8, rel=0.02)

    def test_draw_covariance_matches_posterior(self):
        rng = np.random.default_rng(8)
        theta = rng.standard_normal((2, 5))
        post = ppca_posterior(np.zeros((200_000, 5)), theta, sigma2=1.0)
        draw = sample_posterior_confounder(post, seed=37)
        emp = np.cov(draw - post.mean, rowvar=False)
        num = np.linalg.norm(emp - post.covariance)
        assert num / np.linalg.norm(post.covariance) < 0.02

    def test_indefinite_covariance_rejected(self):
        post = PpcaPosterior(
            mean=np.zeros((4, 2)),
            covariance=np.array([[1.0, 0.0], [0.0, -1.0]]),
            theta=np.ones((2, 3)),
            sigma2=1.0,
        )
        with pytest.raises(DomainError):
            sample_posterior_confounder(post, seed=0)

    def test_determinism(self):
        post = ppca_posterior(np.zeros((50, 2)), np.array([[0.3, 0.4]]), sigma2=1.0)
        a = sample_posterior_confounder(post, seed=9)
        b = sample_posterior_confounder(post, seed=9)
        assert np.array_equal(a, b)


class TestAddWhiteNoise:
    def test_small_noise_stays_close(self):
        rng = np.random.default_rng(10)
        Zhat = rng.standard_normal((500, 2))
        out = add_white_noise(Zhat, psi2=1e-12, seed=1)
        assert np.max(np.abs(out - Zhat)) < 1e-4

    def test_column_variance_inflated(self):
        rng = np.random.default_rng(11)
        Zhat = rng.standard_normal((100_000, 1))
        out = add_white_noise(Zhat, psi2=0.5, seed=2)
        assert np.var(out[:, 0]) == pytest.approx(1.5, rel=0.02)

    def test_nonpositive_psi2_rejected(self):
        for bad in (0.0, -1.0):
            with pytest.raises(DomainError):
                add_white_noise(np.zeros((4, 1)), psi2=bad, seed=0)

    def test_determinism(self):
        Zhat = np.zeros((20, 2))
        a = add_white_noise(Zhat, psi2=1.0, seed=3)
        b = add_white_noise(Zhat, psi2=1.0, seed=3)
        assert np.array_equal(a, b)
