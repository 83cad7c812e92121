"""Tests for the estimator suite in multicause.estimators."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multicause.asymptotics import naive_bias
from multicause.errors import (
    CollinearityRiskError,
    DataError,
    DimensionError,
    DomainError,
    RankDeficiencyError,
    SeparationError,
    SpecificationError,
)
from multicause.estimators import (
    Annihilator,
    EstimateReport,
    _flexible_design,
    fit_ols,
    flexible_penalized,
    fwl_residualize,
    logistic_suite,
    naive,
    oracle,
    pca_cv_ridge,
    penalized_full,
    posterior_mean_deconfounder,
    quadratic_pair,
    semiparametric_naive,
    subset_deconfounder,
    subset_deconfounder_each,
    white_noised_deconfounder,
)
from multicause.factor import pca_substitute
from multicause.model import (
    Dataset,
    DgpSpec,
    make_subset_sim_spec,
    sample_linear_linear,
    sample_logistic,
    sample_quadratic,
)


def med_spec(beta=(0.0, 0.3)) -> DgpSpec:
    return DgpSpec(
        k=1,
        m=2,
        theta=np.array([[0.3, 0.4]]),
        beta=np.asarray(beta, dtype=float),
        gamma=np.array([0.5]),
        sigma2=1.0,
        omega2=1.0,
        focal_idx=(0, 1),
    )


def scalar_spec(beta: float) -> DgpSpec:
    return DgpSpec(
        k=1,
        m=1,
        theta=np.array([[1.0]]),
        beta=np.array([beta]),
        gamma=np.array([1.0]),
        sigma2=1.0,
        omega2=1.0,
        focal_idx=(0,),
    )


class TestEstimateReport:
    def test_interval_identity(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((100, 3))
        y = A @ np.array([1.0, -1.0, 0.5]) + rng.standard_normal(100)
        rep = fit_ols(A, y)
        assert np.allclose(rep.ci_low, rep.coefficients - 1.96 * rep.std_errors, atol=1e-12)
        assert np.allclose(rep.ci_high, rep.coefficients + 1.96 * rep.std_errors, atol=1e-12)

    def test_to_csv_schema(self):
        rng = np.random.default_rng(7)
        rep = fit_ols(rng.standard_normal((12, 4)), rng.standard_normal(12))
        lines = rep.to_csv().splitlines()
        assert lines[0] == "estimator,coef_index,estimate,std_error,ci_low,ci_high"
        assert len(lines) == 5
        assert lines[1].startswith("ols,0,")

    def test_inconsistent_lengths_rejected(self):
        with pytest.raises(DimensionError):
            EstimateReport(
                label="x",
                coefficients=np.zeros(2),
                std_errors=np.zeros(1),
                ci_low=np.zeros(2),
                ci_high=np.zeros(2),
                target_indices=(0, 1),
            )


class TestFitOls:
    def test_regressing_target_on_itself(self):
        y = np.arange(1.0, 21.0)
        rep = fit_ols(y[:, None], y)
        assert rep.coefficients[0] == pytest.approx(1.0, abs=1e-12)
        assert rep.std_errors[0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_pseudoinverse(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((80, 4))
        y = rng.standard_normal(80)
        rep = fit_ols(X, y)
        assert np.allclose(rep.coefficients, np.linalg.pinv(X) @ y, atol=1e-8)

    def test_treatments_plus_substitute_is_rank_deficient(self):
        ds = sample_linear_linear(med_spec(), n=400, seed=2)
        sub = pca_substitute(ds.A, k=1)
        with pytest.raises(RankDeficiencyError):
            fit_ols(np.column_stack([ds.A, sub.Zhat]), ds.Y)

    def test_intercept_centers_fit(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((200, 2))
        y = 5.0 + X @ np.array([1.0, 2.0]) + 0.1 * rng.standard_normal(200)
        rep = fit_ols(X, y, intercept=True)
        # Intercept occupies position 0.
        assert rep.coefficients[0] == pytest.approx(5.0, abs=0.05)
        assert rep.coefficients[1] == pytest.approx(1.0, abs=0.05)

    def test_more_columns_than_rows_rejected(self):
        with pytest.raises(DimensionError):
            fit_ols(np.ones((3, 5)), np.ones(3))

    def test_non_finite_rejected(self):
        X = np.ones((10, 1))
        y = np.ones(10)
        y[0] = np.inf
        with pytest.raises(DataError):
            fit_ols(X, y)


class TestAnnihilator:
    def test_idempotent_and_symmetric(self):
        rng = np.random.default_rng(4)
        W = rng.standard_normal((60, 3))
        ann = Annihilator(W)
        x = rng.standard_normal(60)
        once = ann.apply(x)
        twice = ann.apply(once)
        assert np.allclose(once, twice, atol=1e-8)
        u, v = rng.standard_normal(60), rng.standard_normal(60)
        assert u @ ann.apply(v) == pytest.approx(v @ ann.apply(u), abs=1e-8)

    def test_annihilates_controls(self):
        rng = np.random.default_rng(5)
        W = rng.standard_normal((50, 2))
        assert np.max(np.abs(Annihilator(W).apply(W))) < 1e-10

    def test_rank_deficient_controls_rejected(self):
        W = np.ones((20, 2))
        with pytest.raises(RankDeficiencyError):
            Annihilator(W)

    def test_matrix_argument(self):
        rng = np.random.default_rng(6)
        W = rng.standard_normal((40, 2))
        X = rng.standard_normal((40, 3))
        out = Annihilator(W).apply(X)
        assert out.shape == (40, 3)
        assert np.max(np.abs(W.T @ out)) < 1e-8


class TestOracleAndNaive:
    def test_oracle_recovers_truth(self):
        spec = med_spec()
        ds = sample_linear_linear(spec, n=1_000_000, seed=7)
        rep = oracle(ds)
        assert np.allclose(rep.coefficients, [0.0, 0.3], atol=0.01)
        assert rep.label == "oracle"
        assert rep.target_indices == (0, 1)

    def test_naive_hits_displaced_limit(self):
        spec = med_spec()
        ds = sample_linear_linear(spec, n=1_000_000, seed=8)
        rep = naive(ds)
        # beta + naive displacement = (0.12, 0.46).
        assert np.allclose(rep.coefficients, [0.12, 0.46], atol=0.01)

    def test_naive_displacement_matches_closed_form(self):
        spec = med_spec()
        ds = sample_linear_linear(spec, n=1_000_000, seed=9)
        rep = naive(ds)
        expected = spec.beta + naive_bias(spec.theta, spec.gamma, spec.sigma2)
        assert np.allclose(rep.coefficients, expected, atol=0.01)


class TestPenalizedFull:
    def test_scalar_gamma_limit(self):
        ds = sample_linear_linear(scalar_spec(0.0), n=1_000_000, seed=10)
        rep = penalized_full(ds, k=1, lam=math.sqrt(ds.n))
        assert rep.coefficients[0] == pytest.approx(1.0 / 3.0, abs=0.02)

    def test_scalar_beta_limit(self):
        ds = sample_linear_linear(scalar_spec(1.0), n=1_000_000, seed=11)
        rep = penalized_full(ds, k=1, lam=math.sqrt(ds.n))
        assert rep.coefficients[0] == pytest.approx(1.0, abs=0.02)

    def test_strong_loadings_nearly_unbiased(self):
        spec = DgpSpec(
            k=1,
            m=50,
            theta=np.full((1, 50), 100.0),
            beta=np.zeros(50),
            gamma=np.array([1.0]),
            sigma2=1.0,
            omega2=1.0,
            focal_idx=(0,),
        )
        ds = sample_linear_linear(spec, n=100_000, seed=12)
        rep = penalized_full(ds, k=1, lam=math.sqrt(ds.n))
        assert np.max(np.abs(rep.coefficients - spec.beta)) <= 0.02

    def test_zero_penalty_rank_deficient(self):
        ds = sample_linear_linear(med_spec(), n=500, seed=13)
        with pytest.raises(RankDeficiencyError):
            penalized_full(ds, k=1, lam=0.0)

    def test_negative_penalty_rejected(self):
        ds = sample_linear_linear(med_spec(), n=100, seed=14)
        with pytest.raises(DomainError):
            penalized_full(ds, k=1, lam=-1.0)


class TestFlexiblePenalized:
    def test_matches_penalized_on_linear_process(self):
        ds = sample_linear_linear(med_spec(), n=200_000, seed=15)
        lam = math.sqrt(ds.n)
        a = penalized_full(ds, k=1, lam=lam)
        b = flexible_penalized(ds, k=1, degree=2, lam=lam)
        assert np.max(np.abs(a.coefficients - b.coefficients)) < 0.03

    def test_basis_block_orthogonal_to_substitute(self):
        ds = sample_linear_linear(med_spec(), n=2000, seed=16)
        X = _flexible_design(ds, k=1, degree=3)
        sub = pca_substitute(ds.A, k=1)
        W = X[:, ds.m + 1 :]
        assert np.max(np.abs(sub.Zhat.T @ W)) < 1e-8

    def test_beats_penalized_under_quadratic_confounding(self):
        # Linear treatments, quadratic confounding: (A, Z) equicorrelated
        # at 0.4 and Y = 0.4 + 0.2 A1 + 1.0 A2 + 0.9 Z^2 + noise. The
        # quadratic substitute term tracks Z^2, so the flexible fit's
        # focal bias must come out smaller.
        reps, n = 200, 2000
        lam = math.sqrt(n)
        errs_flex = np.zeros(reps)
        errs_pen = np.zeros(reps)
        for r in range(reps):
            base = sample_quadratic(rho=0.4, n=n, seed=1000 + r)
            rng = np.random.default_rng(5000 + r)
            Y = (
                0.4
                + 0.2 * base.A[:, 0]
                + 1.0 * base.A[:, 1]
                + 0.9 * base.Z[:, 0] ** 2
                + rng.standard_normal(n)
            )
            ds = Dataset(Z=base.Z, A=base.A, Y=Y, n=n)
            errs_flex[r] = flexible_penalized(ds, k=1, degree=2, lam=lam).coefficients[0] - 0.2
            errs_pen[r] = penalized_full(ds, k=1, lam=lam).coefficients[0] - 0.2
        assert abs(errs_flex.mean()) < abs(errs_pen.mean())

    def test_degree_below_two_rejected(self):
        ds = sample_linear_linear(med_spec(), n=100, seed=17)
        with pytest.raises(DomainError):
            flexible_penalized(ds, k=1, degree=1, lam=10.0)


class TestPosteriorMeanDeconfounder:
    def test_bias_matches_closed_form(self):
        spec = med_spec()
        ds = sample_linear_linear(spec, n=100_000, seed=18)
        rep = posterior_mean_deconfounder(ds, k=1, n_draws=100, seed=19)
        displacement = rep.coefficients - spec.beta
        assert np.allclose(displacement, [0.12, 0.16], atol=0.03)

    def test_unconfounded_outcome_unbiased(self):
        spec = DgpSpec(
            k=1,
            m=2,
            theta=np.array([[0.3, 0.4]]),
            beta=np.array([0.0, 0.3]),
            gamma=np.array([0.0]),
            sigma2=1.0,
            omega2=1.0,
            focal_idx=(0, 1),
        )
        ds = sample_linear_linear(spec, n=100_000, seed=20)
        rep = posterior_mean_deconfounder(ds, k=1, n_draws=50, seed=21)
        assert np.allclose(rep.coefficients, spec.beta, atol=0.02)

    def test_needs_at_least_two_draws(self):
        ds = sample_linear_linear(med_spec(), n=1000, seed=22)
        with pytest.raises((DomainError, SpecificationError)):
            posterior_mean_deconfounder(ds, k=1, n_draws=1, seed=0)

    def test_determinism(self):
        ds = sample_linear_linear(med_spec(), n=2000, seed=23)
        a = posterior_mean_deconfounder(ds, k=1, n_draws=10, seed=5)
        b = posterior_mean_deconfounder(ds, k=1, n_draws=10, seed=5)
        assert np.array_equal(a.coefficients, b.coefficients)


class TestWhiteNoisedDeconfounder:
    def test_scalar_displacement(self):
        ds = sample_linear_linear(scalar_spec(0.0), n=1_000_000, seed=24)
        rep = white_noised_deconfounder(ds, k=1, psi2=1.0, seed=25)
        assert rep.coefficients[0] == pytest.approx(0.5, abs=0.02)

    def test_nonpositive_noise_rejected(self):
        ds = sample_linear_linear(med_spec(), n=200, seed=26)
        with pytest.raises(DomainError):
            white_noised_deconfounder(ds, k=1, psi2=0.0, seed=0)


class TestSubsetDeconfounder:
    def test_displacement_on_constant_design(self):
        # The fitted focal coefficient lands at beta_1 minus the
        # mean of the nonfocal coefficients.
        spec = make_subset_sim_spec(m=3, beta_rule=("const", 10.0))
        ds = sample_linear_linear(spec, n=100_000, seed=27)
        rep = subset_deconfounder(ds, focal_idx=(0,), k=1)
        assert abs(rep.coefficients[0] - spec.beta[0]) == pytest.approx(10.0, abs=0.05)
        assert rep.coefficients[0] == pytest.approx(spec.beta[0] - 10.0, abs=0.05)

    def test_structural_collinearity_rejected(self):
        ds = sample_linear_linear(med_spec(), n=500, seed=28)
        with pytest.raises(CollinearityRiskError):
            subset_deconfounder(ds, focal_idx=(0,), k=1)

    def test_focal_out_of_range_rejected(self):
        spec = make_subset_sim_spec(m=4, beta_rule=("const", 1.0))
        ds = sample_linear_linear(spec, n=500, seed=29)
        with pytest.raises(SpecificationError):
            subset_deconfounder(ds, focal_idx=(4,), k=1)

    def test_each_matches_separate_fits(self):
        spec = make_subset_sim_spec(m=5, beta_rule="reciprocal")
        ds = sample_linear_linear(spec, n=3000, seed=30)
        bundle = subset_deconfounder_each(ds, k=1)
        assert bundle.target_indices == (0, 1, 2, 3, 4)
        for j in range(5):
            single = subset_deconfounder(ds, focal_idx=(j,), k=1)
            assert bundle.coefficients[j] == pytest.approx(single.coefficients[0], abs=1e-8)
            assert bundle.std_errors[j] == pytest.approx(single.std_errors[0], abs=1e-8)

    def test_each_needs_headroom(self):
        ds = sample_linear_linear(med_spec(), n=500, seed=31)
        with pytest.raises(CollinearityRiskError):
            subset_deconfounder_each(ds, k=1)


class TestPcaCvRidge:
    def test_deterministic(self):
        ds = sample_linear_linear(med_spec(), n=2000, seed=32)
        a = pca_cv_ridge(ds, k=1)
        b = pca_cv_ridge(ds, k=1)
        assert np.array_equal(a.coefficients, b.coefficients)

    def test_reports_all_treatments(self):
        ds = sample_linear_linear(med_spec(), n=2000, seed=33)
        rep = pca_cv_ridge(ds, k=1)
        assert rep.target_indices == (0, 1)
        assert rep.label == "pca_cv_ridge"

    def test_too_few_folds_rejected(self):
        ds = sample_linear_linear(med_spec(), n=2000, seed=34)
        with pytest.raises(DomainError):
            pca_cv_ridge(ds, k=1, folds=1)

    def test_shrinks_relative_to_naive_displacement(self):
        # Cross-validated ridge on [A, Zhat] shrinks the fitted vector,
        # pulling the second coefficient below the naive limit.
        spec = med_spec()
        ds = sample_linear_linear(spec, n=20_000, seed=35)
        rep = pca_cv_ridge(ds, k=1)
        naive_limit = spec.beta + naive_bias(spec.theta, spec.gamma, spec.sigma2)
        assert rep.coefficients[1] < naive_limit[1]


class TestQuadraticPair:
    def test_independent_design_both_unbiased(self):
        reps = 40
        errs_d = np.zeros((reps, 2))
        errs_p = np.zeros((reps, 2))
        for r in range(reps):
            ds = sample_quadratic(rho=0.0, n=4000, seed=2000 + r)
            d, p = quadratic_pair(ds)
            errs_d[r] = d.coefficients - [0.2, 1.0]
            errs_p[r] = p.coefficients - [0.2, 1.0]
        assert np.max(np.abs(errs_d.mean(axis=0))) < 0.03
        assert np.max(np.abs(errs_p.mean(axis=0))) < 0.03

    def test_correlated_design_parametric_dominates(self):
        reps = 50
        err_d = np.zeros((reps, 2))
        err_p = np.zeros((reps, 2))
        for r in range(reps):
            ds = sample_quadratic(rho=-0.3, n=4000, seed=3000 + r)
            d, p = quadratic_pair(ds)
            err_d[r] = d.coefficients - [0.2, 1.0]
            err_p[r] = p.coefficients - [0.2, 1.0]
        rmse_d = np.sqrt((err_d**2).mean(axis=0)).mean()
        rmse_p = np.sqrt((err_p**2).mean(axis=0)).mean()
        assert rmse_p < rmse_d

    def test_wrong_treatment_count_rejected(self):
        ds = sample_quadratic(rho=0.2, n=500, seed=36, m=3)
        with pytest.raises(DimensionError):
            quadratic_pair(ds)


class TestLogisticSuite:
    def test_non_binary_outcome_rejected(self):
        ds = sample_linear_linear(med_spec(), n=500, seed=37)
        with pytest.raises(DataError):
            logistic_suite(ds, psi2=0.01, seed=0)

    def test_matches_reference_implementation(self):
        sm = pytest.importorskip("statsmodels.api")
        ds = sample_logistic(n=2000, seed=38)
        plain, _ = logistic_suite(ds, psi2=0.01, seed=39)
        X = np.column_stack([np.ones(ds.n), ds.A])
        ref = sm.GLM(ds.Y, X, family=sm.families.Binomial()).fit()
        assert np.allclose(plain.coefficients, ref.params[1:3], atol=1e-8)
        assert np.allclose(plain.std_errors, ref.bse[1:3], atol=1e-6)

    def test_separation_detected(self):
        rng = np.random.default_rng(40)
        n = 80
        a1 = np.concatenate([np.full(40, -2.0), np.full(40, 2.0)])
        a1 = a1 + 0.1 * rng.standard_normal(n)
        A = np.column_stack([a1, rng.standard_normal(n)])
        Y = (a1 > 0).astype(float)
        ds = Dataset(Z=np.zeros((n, 1)), A=A, Y=Y, n=n)
        with pytest.raises(SeparationError):
            logistic_suite(ds, psi2=0.01, seed=41)

    def test_noise_grows_pulls_deconf_to_plain(self):
        ds = sample_logistic(n=4000, seed=42)
        plain, deconf_much = logistic_suite(ds, psi2=100.0, seed=43)
        _, deconf_little = logistic_suite(ds, psi2=1e-4, seed=43)
        gap_much = np.max(np.abs(deconf_much.coefficients - plain.coefficients))
        gap_little = np.max(np.abs(deconf_little.coefficients - plain.coefficients))
        assert gap_much < gap_little

    def test_labels(self):
        ds = sample_logistic(n=1000, seed=44)
        plain, deconf = logistic_suite(ds, psi2=0.01, seed=45)
        assert plain.label == "logistic_naive"
        assert deconf.label == "logistic_deconf"
        assert plain.target_indices == (0, 1)


class TestFwlResidualize:
    def test_controls_annihilate_themselves(self):
        rng = np.random.default_rng(46)
        W = rng.standard_normal((100, 3))
        out = fwl_residualize(W, W)
        assert np.max(np.abs(out)) < 1e-10

    def test_naive_coefficient_identity(self):
        # Coefficient j of the joint fit equals the ratio of moments of
        # the residualized pieces.
        ds = sample_linear_linear(med_spec(), n=5000, seed=47)
        rep = naive(ds)
        for j in range(2):
            others = [i for i in range(2) if i != j]
            a_t = fwl_residualize(ds.A[:, j], ds.A[:, others])
            y_t = fwl_residualize(ds.Y, ds.A[:, others])
            direct = (a_t @ y_t) / (a_t @ a_t)
            assert rep.coefficients[j] == pytest.approx(direct, abs=1e-8)

    def test_subset_focal_identity(self):
        # The subset fit's focal coefficient equals the regression of
        # the substitute-residualized outcome on the substitute-
        # residualized focal treatment.
        spec = make_subset_sim_spec(m=4, beta_rule=("const", 2.0))
        ds = sample_linear_linear(spec, n=4000, seed=48)
        sub = pca_substitute(ds.A, k=1)
        rep = subset_deconfounder(ds, focal_idx=(1,), k=1)
        a_t = fwl_residualize(ds.A[:, 1], sub.Zhat)
        y_t = fwl_residualize(ds.Y, sub.Zhat)
        direct = (a_t @ y_t) / (a_t @ a_t)
        assert rep.coefficients[0] == pytest.approx(direct, abs=1e-8)

    def test_polynomial_basis_differs_from_linear(self):
        rng = np.random.default_rng(49)
        w = rng.standard_normal(500)
        target = w**2 + 0.1 * rng.standard_normal(500)
        lin = fwl_residualize(target, w)
        quad = fwl_residualize(target, w, flexible_basis=2)
        assert np.std(quad) < np.std(lin)

    def test_unrecognized_basis_rejected(self):
        with pytest.raises(DomainError):
            fwl_residualize(np.ones(10), np.arange(10.0), flexible_basis="spline")


class TestSemiparametricNaive:
    def test_linear_basis_matches_naive(self):
        ds = sample_linear_linear(med_spec(), n=5000, seed=50)
        rep_full = naive(ds)
        rep_semi = semiparametric_naive(ds, focal_idx=(0,), basis=1)
        assert rep_semi.coefficients[0] == pytest.approx(rep_full.coefficients[0], abs=1e-8)
        assert rep_semi.label == "semiparametric_naive"

    def test_string_basis_accepted(self):
        ds = sample_linear_linear(med_spec(), n=2000, seed=51)
        a = semiparametric_naive(ds, focal_idx=(0,), basis="polynomial(2)")
        b = semiparametric_naive(ds, focal_idx=(0,), basis=2)
        assert np.allclose(a.coefficients, b.coefficients, atol=1e-12)

    def test_all_focal_reduces_to_naive(self):
        ds = sample_linear_linear(med_spec(), n=3000, seed=52)
        rep = semiparametric_naive(ds, focal_idx=(0, 1), basis=1)
        full = naive(ds)
        assert np.allclose(rep.coefficients, full.coefficients, atol=1e-8)

    def test_oversized_basis_rejected(self):
        spec = make_subset_sim_spec(m=3, beta_rule=("const", 1.0))
        ds = sample_linear_linear(spec, n=12, seed=53)
        with pytest.raises(DimensionError):
            semiparametric_naive(ds, focal_idx=(0,), basis=12)


class TestZeroPenaltyGuarantee:
    def test_random_specs_always_rank_deficient(self):
        rng = np.random.default_rng(54)
        for trial in range(10):
            k = int(rng.integers(1, 3))
            m = int(rng.integers(k + 1, k + 4))
            theta = rng.standard_normal((k, m))
            spec = DgpSpec(
                k=k,
                m=m,
                theta=theta,
                beta=rng.standard_normal(m),
                gamma=rng.standard_normal(k),
                sigma2=float(rng.uniform(0.3, 2.0)),
                omega2=1.0,
                focal_idx=(0,),
            )
            ds = sample_linear_linear(spec, n=int(rng.integers(200, 500)), seed=trial)
            with pytest.raises(RankDeficiencyError):
                penalized_full(ds, k=k, lam=0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_annihilator_idempotence_property(seed_val):
    rng = np.random.default_rng(seed_val)
    n = int(rng.integers(20, 60))
    p = int(rng.integers(1, 4))
    W = rng.standard_normal((n, p))
    ann = Annihilator(W)
    x = rng.standard_normal(n)
    once = ann.apply(x)
    assert np.allclose(ann.apply(once), once, atol=1e-8)
    assert np.max(np.abs(W.T @ once)) < 1e-8 * max(1.0, np.abs(x).max()) * n
