"""Outcome-stage estimators.

Every estimator consumes a :class:`~multicause.model.Dataset` and
returns an :class:`EstimateReport` with coefficients, classical
homoskedastic standard errors, and 95% intervals. The linear designs
served by this package are zero-mean, so linear fits carry no intercept;
the quadratic and logistic tutorial regressions include one.

All linear solves go through decompositions (SVD or symmetric
eigendecompositions), never explicit inverses. A design whose Gram
matrix has condition number above 1e12 is treated as rank deficient and
raises instead of returning numbers.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CollinearityRiskError,
    ConvergenceError,
    DataError,
    DimensionError,
    DomainError,
    InstabilityError,
    RankDeficiencyError,
    SeparationError,
    SpecificationError,
)
from .factor import add_white_noise, pca_substitute, ppca_mle, ppca_posterior, sample_posterior_confounder
from .model import Dataset, as_generator

__all__ = [
    "EstimateReport",
    "Annihilator",
    "fit_ols",
    "oracle",
    "naive",
    "penalized_full",
    "flexible_penalized",
    "posterior_mean_deconfounder",
    "white_noised_deconfounder",
    "subset_deconfounder",
    "subset_deconfounder_each",
    "pca_cv_ridge",
    "quadratic_naive",
    "quadratic_deconf",
    "quadratic_pair",
    "logistic_suite",
    "fwl_residualize",
    "semiparametric_naive",
]

logger = logging.getLogger(__name__)

#: Condition-number threshold on the Gram matrix beyond which a design
#: counts as rank deficient.
COND_LIMIT = 1e12

#: Normal critical value for 95% intervals.
Z_95 = 1.96


@dataclass(frozen=True, eq=False)
class EstimateReport:
    """Coefficients with classical standard errors and 95% intervals.

    Attributes
    ----------
    label : str
        Estimator name.
    coefficients : (q,) ndarray
    std_errors : (q,) ndarray
        Classical homoskedastic standard errors.
    ci_low, ci_high : (q,) ndarray
        ``coefficients -/+ 1.96 * std_errors``.
    target_indices : tuple of int
        Which treatment positions (zero-based) the entries refer to.
    """

    label: str
    coefficients: np.ndarray
    std_errors: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    target_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        q = len(self.coefficients)
        if not (len(self.std_errors) == len(self.ci_low) == len(self.ci_high) == q):
            raise DimensionError("report fields have inconsistent lengths")
        if len(self.target_indices) != q:
            raise DimensionError("target_indices length does not match coefficients")

    def to_csv(self) -> str:
        """Serialize as CSV with header
        ``estimator,coef_index,estimate,std_error,ci_low,ci_high``."""
        lines = ["estimator,coef_index,estimate,std_error,ci_low,ci_high"]
        for i, idx in enumerate(self.target_indices):
            lines.append(
                f"{self.label},{idx},{self.coefficients[i]:.10g},"
                f"{self.std_errors[i]:.10g},{self.ci_low[i]:.10g},"
                f"{self.ci_high[i]:.10g}"
            )
        return "\n".join(lines) + "\n"


def _make_report(label: str, coef, se, target_indices) -> EstimateReport:
    coef = np.asarray(coef, dtype=float)
    se = np.asarray(se, dtype=float)
    low = coef - Z_95 * se
    high = coef + Z_95 * se
    for arr in (coef, se, low, high):
        arr.setflags(write=False)
    return EstimateReport(
        label=label,
        coefficients=coef,
        std_errors=se,
        ci_low=low,
        ci_high=high,
        target_indices=tuple(int(j) for j in target_indices),
    )


def _slice_report(report: EstimateReport, positions, target_indices, label=None) -> EstimateReport:
    positions = list(positions)
    return _make_report(
        label if label is not None else report.label,
        report.coefficients[positions],
        report.std_errors[positions],
        target_indices,
    )


class Annihilator:
    """Projection onto the orthogonal complement of a control block.

    Represents ``M = I - W (W'W)^{-1} W'`` implicitly through the thin
    QR factorization of ``W``; ``apply`` computes ``M x`` without ever
    forming the ``n x n`` matrix. ``M`` is symmetric and idempotent.

    Parameters
    ----------
    W : (n, p) array_like
        Control block; must have full column rank.

    Raises
    ------
    RankDeficiencyError
        If ``W`` is rank deficient.
    """

    def __init__(self, W) -> None:
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        if W.ndim != 2 or W.shape[0] <= W.shape[1]:
            raise DimensionError(f"control block of shape {W.shape} is not tall")
        if not np.all(np.isfinite(W)):
            raise DataError("control block contains non-finite entries")
        Q, R = np.linalg.qr(W, mode="reduced")
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-12 * max(1.0, diag.max()):
            raise RankDeficiencyError("control block is rank deficient")
        self._W = W
        self._Q = Q

    @property
    def controls(self) -> np.ndarray:
        """The control block ``W``."""
        return self._W

    def apply(self, X) -> np.ndarray:
        """Return ``X`` minus its least-squares projection onto ``W``."""
        X = np.asarray(X, dtype=float)
        vector = X.ndim == 1
        Xm = X[:, None] if vector else X
        out = Xm - self._Q @ (self._Q.T @ Xm)
        return out[:, 0] if vector else out


def _design(X, intercept: bool) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"design must be a matrix, got shape {X.shape}")
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


def fit_ols(X, Y, intercept: bool = False) -> EstimateReport:
    """Ordinary least squares with classical standard errors.

    Parameters
    ----------
    X : (n, p) array_like
        Design matrix (a vector is treated as one column).
    Y : (n,) array_like
    intercept : bool, default False
        Prepend an unpenalized constant column; it occupies coefficient
        position 0 of the returned report.

    Returns
    -------
    EstimateReport
        Full coefficient vector; ``std_errors`` from
        ``sigma2_hat (X'X)^{-1}`` with ``sigma2_hat = RSS / (n - p)``.

    Raises
    ------
    RankDeficiencyError
        If the Gram matrix's condition number exceeds 1e12.
    DimensionError
        If ``n <= p``.
    DataError
        On non-finite inputs.
    """
    X = _design(X, intercept)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    n, p = X.shape
    if Y.shape[0] != n:
        raise DimensionError(f"X has {n} rows but Y has {Y.shape[0]}")
    if n <= p:
        raise DimensionError(f"need n > p, got n={n}, p={p}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DataError("design or outcome contains non-finite entries")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[-1] <= 0 or 2.0 * math.log10(s[0] / s[-1]) > math.log10(COND_LIMIT):
        raise RankDeficiencyError(
            "design is rank deficient (Gram condition number above 1e12)"
        )
    coef = Vt.T @ ((U.T @ Y) / s)
    resid = Y - X @ coef
    sigma2_hat = float(resid @ resid) / (n - p)
    gram_inv_diag = np.einsum("ji,j->i", Vt**2, 1.0 / s**2)
    se = np.sqrt(sigma2_hat * gram_inv_diag)
    return _make_report("ols", coef, se, range(p))


def oracle(ds: Dataset) -> EstimateReport:
    """Infeasible benchmark: regress the outcome on treatments and the
    true confounders; report the treatment coefficients."""
    fit = fit_ols(np.column_stack([ds.A, ds.Z]), ds.Y)
    return _slice_report(fit, range(ds.m), range(ds.m), "oracle")


def naive(ds: Dataset) -> EstimateReport:
    """Regress the outcome on the treatments only."""
    fit = fit_ols(ds.A, ds.Y)
    return _slice_report(fit, range(ds.m), range(ds.m), "naive")


def _ridge_eigh(X: np.ndarray, Y: np.ndarray, lam: float):
    """Ridge solution and ingredients via the Gram eigendecomposition.

    Eigenvalues are clipped at zero: the Gram matrix is positive
    semidefinite in exact arithmetic, but eigh can return trailing
    values slightly below zero on badly scaled collinear designs.
    """
    G = X.T @ X
    w, Q = np.linalg.eigh(G)
    w = np.clip(w, 0.0, None)
    c = Q.T @ (X.T @ Y)
    coef = Q @ (c / (w + lam))
    return coef, w, Q


def _ridge_report(label: str, X: np.ndarray, Y: np.ndarray, lam: float, df: int) -> EstimateReport:
    coef, w, Q = _ridge_eigh(X, Y, lam)
    resid = Y - X @ coef
    sigma2_hat = float(resid @ resid) / df
    var_diag = sigma2_hat * np.einsum("ij,j->i", Q**2, w / (w + lam) ** 2)
    return _make_report(label, coef, np.sqrt(var_diag), range(X.shape[1]))


def penalized_full(ds: Dataset, k: int, lam: float) -> EstimateReport:
    """Ridge regression of the outcome on treatments plus substitute.

    The substitute confounder is an exact linear function of the
    treatments, so only the penalty makes the fit estimable: ``lam = 0``
    routes to :func:`fit_ols` and raises its rank-deficiency error.

    Parameters
    ----------
    ds : Dataset
    k : int
        Substitute dimension.
    lam : float
        Ridge penalty, nonnegative; applied to every coefficient.

    Returns
    -------
    EstimateReport
        The ``m`` treatment coefficients.
    """
    if lam < 0:
        raise DomainError(f"lam must be >= 0, got {lam}")
    sub = pca_substitute(ds.A, k)
    X = np.column_stack([ds.A, sub.Zhat])
    if lam == 0:
        fit = fit_ols(X, ds.Y)
        return _slice_report(fit, range(ds.m), range(ds.m), "penalized")
    n, p = X.shape
    if n <= p:
        raise DimensionError(f"need n > p, got n={n}, p={p}")
    fit = _ridge_report("penalized", X, ds.Y, float(lam), n - p)
    return _slice_report(fit, range(ds.m), range(ds.m), "penalized")


def _monomials(Z: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of the columns of ``Z`` with total degree 2..degree."""
    n, k = Z.shape
    cols = []
    for d in range(2, degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), d):
            col = np.ones(n)
            for j in combo:
                col = col * Z[:, j]
            cols.append(col)
    return np.column_stack(cols)


def flexible_penalized(ds: Dataset, k: int, degree: int, lam: float) -> EstimateReport:
    """Ridge on treatments, substitute, and nonlinear substitute terms.

    Builds the polynomial basis of the substitute confounder up to
    ``degree``, orthogonalizes it against the substitute itself to
    obtain a block ``W`` (orthonormal columns scaled to squared norm
    ``n``), and ridge-regresses the outcome on ``[A, Zhat, W]``.

    Parameters
    ----------
    ds : Dataset
    k : int
    degree : int
        Polynomial degree, at least 2.
    lam : float
        Ridge penalty, strictly positive.

    Returns
    -------
    EstimateReport
        The ``m`` treatment coefficients.
    """
    if degree < 2:
        raise DomainError(f"degree must be >= 2, got {degree}")
    if not lam > 0:
        raise DomainError(f"lam must be > 0, got {lam}")
    X = _flexible_design(ds, k, degree)
    n = ds.n
    fit = _ridge_report("flexible_penalized", X, ds.Y, float(lam), n - X.shape[1])
    return _slice_report(fit, range(ds.m), range(ds.m), "flexible_penalized")


def _flexible_design(ds: Dataset, k: int, degree: int) -> np.ndarray:
    """Design block ``[A, Zhat, W]`` with ``W`` the polynomial terms of
    the substitute orthogonalized against it (orthonormal columns scaled
    to squared norm n)."""
    sub = pca_substitute(ds.A, k)
    H = _monomials(sub.Zhat, degree)
    n = ds.n
    if ds.m + k + H.shape[1] >= n:
        raise DimensionError(
            f"basis of {H.shape[1]} columns plus design exceeds n={n}"
        )
    resid = Annihilator(sub.Zhat).apply(H)
    Q, R = np.linalg.qr(resid, mode="reduced")
    diag = np.abs(np.diag(R))
    keep = diag > 1e-10 * max(1.0, diag.max())
    W = math.sqrt(n) * Q[:, keep]
    return np.column_stack([ds.A, sub.Zhat, W])


def posterior_mean_deconfounder(
    ds: Dataset, k: int, n_draws: int, seed
) -> EstimateReport:
    """Average least-squares fits over posterior draws of the confounder.

    Recovers factor parameters by maximum likelihood, draws the
    confounder from its posterior ``n_draws`` times, regresses the
    outcome on treatments plus each draw, and averages the coefficient
    vectors. Standard errors combine within-draw variance and
    between-draw spread (law of total variance with a small-draw-count
    correction).

    Parameters
    ----------
    ds : Dataset
    k : int
    n_draws : int
        At least 2.
    seed : seed-like

    Returns
    -------
    EstimateReport
        The ``m`` treatment coefficients.

    Raises
    ------
    InstabilityError
        If more than half of the attempted draws are rejected for rank
        deficiency.
    """
    if n_draws < 2:
        raise DomainError(f"n_draws must be >= 2, got {n_draws}")
    theta_hat, sigma2_hat = ppca_mle(ds.A, k)
    post = ppca_posterior(ds.A, theta_hat, sigma2_hat)
    rng = as_generator(seed)
    coefs, ses = [], []
    rejected = 0
    attempts = 0
    while len(coefs) < n_draws and attempts < 2 * n_draws:
        attempts += 1
        z_star = sample_posterior_confounder(post, rng)
        try:
            fit = fit_ols(np.column_stack([ds.A, z_star]), ds.Y)
        except RankDeficiencyError:
            rejected += 1
            continue
        coefs.append(fit.coefficients)
        ses.append(fit.std_errors)
    if rejected:
        logger.info("posterior-mean fit rejected %d of %d draws", rejected, attempts)
    if len(coefs) < n_draws:
        raise InstabilityError(
            f"more than half of the posterior draws were rank deficient "
            f"({rejected} of {attempts})"
        )
    coefs = np.asarray(coefs)
    ses = np.asarray(ses)
    mean_coef = coefs.mean(axis=0)
    within = (ses**2).mean(axis=0)
    between = coefs.var(axis=0, ddof=1)
    total_se = np.sqrt(within + (1.0 + 1.0 / n_draws) * between)
    full = _make_report("posterior_mean", mean_coef, total_se, range(coefs.shape[1]))
    return _slice_report(full, range(ds.m), range(ds.m), "posterior_mean")


def white_noised_deconfounder(ds: Dataset, k: int, psi2: float, seed) -> EstimateReport:
    """Regress the outcome on treatments plus a noise-broken substitute.

    Adds ``N(0, psi2)`` noise to the substitute confounder so the design
    is no longer collinear, then runs ordinary least squares.

    Parameters
    ----------
    ds : Dataset
    k : int
    psi2 : float
        Strictly positive noise variance.
    seed : seed-like

    Returns
    -------
    EstimateReport
        The ``m`` treatment coefficients.
    """
    sub = pca_substitute(ds.A, k)
    z_noisy = add_white_noise(sub.Zhat, psi2, seed)
    fit = fit_ols(np.column_stack([ds.A, z_noisy]), ds.Y)
    return _slice_report(fit, range(ds.m), range(ds.m), "white_noised")


def _validate_focal(focal_idx, m: int) -> tuple[int, ...]:
    focal = tuple(int(j) for j in focal_idx)
    if len(focal) == 0:
        raise SpecificationError("focal_idx must be nonempty")
    if len(set(focal)) != len(focal):
        raise SpecificationError(f"focal_idx has duplicates: {focal}")
    if any(j < 0 or j >= m for j in focal):
        raise SpecificationError(f"focal_idx out of bounds for m={m}: {focal}")
    return focal


def subset_deconfounder(ds: Dataset, focal_idx, k: int) -> EstimateReport:
    """Regress the outcome on focal treatments plus the substitute.

    The substitute confounder is extracted from all ``m`` treatments;
    only the focal columns enter the regression alongside it. Requires
    ``len(focal_idx) + k < m`` so the design is not structurally
    collinear.

    Parameters
    ----------
    ds : Dataset
    focal_idx : iterable of int
        Zero-based focal positions.
    k : int

    Returns
    -------
    EstimateReport
        The focal coefficients, indexed by ``focal_idx``.
    """
    focal = _validate_focal(focal_idx, ds.m)
    if len(focal) + k >= ds.m:
        raise CollinearityRiskError(
            f"need |focal| + k < m, got {len(focal)} + {k} >= {ds.m}"
        )
    sub = pca_substitute(ds.A, k)
    X = np.column_stack([ds.A[:, list(focal)], sub.Zhat])
    fit = fit_ols(X, ds.Y)
    return _slice_report(fit, range(len(focal)), focal, "subset")


def subset_deconfounder_each(ds: Dataset, k: int) -> EstimateReport:
    """Run the focal-subset fit once per treatment and collect them.

    For every ``j``, fits the outcome on ``[A_j, Zhat]`` and records the
    coefficient on ``A_j``; entry ``j`` of the result comes from the fit
    where ``j`` was focal. Computed through residualization on the
    substitute, which is algebraically identical to the ``m`` separate
    least-squares fits.

    Parameters
    ----------
    ds : Dataset
    k : int

    Returns
    -------
    EstimateReport
        All ``m`` per-focal coefficients.
    """
    if 1 + k >= ds.m:
        raise CollinearityRiskError(
            f"need 1 + k < m for per-treatment subset fits, got m={ds.m}"
        )
    sub = pca_substitute(ds.A, k)
    ann = Annihilator(sub.Zhat)
    A_t = ann.apply(ds.A)
    y_t = ann.apply(ds.Y)
    den = np.einsum("ij,ij->j", A_t, A_t)
    if den.min() <= 0:
        raise RankDeficiencyError("a treatment is collinear with the substitute")
    num = A_t.T @ y_t
    coef = num / den
    rss = float(y_t @ y_t) - coef**2 * den
    df = ds.n - (1 + k)
    se = np.sqrt(np.maximum(rss, 0.0) / df / den)
    return _make_report("subset_each", coef, se, range(ds.m))


def pca_cv_ridge(ds: Dataset, k: int, folds: int = 10) -> EstimateReport:
    """Ridge on treatments plus substitute with cross-validated penalty.

    Mirrors the standard regularized-regression workflow: features are
    standardized on each training fold (the intercept is handled by
    centering and never penalized), the penalty grid is 50
    logarithmically spaced values spanning ``[1e-4 * lmax, lmax]`` with
    ``lmax`` the top eigenvalue of the full design Gram, fold membership
    is the deterministic pattern ``index mod folds``, and the selected
    penalty is the largest one whose cross-validated mean squared error
    is within one standard error of the minimum. The final fit uses the
    whole sample at the selected penalty; slope coefficients are
    returned on the original scale.

    Parameters
    ----------
    ds : Dataset
    k : int
        Substitute dimension.
    folds : int, default 10
        At least 2 and at most ``n``.

    Returns
    -------
    EstimateReport
        The ``m`` treatment coefficients; standard errors are the
        penalized-fit approximation on the standardized scale mapped
        back to the original scale.
    """
    if folds < 2:
        raise DomainError(f"folds must be >= 2, got {folds}")
    if folds > ds.n:
        raise DomainError(f"folds={folds} exceeds n={ds.n}")
    sub = pca_substitute(ds.A, k)
    X = np.column_stack([ds.A, sub.Zhat])
    y = ds.Y
    n, p = X.shape
    lmax = float(np.linalg.eigvalsh(X.T @ X).max())
    lambdas = np.geomspace(1e-4 * lmax, lmax, 50)
    fold_id = np.arange(n) % folds
    cv_mse = np.zeros((folds, len(lambdas)))
    for f in range(folds):
        train = fold_id != f
        Xtr, ytr = X[train], y[train]
        Xte, yte = X[~train], y[~train]
        mx = Xtr.mean(axis=0)
        sx = Xtr.std(axis=0)
        if sx.min() <= 0:
            raise RankDeficiencyError("a feature is constant within a training fold")
        my = ytr.mean()
        Xc = (Xtr - mx) / sx
        yc = ytr - my
        w, Q = np.linalg.eigh(Xc.T @ Xc)
        c = Q.T @ (Xc.T @ yc)
        Xte_c = (Xte - mx) / sx
        for li, lam in enumerate(lambdas):
            b = Q @ (c / (w + lam))
            pred = Xte_c @ b + my
            cv_mse[f, li] = float(np.mean((yte - pred) ** 2))
    mean_mse = cv_mse.mean(axis=0)
    se_mse = cv_mse.std(axis=0, ddof=1) / math.sqrt(folds)
    i_min = int(np.argmin(mean_mse))
    threshold = mean_mse[i_min] + se_mse[i_min]
    within = np.where(mean_mse <= threshold)[0]
    i_sel = int(within.max()) if within.size else i_min
    lam = float(lambdas[i_sel])
    mx = X.mean(axis=0)
    sx = X.std(axis=0)
    if sx.min() <= 0:
        raise RankDeficiencyError("a feature is constant")
    my = y.mean()
    Xc = (X - mx) / sx
    yc = y - my
    coef_std, w, Q = _ridge_eigh(Xc, yc, lam)
    resid = yc - Xc @ coef_std
    sigma2_hat = float(resid @ resid) / (n - p - 1)
    var_diag = sigma2_hat * np.einsum("ij,j->i", Q**2, w / (w + lam) ** 2)
    coef = coef_std / sx
    se = np.sqrt(var_diag) / sx
    full = _make_report("pca_cv_ridge", coef, se, range(p))
    return _slice_report(full, range(ds.m), range(ds.m), "pca_cv_ridge")


def quadratic_naive(ds: Dataset) -> EstimateReport:
    """Regress the outcome on squared treatments (plus intercept)."""
    fit = fit_ols(ds.A**2, ds.Y, intercept=True)
    return _slice_report(fit, range(1, ds.m + 1), range(ds.m), "quadratic_naive")


def quadratic_deconf(ds: Dataset, center: bool = True) -> EstimateReport:
    """Regress the outcome on squared treatments plus the squared substitute.

    Parameters
    ----------
    ds : Dataset
        From the quadratic design.
    center : bool, default True
        Subtract column means from the treatments before extracting the
        one-dimensional substitute (the tutorial convention).
    """
    A = ds.A - ds.A.mean(axis=0) if center else ds.A
    sub = pca_substitute(A, 1)
    X = np.column_stack([ds.A**2, sub.Zhat[:, 0] ** 2])
    fit = fit_ols(X, ds.Y, intercept=True)
    return _slice_report(fit, range(1, ds.m + 1), range(ds.m), "quadratic_deconf")


def quadratic_pair(ds: Dataset, center: bool = True) -> tuple[EstimateReport, EstimateReport]:
    """Two-treatment quadratic fits: substitute-based and parametric.

    The substitute-based fit regresses the outcome on
    ``[1, A_1^2, A_2^2, Zhat^2]``; the parametric alternative replaces
    the substitute term with ``(A_1 + A_2)^2``, the square of the
    conditional-expectation direction of the confounder given the
    treatments (the regression is invariant to that direction's scalar
    factor). Both report the coefficients on ``A_1^2`` and ``A_2^2``.

    Parameters
    ----------
    ds : Dataset
        Must have exactly two treatments.
    center : bool, default True

    Returns
    -------
    (deconf, parametric) : tuple of EstimateReport
    """
    if ds.m != 2:
        raise DimensionError(f"the paired quadratic fit needs m=2, got m={ds.m}")
    deconf = quadratic_deconf(ds, center=center)
    X = np.column_stack([ds.A**2, (ds.A[:, 0] + ds.A[:, 1]) ** 2])
    fit = fit_ols(X, ds.Y, intercept=True)
    parametric = _slice_report(fit, [1, 2], [0, 1], "quadratic_parametric")
    return deconf, parametric


def _irls_logistic(X: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-8):
    """Iteratively reweighted least squares for logistic regression.

    Returns ``(coef, cov)`` with ``cov`` the inverse Fisher information
    at convergence. Convergence is a deviance change below ``tol``;
    weights are clipped at 1e-10. Separation is flagged at convergence
    when the deviance is numerically zero (a perfect fit on a binary
    outcome) or any |linear predictor| exceeds 20, i.e. some fitted
    probability is within 2e-9 of 0 or 1.
    """
    n, p = X.shape
    beta = np.zeros(p)
    dev_old = math.inf
    for _ in range(max_iter):
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        w = np.clip(mu * (1.0 - mu), 1e-10, None)
        z = eta + (y - mu) / w
        WX = X * w[:, None]
        G = WX.T @ X
        try:
            beta = np.linalg.solve(G, WX.T @ z)
        except np.linalg.LinAlgError as exc:
            raise RankDeficiencyError("weighted design is singular") from exc
        eta = X @ beta
        mu = 1.0 / (1.0 + np.exp(-np.clip(eta, -700, 700)))
        mu_c = np.clip(mu, 1e-12, 1.0 - 1e-12)
        dev = -2.0 * float(y @ np.log(mu_c) + (1.0 - y) @ np.log1p(-mu_c))
        if abs(dev - dev_old) < tol:
            if dev < 1e-4 or np.max(np.abs(eta)) > 20.0:
                raise SeparationError(
                    "the outcome is (quasi-)separated: the converged fit "
                    "drives fitted probabilities to 0 or 1"
                )
            w = np.clip(mu * (1.0 - mu), 1e-10, None)
            G = (X * w[:, None]).T @ X
            cov = np.linalg.solve(G, np.eye(p))
            return beta, cov
        dev_old = dev
    raise ConvergenceError(f"logistic fit did not converge in {max_iter} iterations")


def logistic_suite(ds: Dataset, psi2: float, seed) -> tuple[EstimateReport, EstimateReport]:
    """Logistic fits with and without a noise-broken substitute.

    The plain fit regresses the binary outcome on
    ``[1, X_1, X_2]``. The substitute-based fit centers the treatments,
    extracts the one-dimensional principal-component score (component
    scaled by its singular value), adds ``N(0, psi2)`` noise, and
    regresses on ``[1, X_1, X_2, score]``. Both report the two treatment
    coefficients.

    Parameters
    ----------
    ds : Dataset
        From the logistic design; the outcome must be 0/1.
    psi2 : float
        Noise variance added to the score (a noise standard deviation of
        0.1 corresponds to ``psi2 = 0.01``).
    seed : seed-like

    Returns
    -------
    (plain, deconf) : tuple of EstimateReport
    """
    y = ds.Y
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise DataError("the logistic fits require a 0/1 outcome")
    X = ds.A
    ones = np.ones(ds.n)
    coef_n, cov_n = _irls_logistic(np.column_stack([ones, X]), y)
    plain = _make_report(
        "logistic_naive",
        coef_n[1:3],
        np.sqrt(np.diag(cov_n)[1:3]),
        (0, 1),
    )
    Ac = X - X.mean(axis=0)
    U, D, Vt = np.linalg.svd(Ac, full_matrices=False)
    j = int(np.argmax(np.abs(Vt[0])))
    if Vt[0, j] < 0:
        U[:, 0] *= -1.0
    score = (U[:, 0] * D[0])[:, None]
    z_noisy = add_white_noise(score, psi2, seed)
    coef_d, cov_d = _irls_logistic(np.column_stack([ones, X, z_noisy]), y)
    deconf = _make_report(
        "logistic_deconf",
        coef_d[1:3],
        np.sqrt(np.diag(cov_d)[1:3]),
        (0, 1),
    )
    return plain, deconf


def _parse_basis(basis) -> int:
    """Normalize a basis argument into a polynomial degree (1 = linear)."""
    if basis is None or basis == "linear":
        return 1
    if isinstance(basis, str):
        text = basis.strip()
        if text.startswith("polynomial(") and text.endswith(")"):
            try:
                return int(text[len("polynomial(") : -1])
            except ValueError:
                pass
        raise DomainError(f"unrecognized basis {basis!r}")
    degree = int(basis)
    if degree < 1:
        raise DomainError(f"basis degree must be >= 1, got {degree}")
    return degree


def _basis_block(controls: np.ndarray, degree: int) -> np.ndarray:
    """Per-column power expansion of the control block.

    Degree 1 returns the block unchanged (so residualization agrees
    exactly with a joint least-squares fit on zero-mean designs); higher
    degrees append columnwise powers and a constant column, since the
    even powers are not mean-zero.
    """
    if degree == 1:
        return controls
    blocks = [np.ones((controls.shape[0], 1))]
    blocks += [controls**d for d in range(1, degree + 1)]
    return np.column_stack(blocks)


def fwl_residualize(target, controls, flexible_basis=None) -> np.ndarray:
    """Residualize a target block on (a basis expansion of) controls.

    Parameters
    ----------
    target : (n,) or (n, q) array_like
    controls : (n, p) array_like
        Must have full column rank (after expansion).
    flexible_basis : None, int, or str, optional
        ``None`` or ``"linear"`` projects on the raw controls;
        an integer degree ``d >= 2`` (or ``"polynomial(d)"``) projects
        on columnwise powers 1..d plus a constant.

    Returns
    -------
    ndarray
        Same shape as ``target``.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim == 1:
        controls = controls[:, None]
    degree = _parse_basis(flexible_basis)
    W = _basis_block(controls, degree)
    target = np.asarray(target, dtype=float)
    if W.shape[1] >= W.shape[0]:
        raise DimensionError(
            f"expanded control block has {W.shape[1]} columns for "
            f"{W.shape[0]} rows"
        )
    return Annihilator(W).apply(target)


def semiparametric_naive(ds: Dataset, focal_idx, basis=1) -> EstimateReport:
    """Focal regression after flexibly partialling out nonfocal treatments.

    Residualizes the focal treatments and the outcome on a basis
    expansion of the nonfocal treatments, then regresses the residualized
    outcome on the residualized focal block. With a linear basis this
    reproduces the focal coefficients of the full treatments-only
    regression exactly.

    Parameters
    ----------
    ds : Dataset
    focal_idx : iterable of int
    basis : int or str, default 1
        Polynomial degree of the nonfocal expansion (1 = linear), or
        ``"linear"`` / ``"polynomial(d)"``.

    Returns
    -------
    EstimateReport
        The focal coefficients, indexed by ``focal_idx``; standard
        errors come from the residualized second-stage fit.
    """
    focal = _validate_focal(focal_idx, ds.m)
    nonfocal = [j for j in range(ds.m) if j not in set(focal)]
    A_f = ds.A[:, list(focal)]
    if nonfocal:
        A_f_t = fwl_residualize(A_f, ds.A[:, nonfocal], basis)
        y_t = fwl_residualize(ds.Y, ds.A[:, nonfocal], basis)
    else:
        A_f_t, y_t = A_f, ds.Y
    fit = fit_ols(A_f_t, y_t)
    return _slice_report(fit, range(len(focal)), focal, "semiparametric_naive")
