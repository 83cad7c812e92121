"""Closed-form large-sample oracles.

Every function here evaluates an exact limit formula — an asymptotic
bias, a Gram-matrix limit, a projection limit, or a posterior variance —
as a plain matrix computation. The Monte Carlo harness compares
estimators against these oracles.

All formulas are evaluated through linear solves against the bracketed
matrices (never explicit inverses), with symmetric solvers where
symmetry holds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFocalError, DomainError, RankDeficiencyError
from .factor import fix_eigvec_signs

__all__ = [
    "EigenStructure",
    "eigen_structure",
    "naive_bias",
    "naive_focal_bias",
    "penalized_bias",
    "posterior_mean_bias",
    "white_noised_bias",
    "white_noised_bias_limit",
    "subset_bias",
    "theta_hat_gram",
    "residual_dependence",
    "woodbury_projection",
    "pinpointing_variance",
]

#: Relative eigenvalue threshold below which a factor Gram is treated as
#: rank deficient.
_RANK_EPS = 1e-12


def _check_sigma2(sigma2: float) -> float:
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    return float(sigma2)


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be a finite matrix, got shape {arr.shape}")
    return arr


def _solve_spd(G: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Solve a symmetric system, raising a rank error when singular."""
    try:
        return np.linalg.solve(G, rhs)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(f"{what} is singular") from exc


@dataclass(frozen=True, eq=False)
class EigenStructure:
    """Eigendecompositions of the loading Gram matrices.

    Attributes
    ----------
    Q : (m, m) ndarray
        Orthonormal eigenvectors of ``theta' theta``, columns ordered by
        descending eigenvalue, each column's largest-magnitude entry
        positive.
    Lambda : (m,) ndarray
        Eigenvalues of ``theta' theta``, descending and clipped at zero;
        the trailing ``m - k`` values are numerically zero.
    R : (k, k) ndarray
        Orthonormal eigenvectors of ``theta theta'``, same ordering and
        sign convention.
    """

    Q: np.ndarray
    Lambda: np.ndarray
    R: np.ndarray


def eigen_structure(theta) -> EigenStructure:
    """Eigendecompositions of ``theta' theta`` and ``theta theta'``.

    Parameters
    ----------
    theta : (k, m) array_like

    Returns
    -------
    EigenStructure
    """
    theta = _as_matrix(theta, "theta")
    lam, Q = np.linalg.eigh(theta.T @ theta)
    order = np.argsort(lam)[::-1]
    lam, Q = np.clip(lam[order], 0.0, None), Q[:, order]
    fix_eigvec_signs(Q)
    lam_r, R = np.linalg.eigh(theta @ theta.T)
    order_r = np.argsort(lam_r)[::-1]
    R = R[:, order_r]
    fix_eigvec_signs(R)
    for arr in (Q, lam, R):
        arr.setflags(write=False)
    return EigenStructure(Q=Q, Lambda=lam, R=R)


def naive_bias(theta, gamma, sigma2: float) -> np.ndarray:
    """Asymptotic bias of the regression of the outcome on treatments only.

    Evaluates ``(theta' theta + sigma2 I)^{-1} theta' gamma``.

    Parameters
    ----------
    theta : (k, m) array_like
    gamma : (k,) array_like
    sigma2 : float

    Returns
    -------
    (m,) ndarray
    """
    sigma2 = _check_sigma2(sigma2)
    theta = _as_matrix(theta, "theta")
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    m = theta.shape[1]
    G = theta.T @ theta + sigma2 * np.eye(m)
    return _solve_spd(G, theta.T @ gamma, "theta' theta + sigma2 I")


def naive_focal_bias(theta_F, theta_N, gamma, sigma2: float) -> np.ndarray:
    """Focal-block form of the treatments-only regression bias.

    With ``Omega = theta_N (theta_N' theta_N + sigma2 I)^{-1} theta_N'``,
    evaluates
    ``[theta_F' theta_F + sigma2 I - theta_F' Omega theta_F]^{-1}
    [theta_F' - theta_F' Omega] gamma``. This equals the full-design
    bias restricted to the focal coordinates (a block-inverse identity).

    Parameters
    ----------
    theta_F : (k, m_F) array_like
        Focal loading columns.
    theta_N : (k, m_N) array_like
        Nonfocal loading columns; ``m_N`` may be zero, in which case the
        result reduces to ``naive_bias(theta_F, gamma, sigma2)``.
    gamma : (k,) array_like
    sigma2 : float

    Returns
    -------
    (m_F,) ndarray
    """
    sigma2 = _check_sigma2(sigma2)
    theta_F = _as_matrix(theta_F, "theta_F")
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    k, m_F = theta_F.shape
    theta_N = np.asarray(theta_N, dtype=float).reshape(k, -1)
    if theta_N.shape[1] == 0:
        omega = np.zeros((k, k))
    else:
        m_N = theta_N.shape[1]
        inner = theta_N.T @ theta_N + sigma2 * np.eye(m_N)
        omega = theta_N @ _solve_spd(inner, theta_N.T, "theta_N' theta_N + sigma2 I")
    bracket = theta_F.T @ theta_F + sigma2 * np.eye(m_F) - theta_F.T @ omega @ theta_F
    rhs = theta_F.T @ (gamma - omega @ gamma)
    return _solve_spd(bracket, rhs, "focal bracket")


def penalized_bias(theta, beta, gamma, sigma2: float) -> np.ndarray:
    """Asymptotic bias of the ridge fit on treatments plus substitute.

    With ``theta' theta = Q diag(Lambda) Q'`` and leading block
    ``Q_k, Lambda_k`` (``k`` = number of loading rows), evaluates the
    shrinkage term ``-Q_k diag(1/(sigma2 + Lambda_j + 1)) Q_k' beta``
    plus the omitted-variable term
    ``Q_k diag(Lambda_j/(sigma2 + Lambda_j + 1)) Q_k' theta'
    (theta theta')^{-1} gamma``. Valid for penalty sequences that grow
    sublinearly in the sample size.

    Parameters
    ----------
    theta : (k, m) array_like
        Must have full row rank.
    beta : (m,) array_like
    gamma : (k,) array_like
    sigma2 : float

    Returns
    -------
    (m,) ndarray

    Raises
    ------
    RankDeficiencyError
        If the leading ``k`` eigenvalues are not all positive.
    """
    sigma2 = _check_sigma2(sigma2)
    theta = _as_matrix(theta, "theta")
    beta = np.asarray(beta, dtype=float).reshape(-1)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    k = theta.shape[0]
    es = eigen_structure(theta)
    lam_k = es.Lambda[:k]
    if lam_k.min() <= _RANK_EPS * max(1.0, lam_k.max()):
        raise RankDeficiencyError("theta does not have full row rank")
    Qk = es.Q[:, :k]
    denom = sigma2 + lam_k + 1.0
    shrink = -Qk @ ((Qk.T @ beta) / denom)
    proj_gamma = theta.T @ _solve_spd(theta @ theta.T, gamma, "theta theta'")
    ovb = Qk @ ((lam_k / denom) * (Qk.T @ proj_gamma))
    return shrink + ovb


def posterior_mean_bias(theta, gamma, sigma2: float) -> np.ndarray:
    """Asymptotic bias of the posterior-averaged deconfounder.

    Identical formula to :func:`naive_bias`:
    ``(theta' theta + sigma2 I)^{-1} theta' gamma``.
    """
    return naive_bias(theta, gamma, sigma2)


def white_noised_bias(theta, gamma, sigma2: float, psi2: float) -> np.ndarray:
    """Asymptotic bias of the white-noised deconfounder at fixed ``m``.

    Evaluates
    ``{theta' [I - (sigma2/psi2)(theta theta')^{-1}] theta
    + (sigma2/psi2)(1 + psi2) I}^{-1} theta' gamma``.

    Parameters
    ----------
    theta : (k, m) array_like
        ``theta theta'`` must be nonsingular.
    gamma : (k,) array_like
    sigma2, psi2 : float
        Strictly positive variances.

    Returns
    -------
    (m,) ndarray
    """
    sigma2 = _check_sigma2(sigma2)
    if not (np.isfinite(psi2) and psi2 > 0):
        raise DomainError(f"psi2 must be > 0, got {psi2}")
    theta = _as_matrix(theta, "theta")
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    k, m = theta.shape
    ratio = sigma2 / psi2
    tt = theta @ theta.T
    inner = np.eye(k) - ratio * _solve_spd(tt, np.eye(k), "theta theta'")
    bracket = theta.T @ inner @ theta + ratio * (1.0 + psi2) * np.eye(m)
    return _solve_spd(bracket, theta.T @ gamma, "white-noise bracket")


def white_noised_bias_limit(theta, gamma, sigma2: float, psi2: float) -> np.ndarray:
    """Many-treatment limit of the white-noised deconfounder bias.

    Evaluates ``[theta' theta + (sigma2/psi2)(1 + psi2) I]^{-1} theta'
    gamma``, the limit the fixed-``m`` formula approaches as every
    diagonal of ``theta theta'`` diverges. Nonzero whenever
    ``theta' gamma`` is nonzero, so the estimator stays inconsistent no
    matter how many treatments are added.
    """
    sigma2 = _check_sigma2(sigma2)
    if not (np.isfinite(psi2) and psi2 > 0):
        raise DomainError(f"psi2 must be > 0, got {psi2}")
    theta = _as_matrix(theta, "theta")
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    m = theta.shape[1]
    G = theta.T @ theta + (sigma2 / psi2) * (1.0 + psi2) * np.eye(m)
    return _solve_spd(G, theta.T @ gamma, "white-noise limit bracket")


def subset_bias(theta_F, theta_N, beta_N, sigma2: float) -> np.ndarray:
    """Closed-form displacement of the focal-subset deconfounder.

    Evaluates
    ``(I - theta_F' (theta theta')^{-1} theta_F)^{-1}
    theta_F' (theta theta')^{-1} theta_N beta_N``
    where ``theta = [theta_F, theta_N]``.

    Orientation: the fitted focal coefficient converges to
    ``beta_F - (returned value)`` — the nonfocal signal absorbed by the
    substitute confounder is subtracted from, not added to, the focal
    estimate. In the constant-loading, constant-effect case the returned
    value is exactly the common effect, so the fitted focal coefficient
    converges to zero. The value does not depend on ``sigma2`` (the
    variance cancels between the limiting numerator and denominator);
    the parameter is validated and kept for uniformity with the other
    bias oracles.

    Parameters
    ----------
    theta_F : (k, m_F) array_like
    theta_N : (k, m_N) array_like
    beta_N : (m_N,) array_like
        Nonfocal treatment effects.
    sigma2 : float

    Returns
    -------
    (m_F,) ndarray

    Raises
    ------
    RankDeficiencyError
        If ``theta theta'`` is singular.
    DegenerateFocalError
        If the leading bracket is singular.
    """
    _check_sigma2(sigma2)
    theta_F = _as_matrix(theta_F, "theta_F")
    k, m_F = theta_F.shape
    theta_N = np.asarray(theta_N, dtype=float).reshape(k, -1)
    beta_N = np.asarray(beta_N, dtype=float).reshape(-1)
    if beta_N.shape[0] != theta_N.shape[1]:
        raise DomainError(
            f"beta_N length {beta_N.shape[0]} does not match theta_N "
            f"width {theta_N.shape[1]}"
        )
    tt = theta_F @ theta_F.T + theta_N @ theta_N.T
    proj_F = _solve_spd(tt, theta_F, "theta theta'")
    bracket = np.eye(m_F) - theta_F.T @ proj_F
    rhs = proj_F.T @ (theta_N @ beta_N)
    try:
        return np.linalg.solve(bracket, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFocalError("focal bracket is singular") from exc


def theta_hat_gram(theta, sigma2: float) -> np.ndarray:
    """Large-sample limit of the estimated-loading Gram matrix.

    The principal-component loading estimate converges, up to a
    rotation, to ``(Lambda_k + sigma2 I)^{1/2} Lambda_k^{-1/2} R' theta``;
    this function returns the rotation-free Gram limit
    ``theta' R diag((Lambda_j + sigma2)/Lambda_j) R' theta``.

    Parameters
    ----------
    theta : (k, m) array_like
        Must have full row rank.
    sigma2 : float
        Nonnegative; zero returns ``theta' theta`` exactly.

    Returns
    -------
    (m, m) ndarray
    """
    if not (np.isfinite(sigma2) and sigma2 >= 0):
        raise DomainError(f"sigma2 must be >= 0, got {sigma2}")
    theta = _as_matrix(theta, "theta")
    k = theta.shape[0]
    lam, R = np.linalg.eigh(theta @ theta.T)
    order = np.argsort(lam)[::-1]
    lam, R = lam[order], R[:, order]
    if lam.min() <= _RANK_EPS * max(1.0, lam.max()):
        raise RankDeficiencyError("theta does not have full row rank")
    Rt_theta = R.T @ theta
    scale = (lam + sigma2) / lam
    return Rt_theta.T @ (scale[:, None] * Rt_theta)


def residual_dependence(theta, sigma2: float) -> np.ndarray:
    """Limit covariance between treatments and confounder-fit residuals.

    Evaluates ``sigma2 (I - theta' (theta theta')^{-1} theta)``, which is
    ``sigma2`` times an orthogonal-projection complement: symmetric PSD
    with eigenvalues in ``{0, sigma2}`` and trace ``sigma2 (m - k)``.

    Parameters
    ----------
    theta : (k, m) array_like
        ``theta theta'`` must be nonsingular.
    sigma2 : float

    Returns
    -------
    (m, m) ndarray
    """
    sigma2 = _check_sigma2(sigma2)
    theta = _as_matrix(theta, "theta")
    m = theta.shape[1]
    proj = theta.T @ _solve_spd(theta @ theta.T, theta, "theta theta'")
    out = sigma2 * (np.eye(m) - proj)
    return 0.5 * (out + out.T)


def woodbury_projection(theta, sigma2: float) -> np.ndarray:
    """Confounder-space projection ``theta (theta' theta + sigma2 I)^{-1} theta'``.

    Evaluated through the push-through identity as
    ``theta theta' (theta theta' + sigma2 I_k)^{-1}``, which stays
    numerically stable when the number of treatments is large. The
    result approaches the identity exactly when every diagonal of
    ``theta theta'`` diverges; along bounded loading sequences it stays
    bounded away from the identity.

    Parameters
    ----------
    theta : (k, m) array_like
    sigma2 : float

    Returns
    -------
    (k, k) ndarray
    """
    sigma2 = _check_sigma2(sigma2)
    theta = _as_matrix(theta, "theta")
    k = theta.shape[0]
    tt = theta @ theta.T
    out = _solve_spd(tt + sigma2 * np.eye(k), tt, "theta theta' + sigma2 I")
    return 0.5 * (out + out.T)


def pinpointing_variance(theta, sigma2: float) -> np.ndarray:
    """Per-confounder posterior variance ``sigma2 / (diag(theta theta') + sigma2)``.

    Vanishes for a confounder coordinate exactly when its diagonal of
    ``theta theta'`` diverges; along bounded loading sequences it stays
    bounded below.

    Parameters
    ----------
    theta : (k, m) array_like
    sigma2 : float

    Returns
    -------
    (k,) ndarray
    """
    sigma2 = _check_sigma2(sigma2)
    theta = _as_matrix(theta, "theta")
    diag = np.einsum("ij,ij->i", theta, theta)
    return sigma2 / (diag + sigma2)
