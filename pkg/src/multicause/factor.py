"""Substitute-confounder extraction.

Deterministic principal-component extraction via the singular value
decomposition, the probabilistic-PCA posterior of the confounder given
the treatments, closed-form maximum-likelihood recovery of the factor
parameters, posterior sampling, and white-noise injection.

Sign convention: every right singular vector (and eigenvector) is
flipped so that its largest-magnitude entry is positive, which makes all
outputs reproducible across platforms. Quantities compared against
asymptotic formulas elsewhere in the package are rotation- and
sign-invariant (Gram matrices and projections).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateFactorError, DimensionError, DomainError
from .model import as_generator

__all__ = [
    "SubstituteConfounder",
    "PpcaPosterior",
    "pca_substitute",
    "ppca_posterior",
    "ppca_mle",
    "sample_posterior_confounder",
    "add_white_noise",
]


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> None:
    """Flip singular-vector pairs so each right vector's largest-magnitude
    entry is positive. Operates in place on matching (U column, Vt row)."""
    for j in range(Vt.shape[0]):
        i = int(np.argmax(np.abs(Vt[j])))
        if Vt[j, i] < 0:
            Vt[j] *= -1.0
            U[:, j] *= -1.0


def fix_eigvec_signs(Q: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so each column's largest-magnitude entry
    is positive; returns the same array, modified in place."""
    for j in range(Q.shape[1]):
        i = int(np.argmax(np.abs(Q[:, j])))
        if Q[i, j] < 0:
            Q[:, j] *= -1.0
    return Q


@dataclass(frozen=True, eq=False)
class SubstituteConfounder:
    """SVD-derived substitute confounder and its factors.

    For the thin decomposition ``A = U diag(D) V'`` of an ``(n, m)``
    treatment matrix:

    Attributes
    ----------
    Zhat : (n, k) ndarray
        ``sqrt(n) * U[:, :k]``; each column has squared norm ``n``.
    theta_hat : (k, m) ndarray
        ``(1/sqrt(n)) diag(D[:k]) V[:, :k]'``, so ``Zhat @ theta_hat`` is
        the rank-``k`` truncation of ``A``.
    U : (n, m) ndarray
    D : (m,) ndarray
        Singular values, descending and nonnegative.
    V : (m, m) ndarray
    """

    Zhat: np.ndarray
    theta_hat: np.ndarray
    U: np.ndarray
    D: np.ndarray
    V: np.ndarray

    @property
    def k(self) -> int:
        return self.Zhat.shape[1]


def pca_substitute(A: np.ndarray, k: int) -> SubstituteConfounder:
    """Extract the rank-``k`` substitute confounder of a treatment matrix.

    Parameters
    ----------
    A : (n, m) array_like
        Treatment matrix with ``n >= m``.
    k : int
        Number of components, ``1 <= k <= m``.

    Returns
    -------
    SubstituteConfounder

    Raises
    ------
    DimensionError
        If ``k`` is out of range or ``n < m``.
    DataError
        If ``A`` has non-finite entries.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"A must be a matrix, got shape {A.shape}")
    n, m = A.shape
    if not (1 <= k <= m):
        raise DimensionError(f"need 1 <= k <= m, got k={k}, m={m}")
    if n < m:
        raise DimensionError(f"need n >= m, got n={n}, m={m}")
    if not np.all(np.isfinite(A)):
        raise DataError("A contains non-finite entries")
    U, D, Vt = np.linalg.svd(A, full_matrices=False)
    _fix_signs(U, Vt)
    Zhat = math.sqrt(n) * U[:, :k]
    theta_hat = (D[:k, None] * Vt[:k]) / math.sqrt(n)
    for arr in (Zhat, theta_hat, U, D):
        arr.setflags(write=False)
    V = Vt.T
    V.setflags(write=False)
    return SubstituteConfounder(Zhat=Zhat, theta_hat=theta_hat, U=U, D=D, V=V)


@dataclass(frozen=True, eq=False)
class PpcaPosterior:
    """Gaussian posterior of the confounder given the treatments.

    Under the factor model ``A_i = Z_i theta + N(0, sigma2 I)`` with
    standard-normal prior on ``Z_i``:

    Attributes
    ----------
    mean : (n, k) ndarray
        Row ``i`` equals ``A_i theta' (theta theta' + sigma2 I)^{-1}``.
    covariance : (k, k) ndarray
        ``sigma2 (theta theta' + sigma2 I)^{-1}``, shared across rows,
        symmetric positive semidefinite.
    theta : (k, m) ndarray
    sigma2 : float
    """

    mean: np.ndarray
    covariance: np.ndarray
    theta: np.ndarray
    sigma2: float


def ppca_posterior(A: np.ndarray, theta: np.ndarray, sigma2: float) -> PpcaPosterior:
    """Posterior of the confounder given treatments and factor parameters.

    Parameters
    ----------
    A : (n, m) array_like
    theta : (k, m) array_like
    sigma2 : float
        Strictly positive noise variance.

    Returns
    -------
    PpcaPosterior

    Raises
    ------
    DomainError
        If ``sigma2 <= 0``.
    DimensionError
        If the shapes of ``A`` and ``theta`` disagree.
    """
    if not (np.isfinite(sigma2) and sigma2 > 0):
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    A = np.asarray(A, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if A.ndim != 2 or theta.ndim != 2 or A.shape[1] != theta.shape[1]:
        raise DimensionError(
            f"A {A.shape} and theta {theta.shape} have incompatible shapes"
        )
    k = theta.shape[0]
    G = theta @ theta.T + sigma2 * np.eye(k)
    covariance = sigma2 * np.linalg.solve(G, np.eye(k))
    covariance = 0.5 * (covariance + covariance.T)
    mean = np.linalg.solve(G, theta @ A.T).T
    mean.setflags(write=False)
    covariance.setflags(write=False)
    return PpcaPosterior(mean=mean, covariance=covariance, theta=theta, sigma2=float(sigma2))


def ppca_mle(A: np.ndarray, k: int) -> tuple[np.ndarray, float]:
    """Closed-form maximum-likelihood factor parameters.

    Uses the second-moment matrix ``A'A / n`` (the designs served by this
    package are zero-mean, so no centering is applied): with eigenpairs
    ``(lambda_j, q_j)`` in descending order, the noise estimate is the
    mean of the trailing ``m - k`` eigenvalues and row ``j`` of the
    loading estimate is ``sqrt(lambda_j - sigma2_hat) q_j'``.

    Parameters
    ----------
    A : (n, m) array_like
        Requires ``n > m >= k``.
    k : int

    Returns
    -------
    (theta_hat, sigma2_hat) : ((k, m) ndarray, float)
        Satisfying ``theta_hat' theta_hat + sigma2_hat I -> theta' theta
        + sigma2 I`` as ``n`` grows.

    Raises
    ------
    DimensionError
        If ``n <= m`` or ``k > m``.
    DegenerateFactorError
        If ``k == m`` (no trailing eigenvalues to estimate the noise
        floor) or the ``k``-th eigenvalue does not exceed the estimate.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"A must be a matrix, got shape {A.shape}")
    n, m = A.shape
    if not (1 <= k <= m):
        raise DimensionError(f"need 1 <= k <= m, got k={k}, m={m}")
    if n <= m:
        raise DimensionError(f"need n > m, got n={n}, m={m}")
    if k == m:
        raise DegenerateFactorError(
            "k equals the treatment dimension: no trailing eigenvalues "
            "remain to estimate the noise variance"
        )
    S = (A.T @ A) / n
    w, Q = np.linalg.eigh(S)
    order = np.argsort(w)[::-1]
    w, Q = w[order], Q[:, order]
    sigma2_hat = float(np.mean(w[k:]))
    if w[k - 1] <= sigma2_hat:
        raise DegenerateFactorError(
            f"leading eigenvalue {w[k - 1]:.6g} does not exceed the noise "
            f"estimate {sigma2_hat:.6g}; the factor is not identified"
        )
    fix_eigvec_signs(Q)
    theta_hat = (Q[:, :k] * np.sqrt(w[:k] - sigma2_hat)).T
    return theta_hat, sigma2_hat


def sample_posterior_confounder(post: PpcaPosterior, seed) -> np.ndarray:
    """Draw one confounder matrix from the posterior.

    Each row is the posterior mean row plus an independent
    ``N(0, covariance)`` draw.

    Parameters
    ----------
    post : PpcaPosterior
    seed : seed-like

    Returns
    -------
    (n, k) ndarray
    """
    rng = as_generator(seed)
    cov = np.asarray(post.covariance, dtype=float)
    w, Q = np.linalg.eigh(0.5 * (cov + cov.T))
    if w.min() < -1e-10 * max(1.0, w.max()):
        raise DomainError("posterior covariance is not positive semidefinite")
    root = Q * np.sqrt(np.clip(w, 0.0, None))
    n, k = post.mean.shape
    return post.mean + rng.standard_normal((n, k)) @ root.T


def add_white_noise(Zhat: np.ndarray, psi2: float, seed) -> np.ndarray:
    """Add independent ``N(0, psi2)`` noise to every entry.

    Parameters
    ----------
    Zhat : (n, k) array_like
    psi2 : float
        Strictly positive noise variance.
    seed : seed-like

    Returns
    -------
    (n, k) ndarray
    """
    if not (np.isfinite(psi2) and psi2 > 0):
        raise DomainError(f"psi2 must be > 0, got {psi2}")
    Zhat = np.asarray(Zhat, dtype=float)
    rng = as_generator(seed)
    return Zhat + math.sqrt(psi2) * rng.standard_normal(Zhat.shape)
