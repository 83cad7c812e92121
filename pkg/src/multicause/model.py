"""Data-generating processes.

This module defines the specification and sample containers for the
linear-linear confounded model, the quadratic and logistic tutorial
processes, and loading sequences used to study behavior as the number of
treatments grows.

The linear-linear model draws, independently across observations ``i``:

- confounders ``Z_i ~ N(0, I_k)``,
- treatments ``A_i = Z_i theta + nu_i`` with ``nu_i ~ N(0, sigma2 I_m)``,
- outcome ``Y_i = A_i beta + Z_i gamma + eps_i`` with ``eps_i ~ N(0, omega2)``.

All designs are zero-mean with no intercept except the quadratic and
logistic tutorials, whose outcome equations carry an explicit constant.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, DomainError, SpecificationError

__all__ = [
    "DgpSpec",
    "Dataset",
    "ConfoundingSequence",
    "sample_linear_linear",
    "build_theta",
    "sample_quadratic",
    "sample_logistic",
    "make_subset_sim_spec",
    "dataset_to_csv",
    "dataset_from_csv",
    "as_generator",
]


def as_generator(seed) -> np.random.Generator:
    """Normalize a seed argument into a ``numpy.random.Generator``.

    Parameters
    ----------
    seed : None, int, numpy.random.SeedSequence, or numpy.random.Generator
        ``None`` draws fresh OS entropy; an existing generator is
        returned unchanged; anything else is passed to
        ``numpy.random.default_rng``.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _as_float_array(value, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise SpecificationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SpecificationError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Full parameterization of a linear-linear data-generating process.

    Parameters
    ----------
    k : int
        Latent confounder dimension.
    m : int
        Treatment dimension; must satisfy ``m >= k``.
    theta : (k, m) array_like
        Confounder-to-treatment loading matrix.
    beta : (m,) array_like
        Treatment effects on the outcome.
    gamma : (k,) array_like
        Confounder effects on the outcome.
    sigma2 : float
        Treatment noise variance, strictly positive.
    omega2 : float
        Outcome noise variance, strictly positive.
    focal_idx : tuple of int, optional
        Zero-based positions of the focal treatments. When present it
        must be nonempty, duplicate-free, and within ``[0, m)``.
    """

    k: int
    m: int
    theta: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    sigma2: float
    omega2: float
    focal_idx: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.k < 1 or self.m < self.k:
            raise SpecificationError(
                f"need m >= k >= 1, got k={self.k}, m={self.m}"
            )
        theta = _as_float_array(self.theta, "theta", 2)
        if theta.shape != (self.k, self.m):
            raise SpecificationError(
                f"theta must have shape ({self.k}, {self.m}), got {theta.shape}"
            )
        beta = _as_float_array(self.beta, "beta", 1)
        if beta.shape != (self.m,):
            raise SpecificationError(f"beta must have length {self.m}, got {beta.shape}")
        gamma = _as_float_array(self.gamma, "gamma", 1)
        if gamma.shape != (self.k,):
            raise SpecificationError(f"gamma must have length {self.k}, got {gamma.shape}")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise SpecificationError(f"sigma2 must be > 0, got {self.sigma2}")
        if not (np.isfinite(self.omega2) and self.omega2 > 0):
            raise SpecificationError(f"omega2 must be > 0, got {self.omega2}")
        focal = self.focal_idx
        if focal is not None:
            focal = tuple(int(j) for j in focal)
            if len(focal) == 0:
                raise SpecificationError("focal_idx must be nonempty when given")
            if len(set(focal)) != len(focal):
                raise SpecificationError(f"focal_idx has duplicates: {focal}")
            if any(j < 0 or j >= self.m for j in focal):
                raise SpecificationError(f"focal_idx out of bounds for m={self.m}: {focal}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "omega2", float(self.omega2))
        object.__setattr__(self, "focal_idx", focal)

    @property
    def nonfocal_idx(self) -> tuple[int, ...]:
        """Complement of ``focal_idx`` (empty when no focal set is given)."""
        if self.focal_idx is None:
            return ()
        focal = set(self.focal_idx)
        return tuple(j for j in range(self.m) if j not in focal)


@dataclass(frozen=True, eq=False)
class Dataset:
    """One sampled draw from a data-generating process.

    Attributes
    ----------
    Z : (n, k) ndarray
        Latent confounders, retained for oracle fits and diagnostics only.
    A : (n, m) ndarray
        Observed treatments.
    Y : (n,) ndarray
        Outcome vector (binary 0/1 for the logistic design).
    n : int
        Observation count; all row counts agree with it.
    """

    Z: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    n: int

    def __post_init__(self) -> None:
        Z = np.asarray(self.Z, dtype=float)
        A = np.asarray(self.A, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Z.ndim != 2 or A.ndim != 2 or Y.ndim != 1:
            raise SpecificationError(
                f"Z and A must be matrices and Y a vector, got shapes "
                f"{Z.shape}, {A.shape}, {Y.shape}"
            )
        if self.n < 1:
            raise SpecificationError(f"n must be >= 1, got {self.n}")
        if not (Z.shape[0] == A.shape[0] == Y.shape[0] == self.n):
            raise SpecificationError(
                f"row counts disagree: Z {Z.shape[0]}, A {A.shape[0]}, "
                f"Y {Y.shape[0]}, n {self.n}"
            )
        for name, arr in (("Z", Z), ("A", A), ("Y", Y)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite entries")
            arr.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Y", Y)

    @property
    def k(self) -> int:
        return self.Z.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[1]


#: Limit of sum_{j>=1} (1/j^2)^2, the squared-loading series of the weak rule.
WEAK_LIMIT = math.pi**4 / 90.0


@dataclass(frozen=True)
class ConfoundingSequence:
    """Rule for growing a loading matrix with the treatment count.

    Parameters
    ----------
    rule : {"constant", "weak", "custom"}
        ``constant`` fills every entry with ``c`` (each diagonal of
        ``theta theta'`` then grows linearly in ``m``); ``weak`` uses
        column loadings ``1/j**2`` for ``j = 1..m`` (``k`` must be 1;
        the diagonal of ``theta theta'`` stays bounded by ``pi**4/90``);
        ``custom`` takes explicit loadings from ``values``.
    k : int
        Latent dimension.
    c : float
        Constant loading value (``constant`` rule only).
    values : array_like, optional
        Explicit loadings for the ``custom`` rule; a vector for ``k=1``
        or a ``(k, m_max)`` matrix. ``build_theta`` uses its first ``m``
        columns.
    """

    rule: str
    k: int = 1
    c: float = 1.0
    values: tuple | None = None

    def __post_init__(self) -> None:
        if self.rule not in ("constant", "weak", "custom"):
            raise SpecificationError(f"unknown loading rule {self.rule!r}")
        if self.k < 1:
            raise SpecificationError(f"k must be >= 1, got {self.k}")
        if self.rule == "weak" and self.k != 1:
            raise SpecificationError("the weak rule is defined for k=1 only")
        if self.rule == "custom":
            if self.values is None:
                raise SpecificationError("custom rule requires values")
        elif self.rule == "constant" and not np.isfinite(self.c):
            raise SpecificationError("constant loading must be finite")


def build_theta(seq: ConfoundingSequence, m: int) -> np.ndarray:
    """Materialize the loading matrix of a sequence at treatment count ``m``.

    Parameters
    ----------
    seq : ConfoundingSequence
    m : int
        Number of treatments; must satisfy ``m >= seq.k``.

    Returns
    -------
    (k, m) ndarray

    Raises
    ------
    DimensionError
        If ``m < seq.k`` or a custom value block is too narrow.
    """
    if m < seq.k:
        raise DimensionError(f"need m >= k, got m={m}, k={seq.k}")
    if seq.rule == "constant":
        return np.full((seq.k, m), float(seq.c))
    if seq.rule == "weak":
        j = np.arange(1, m + 1, dtype=float)
        return (1.0 / j**2)[None, :]
    values = np.asarray(seq.values, dtype=float)
    if values.ndim == 1:
        values = values[None, :]
    if values.shape[0] != seq.k or values.shape[1] < m:
        raise DimensionError(
            f"custom values of shape {values.shape} cannot supply a "
            f"({seq.k}, {m}) loading matrix"
        )
    return values[:, :m].copy()


def sample_linear_linear(spec: DgpSpec, n: int, seed) -> Dataset:
    """Sample one dataset from the linear-linear model.

    Parameters
    ----------
    spec : DgpSpec
    n : int
        Observation count, at least 1.
    seed : seed-like
        Anything accepted by :func:`as_generator`; identical
        ``(spec, n, seed)`` triples give bitwise-identical datasets.

    Returns
    -------
    Dataset
    """
    if not isinstance(spec, DgpSpec):
        raise SpecificationError(f"spec must be a DgpSpec, got {type(spec).__name__}")
    if n < 1:
        raise SpecificationError(f"n must be >= 1, got {n}")
    rng = as_generator(seed)
    Z = rng.standard_normal((n, spec.k))
    A = Z @ spec.theta + math.sqrt(spec.sigma2) * rng.standard_normal((n, spec.m))
    Y = A @ spec.beta + Z @ spec.gamma + math.sqrt(spec.omega2) * rng.standard_normal(n)
    return Dataset(Z=Z, A=A, Y=Y, n=n)


def _equicorrelated_cholesky(dim: int, rho: float) -> np.ndarray:
    cov = np.full((dim, dim), rho)
    np.fill_diagonal(cov, 1.0)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DomainError(
            f"equicorrelation {rho} is not positive definite in dimension {dim}"
        ) from exc


def sample_quadratic(rho: float, n: int, seed, m: int = 2) -> Dataset:
    """Sample the quadratic tutorial process.

    ``(A_1, ..., A_m, Z)`` are jointly normal with zero means, unit
    variances, and common pairwise correlation ``rho``; the outcome is
    ``Y = 0.4 + 0.2 A_1^2 + 1.0 A_2^2 + 0.9 Z^2 + N(0, 1)`` (treatments
    beyond the second enter with coefficient zero).

    Parameters
    ----------
    rho : float
        Pairwise correlation; the ``(m+1)``-dimensional equicorrelation
        matrix must be positive definite, which requires
        ``-1/m < rho < 1``.
    n : int
    seed : seed-like
    m : int, default 2
        Treatment count; the default matches the two-treatment tutorial,
        larger values support grids over the treatment count.

    Returns
    -------
    Dataset
        With ``Z`` of shape ``(n, 1)`` and ``A`` of shape ``(n, m)``.
    """
    if m < 2:
        raise DimensionError(f"the quadratic design needs m >= 2, got {m}")
    if not (-1.0 < rho < 1.0) or rho <= -1.0 / m:
        raise DomainError(
            f"rho={rho} is outside the positive-definite range (-1/{m}, 1)"
        )
    if n < 1:
        raise SpecificationError(f"n must be >= 1, got {n}")
    rng = as_generator(seed)
    L = _equicorrelated_cholesky(m + 1, rho)
    X = rng.standard_normal((n, m + 1)) @ L.T
    A = X[:, :m]
    Z = X[:, m:]
    Y = (
        0.4
        + 0.2 * A[:, 0] ** 2
        + 1.0 * A[:, 1] ** 2
        + 0.9 * Z[:, 0] ** 2
        + rng.standard_normal(n)
    )
    return Dataset(Z=Z, A=A, Y=Y, n=n)


def sample_logistic(
    n: int,
    seed,
    intercept: float = 0.4,
    slopes: tuple[float, float, float] = (0.2, 1.0, 0.9),
) -> Dataset:
    """Sample the logistic tutorial process.

    ``(X_1, X_2, Z)`` are trivariate normal with zero means, unit
    variances, and pairwise correlation 0.4. The outcome is Bernoulli
    with success probability
    ``logistic(intercept + s_1 X_1 + s_2 X_2 + s_3 Z)``.

    Parameters
    ----------
    n : int
    seed : seed-like
    intercept : float, default 0.4
    slopes : (float, float, float), default (0.2, 1.0, 0.9)
        Coefficients on ``X_1``, ``X_2``, and ``Z``.

    Returns
    -------
    Dataset
        With ``A = [X_1, X_2]``, ``Z`` of shape ``(n, 1)``, and binary
        ``Y`` holding 0/1 values.
    """
    if n < 1:
        raise SpecificationError(f"n must be >= 1, got {n}")
    rng = as_generator(seed)
    L = _equicorrelated_cholesky(3, 0.4)
    X = rng.standard_normal((n, 3)) @ L.T
    eta = intercept + X @ np.asarray(slopes, dtype=float)
    p = 1.0 / (1.0 + np.exp(-eta))
    Y = (rng.random(n) < p).astype(float)
    return Dataset(Z=X[:, 2:], A=X[:, :2], Y=Y, n=n)


def make_subset_sim_spec(m: int, beta_rule, seed=None) -> DgpSpec:
    """Build the strong-confounding benchmark specification.

    The design has one confounder with every loading equal to 10,
    treatment noise variance 0.01, confounder effect 10, outcome noise
    variance 0.01, and the first treatment focal.

    Parameters
    ----------
    m : int
        Treatment count, at least 1.
    beta_rule : str or tuple
        One of ``("const", c)``, ``("normal", mean, var)``, or
        ``"reciprocal"`` (``beta_j = 1/j`` for 1-based ``j``). The
        ``normal`` rule draws the coefficients once, here, using
        ``seed``.
    seed : seed-like, optional
        Required by the ``normal`` rule.

    Returns
    -------
    DgpSpec
    """
    if m < 1:
        raise SpecificationError(f"m must be >= 1, got {m}")
    if isinstance(beta_rule, str):
        beta_rule = (beta_rule,)
    name = beta_rule[0]
    if name == "const":
        beta = np.full(m, float(beta_rule[1]))
    elif name == "normal":
        mean, var = float(beta_rule[1]), float(beta_rule[2])
        if var < 0:
            raise SpecificationError(f"normal rule variance must be >= 0, got {var}")
        rng = as_generator(seed)
        beta = mean + math.sqrt(var) * rng.standard_normal(m)
    elif name == "reciprocal":
        beta = 1.0 / np.arange(1, m + 1, dtype=float)
    else:
        raise SpecificationError(f"unknown beta rule {name!r}")
    return DgpSpec(
        k=1,
        m=m,
        theta=np.full((1, m), 10.0),
        beta=beta,
        gamma=np.array([10.0]),
        sigma2=0.01,
        omega2=0.01,
        focal_idx=(0,),
    )


def dataset_to_csv(ds: Dataset, path) -> None:
    """Write a dataset to CSV with header ``z_1..z_k, a_1..a_m, y``."""
    header = (
        [f"z_{j + 1}" for j in range(ds.k)]
        + [f"a_{j + 1}" for j in range(ds.m)]
        + ["y"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.Z[i]]
            row += [repr(float(v)) for v in ds.A[i]]
            row.append(repr(float(ds.Y[i])))
            writer.writerow(row)


def dataset_from_csv(path) -> Dataset:
    """Read a dataset written by :func:`dataset_to_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        k = sum(1 for name in header if name.startswith("z_"))
        m = sum(1 for name in header if name.startswith("a_"))
        if header != (
            [f"z_{j + 1}" for j in range(k)]
            + [f"a_{j + 1}" for j in range(m)]
            + ["y"]
        ):
            raise DataError(f"unrecognized dataset header: {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != k + m + 1:
        raise DataError("dataset rows do not match the header width")
    return Dataset(Z=data[:, :k], A=data[:, k : k + m], Y=data[:, -1], n=data.shape[0])
