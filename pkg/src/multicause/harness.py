"""Seeded Monte Carlo experiment runner.

Runs estimators over replicated synthetic datasets, aggregates bias,
standard deviation, RMSE, and 95% coverage per coefficient, and
optionally compares empirical bias against the closed-form limits from
:mod:`multicause.asymptotics`.

Determinism: every replication derives its own random stream from the
root seed via ``SeedSequence(root, spawn_key=(grid_index, stream, index))``
(stream 0 = data, stream 1 = coefficient draws, stream 2+j = estimator
``j``'s internal randomness), and aggregation always reduces in
replication order with compensated summation, so identical configs give
identical summaries regardless of thread count or completion order.
"""
from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est_mod
from .asymptotics import (
    naive_bias,
    penalized_bias,
    posterior_mean_bias,
    subset_bias,
    white_noised_bias,
)
from .errors import (
    CollinearityRiskError,
    ConfigError,
    ConvergenceError,
    DegenerateFactorError,
    DegenerateFocalError,
    InstabilityError,
    OracleComparisonError,
    RankDeficiencyError,
    SeparationError,
    SpecificationError,
)
from .model import (
    DgpSpec,
    make_subset_sim_spec,
    sample_linear_linear,
    sample_logistic,
    sample_quadratic,
)

__all__ = [
    "EstimatorSpec",
    "ExperimentConfig",
    "SummaryRow",
    "SimulationSummary",
    "SweepPoint",
    "make_med1_spec",
    "run_experiment",
    "compare_oracle",
    "sweep",
    "config_from_json",
    "RESULTS_CSV_HEADER",
]

RESULTS_CSV_HEADER = "estimator,coef_index,bias,sd,rmse,coverage,mc_se_bias,oracle_bias,gap,pass"

_STREAM_DATA = 0
_STREAM_COEF = 1
_STREAM_EST_BASE = 2

#: Exception types that count as a failed replication (recorded and
#: excluded) rather than a configuration bug (raised immediately).
_REP_FAILURES = (
    RankDeficiencyError,
    DegenerateFactorError,
    DegenerateFocalError,
    SeparationError,
    ConvergenceError,
    InstabilityError,
    CollinearityRiskError,
    np.linalg.LinAlgError,
)

_NAMED_DESIGNS = ("med1", "subset", "quadratic", "logistic")


def make_med1_spec(beta=(0.0, 0.3)) -> DgpSpec:
    """Two-treatment, one-confounder benchmark specification.

    ``theta = [[0.3, 0.4]]``, ``gamma = [0.5]``, unit noise variances.
    """
    return DgpSpec(
        k=1,
        m=2,
        theta=[[0.3, 0.4]],
        beta=beta,
        gamma=[0.5],
        sigma2=1.0,
        omega2=1.0,
    )


@dataclass(frozen=True, eq=False)
class EstimatorSpec:
    """One estimator to run, with its parameters.

    Attributes
    ----------
    name : str
        Registry name (``naive``, ``oracle``, ``penalized``,
        ``flexible_penalized``, ``posterior_mean``, ``white_noised``,
        ``subset``, ``subset_each``, ``pca_cv_ridge``,
        ``semiparametric_naive``, ``quadratic_naive``,
        ``quadratic_deconf``, ``quadratic_pair``, ``logistic_suite``).
    params : dict
        Estimator-specific parameters; unknown keys are rejected.
    label : str or None
        Optional row-label override (only for estimators that produce a
        single row group), e.g. to run one estimator at two settings.
    """

    name: str
    params: dict = field(default_factory=dict)
    label: str | None = None


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Complete description of one Monte Carlo experiment.

    Attributes
    ----------
    design : DgpSpec or str
        A linear specification, or a named design: ``med1``, ``subset``,
        ``quadratic``, ``logistic``.
    design_params : dict
        Parameters of the named design (must be empty for a DgpSpec):
        ``med1`` takes ``beta``; ``subset`` takes ``m`` and
        ``beta_rule``; ``quadratic`` takes ``rho`` and ``m``.
    estimators : tuple of EstimatorSpec
    n : int
        Observations per replication.
    reps : int
        Replication count, at least 1.
    seed : int
        Root seed.
    compare_oracle : bool
        Attach closed-form limit comparisons to the summary.
    redraw_per_rep : bool
        Redraw random design coefficients each replication (only
        meaningful for the subset design's ``normal`` rule; the default
        draws them once).
    threads : int
        Worker threads; results are identical for any value.
    grid_index : int
        Offset mixed into every derived seed; set by :func:`sweep`.
    """

    design: DgpSpec | str
    design_params: dict = field(default_factory=dict)
    estimators: tuple[EstimatorSpec, ...] = ()
    n: int = 1000
    reps: int = 100
    seed: int = 0
    compare_oracle: bool = False
    redraw_per_rep: bool = False
    threads: int = 1
    grid_index: int = 0


@dataclass(frozen=True, eq=False)
class SummaryRow:
    """Aggregated statistics for one (estimator, coefficient) cell."""

    estimator: str
    coef_index: int
    bias: float
    sd: float
    rmse: float
    coverage: float
    mc_se_bias: float
    mc_se_sd: float
    mc_se_coverage: float
    failures: int
    oracle_bias: float | None = None
    gap: float | None = None
    passed: bool | None = None


@dataclass(frozen=True, eq=False)
class SimulationSummary:
    """Result of :func:`run_experiment`.

    ``rows`` are ordered by configured estimator, then coefficient.
    ``estimator_info`` records ``(row_label, registry_name, params)``
    triples so oracle comparisons can be attached after the fact.
    """

    design_label: str
    n: int
    reps: int
    seed: int
    rows: tuple[SummaryRow, ...]
    spec: DgpSpec | None
    estimator_info: tuple[tuple[str, str, dict], ...]
    grid_index: int = 0

    def to_csv(self) -> str:
        """Render as CSV with the pinned header
        ``estimator,coef_index,bias,sd,rmse,coverage,mc_se_bias,oracle_bias,gap,pass``.

        Numbers use ``%.10g``; undefined cells (NaN sd at one rep,
        absent oracle columns) are empty; ``pass`` is ``1``/``0``.
        """
        lines = [RESULTS_CSV_HEADER]
        for r in self.rows:
            passed = "" if r.passed is None else ("1" if r.passed else "0")
            lines.append(
                ",".join(
                    [
                        r.estimator,
                        str(r.coef_index),
                        _fmt(r.bias),
                        _fmt(r.sd),
                        _fmt(r.rmse),
                        _fmt(r.coverage),
                        _fmt(r.mc_se_bias),
                        _fmt(r.oracle_bias),
                        _fmt(r.gap),
                        passed,
                    ]
                )
            )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class SweepPoint:
    """One grid point of a sweep: the value, and either a summary or the
    error message of the failed run."""

    value: float
    summary: SimulationSummary | None
    error: str | None = None


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return f"{x:.10g}"


# ---------------------------------------------------------------------------
# Estimator registry
# ---------------------------------------------------------------------------


def _default_k(spec: DgpSpec | None, params: dict) -> int:
    if "k" in params:
        return int(params["k"])
    if spec is None:
        raise SpecificationError("this estimator needs an explicit k")
    return spec.k


def _resolve_lam(params: dict, n: int, default="sqrt_n"):
    lam = params.get("lam", default)
    if isinstance(lam, str):
        return math.sqrt(n)
    return float(lam)


def _resolve_focal(spec: DgpSpec | None, params: dict) -> tuple[int, ...]:
    focal = params.get("focal")
    if focal is None and spec is not None:
        focal = spec.focal_idx
    if focal is None:
        raise SpecificationError("focal indices are required (params or spec)")
    return tuple(int(j) for j in focal)


def _run_oracle(ds, spec, params, seed):
    return (est_mod.oracle(ds),)


def _run_naive(ds, spec, params, seed):
    return (est_mod.naive(ds),)


def _run_penalized(ds, spec, params, seed):
    return (
        est_mod.penalized_full(ds, _default_k(spec, params), _resolve_lam(params, ds.n)),
    )


def _run_flexible(ds, spec, params, seed):
    return (
        est_mod.flexible_penalized(
            ds,
            _default_k(spec, params),
            int(params.get("degree", 2)),
            _resolve_lam(params, ds.n),
        ),
    )


def _run_posterior_mean(ds, spec, params, seed):
    return (
        est_mod.posterior_mean_deconfounder(
            ds, _default_k(spec, params), int(params.get("n_draws", 50)), seed
        ),
    )


def _run_white_noised(ds, spec, params, seed):
    return (
        est_mod.white_noised_deconfounder(
            ds, _default_k(spec, params), float(params.get("psi2", 1.0)), seed
        ),
    )


def _run_subset(ds, spec, params, seed):
    return (
        est_mod.subset_deconfounder(ds, _resolve_focal(spec, params), _default_k(spec, params)),
    )


def _run_subset_each(ds, spec, params, seed):
    return (est_mod.subset_deconfounder_each(ds, _default_k(spec, params)),)


def _run_pca_cv_ridge(ds, spec, params, seed):
    return (
        est_mod.pca_cv_ridge(ds, _default_k(spec, params), int(params.get("folds", 10))),
    )


def _run_semiparametric(ds, spec, params, seed):
    return (
        est_mod.semiparametric_naive(
            ds, _resolve_focal(spec, params), params.get("basis", 1)
        ),
    )


def _run_quadratic_naive(ds, spec, params, seed):
    return (est_mod.quadratic_naive(ds),)


def _run_quadratic_deconf(ds, spec, params, seed):
    return (est_mod.quadratic_deconf(ds, bool(params.get("center", True))),)


def _run_quadratic_pair(ds, spec, params, seed):
    return est_mod.quadratic_pair(ds, bool(params.get("center", True)))


def _run_logistic_suite(ds, spec, params, seed):
    return est_mod.logistic_suite(ds, float(params.get("psi2", 0.01)), seed)


def _oracle_zero(spec, params):
    return {j: 0.0 for j in range(spec.m)}


def _oracle_naive(spec, params):
    return dict(enumerate(naive_bias(spec.theta, spec.gamma, spec.sigma2)))


def _oracle_penalized(spec, params):
    lam = params.get("lam", "sqrt_n")
    if not isinstance(lam, str):
        raise OracleComparisonError(
            "the penalized limit is registered for lam='sqrt_n' only"
        )
    return dict(
        enumerate(penalized_bias(spec.theta, spec.beta, spec.gamma, spec.sigma2))
    )


def _oracle_posterior_mean(spec, params):
    return dict(enumerate(posterior_mean_bias(spec.theta, spec.gamma, spec.sigma2)))


def _oracle_white_noised(spec, params):
    psi2 = float(params.get("psi2", 1.0))
    return dict(
        enumerate(white_noised_bias(spec.theta, spec.gamma, spec.sigma2, psi2))
    )


def _subset_limit(spec: DgpSpec, focal: tuple[int, ...]) -> dict[int, float]:
    theta = np.asarray(spec.theta)
    beta = np.asarray(spec.beta)
    nonfocal = [j for j in range(spec.m) if j not in set(focal)]
    # The fitted focal coefficient converges to beta_F minus the
    # closed-form displacement, so its bias is the negated formula.
    vals = -subset_bias(
        theta[:, list(focal)], theta[:, nonfocal], beta[nonfocal], spec.sigma2
    )
    return {f: float(vals[i]) for i, f in enumerate(focal)}


def _oracle_subset(spec, params):
    return _subset_limit(spec, _resolve_focal(spec, params))


def _oracle_subset_each(spec, params):
    out = {}
    for j in range(spec.m):
        out.update(_subset_limit(spec, (j,)))
    return out


def _oracle_semiparametric(spec, params):
    if est_mod._parse_basis(params.get("basis", 1)) != 1:
        raise OracleComparisonError(
            "the partialled-out limit is registered for the linear basis only"
        )
    focal = _resolve_focal(spec, params)
    full = naive_bias(spec.theta, spec.gamma, spec.sigma2)
    return {f: float(full[f]) for f in focal}


@dataclass(frozen=True, eq=False)
class _EstDef:
    runner: object
    kinds: frozenset
    param_keys: frozenset
    oracle: object = None
    fixed_labels: tuple[str, ...] | None = None


_REGISTRY: dict[str, _EstDef] = {
    "oracle": _EstDef(_run_oracle, frozenset({"linear"}), frozenset(), _oracle_zero),
    "naive": _EstDef(_run_naive, frozenset({"linear"}), frozenset(), _oracle_naive),
    "penalized": _EstDef(
        _run_penalized, frozenset({"linear"}), frozenset({"k", "lam"}), _oracle_penalized
    ),
    "flexible_penalized": _EstDef(
        _run_flexible, frozenset({"linear"}), frozenset({"k", "degree", "lam"})
    ),
    "posterior_mean": _EstDef(
        _run_posterior_mean,
        frozenset({"linear"}),
        frozenset({"k", "n_draws"}),
        _oracle_posterior_mean,
    ),
    "white_noised": _EstDef(
        _run_white_noised,
        frozenset({"linear"}),
        frozenset({"k", "psi2"}),
        _oracle_white_noised,
    ),
    "subset": _EstDef(
        _run_subset, frozenset({"linear"}), frozenset({"focal", "k"}), _oracle_subset
    ),
    "subset_each": _EstDef(
        _run_subset_each, frozenset({"linear"}), frozenset({"k"}), _oracle_subset_each
    ),
    "pca_cv_ridge": _EstDef(
        _run_pca_cv_ridge, frozenset({"linear"}), frozenset({"k", "folds"})
    ),
    "semiparametric_naive": _EstDef(
        _run_semiparametric,
        frozenset({"linear"}),
        frozenset({"focal", "basis"}),
        _oracle_semiparametric,
    ),
    "quadratic_naive": _EstDef(_run_quadratic_naive, frozenset({"quadratic"}), frozenset()),
    "quadratic_deconf": _EstDef(
        _run_quadratic_deconf, frozenset({"quadratic"}), frozenset({"center"})
    ),
    "quadratic_pair": _EstDef(
        _run_quadratic_pair,
        frozenset({"quadratic"}),
        frozenset({"center"}),
        fixed_labels=("quadratic_deconf", "quadratic_parametric"),
    ),
    "logistic_suite": _EstDef(
        _run_logistic_suite,
        frozenset({"logistic"}),
        frozenset({"psi2"}),
        fixed_labels=("logistic_naive", "logistic_deconf"),
    ),
}


# ---------------------------------------------------------------------------
# Designs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Design:
    label: str
    kind: str
    get_spec: object  # callable (rep, root, grid_index, redraw) -> DgpSpec | None
    sample: object  # callable (spec, n, seed) -> Dataset
    truth: object  # callable (spec, m_hint) -> ndarray
    stochastic_coefs: bool = False


def _coef_seed(root: int, gi: int, rep: int, redraw: bool) -> np.random.SeedSequence:
    return np.random.SeedSequence(root, spawn_key=(gi, _STREAM_COEF, rep if redraw else 0))


def _build_design(cfg: ExperimentConfig) -> _Design:
    if isinstance(cfg.design, DgpSpec):
        if cfg.design_params:
            raise SpecificationError(
                "design_params must be empty when design is a DgpSpec"
            )
        spec = cfg.design

        return _Design(
            label="custom",
            kind="linear",
            get_spec=lambda rep, root, gi, redraw: spec,
            sample=sample_linear_linear,
            truth=lambda s: np.asarray(s.beta, dtype=float),
        )
    name = cfg.design
    params = dict(cfg.design_params)
    if name == "med1":
        beta = tuple(float(b) for b in params.pop("beta", (0.0, 0.3)))
        _reject_unknown(params, "design_params", "med1")
        spec = make_med1_spec(beta)
        return _Design(
            label="med1",
            kind="linear",
            get_spec=lambda rep, root, gi, redraw: spec,
            sample=sample_linear_linear,
            truth=lambda s: np.asarray(s.beta, dtype=float),
        )
    if name == "subset":
        if "m" not in params:
            raise SpecificationError("the subset design requires design_params['m']")
        m = int(params.pop("m"))
        rule = params.pop("beta_rule", ("const", 10.0))
        if isinstance(rule, list):
            rule = tuple(rule)
        _reject_unknown(params, "design_params", "subset")
        make_subset_sim_spec(m, rule, seed=0)  # eager validation of m and the rule
        stochastic = isinstance(rule, tuple) and rule and rule[0] == "normal"

        def get_spec(rep, root, gi, redraw):
            return make_subset_sim_spec(m, rule, seed=_coef_seed(root, gi, rep, redraw))

        return _Design(
            label="subset",
            kind="linear",
            get_spec=get_spec,
            sample=sample_linear_linear,
            truth=lambda s: np.asarray(s.beta, dtype=float),
            stochastic_coefs=stochastic,
        )
    if name == "quadratic":
        rho = float(params.pop("rho", 0.4))
        m = int(params.pop("m", 2))
        _reject_unknown(params, "design_params", "quadratic")
        if m < 2:
            raise SpecificationError(f"the quadratic design needs m >= 2, got {m}")
        if not (-1.0 / m < rho < 1.0):
            raise SpecificationError(
                f"equicorrelation rho={rho} is not positive definite for m={m}"
            )
        truth = np.zeros(m)
        truth[0], truth[1] = 0.2, 1.0

        return _Design(
            label="quadratic",
            kind="quadratic",
            get_spec=lambda rep, root, gi, redraw: None,
            sample=lambda spec, n, seed: sample_quadratic(rho, n, seed, m=m),
            truth=lambda s: truth,
        )
    if name == "logistic":
        _reject_unknown(params, "design_params", "logistic")
        truth = np.array([0.2, 1.0])
        return _Design(
            label="logistic",
            kind="logistic",
            get_spec=lambda rep, root, gi, redraw: None,
            sample=lambda spec, n, seed: sample_logistic(n, seed),
            truth=lambda s: truth,
        )
    raise SpecificationError(
        f"unknown design {name!r}; expected one of {_NAMED_DESIGNS} or a DgpSpec"
    )


def _reject_unknown(params: dict, where: str, name: str) -> None:
    if params:
        raise SpecificationError(
            f"unknown {where} keys for {name}: {sorted(params)}"
        )


# ---------------------------------------------------------------------------
# Config validation
# ---------------------------------------------------------------------------


def _validate_config(cfg: ExperimentConfig) -> _Design:
    if cfg.reps < 1:
        raise SpecificationError(f"reps must be >= 1, got {cfg.reps}")
    if cfg.n < 1:
        raise SpecificationError(f"n must be >= 1, got {cfg.n}")
    if cfg.threads < 1:
        raise SpecificationError(f"threads must be >= 1, got {cfg.threads}")
    if cfg.grid_index < 0:
        raise SpecificationError(f"grid_index must be >= 0, got {cfg.grid_index}")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise SpecificationError(f"seed must be a nonnegative integer, got {cfg.seed!r}")
    if not cfg.estimators:
        raise SpecificationError("the estimator list is empty")
    design = _build_design(cfg)
    if cfg.redraw_per_rep and not design.stochastic_coefs:
        raise SpecificationError(
            "redraw_per_rep requires a design with randomly drawn coefficients "
            "(the subset design's normal rule)"
        )
    seen_labels: set[str] = set()
    for est in cfg.estimators:
        if est.name not in _REGISTRY:
            raise SpecificationError(f"unknown estimator {est.name!r}")
        edef = _REGISTRY[est.name]
        if design.kind not in edef.kinds:
            raise SpecificationError(
                f"estimator {est.name!r} does not apply to the {design.kind} design"
            )
        unknown = set(est.params) - set(edef.param_keys)
        if unknown:
            raise SpecificationError(
                f"unknown params for estimator {est.name!r}: {sorted(unknown)}"
            )
        _validate_params(est)
        if est.label is not None and edef.fixed_labels is not None:
            raise SpecificationError(
                f"estimator {est.name!r} produces multiple rows; label override "
                "is not supported"
            )
        for lbl in _labels_for(est):
            if lbl in seen_labels:
                raise SpecificationError(
                    f"duplicate estimator label {lbl!r}; set a label override"
                )
            seen_labels.add(lbl)
    if cfg.compare_oracle:
        if design.kind != "linear":
            raise OracleComparisonError(
                "oracle comparison is only defined for linear designs"
            )
        if cfg.redraw_per_rep:
            raise OracleComparisonError(
                "oracle comparison requires coefficients drawn once"
            )
        for est in cfg.estimators:
            if _REGISTRY[est.name].oracle is None:
                raise OracleComparisonError(
                    f"estimator {est.name!r} has no registered bias limit"
                )
    return design


def _validate_params(est: EstimatorSpec) -> None:
    p = est.params
    if "k" in p and int(p["k"]) < 1:
        raise SpecificationError(f"k must be >= 1, got {p['k']}")
    if "lam" in p:
        lam = p["lam"]
        if isinstance(lam, str):
            if lam != "sqrt_n":
                raise SpecificationError(f"lam must be a number or 'sqrt_n', got {lam!r}")
        elif float(lam) < 0:
            raise SpecificationError(f"lam must be >= 0, got {lam}")
    if "degree" in p and int(p["degree"]) < 2:
        raise SpecificationError(f"degree must be >= 2, got {p['degree']}")
    if "n_draws" in p and int(p["n_draws"]) < 2:
        raise SpecificationError(f"n_draws must be >= 2, got {p['n_draws']}")
    if "psi2" in p and not float(p["psi2"]) > 0:
        raise SpecificationError(f"psi2 must be > 0, got {p['psi2']}")
    if "folds" in p and int(p["folds"]) < 2:
        raise SpecificationError(f"folds must be >= 2, got {p['folds']}")
    if "focal" in p:
        focal = tuple(int(j) for j in p["focal"])
        if not focal or len(set(focal)) != len(focal) or min(focal) < 0:
            raise SpecificationError(f"invalid focal indices {p['focal']!r}")
    if "basis" in p:
        est_mod._parse_basis(p["basis"])


def _labels_for(est: EstimatorSpec) -> tuple[str, ...]:
    edef = _REGISTRY[est.name]
    if edef.fixed_labels is not None:
        return edef.fixed_labels
    return (est.label,) if est.label is not None else (est.name,)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _one_rep(rep: int, cfg: ExperimentConfig, design: _Design):
    """Sample one dataset and run every estimator on it.

    Returns ``{label: None | (target_indices, errors, covered)}``.
    """
    root, gi = cfg.seed, cfg.grid_index
    spec = design.get_spec(rep, root, gi, cfg.redraw_per_rep)
    data_seed = np.random.SeedSequence(root, spawn_key=(gi, _STREAM_DATA, rep))
    ds = design.sample(spec, cfg.n, data_seed)
    truth = design.truth(spec)
    out: dict[str, object] = {}
    for e_idx, est in enumerate(cfg.estimators):
        edef = _REGISTRY[est.name]
        labels = _labels_for(est)
        seed = np.random.SeedSequence(
            root, spawn_key=(gi, _STREAM_EST_BASE + e_idx, rep)
        )
        try:
            reports = edef.runner(ds, spec, est.params, seed)
        except _REP_FAILURES:
            for lbl in labels:
                out[lbl] = None
            continue
        for lbl, report in zip(labels, reports):
            idx = np.asarray(report.target_indices, dtype=int)
            target = truth[idx]
            errors = report.coefficients - target
            covered = (report.ci_low <= target) & (target <= report.ci_high)
            out[lbl] = (tuple(report.target_indices), errors, covered)
    return out


def run_experiment(cfg: ExperimentConfig) -> SimulationSummary:
    """Run the configured Monte Carlo experiment.

    Per replication: derive the data stream from the root seed, sample a
    dataset, run every configured estimator, and record per-coefficient
    errors and interval coverage. Failed replications (rank deficiency,
    separation, non-convergence, and kin) are counted per estimator and
    excluded from the statistics. Aggregation reduces in replication
    order with compensated summation, so the result does not depend on
    ``threads``.

    Returns
    -------
    SimulationSummary

    Raises
    ------
    InstabilityError
        If any estimator fails on more than 20% of replications.
    SpecificationError, OracleComparisonError
        On invalid configuration.
    """
    design = _validate_config(cfg)
    reps = cfg.reps
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda r: _one_rep(r, cfg, design), range(reps)))
    else:
        results = [_one_rep(r, cfg, design) for r in range(reps)]

    rows: list[SummaryRow] = []
    info: list[tuple[str, str, dict]] = []
    for est in cfg.estimators:
        for lbl in _labels_for(est):
            info.append((lbl, est.name, dict(est.params)))
            per_rep = [res[lbl] for res in results]
            successes = [x for x in per_rep if x is not None]
            failures = reps - len(successes)
            if failures > 0.2 * reps:
                raise InstabilityError(
                    f"estimator '{lbl}' failed {failures} of {reps} replications"
                )
            target_indices = successes[0][0]
            for pos, coef_index in enumerate(target_indices):
                errs = [x[1][pos] for x in successes]
                covs = [bool(x[2][pos]) for x in successes]
                rows.append(
                    _aggregate_cell(lbl, int(coef_index), errs, covs, failures)
                )

    spec0 = design.get_spec(0, cfg.seed, cfg.grid_index, cfg.redraw_per_rep)
    summary = SimulationSummary(
        design_label=design.label,
        n=cfg.n,
        reps=reps,
        seed=cfg.seed,
        rows=tuple(rows),
        spec=spec0 if design.kind == "linear" and not cfg.redraw_per_rep else None,
        estimator_info=tuple(info),
        grid_index=cfg.grid_index,
    )
    if cfg.compare_oracle:
        summary = compare_oracle(summary, summary.spec)
    return summary


def _aggregate_cell(label, coef_index, errs, covs, failures) -> SummaryRow:
    R = len(errs)
    bias = math.fsum(errs) / R
    rmse = math.sqrt(math.fsum(e * e for e in errs) / R)
    hits = math.fsum(1.0 for c in covs if c)
    coverage = hits / R
    if R > 1:
        var = math.fsum((e - bias) ** 2 for e in errs) / (R - 1)
        sd = math.sqrt(var)
        mc_se_bias = sd / math.sqrt(R)
        mc_se_sd = sd / math.sqrt(2.0 * (R - 1))
    else:
        sd = math.nan
        mc_se_bias = math.nan
        mc_se_sd = math.nan
    mc_se_cov = math.sqrt(max(coverage * (1.0 - coverage), 0.0) / R)
    return SummaryRow(
        estimator=label,
        coef_index=coef_index,
        bias=bias,
        sd=sd,
        rmse=rmse,
        coverage=coverage,
        mc_se_bias=mc_se_bias,
        mc_se_sd=mc_se_sd,
        mc_se_coverage=mc_se_cov,
        failures=failures,
    )


def compare_oracle(summary: SimulationSummary, dgp: DgpSpec | None = None) -> SimulationSummary:
    """Attach closed-form bias limits and 3-standard-error pass flags.

    For every row whose estimator has a registered limit, sets
    ``oracle_bias`` to the closed form evaluated on ``dgp``, ``gap`` to
    ``|bias - oracle_bias|``, and ``passed`` to
    ``gap <= 3 * mc_se_bias``.

    Parameters
    ----------
    summary : SimulationSummary
    dgp : DgpSpec, optional
        Defaults to the specification stored in the summary.

    Returns
    -------
    SimulationSummary
        A new summary with the comparison columns filled.

    Raises
    ------
    OracleComparisonError
        If the design is not linear or an estimator has no registered
        limit.
    """
    if dgp is None:
        dgp = summary.spec
    if dgp is None or not isinstance(dgp, DgpSpec):
        raise OracleComparisonError(
            "oracle comparison needs the linear specification that generated the data"
        )
    oracle_by_label: dict[str, dict[int, float]] = {}
    for lbl, name, params in summary.estimator_info:
        fn = _REGISTRY[name].oracle
        if fn is None:
            raise OracleComparisonError(
                f"estimator {name!r} has no registered bias limit"
            )
        oracle_by_label[lbl] = fn(dgp, params)
    new_rows = []
    for r in summary.rows:
        oracle_val = oracle_by_label[r.estimator][r.coef_index]
        gap = abs(r.bias - oracle_val)
        passed = bool(gap <= 3.0 * r.mc_se_bias)
        new_rows.append(
            dataclasses.replace(r, oracle_bias=oracle_val, gap=gap, passed=passed)
        )
    return dataclasses.replace(summary, rows=tuple(new_rows))


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

_AXES = {
    "m-grid": "m",
    "rho-grid": "rho",
    "psi-grid": "psi2",
}


def sweep(cfg_template: ExperimentConfig, axis: str, values) -> list[SweepPoint]:
    """Run the template once per grid value.

    ``m-grid`` and ``rho-grid`` vary the design (treatment count,
    equicorrelation); ``psi-grid`` varies the ``psi2`` parameter of
    every estimator that accepts one. Each point gets ``grid_index``
    set to its position, which offsets all derived seeds; a failing
    point is captured in its :class:`SweepPoint` instead of aborting
    the sweep.

    Parameters
    ----------
    cfg_template : ExperimentConfig
    axis : {"m-grid", "rho-grid", "psi-grid"}
    values : iterable of numbers

    Returns
    -------
    list of SweepPoint
    """
    if axis not in _AXES:
        raise SpecificationError(
            f"unknown sweep axis {axis!r}; expected one of {sorted(_AXES)}"
        )
    key = _AXES[axis]
    values = list(values)
    if not values:
        raise SpecificationError("the sweep grid is empty")
    points: list[SweepPoint] = []
    for gi, value in enumerate(values):
        if key == "psi2":
            ests = []
            touched = False
            for est in cfg_template.estimators:
                if "psi2" in _REGISTRY.get(est.name, _EstDef(None, frozenset(), frozenset())).param_keys:
                    params = dict(est.params)
                    params["psi2"] = float(value)
                    ests.append(dataclasses.replace(est, params=params))
                    touched = True
                else:
                    ests.append(est)
            if not touched:
                raise SpecificationError(
                    "psi-grid requires an estimator that accepts psi2"
                )
            cfg = dataclasses.replace(
                cfg_template, estimators=tuple(ests), grid_index=gi
            )
        else:
            dp = dict(cfg_template.design_params)
            dp[key] = value
            cfg = dataclasses.replace(cfg_template, design_params=dp, grid_index=gi)
        try:
            points.append(SweepPoint(value=float(value), summary=run_experiment(cfg)))
        except (SpecificationError, OracleComparisonError):
            raise
        except Exception as exc:  # capture per-point runtime failures
            points.append(
                SweepPoint(value=float(value), summary=None, error=f"{type(exc).__name__}: {exc}")
            )
    return points


# ---------------------------------------------------------------------------
# JSON configs
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "schema",
    "design",
    "design_params",
    "estimators",
    "n",
    "reps",
    "seed",
    "compare_oracle",
    "redraw_per_rep",
    "threads",
}
_EST_KEYS = {"name", "params", "label"}

_DESIGN_PARAM_KEYS = {
    "med1": {"beta"},
    "subset": {"m", "beta_rule"},
    "quadratic": {"rho", "m"},
    "logistic": set(),
    "custom": {"k", "m", "theta", "beta", "gamma", "sigma2", "omega2", "focal_idx"},
}


def config_from_json(source) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from JSON text or a dict.

    The document must carry ``"schema": 1``. Unknown keys anywhere
    (top level, estimator entries, design_params) are rejected. The
    ``design`` field names a built-in design or ``"custom"``, in which
    case ``design_params`` holds the linear specification fields.

    Raises
    ------
    ConfigError
        On malformed JSON, wrong schema, or unknown keys.
    """
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise ConfigError("the config document must be a JSON object")
    if doc.get("schema") != 1:
        raise ConfigError(f"unsupported config schema {doc.get('schema')!r}; expected 1")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    design = doc.get("design")
    if not isinstance(design, str):
        raise ConfigError("config field 'design' must be a string")
    design_params = doc.get("design_params", {})
    if not isinstance(design_params, dict):
        raise ConfigError("config field 'design_params' must be an object")
    allowed = _DESIGN_PARAM_KEYS.get(design)
    if allowed is None:
        raise ConfigError(
            f"unknown design {design!r}; expected one of "
            f"{sorted(_DESIGN_PARAM_KEYS)}"
        )
    unknown = set(design_params) - allowed
    if unknown:
        raise ConfigError(f"unknown design_params keys for {design}: {sorted(unknown)}")
    if design == "custom":
        dp = dict(design_params)
        if "focal_idx" in dp and dp["focal_idx"] is not None:
            dp["focal_idx"] = tuple(int(j) for j in dp["focal_idx"])
        try:
            design_obj: DgpSpec | str = DgpSpec(**dp)
        except TypeError as exc:
            raise ConfigError(f"incomplete custom design: {exc}") from exc
        design_params = {}
    else:
        design_obj = design
        design_params = dict(design_params)
        if "beta_rule" in design_params and isinstance(design_params["beta_rule"], list):
            design_params["beta_rule"] = tuple(design_params["beta_rule"])
        if "beta" in design_params:
            design_params["beta"] = tuple(design_params["beta"])
    raw_ests = doc.get("estimators", [])
    if not isinstance(raw_ests, list) or not raw_ests:
        raise ConfigError("config field 'estimators' must be a nonempty array")
    ests = []
    for i, entry in enumerate(raw_ests):
        if not isinstance(entry, dict):
            raise ConfigError(f"estimator entry {i} must be an object")
        unknown = set(entry) - _EST_KEYS
        if unknown:
            raise ConfigError(f"unknown estimator keys at entry {i}: {sorted(unknown)}")
        if "name" not in entry:
            raise ConfigError(f"estimator entry {i} is missing 'name'")
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"estimator entry {i}: 'params' must be an object")
        params = dict(params)
        if "focal" in params:
            params["focal"] = tuple(int(j) for j in params["focal"])
        ests.append(
            EstimatorSpec(
                name=str(entry["name"]), params=params, label=entry.get("label")
            )
        )
    return ExperimentConfig(
        design=design_obj,
        design_params=design_params,
        estimators=tuple(ests),
        n=int(doc.get("n", 1000)),
        reps=int(doc.get("reps", 100)),
        seed=int(doc.get("seed", 0)),
        compare_oracle=bool(doc.get("compare_oracle", False)),
        redraw_per_rep=bool(doc.get("redraw_per_rep", False)),
        threads=int(doc.get("threads", 1)),
    )
