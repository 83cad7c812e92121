"""Command-line interface.

Subcommands
-----------
replicate {med1,subset,quadratic,logistic}
    Run the canonical desk-scale configuration for a benchmark design
    and write a results CSV plus a rendered plain-text table (the
    quadratic design additionally writes per-rho and per-m series files,
    and optional SVG charts with ``--plot``).
simulate --config FILE
    Run a single experiment described by a JSON config.
sweep --config FILE --axis AXIS --values V1,V2,...
    Run a config across a grid.
verify
    Closed-form-versus-empirical deviation table over the bias limits
    and the spectral identities; exit 1 when any check fails.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 runtime instability. All file writes are atomic (temp file + rename).
The environment variable ``MULTICAUSE_SEED`` supplies the seed when
``--seed`` is absent.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .asymptotics import (
    pinpointing_variance,
    residual_dependence,
    theta_hat_gram,
    woodbury_projection,
)
from .errors import (
    ConfigError,
    InstabilityError,
    MulticauseError,
    OracleComparisonError,
    SpecificationError,
)
from .factor import pca_substitute
from .harness import (
    RESULTS_CSV_HEADER,
    EstimatorSpec,
    ExperimentConfig,
    SimulationSummary,
    _build_design,
    config_from_json,
    run_experiment,
    sweep,
)
from .model import (
    WEAK_LIMIT,
    ConfoundingSequence,
    DgpSpec,
    build_theta,
    dataset_to_csv,
)

__all__ = ["main"]

VERIFY_CSV_HEADER = "lemma_or_prop,quantity,closed_form,empirical,abs_gap,tolerance,pass"

_M_GRID = (3, 10, 50, 100, 200)
_RHO_GRID = (-0.3, 0.0, 0.2, 0.4)
_QUAD_M_GRID = (2, 4, 8, 16)
_NOISE_SD_GRID = (1e-3, 1e-2, 1e-1, 1.0)


# ---------------------------------------------------------------------------
# Small utilities
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    if not path.parent.is_dir():
        raise ConfigError(f"output directory {path.parent} does not exist")
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    if not out.exists():
        if not out.parent.is_dir():
            raise ConfigError(f"parent of --out ({out.parent}) does not exist")
        out.mkdir()
    elif not out.is_dir():
        raise ConfigError(f"--out {out} exists and is not a directory")
    return out


def _resolve_seed(args, default: int) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("MULTICAUSE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"MULTICAUSE_SEED is not an integer: {env!r}") from exc
    return default


def _f(x, width=10, prec=3) -> str:
    return f"{x:>{width}.{prec}f}"


def render_summary_table(summary: SimulationSummary, title: str) -> str:
    """Fixed-width table of a summary; byte-stable for identical results."""
    rows = summary.rows
    has_oracle = any(r.oracle_bias is not None for r in rows)
    w = max([len("estimator")] + [len(r.estimator) for r in rows])
    head = f"{'estimator':<{w}}  coef  {'bias':>10}  {'sd':>10}  {'rmse':>10}  {'coverage':>10}"
    if has_oracle:
        head += f"  {'oracle':>10}  {'gap':>10}  ok"
    lines = [title, "-" * len(head), head, "-" * len(head)]
    for r in rows:
        line = (
            f"{r.estimator:<{w}}  {r.coef_index:>4}  {_f(r.bias)}  {_f(r.sd)}"
            f"  {_f(r.rmse)}  {_f(r.coverage)}"
        )
        if has_oracle:
            if r.oracle_bias is None:
                line += f"  {'':>10}  {'':>10}   -"
            else:
                ok = "yes" if r.passed else "NO"
                line += f"  {_f(r.oracle_bias)}  {_f(r.gap, prec=4)}  {ok}"
        lines.append(line)
    lines.append("-" * len(head))
    lines.append(f"n={summary.n} reps={summary.reps} seed={summary.seed}")
    return "\n".join(lines) + "\n"


def _series_csv(axis: str, points) -> str:
    lines = ["axis,value," + RESULTS_CSV_HEADER]
    for p in points:
        if p.summary is None:
            continue
        for row_line in p.summary.to_csv().splitlines()[1:]:
            lines.append(f"{axis},{p.value:.10g},{row_line}")
    return "\n".join(lines) + "\n"


def _pooled_rmse(summary: SimulationSummary, label: str) -> float:
    vals = [r.rmse for r in summary.rows if r.estimator == label]
    return sum(vals) / len(vals)


def _render_series_table(title: str, axis_name: str, points, labels) -> str:
    w = max([len(axis_name)] + [len(f"{p.value:g}") for p in points])
    head = f"{axis_name:>{w}}" + "".join(f"  {lbl:>18}" for lbl in labels)
    lines = [title, "-" * len(head), head, "-" * len(head)]
    for p in points:
        if p.summary is None:
            lines.append(f"{p.value:>{w}g}  ERROR: {p.error}")
            continue
        cells = "".join(
            f"  {_pooled_rmse(p.summary, lbl):>18.4f}" for lbl in labels
        )
        lines.append(f"{p.value:>{w}g}{cells}")
    lines.append("-" * len(head))
    return "\n".join(lines) + "\n"


def _svg_chart(title: str, xlabel: str, ylabel: str, xticks, series: dict) -> str:
    """Self-contained SVG line chart; x positions are categorical."""
    width, height = 640, 400
    ml, mr, mt, mb = 70, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    nx = len(xticks)
    all_y = [y for ys in series.values() for y in ys]
    y_lo = min(0.0, min(all_y))
    y_hi = max(all_y) * 1.08 or 1.0
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

    def x_at(i):
        return ml + (pw * (i + 0.5) / nx)

    def y_at(v):
        return mt + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="18" y="{mt + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {mt + ph / 2})">{ylabel}</text>',
    ]
    for i, tick in enumerate(xticks):
        parts.append(
            f'<text x="{x_at(i):.1f}" y="{mt + ph + 18}" text-anchor="middle">{tick:g}</text>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{ml - 8}" y="{y_at(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>'
        )
        parts.append(
            f'<line x1="{ml}" y1="{y_at(v):.1f}" x2="{ml + pw}" y2="{y_at(v):.1f}" '
            f'stroke="#dddddd"/>'
        )
    for si, (label, ys) in enumerate(series.items()):
        color = colors[si % len(colors)]
        pts = " ".join(f"{x_at(i):.1f},{y_at(v):.1f}" for i, v in enumerate(ys))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for i, v in enumerate(ys):
            parts.append(
                f'<circle cx="{x_at(i):.1f}" cy="{y_at(v):.1f}" r="3" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{ml + pw - 6}" y="{mt + 16 + 16 * si}" text-anchor="end" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _maybe_dump_data(args, cfg: ExperimentConfig, out: Path, stem: str) -> None:
    if not getattr(args, "dump_data", False):
        return
    design = _build_design(cfg)
    spec = design.get_spec(0, cfg.seed, cfg.grid_index, cfg.redraw_per_rep)
    seed = np.random.SeedSequence(cfg.seed, spawn_key=(cfg.grid_index, 0, 0))
    ds = design.sample(spec, cfg.n, seed)
    target = out / f"{stem}_data.csv"
    tmp = target.parent / (target.name + ".tmp")
    dataset_to_csv(ds, tmp)
    os.replace(tmp, target)


def _emit(args, text_table: str, csv_text: str) -> None:
    if args.format == "csv":
        sys.stdout.write(csv_text)
    else:
        sys.stdout.write(text_table)


# ---------------------------------------------------------------------------
# replicate
# ---------------------------------------------------------------------------


def _cmd_replicate(args) -> int:
    out = _out_dir(args)
    design = args.design
    if design == "med1":
        return _replicate_med1(args, out)
    if design == "subset":
        return _replicate_subset(args, out)
    if design == "quadratic":
        return _replicate_quadratic(args, out)
    return _replicate_logistic(args, out)


def _replicate_med1(args, out: Path) -> int:
    seed = _resolve_seed(args, 7)
    cfg = ExperimentConfig(
        design="med1",
        estimators=(
            EstimatorSpec("naive"),
            EstimatorSpec("oracle"),
            EstimatorSpec("pca_cv_ridge"),
        ),
        n=args.n or 1000,
        reps=args.reps or 1000,
        seed=seed,
        threads=args.threads,
    )
    summary = run_experiment(cfg)
    csv_text = summary.to_csv()
    table = render_summary_table(summary, "two-treatment benchmark (med1)")
    _atomic_write(out / "med1_results.csv", csv_text)
    _atomic_write(out / "med1_table.txt", table)
    _maybe_dump_data(args, cfg, out, "med1")
    _emit(args, table, csv_text)
    return 0


_SUBSET_RULES = (
    ("const10", ("const", 10.0)),
    ("const100", ("const", 100.0)),
    ("reciprocal", "reciprocal"),
)


def _replicate_subset(args, out: Path) -> int:
    seed = _resolve_seed(args, 7)
    tables = []
    failed = []
    for tag, rule in _SUBSET_RULES:
        template = ExperimentConfig(
            design="subset",
            design_params={"m": _M_GRID[0], "beta_rule": rule},
            estimators=(EstimatorSpec("naive"), EstimatorSpec("subset_each")),
            n=args.n or 1000,
            reps=args.reps or 100,
            seed=seed,
            threads=args.threads,
        )
        points = sweep(template, "m-grid", _M_GRID)
        failed += [p for p in points if p.summary is None]
        _atomic_write(out / f"subset_{tag}.csv", _series_csv("m", points))
        tables.append(
            _render_series_table(
                f"focal-subset benchmark, rule={tag} (mean rmse over treatments)",
                "m",
                points,
                ("naive", "subset_each"),
            )
        )
    table = "\n".join(tables)
    _atomic_write(out / "subset_table.txt", table)
    _emit(args, table, table if args.format != "csv" else _read_back(out, "subset_const10.csv"))
    for p in failed:
        print(f"grid point {p.value:g} failed: {p.error}", file=sys.stderr)
    return 3 if failed else 0


def _read_back(out: Path, name: str) -> str:
    return (out / name).read_text()


def _replicate_quadratic(args, out: Path) -> int:
    seed = _resolve_seed(args, 7)
    n = args.n or 10000
    reps = args.reps or 100
    rho_template = ExperimentConfig(
        design="quadratic",
        design_params={"m": 2},
        estimators=(EstimatorSpec("quadratic_pair"),),
        n=n,
        reps=reps,
        seed=seed,
        threads=args.threads,
    )
    rho_points = sweep(rho_template, "rho-grid", _RHO_GRID)
    m_template = ExperimentConfig(
        design="quadratic",
        design_params={"rho": 0.4},
        estimators=(EstimatorSpec("quadratic_naive"), EstimatorSpec("quadratic_deconf")),
        n=n,
        reps=reps,
        seed=seed,
        threads=args.threads,
    )
    m_points = sweep(m_template, "m-grid", _QUAD_M_GRID)
    failed = [p for p in rho_points + m_points if p.summary is None]
    _atomic_write(out / "quadratic_rho_series.csv", _series_csv("rho", rho_points))
    _atomic_write(out / "quadratic_m_series.csv", _series_csv("m", m_points))
    t1 = _render_series_table(
        "quadratic outcome, correlation grid (mean rmse over coefficients)",
        "rho",
        rho_points,
        ("quadratic_deconf", "quadratic_parametric"),
    )
    t2 = _render_series_table(
        "quadratic outcome, treatment-count grid (mean rmse over coefficients)",
        "m",
        m_points,
        ("quadratic_naive", "quadratic_deconf"),
    )
    table = t1 + "\n" + t2
    _atomic_write(out / "quadratic_table.txt", table)
    if args.plot:
        if all(p.summary is not None for p in rho_points):
            _atomic_write(
                out / "quadratic_rho.svg",
                _svg_chart(
                    "rmse by treatment correlation",
                    "rho",
                    "rmse",
                    [p.value for p in rho_points],
                    {
                        lbl: [_pooled_rmse(p.summary, lbl) for p in rho_points]
                        for lbl in ("quadratic_deconf", "quadratic_parametric")
                    },
                ),
            )
        if all(p.summary is not None for p in m_points):
            _atomic_write(
                out / "quadratic_m.svg",
                _svg_chart(
                    "rmse by treatment count",
                    "m",
                    "rmse",
                    [p.value for p in m_points],
                    {
                        lbl: [_pooled_rmse(p.summary, lbl) for p in m_points]
                        for lbl in ("quadratic_naive", "quadratic_deconf")
                    },
                ),
            )
    _emit(args, table, _series_csv("rho", rho_points))
    for p in failed:
        print(f"grid point {p.value:g} failed: {p.error}", file=sys.stderr)
    return 3 if failed else 0


def _replicate_logistic(args, out: Path) -> int:
    seed = _resolve_seed(args, 7)
    template = ExperimentConfig(
        design="logistic",
        estimators=(EstimatorSpec("logistic_suite"),),
        n=args.n or 1000,
        reps=args.reps or 100,
        seed=seed,
        threads=args.threads,
    )
    points = sweep(template, "psi-grid", [sd * sd for sd in _NOISE_SD_GRID])
    failed = [p for p in points if p.summary is None]
    csv_text = _series_csv("psi2", points)
    _atomic_write(out / "logistic_noise_series.csv", csv_text)
    lines = ["logistic outcome, score-noise grid"]
    head = f"{'noise_sd':>10}  {'estimator':<16}  coef  {'bias':>10}  {'sd':>10}  {'rmse':>10}"
    lines += ["-" * len(head), head, "-" * len(head)]
    for sd_val, p in zip(_NOISE_SD_GRID, points):
        if p.summary is None:
            lines.append(f"{sd_val:>10g}  ERROR: {p.error}")
            continue
        for r in p.summary.rows:
            lines.append(
                f"{sd_val:>10g}  {r.estimator:<16}  {r.coef_index:>4}"
                f"  {_f(r.bias)}  {_f(r.sd)}  {_f(r.rmse)}"
            )
    lines.append("-" * len(head))
    table = "\n".join(lines) + "\n"
    _atomic_write(out / "logistic_table.txt", table)
    _emit(args, table, csv_text)
    for p in failed:
        print(f"grid point {p.value:g} failed: {p.error}", file=sys.stderr)
    return 3 if failed else 0


# ---------------------------------------------------------------------------
# simulate / sweep
# ---------------------------------------------------------------------------


def _load_config(args) -> ExperimentConfig:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = config_from_json(text)
    overrides = {}
    if args.n is not None:
        overrides["n"] = args.n
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.seed is not None or os.environ.get("MULTICAUSE_SEED"):
        overrides["seed"] = _resolve_seed(args, cfg.seed)
    if args.threads != 1:
        overrides["threads"] = args.threads
    if overrides:
        import dataclasses

        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _cmd_simulate(args) -> int:
    out = _out_dir(args)
    cfg = _load_config(args)
    summary = run_experiment(cfg)
    csv_text = summary.to_csv()
    table = render_summary_table(summary, f"simulation: {summary.design_label}")
    _atomic_write(out / "simulate_results.csv", csv_text)
    _maybe_dump_data(args, cfg, out, "simulate")
    _emit(args, table, csv_text)
    return 0


def _cmd_sweep(args) -> int:
    out = _out_dir(args)
    cfg = _load_config(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"--values must be comma-separated numbers: {args.values!r}") from exc
    if args.axis == "m-grid":
        values = [int(v) for v in values]
    points = sweep(cfg, args.axis, values)
    csv_text = _series_csv(args.axis, points)
    _atomic_write(out / "sweep_results.csv", csv_text)
    labels = sorted({r.estimator for p in points if p.summary for r in p.summary.rows})
    table = _render_series_table(
        f"sweep over {args.axis}", args.axis, points, tuple(labels)
    )
    _emit(args, table, csv_text)
    failed = [p for p in points if p.summary is None]
    for p in failed:
        print(f"grid point {p.value:g} failed: {p.error}", file=sys.stderr)
    return 3 if failed else 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _verify_spec() -> DgpSpec:
    return DgpSpec(
        k=2,
        m=5,
        theta=[[0.3, 0.4, 0.5, 0.2, 0.6], [0.1, -0.2, 0.3, 0.4, -0.5]],
        beta=(0.0, 0.3, -0.2, 0.1, 0.4),
        gamma=(0.5, -0.3),
        sigma2=1.0,
        omega2=9.0,
        focal_idx=(0,),
    )


def _verify_rows(seed: int, n: int, reps: int, scale: float, threads: int) -> list[dict]:
    rows: list[dict] = []

    def add(group, quantity, closed, empirical, tol):
        gap = abs(empirical - closed)
        rows.append(
            dict(
                lemma_or_prop=group,
                quantity=quantity,
                closed_form=closed,
                empirical=empirical,
                abs_gap=gap,
                tolerance=tol,
                passed=bool(gap <= tol),
            )
        )

    def add_bound(group, quantity, bound, empirical):
        # Lower-bound row: passes when empirical >= bound; the gap is the
        # shortfall below the bound.
        shortfall = max(0.0, bound - empirical)
        rows.append(
            dict(
                lemma_or_prop=group,
                quantity=quantity,
                closed_form=bound,
                empirical=empirical,
                abs_gap=shortfall,
                tolerance=0.0,
                passed=bool(shortfall <= 0.0),
            )
        )

    # Bias limits of the five linear estimators, checked by Monte Carlo.
    cfg = ExperimentConfig(
        design=_verify_spec(),
        estimators=(
            EstimatorSpec("naive"),
            EstimatorSpec("penalized", {"lam": "sqrt_n"}),
            EstimatorSpec("posterior_mean", {"n_draws": 50}),
            EstimatorSpec("white_noised", {"psi2": 1.0}),
            EstimatorSpec("subset", {"k": 2}),
        ),
        n=n,
        reps=reps,
        seed=seed,
        compare_oracle=True,
        threads=threads,
    )
    summary = run_experiment(cfg)
    for r in summary.rows:
        tol = 3.0 * r.mc_se_bias * scale
        add(
            f"bias_limit_{r.estimator}",
            f"bias[{r.coef_index}]",
            r.oracle_bias,
            r.bias,
            tol,
        )

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9, 0)))

    # Spectral block structure of [A, Zhat].
    n_blk, m_blk, k_blk = 500, 8, 2
    theta_blk = rng.normal(size=(k_blk, m_blk))
    Z = rng.standard_normal((n_blk, k_blk))
    A = Z @ theta_blk + rng.standard_normal((n_blk, m_blk))
    sub = pca_substitute(A, k_blk)
    X = np.column_stack([A, sub.Zhat])
    sv = np.linalg.svd(X, compute_uv=False)
    pred = np.sort(
        np.concatenate(
            [np.sqrt(sub.D[:k_blk] ** 2 + n_blk), sub.D[k_blk:], np.zeros(k_blk)]
        )
    )[::-1]
    add(
        "svd_block_structure",
        "max_singular_value_gap",
        0.0,
        float(np.max(np.abs(sv - pred))),
        1e-8 * scale,
    )

    # Gram limit of the recovered loadings, and the residual dependence
    # left in the treatments, at n = 1e6.
    theta_g = np.array([[0.3, 0.4]])
    n_g = 1_000_000
    Zg = rng.standard_normal((n_g, 1))
    Ag = Zg @ theta_g + rng.standard_normal((n_g, 2))
    sub_g = pca_substitute(Ag, 1)
    emp_gram = sub_g.theta_hat.T @ sub_g.theta_hat
    add(
        "loading_gram_limit",
        "max_abs_entry_gap",
        0.0,
        float(np.max(np.abs(emp_gram - theta_hat_gram(theta_g, 1.0)))),
        0.02 * scale,
    )
    emp_resid = Ag.T @ Ag / n_g - emp_gram
    add(
        "residual_dependence",
        "max_abs_entry_gap",
        0.0,
        float(np.max(np.abs(emp_resid - residual_dependence(theta_g, 1.0)))),
        0.02 * scale,
    )

    # Projection of the confounder onto the treatments: converges to the
    # identity under constant loadings, stays bounded away under the
    # weak (summable) sequence.
    const_seq = ConfoundingSequence(rule="constant", k=1, c=1.0)
    gaps = []
    for m in (10, 100, 1000):
        proj = woodbury_projection(build_theta(const_seq, m), 1.0)[0, 0]
        gaps.append(1.0 - float(proj))
    monotone = 1.0 if (gaps[0] > gaps[1] > gaps[2]) else 0.0
    add("projection_identity", "gap_monotone_const", 1.0, monotone, 0.5 * scale)
    add("projection_identity", "final_gap_const_m1000", 0.0, gaps[-1], 1e-3 * scale)
    weak_seq = ConfoundingSequence(rule="weak", k=1)
    theta_w = build_theta(weak_seq, 10_000)
    weak_gap = 1.0 - float(woodbury_projection(theta_w, 1.0)[0, 0])
    weak_limit = 1.0 / (1.0 + WEAK_LIMIT)
    add("projection_identity", "weak_gap_vs_limit", weak_limit, weak_gap, 0.01 * scale)
    add_bound("projection_identity", "weak_gap_lower_bound", 0.4, weak_gap)

    # Posterior variance of the confounder given the treatments stays
    # bounded below along the weak sequence.
    pin = float(pinpointing_variance(theta_w, 1.0)[0])
    add("pinpointing_variance", "weak_min_var_vs_limit", weak_limit, pin, 1e-3 * scale)
    add_bound("pinpointing_variance", "weak_min_var_lower_bound", 0.4, pin)
    return rows


def _verify_csv(rows: list[dict]) -> str:
    lines = [VERIFY_CSV_HEADER]
    for r in rows:
        lines.append(
            f"{r['lemma_or_prop']},{r['quantity']},{r['closed_form']:.10g},"
            f"{r['empirical']:.10g},{r['abs_gap']:.10g},{r['tolerance']:.10g},"
            f"{'1' if r['passed'] else '0'}"
        )
    return "\n".join(lines) + "\n"


def _verify_table(rows: list[dict]) -> str:
    w = max(len(r["lemma_or_prop"]) for r in rows)
    q = max(len(r["quantity"]) for r in rows)
    head = (
        f"{'check':<{w}}  {'quantity':<{q}}  {'closed':>12}  {'empirical':>12}"
        f"  {'gap':>12}  {'tol':>12}  ok"
    )
    lines = ["closed-form versus empirical checks", "-" * len(head), head, "-" * len(head)]
    for r in rows:
        ok = "yes" if r["passed"] else "NO"
        lines.append(
            f"{r['lemma_or_prop']:<{w}}  {r['quantity']:<{q}}  {r['closed_form']:>12.6g}"
            f"  {r['empirical']:>12.6g}  {r['abs_gap']:>12.4g}  {r['tolerance']:>12.4g}  {ok}"
        )
    lines.append("-" * len(head))
    return "\n".join(lines) + "\n"


def _cmd_verify(args) -> int:
    seed = _resolve_seed(args, 17)
    reps = args.reps or 100
    if reps > 200:
        raise ConfigError("the verification budget caps reps at 200")
    n = args.n or 100_000
    if n > 100_000:
        raise ConfigError("the verification budget caps n at 100000")
    scale = 0.5 if args.tolerance == "strict" else 1.0
    rows = _verify_rows(seed, n, reps, scale, args.threads)
    csv_text = _verify_csv(rows)
    table = _verify_table(rows)
    if args.out:
        _atomic_write(_out_dir(args) / "verify_report.csv", csv_text)
    if args.format == "table":
        sys.stdout.write(table)
    else:
        sys.stdout.write(csv_text)
    failing = [r for r in rows if not r["passed"]]
    if failing:
        print("failed checks:", file=sys.stderr)
        for r in failing:
            print(
                f"  {r['lemma_or_prop']}/{r['quantity']}: gap {r['abs_gap']:.6g} "
                f"> tolerance {r['tolerance']:.6g}",
                file=sys.stderr,
            )
        return 1
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multicause",
        description="Monte Carlo laboratory for factor-model causal estimators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_format="table"):
        p.add_argument("--seed", type=int, default=None, help="root seed (or MULTICAUSE_SEED)")
        p.add_argument("--reps", type=int, default=None, help="replication count")
        p.add_argument("--n", type=int, default=None, help="observations per replication")
        p.add_argument("--out", default=None, help="output directory (created if its parent exists)")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument(
            "--format", choices=("csv", "table"), default=default_format, help="stdout format"
        )
        p.add_argument(
            "--dump-data", action="store_true", help="also write the first replication's dataset"
        )

    p_rep = sub.add_parser("replicate", help="run a canonical benchmark design")
    p_rep.add_argument("design", choices=("med1", "subset", "quadratic", "logistic"))
    common(p_rep)
    p_rep.add_argument("--plot", action="store_true", help="write SVG charts (quadratic)")
    p_rep.set_defaults(func=_cmd_replicate)

    p_sim = sub.add_parser("simulate", help="run one experiment from a JSON config")
    p_sim.add_argument("--config", required=True, help="path to a schema-1 JSON config")
    common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_sw = sub.add_parser("sweep", help="run a config across a grid")
    p_sw.add_argument("--config", required=True, help="path to a schema-1 JSON config")
    p_sw.add_argument("--axis", required=True, choices=("m-grid", "rho-grid", "psi-grid"))
    p_sw.add_argument("--values", required=True, help="comma-separated grid values")
    common(p_sw)
    p_sw.set_defaults(func=_cmd_sweep)

    p_ver = sub.add_parser("verify", help="closed-form versus empirical checks")
    common(p_ver, default_format="csv")
    p_ver.add_argument(
        "--tolerance",
        choices=("default", "strict"),
        default="default",
        help="strict halves every tolerance (may fail at desk budgets)",
    )
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    reps = getattr(args, "reps", None)
    if reps is not None and reps < 1:
        print(f"{parser.prog}: error: --reps must be >= 1, got {reps}", file=sys.stderr)
        return 2
    n = getattr(args, "n", None)
    if n is not None and n < 1:
        print(f"{parser.prog}: error: --n must be >= 1, got {n}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, SpecificationError, OracleComparisonError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except InstabilityError as exc:
        print(f"{parser.prog}: instability: {exc}", file=sys.stderr)
        return 3
    except MulticauseError as exc:
        print(f"{parser.prog}: runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
