"""
End-to-end estimation: sample -> moment functions -> model solution ->
regularization -> scoring, and seeded replication sweeps.
"""

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from evaluator import score_solution
from grid import GridFn, make_grids
from moments import sample_moments, sigma_ecf
from regularization import check_phi_class, classify_smoothness, lemma2_cutoff
from simulator import exact_moments, generate, load_model_spec, true_cf, truth_functions
from solvers import (
    reduce_factor_model, solve_ar1, solve_model1, solve_model2, solve_model3, solve_model4,
    solve_model4a, solve_model5, solve_model6, solve_model7,
)
from utils.config import DEFAULTS, SWEEP_KEYS, read_config
from utils.errors import ConfigError, NumericalError
from utils.io import ensure_dir, fmt, write_report
from utils.parallel import parallel_execute

logger = logging.getLogger(__name__)

PHI_CLASS_ORDERS = (0, 1, 2)


@dataclass(frozen=True)
class EstimateOptions:
    """
    Knobs of one estimation run.

    ``cutoff`` is None, 'heuristic' or ('lemma2', k).
    """

    N: int = 1024
    s_max: float = 20.0
    variant: str = "A"
    cutoff: object = None
    safety: float = DEFAULTS["safety"]
    bandwidth: Optional[float] = None
    max_order: int = DEFAULTS["max_order"]


@dataclass
class EstimationReport:
    """One estimation: inputs, solution, scores and the files written."""

    spec: object
    n: Optional[int]
    seed: Optional[int]
    solution: object = None
    metrics: Dict[str, float] = field(default_factory=dict)
    runtime_ms: float = 0.0
    status: str = "ok"
    files: List[str] = field(default_factory=list)


def parse_cutoff(text):
    """
    Parse 'none', 'heuristic' or 'lemma2:<k>'.

    Args:
        text (str): Cut-off option

    Returns:
        object: None, 'heuristic' or ('lemma2', k)
    """
    if text is None or text == "none":
        return None
    if text == "heuristic":
        return "heuristic"
    if text.startswith("lemma2:"):
        try:
            k = int(text.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"cutoff must be lemma2:<k> with integer k, got '{text}'") from None
        if k < 1:
            raise ConfigError(f"lemma2 order must be at least 1, got {k}")
        return ("lemma2", k)
    raise ConfigError(f"cutoff must be none, heuristic or lemma2:<k>, got '{text}'")


def cutoff_rule(option, n, safety, grid):
    """
    Turn a cut-off option into the rule the solvers accept.

    The logarithmic radius uses r_n = sqrt(n); exact inputs are never cut.

    Args:
        option (object): Output of parse_cutoff
        n (int or None): Sample size, None for exact inputs
        safety (float): Safety factor
        grid (FreqGrid): Frequency grid

    Returns:
        object: None, 'heuristic' or a CutoffRule
    """
    if option is None or n is None:
        return None
    if option == "heuristic":
        return "heuristic"
    return lemma2_cutoff(np.sqrt(n), option[1], safety, grid)


def _grids(spec, options):
    return make_grids(spec.d, options.N, options.s_max)


def solve_moments(spec, moments, options, rule=None):
    """
    Dispatch known functions to the model's solver.

    Args:
        spec (ModelSpec): Model (known error laws for models 1 and 2)
        moments (MomentFns): Known functions
        options (EstimateOptions): Variant and limits
        rule (object, optional): Cut-off passed to the solver

    Returns:
        ModelSolution: Solution
    """
    model = spec.model
    variant = options.variant
    common = {"max_order": options.max_order, "cutoff": rule}
    if model == "1":
        phi_u = true_cf(spec.law("u"), moments.grid)
        return solve_model1(moments.phi_z, phi_u, sigma=moments.sigma_ecf, **common)
    if model == "2":
        return solve_model2(moments.phi_z, true_cf(spec.law("u"), moments.grid))
    if model in ("3", "factor"):
        return solve_model3(moments, variant, spec.swap_labels, **common)
    if model == "4":
        return solve_model4(moments, variant, **common)
    if model == "4a":
        return solve_model4a(moments, variant, **common)
    if model == "5":
        return solve_model5(moments, variant, **common)
    if model == "6":
        return solve_model6(moments.phi_z, moments.phi_x, moments.w_grid, moments.w_flags,
                            cutoff=rule, eps=moments.eps, sigma=moments.sigma_ecf)
    if model == "7":
        return solve_model7(moments, variant, **common)
    if model == "ar1":
        return solve_ar1(moments, None, variant, **common)
    raise ConfigError(f"unknown model '{model}'")


def estimate(sample, spec, options):
    """
    Estimate the model's unknowns from a sample.

    Args:
        sample (Sample): Observations (indicators in z for the factor model)
        spec (ModelSpec): Model
        options (EstimateOptions): Grid, variant, cut-off, bandwidth

    Returns:
        ModelSolution: Solution with n and the cut-off in its diagnostics
    """
    freq, space = _grids(spec, options)
    if spec.model == "factor":
        sample, _, _ = reduce_factor_model(spec.A, sample.z, spec.partition)
    moments = sample_moments(sample, freq, spec.model, bandwidth=options.bandwidth, space_grid=space)
    rule = cutoff_rule(options.cutoff, sample.n, options.safety, freq)
    solution = solve_moments(spec, moments, options, rule)
    diagnostics = dict(solution.diagnostics)
    diagnostics["n"] = sample.n
    diagnostics["sigma_ecf"] = moments.sigma_ecf
    return replace(solution, diagnostics=diagnostics)


def estimate_exact(spec, options):
    """
    Solve the model from exact known functions of the true laws.

    Args:
        spec (ModelSpec): Model
        options (EstimateOptions): Grid and variant

    Returns:
        ModelSolution: Solution
    """
    freq, space = _grids(spec, options)
    moments = exact_moments(spec, freq, space)
    return solve_moments(spec, moments, options)


def _atom(spec):
    if "xstar" not in spec.laws:
        return None
    atoms = spec.law("xstar").atoms
    return atoms[0][0] if atoms else None


def run_replication(spec, options, n, seed, exact=False):
    """
    Generate, estimate and score one replication.

    Numerical failures, and value errors raised by degenerate samples, are
    recorded as status 'failed' with no metrics. Configuration errors propagate.

    Args:
        spec (ModelSpec): Model
        options (EstimateOptions): Estimation options
        n (int): Sample size
        seed (int): Seed of this replication
        exact (bool): Use exact moments instead of a sample

    Returns:
        EstimationReport: Scores without the solution arrays
    """
    start = time.perf_counter()
    report = EstimationReport(spec, None if exact else n, seed)
    try:
        if exact:
            solution = estimate_exact(spec, options)
        else:
            sample, _ = generate(spec, n, seed)
            solution = estimate(sample, spec, options)
        freq, space = _grids(spec, options)
        truth = truth_functions(spec, freq, space)
        report.metrics = score_solution(solution, truth, atom=_atom(spec))
        report.metrics["identified_points"] = float(solution.diagnostics.get("identified_points", 0))
    except ConfigError:
        raise
    except (NumericalError, ValueError) as exc:
        logger.warning("replication n=%s seed=%s failed: %s", n, seed, exc)
        report.status = "failed"
    report.runtime_ms = 1000.0 * (time.perf_counter() - start)
    return report


@dataclass(frozen=True)
class SweepConfig:
    """Replication plan read from a sweep file."""

    spec: object
    options: EstimateOptions
    sizes: tuple
    replications: int
    seed: int
    exact: bool
    out: str


def load_sweep(path):
    """
    Read a sweep config file.

    Args:
        path (str): Config path

    Returns:
        SweepConfig: Plan
    """
    config = read_config(path, SWEEP_KEYS)
    spec = load_model_spec(config)
    N, s_max = config.get_grid()
    try:
        cutoff = parse_cutoff(config.get_str("cutoff"))
    except ConfigError as exc:
        raise config.error("cutoff", str(exc)) from None
    safety = config.get_float("safety")
    if not 0 < safety < 1:
        raise config.error("safety", f"safety must lie in (0, 1), got {safety}")
    bandwidth = config.get_float("bandwidth") if "bandwidth" in config else None
    if bandwidth is not None and not bandwidth > 0:
        raise config.error("bandwidth", f"bandwidth must be positive, got {bandwidth}")
    sizes = tuple(config.get_int_list("n"))
    if any(n < 2 for n in sizes):
        raise config.error("n", f"every n must be at least 2, got {list(sizes)}")
    replications = config.get_int("replications")
    if replications < 0:
        raise config.error("replications", f"replications must be non-negative, got {replications}")
    options = EstimateOptions(N, s_max, spec.variant, cutoff, safety, bandwidth,
                              config.get_int("max_order"))
    out = config.get_str("out", os.path.splitext(path)[0] + "_out")
    return SweepConfig(spec, options, sizes, replications, config.get_int("seed"),
                       config.get_bool("exact"), out)


def _task(spec, options, n, seed, exact):
    report = run_replication(spec, options, n, seed, exact)
    return report.n, report.seed, report.status, report.metrics


def run_sweep(plan, jobs=1):
    """
    Run every (n, replication) pair of a plan; replication i uses seed + i.

    Args:
        plan (SweepConfig): Plan
        jobs (int): Worker processes

    Returns:
        list: EstimationReport per replication, in plan order
    """
    tasks = []
    sizes = (0,) if plan.exact else plan.sizes
    for n in sizes:
        for i in range(plan.replications):
            tasks.append((plan.spec, plan.options, n, plan.seed + i, plan.exact))
    logger.info("sweep: %d replications", len(tasks))
    results = parallel_execute(_task, tasks, jobs)
    reports = []
    for (spec, _, n, seed, _), (rn, rseed, status, metrics) in zip(tasks, results):
        reports.append(EstimationReport(spec, rn, rseed, metrics=metrics, status=status))
    return reports


def _metric_names(reports):
    names = set()
    for r in reports:
        names.update(r.metrics)
    return sorted(names)


def medians(reports):
    """
    Median of every metric per sample size, ignoring failed replications.

    Args:
        reports (list): EstimationReports

    Returns:
        dict: n -> {metric: median}
    """
    names = _metric_names(reports)
    out = {}
    for n in sorted({r.n or 0 for r in reports}):
        rows = [r for r in reports if (r.n or 0) == n and r.status == "ok"]
        out[n] = {name: float(np.median([r.metrics[name] for r in rows if name in r.metrics]))
                  if any(name in r.metrics for r in rows) else float("nan") for name in names}
    return out


def write_sweep(out_dir, plan, reports):
    """
    Write summary.csv, medians.csv and report.txt for a sweep.

    Args:
        out_dir (str): Output directory
        plan (SweepConfig): Plan that produced the reports
        reports (list): EstimationReports in plan order

    Returns:
        list: Paths written
    """
    ensure_dir(out_dir)
    names = _metric_names(reports)
    summary = os.path.join(out_dir, "summary.csv")
    with open(summary, "w") as f:
        f.write(",".join(["replication", "n", "seed", "ok"] + names) + "\n")
        for i, r in enumerate(reports):
            row = [str(i), str(r.n or 0), str(r.seed), "1" if r.status == "ok" else "0"]
            row += [fmt(float(r.metrics.get(name, float("nan")))) for name in names]
            f.write(",".join(row) + "\n")
    table = medians(reports)
    med_path = os.path.join(out_dir, "medians.csv")
    with open(med_path, "w") as f:
        f.write(",".join(["n"] + names) + "\n")
        for n, row in table.items():
            f.write(",".join([str(n)] + [fmt(row[name]) for name in names]) + "\n")
    report_path = os.path.join(out_dir, "report.txt")
    entries = {
        "model": plan.spec.model,
        "variant": plan.options.variant,
        "grid": f"{plan.options.N}:{fmt(plan.options.s_max)}",
        "cutoff": "none" if plan.options.cutoff is None else (
            plan.options.cutoff if isinstance(plan.options.cutoff, str) else f"lemma2:{plan.options.cutoff[1]}"),
        "replications": plan.replications,
        "seed": plan.seed,
        "exact": plan.exact,
        "failed": sum(1 for r in reports if r.status != "ok"),
    }
    for n, row in table.items():
        for name in ("cf_sup_error", "cf_ise", "g_sup_error", "rho_error", "mass_point_estimate"):
            if name in row:
                entries[f"median_{name}_n{n}"] = row[name]
    write_report(report_path, entries)
    return [summary, med_path, report_path]


def run_experiment(path, jobs=1, out=None):
    """
    Run the sweep described by a config file and write its outputs.

    Args:
        path (str): Sweep config
        jobs (int): Worker processes
        out (str, optional): Output directory overriding the config

    Returns:
        list: EstimationReports (empty for zero replications)
    """
    plan = load_sweep(path)
    reports = run_sweep(plan, jobs)
    files = write_sweep(out or plan.out, plan, reports)
    for r in reports:
        r.files = files
    return reports


def diagnose(phi_u, n=None, V=DEFAULTS["phi_class_V"]):
    """
    Smoothness class and Phi(m, V) certificates of an error CF.

    Args:
        phi_u (GridFn): Known or estimated error CF
        n (int, optional): Sample size behind an estimate
        V (float): Bound of the Phi class

    Returns:
        tuple: (RegularityClass, list of (m, member, value, inverse_member, inverse_value))
    """
    noise = sigma_ecf(n, phi_u.grid) if n else 0.0
    regularity = classify_smoothness(phi_u, noise)
    mod = np.abs(phi_u.values)
    floor = max(noise, 1e-300)
    above = mod > floor
    inverse = GridFn(phi_u.grid, np.where(above, 1.0 / np.where(above, phi_u.values, 1.0), 0.0))
    rows = []
    for m in PHI_CLASS_ORDERS:
        ok, value = check_phi_class(phi_u, m, V)
        if not above.all():
            inv_ok, inv_value = False, float("inf")
        else:
            inv_ok, inv_value = check_phi_class(inverse, m, V)
        rows.append((m, ok, value, inv_ok, inv_value))
    return regularity, rows
