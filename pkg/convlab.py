"""
Command line for simulating, estimating and diagnosing measurement-error models.

    python convlab.py simulate --model 3 --spec data/model3_gaussian.cfg --n 1000 --seed 1 --out run
    python convlab.py estimate --model 3 --in run --grid 1024:20 --out est
    python convlab.py diagnose --in est
    python convlab.py sweep --config data/sweep_model1_laplace.cfg --jobs 4
"""

import argparse
import logging
import os
import sys
import time
from dataclasses import replace

from estimator import EstimateOptions, diagnose, estimate, medians, parse_cutoff, run_experiment
from grid import make_grids
from simulator import generate, load_model_spec, spec_text, true_cf, truth_functions
from utils.config import DEFAULTS, MODELS, SPEC_KEYS, Config, parse_grid, read_config
from utils.errors import EXIT_CONFIG, EXIT_OK, ConfigError, ConvlabError, exit_code_for
from utils.io import (
    ensure_dir, read_gridfn, read_report, read_sample, write_gridfn, write_latents, write_mask,
    write_report, write_sample,
)
from utils.parallel import get_computation_device

logger = logging.getLogger("convlab")

TRUTH_GRIDS = {1: "1024:20", 2: "128:10", 3: "32:6"}
SOLUTION_FIELDS = ("phi_xstar", "phi_u", "phi_ux", "ft_g", "g_hat", "f_xstar")


def _grid_arg(text):
    try:
        return parse_grid(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="convlab", description=__doc__.strip().splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging and tracebacks")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="draw a synthetic sample and its ground truth")
    sim.add_argument("--model", required=True, choices=MODELS)
    sim.add_argument("--spec", required=True, help="model spec file")
    sim.add_argument("--n", required=True, type=int)
    sim.add_argument("--seed", required=True, type=int)
    sim.add_argument("--out", required=True)

    est = sub.add_parser("estimate", help="recover the model's unknowns from a sample")
    est.add_argument("--model", required=True, choices=MODELS)
    est.add_argument("--in", dest="in_dir", required=True)
    est.add_argument("--grid", required=True, type=_grid_arg, help="N:s_max")
    est.add_argument("--variant", choices=("A", "B"))
    est.add_argument("--cutoff", default="none", help="none, heuristic or lemma2:<k>")
    est.add_argument("--safety", type=float, default=DEFAULTS["safety"])
    est.add_argument("--bandwidth", type=float)
    est.add_argument("--out", required=True)

    dia = sub.add_parser("diagnose", help="smoothness class and Phi(m, V) table of the error CF")
    dia.add_argument("--in", dest="in_dir", required=True)
    dia.add_argument("--grid", type=_grid_arg, default=parse_grid(DEFAULTS["grid"]))
    dia.add_argument("--out", help="directory for diagnose.txt (default: --in)")

    swp = sub.add_parser("sweep", help="run a replication sweep from a config file")
    swp.add_argument("--config", required=True)
    swp.add_argument("--jobs", type=int, default=1)
    swp.add_argument("--out", help="output directory overriding the config")
    return parser


def _load_spec(path, model=None):
    config = read_config(path, SPEC_KEYS)
    if model is not None:
        if "model" in config and config.get_str("model") != model:
            raise config.error("model", f"spec is for model {config.get_str('model')}, --model is {model}")
        if "model" not in config:
            config = Config({"model": (model, None), **config.entries}, config.path)
    return load_model_spec(config)


def cmd_simulate(args):
    spec = _load_spec(args.spec, args.model)
    if args.n < 2:
        raise ConfigError(f"--n must be at least 2, got {args.n}")
    sample, latents = generate(spec, args.n, args.seed)
    out = ensure_dir(args.out)
    write_sample(os.path.join(out, "sample.csv"), sample)
    with open(os.path.join(out, "spec.cfg"), "w") as f:
        f.write(spec_text(spec))
    truth_dir = ensure_dir(os.path.join(out, "truth"))
    write_latents(os.path.join(truth_dir, "latents.csv"), latents)
    freq, space = make_grids(spec.d, *parse_grid(TRUTH_GRIDS[spec.d]))
    entries = {"model": spec.model, "n": args.n, "seed": args.seed, "d": spec.d}
    for name, value in truth_functions(spec, freq, space).items():
        if name == "rho":
            entries["rho"] = value
        else:
            write_gridfn(os.path.join(truth_dir, f"{name}.csv"), value)
    write_report(os.path.join(truth_dir, "truth.txt"), entries)
    write_report(os.path.join(out, "report.txt"), {k: entries[k] for k in ("model", "n", "seed", "d")})
    print(f"Wrote {sample.n} observations of model {spec.model} to {out}")
    return EXIT_OK


def cmd_estimate(args):
    spec = _load_spec(os.path.join(args.in_dir, "spec.cfg"), args.model)
    if args.variant:
        spec = replace(spec, variant=args.variant)
    if not 0 < args.safety < 1:
        raise ConfigError(f"--safety must lie in (0, 1), got {args.safety}")
    if args.bandwidth is not None and not args.bandwidth > 0:
        raise ConfigError(f"--bandwidth must be positive, got {args.bandwidth}")
    sample = read_sample(os.path.join(args.in_dir, "sample.csv"))
    N, s_max = args.grid
    options = EstimateOptions(N, s_max, spec.variant, parse_cutoff(args.cutoff), args.safety,
                              args.bandwidth, DEFAULTS["max_order"])
    start = time.perf_counter()
    solution = estimate(sample, spec, options)
    logger.info("estimation took %.1f ms", 1000 * (time.perf_counter() - start))
    out = ensure_dir(args.out)
    for name in SOLUTION_FIELDS:
        fn = getattr(solution, name)
        if fn is not None:
            write_gridfn(os.path.join(out, f"{name}.csv"), fn)
    if solution.identified_mask is not None:
        write_mask(os.path.join(out, "mask.csv"), solution.identified_mask)
    entries = {"model": spec.model, "variant": spec.variant, "grid": f"{N}:{s_max:g}", "cutoff": args.cutoff}
    if solution.rho_hat is not None:
        entries["rho_hat"] = solution.rho_hat
    entries.update(solution.diagnostics)
    write_report(os.path.join(out, "report.txt"), entries)
    print(f"Estimated model {spec.model} from n={sample.n}; results in {out}")
    return EXIT_OK


def _diagnose_input(args):
    in_dir = args.in_dir
    report_path = os.path.join(in_dir, "report.txt")
    report = read_report(report_path) if os.path.exists(report_path) else {}
    phi_path = os.path.join(in_dir, "phi_u.csv")
    if os.path.exists(phi_path):
        n = int(float(report["n"])) if "n" in report else None
        return read_gridfn(phi_path), n
    spec_path = os.path.join(in_dir, "spec.cfg")
    if not os.path.exists(spec_path):
        raise FileNotFoundError(f"{in_dir} holds neither phi_u.csv nor spec.cfg")
    spec = _load_spec(spec_path)
    freq, _ = make_grids(spec.d, *args.grid)
    if spec.model in ("1", "2"):
        return true_cf(spec.law("u"), freq), None
    sample = read_sample(os.path.join(in_dir, "sample.csv"))
    solution = estimate(sample, spec, EstimateOptions(*args.grid, spec.variant))
    if solution.phi_u is None:
        raise ConfigError(f"model {spec.model} does not recover an error CF")
    return solution.phi_u, sample.n


def cmd_diagnose(args):
    phi_u, n = _diagnose_input(args)
    regularity, rows = diagnose(phi_u, n)
    lines = [f"class: {regularity.kind}"]
    if regularity.order is not None:
        lines.append(f"order: {regularity.order:.6g}")
    if regularity.scale is not None:
        lines.append(f"scale: {regularity.scale:.6g}")
    if regularity.floor is not None:
        lines.append(f"floor: {regularity.floor:.6g}")
    lines.append(f"V: {DEFAULTS['phi_class_V']:g}")
    lines.append("m  phi_u_in_class  integral  inverse_in_class  inverse_integral")
    for m, ok, value, inv_ok, inv_value in rows:
        lines.append(f"{m}  {int(ok)}  {value:.6g}  {int(inv_ok)}  {inv_value:.6g}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    out = ensure_dir(args.out or args.in_dir)
    with open(os.path.join(out, "diagnose.txt"), "w") as f:
        f.write(text)
    return EXIT_OK


def cmd_sweep(args):
    print(f"Using computation device: {get_computation_device()}")
    reports = run_experiment(args.config, args.jobs, args.out)
    failed = sum(1 for r in reports if r.status != "ok")
    for n, row in medians(reports).items():
        shown = ", ".join(f"{k}={v:.4g}" for k, v in row.items()
                          if k in ("cf_sup_error", "cf_ise", "g_sup_error", "rho_error", "mass_point_estimate"))
        print(f"n={n}: {shown}")
    print(f"\nSummary: {len(reports) - failed}/{len(reports)} replications succeeded")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "diagnose": cmd_diagnose,
    "sweep": cmd_sweep,
}


def main(argv=None):
    """
    Run one command.

    Args:
        argv (list, optional): Arguments without the program name

    Returns:
        int: Exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConvlabError, OSError) as exc:
        logger.error("%s", exc, exc_info=args.verbose)
        return exit_code_for(exc)
    except ValueError as exc:
        logger.error("%s", exc, exc_info=args.verbose)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
