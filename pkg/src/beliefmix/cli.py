"""Experiment driver: every pipeline stage as a subcommand.

Configs are TOML, outputs are CSV plus a plain-text manifest naming the
config, package versions, and wall time.  Reruns with the same config
and seed produce byte-identical CSVs; the manifest alone may differ (it
records timing).  Exit codes: 0 success, 1 usage error, 2 numerical
failure.
"""

import argparse
import os
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from ._parallel import thread_count
from .bp import BpConfig
from .cmaes import CmaesConfig, optimize_quantiles, write_trace_csv
from .encode import (AlphaModel, QuantileModel, ising_couplings,
                     write_model_toml)
from .factor_graph import write_stats_csv
from .mean_field import (DEFAULT_QUAD_ORDER, mf_dkl_curve, phase_boundaries,
                         write_mf_dkl_csv, write_phase_csv)
from .mixture import (DEFAULT_RHO_GRID, build_model_potentials,
                      exact_pair_stats, fixed_point_census, generate_mixture,
                      h_max_for_variance, run_decimation, write_census_csv,
                      write_decimation_csv)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config parse error in {path}: {exc}")


def _req(cfg, path):
    """Fetch a dotted field, naming the full path when missing."""
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise UsageError(f"missing config field: {path}")
        node = node[part]
    return node


def _opt(cfg, path, default=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _mixture_from(cfg):
    seed = _req(cfg, "seed")
    n = _req(cfg, "mixture.N")
    c = _req(cfg, "mixture.C")
    h_max = _opt(cfg, "mixture.h_max")
    if h_max is None:
        v = _req(cfg, "mixture.v")
        h_max = h_max_for_variance(float(v))
    return generate_mixture(int(n), int(c), float(h_max), seed=int(seed))


def _model_from(cfg):
    block = _req(cfg, "model")
    mode = _opt(block, "mode", "geometric")
    if "alphas" in block or "quantiles" in block:
        model = QuantileModel(
            alphas=_req(cfg, "model.alphas"),
            quantiles=_req(cfg, "model.quantiles"),
            criterion=_opt(block, "criterion", "simple"))
    else:
        model = AlphaModel(float(_req(cfg, "model.alpha")))
    mean_degree = _opt(block, "K")
    if mean_degree is not None:
        mean_degree = int(mean_degree)
    return model, mode, mean_degree


def _bp_config_from(cfg, block="run", max_iters=1000, tol=1e-9):
    return BpConfig(
        max_iters=int(_opt(cfg, f"{block}.max_iters", max_iters)),
        tol=float(_opt(cfg, f"{block}.tol", tol)),
        damping=float(_opt(cfg, f"{block}.damping", 0.5)),
        schedule=_opt(cfg, f"{block}.schedule", "random-sequential"),
        seed=int(_req(cfg, "seed")))


def _rho_grid_from(value):
    if value is None or value == "default":
        return np.asarray(DEFAULT_RHO_GRID)
    return np.asarray([float(x) for x in value], dtype=float)


def _parse_grid_flag(text):
    if text == "default":
        return np.asarray(DEFAULT_RHO_GRID)
    try:
        return np.asarray([float(x) for x in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"bad grid value: {text!r}")


def _write_manifest(out_dir, argv, cfg_path, elapsed, outputs):
    lines = [
        f"command: beliefmix {' '.join(argv)}",
        f"package version: {__version__}",
        f"numpy version: {np.__version__}",
        f"python version: {sys.version.split()[0]}",
        f"threads: {thread_count()}",
        f"wall time s: {elapsed:.3f}",
        f"outputs: {', '.join(outputs)}",
    ]
    if cfg_path is not None:
        with open(cfg_path, "r") as fh:
            body = fh.read()
        lines.append("config:")
        lines.extend("  " + ln for ln in body.splitlines())
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_generate(args):
    cfg = _load_toml(args.config)
    mixture = _mixture_from(cfg)
    patterns = mixture.optimal_patterns()
    path = os.path.join(args.out, "mixture.csv")
    with open(path, "w", newline="") as fh:
        fh.write("component,variable,p1,x_opt\n")
        for c in range(mixture.n_components):
            for i in range(mixture.n_vars):
                fh.write(f"{c},{i},{mixture.p[c, i]:.17g},{patterns[c, i]}\n")
    return ["mixture.csv"]


def _cmd_stats(args):
    cfg = _load_toml(args.config)
    mixture = _mixture_from(cfg)
    stats = exact_pair_stats(mixture)
    write_stats_csv(stats, os.path.join(args.out, "stats.csv"))
    return ["stats.csv"]


def _cmd_encode(args):
    cfg = _load_toml(args.config)
    mixture = _mixture_from(cfg)
    model, mode, mean_degree = _model_from(cfg)
    potentials, graph, stats = build_model_potentials(
        mixture, model, mode=mode, mean_degree=mean_degree)
    write_model_toml(model, os.path.join(args.out, "model.toml"))
    couplings = ising_couplings(stats, getattr(model, "alpha", 1.0))
    path = os.path.join(args.out, "couplings.csv")
    with open(path, "w", newline="") as fh:
        fh.write("i,j,bj\n")
        for k, (i, j) in enumerate(couplings.edges):
            fh.write(f"{i},{j},{couplings.bj[k]:.17g}\n")
    return ["model.toml", "couplings.csv"]


def _cmd_fixed_points(args):
    cfg = _load_toml(args.config)
    mixture = _mixture_from(cfg)
    alphas = _opt(cfg, "census.alphas")
    if alphas is None:
        lo = float(_req(cfg, "census.alpha_min"))
        hi = float(_req(cfg, "census.alpha_max"))
        num = int(_req(cfg, "census.n_alphas"))
        alphas = np.geomspace(lo, hi, num)
    census = fixed_point_census(
        mixture, np.asarray(alphas, dtype=float),
        n_starts=int(_opt(cfg, "census.n_starts", 100)),
        seed=int(_req(cfg, "seed")),
        guide_h0=float(_opt(cfg, "census.guide_h0", 1.0)),
        guide_decay=float(_opt(cfg, "census.guide_decay", 0.9)))
    write_census_csv(census, os.path.join(args.out, "census.csv"))
    return ["census.csv"]


def _cmd_decimate(args):
    cfg = _load_toml(args.config)
    mixture = _mixture_from(cfg)
    model, mode, mean_degree = _model_from(cfg)
    curve = run_decimation(
        mixture, model,
        rho_grid=_rho_grid_from(_opt(cfg, "run.rho_grid")),
        n_seeds=int(_opt(cfg, "run.n_seeds", 5)),
        seed=int(_req(cfg, "seed")),
        config=_bp_config_from(cfg),
        mode=mode, mean_degree=mean_degree)
    write_decimation_csv(curve, os.path.join(args.out, "decimation.csv"))
    return ["decimation.csv"]


def _cmd_mean_field(args):
    cfg = _load_toml(args.config) if args.config else {}
    eta = args.eta if args.eta is not None else _req(cfg, "meanfield.eta")
    beta = args.beta if args.beta is not None else _req(cfg, "meanfield.beta")
    v = args.v if args.v is not None else _req(cfg, "meanfield.v")
    if args.rho_grid is not None:
        grid = _parse_grid_flag(args.rho_grid)
    else:
        grid = _rho_grid_from(_opt(cfg, "meanfield.rho_grid"))
    curve = mf_dkl_curve(
        float(beta), float(eta), float(v), grid,
        xi_law=args.xi_law or _opt(cfg, "meanfield.xi_law", "binary"),
        field_scale=float(args.field_scale
                          if args.field_scale is not None
                          else _opt(cfg, "meanfield.field_scale", 1.0)),
        h_max=args.h_max,
        quad_order=int(_opt(cfg, "meanfield.quad_order", DEFAULT_QUAD_ORDER)))
    write_mf_dkl_csv(grid, curve, os.path.join(args.out, "mf_dkl.csv"))
    return ["mf_dkl.csv"]


def _cmd_phase(args):
    if args.eta_grid is not None:
        grid = _parse_grid_flag(args.eta_grid)
    else:
        cfg = _load_toml(args.config) if args.config else {}
        grid = np.asarray(_req(cfg, "phase.eta_grid"), dtype=float)
    diagram = phase_boundaries(grid)
    write_phase_csv(diagram, os.path.join(args.out, "phase.csv"))
    return ["phase.csv"]


def _cmd_optimize(args):
    cfg = _load_toml(args.config)
    mixture = _mixture_from(cfg)
    opt = _req(cfg, "optimize")
    cma = CmaesConfig(
        population=_opt(opt, "population"),
        sigma0=float(_opt(opt, "sigma0", 0.5)),
        max_evals=int(_opt(opt, "max_evals", 2000)),
        target=_opt(opt, "target"),
        seed=int(_req(cfg, "seed")),
        bound_handling=_opt(opt, "bound_handling", "penalty"))
    model, result = optimize_quantiles(
        mixture,
        q_parts=int(_req(cfg, "optimize.q_parts")),
        criterion=_opt(opt, "criterion", "simple"),
        r_max=float(_opt(opt, "r_max", 1.0)),
        config=cma,
        mode=_opt(cfg, "model.mode", "geometric"),
        bp_config=_bp_config_from(cfg, block="optimize", max_iters=450,
                                  tol=1e-7),
        fitness_seed=int(_req(cfg, "seed")))
    write_trace_csv(result.trace, os.path.join(args.out, "trace.csv"))
    write_model_toml(model, os.path.join(args.out, "model.toml"))
    return ["trace.csv", "model.toml"]


def _read_curve_csv(path, value_col):
    try:
        rows = np.genfromtxt(path, delimiter=",", names=True)
    except OSError:
        raise UsageError(f"curve file not found: {path}")
    if rows.dtype.names is None or value_col not in rows.dtype.names:
        raise UsageError(f"column {value_col!r} not found in {path}")
    rho = np.atleast_1d(rows["rho"])
    return rho, np.atleast_1d(rows[value_col])


def _cmd_compare(args):
    rho_bp, dkl_bp = _read_curve_csv(args.bp, "DKL")
    rho_mf, dkl_mf = _read_curve_csv(args.mf, "dkl_mf")
    rows = []
    for k, r in enumerate(rho_bp):
        hits = np.nonzero(np.abs(rho_mf - r) < 1e-9)[0]
        if hits.size:
            rows.append((float(r), float(dkl_bp[k]), float(dkl_mf[hits[0]])))
    if not rows:
        raise UsageError("no shared rho values between the two curves")
    path = os.path.join(args.out, "compare.csv")
    with open(path, "w", newline="") as fh:
        fh.write("rho,dkl_bp,dkl_mf,gap\n")
        for r, b, m in rows:
            fh.write(f"{r:.17g},{b:.17g},{m:.17g},{abs(b - m):.17g}\n")
    gaps = [abs(b - m) for _, b, m in rows]
    k_star = int(np.argmax(gaps))
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(f"n_rows={len(rows)}\n")
        fh.write(f"max_gap={gaps[k_star]:.17g}\n")
        fh.write(f"argmax_rho={rows[k_star][0]:.17g}\n")
    return ["compare.csv", "summary.txt"]


_HANDLERS = {
    "generate": _cmd_generate,
    "stats": _cmd_stats,
    "encode": _cmd_encode,
    "fixed-points": _cmd_fixed_points,
    "decimate": _cmd_decimate,
    "mean-field": _cmd_mean_field,
    "phase": _cmd_phase,
    "optimize": _cmd_optimize,
    "compare": _cmd_compare,
}


def _build_parser():
    parser = _Parser(prog="beliefmix",
                     description="mixture encoding and belief propagation "
                                 "experiment driver")
    sub = parser.add_subparsers(dest="command", metavar="command")
    needs_config = ["generate", "stats", "encode", "fixed-points",
                    "decimate", "optimize"]
    for name in needs_config:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="out")
    p = sub.add_parser("mean-field")
    p.add_argument("--config")
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--v", type=float)
    p.add_argument("--rho-grid", dest="rho_grid")
    p.add_argument("--xi-law", dest="xi_law")
    p.add_argument("--field-scale", dest="field_scale", type=float)
    p.add_argument("--h-max", dest="h_max", type=float)
    p.add_argument("--out", default="out")
    p = sub.add_parser("phase")
    p.add_argument("--config")
    p.add_argument("--eta-grid", dest="eta_grid")
    p.add_argument("--out", default="out")
    p = sub.add_parser("compare")
    p.add_argument("--bp", required=True)
    p.add_argument("--mf", required=True)
    p.add_argument("--out", default="out")
    return parser


def dispatch(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        if args.command == "mean-field" and args.config is None:
            for flag in ("eta", "beta", "v"):
                if getattr(args, flag) is None:
                    raise UsageError(f"mean-field needs --config or --{flag}")
        os.makedirs(args.out, exist_ok=True)
        start = time.perf_counter()
        outputs = _HANDLERS[args.command](args)
        _write_manifest(args.out, argv, getattr(args, "config", None),
                        time.perf_counter() - start, outputs)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
