"""Batch front-end: ``graphexon <command> [--config FILE] [flags]``.

Settings come from built-in defaults, then an optional YAML (or JSON) config
file, then command-line flags. Exit codes: 0 success, 1 certification
failure, 2 usage error, 3 numerical non-convergence.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .exceptions import ConvergenceError, GraphexonError, NoRealSolutionError
from .margulis import MargulisGraph
from .mfg import (
    REFERENCE_PARAMETERS,
    Coupling,
    MfgParameters,
    diagnose_coupling,
    finite_turing_unstable,
    representative_couplings,
    solve_riccati,
    stability_atlas,
)
from .operators import (
    EDGE_TEST_FUNCTIONS,
    TORUS_TEST_FUNCTIONS,
    strong_convergence_gap,
    weak_convergence_gap,
)
from .simulation import (
    AGENTS,
    MEANFIELD,
    InitialCondition,
    SimulationConfig,
    decompose,
    evolve_mean_field,
    fourier_test_functions,
    product_sine,
    simulate_agents,
    write_matrix_csv,
    write_pgm,
)
from .spectral import GABBER_GALIL_BOUND, KESTEN_RADIUS, build_orbit_graph, dense_spectrum, orbit_spectral_radius

log = logging.getLogger("graphexon")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_CONVERGENCE = 0, 1, 2, 3
FLOAT_FORMAT = "%.17g"
COUPLING_KEYWORDS = ("stable", "turing")
DEFAULT_N = {
    "graph": (40,),
    "spectrum": (5, 10, 20, 40),
    "orbit": (),
    "stability": (),
    "simulate": (40,),
    "converge": (10, 20, 40, 80),
}
DEFAULT_FUNCTION = {"operator": "sin_sum", "measure": "char_t1"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    out: str = "graphexon-out"
    seed: int = 0
    n: tuple = None
    params: MfgParameters = REFERENCE_PARAMETERS
    c: object = "stable"
    rho: float = None
    mode: str = MEANFIELD
    t_end: float = 3.0
    dt: float = 1e-3
    init: InitialCondition = InitialCondition()
    pgm: bool = False
    m0: tuple = (1, 0)
    radii: tuple = (10, 20, 40)
    kind: str = "operator"
    function: str = None
    c_range: tuple = (-10.0, 10.0)
    samples: int = 401

    @classmethod
    def from_tree(cls, tree):
        tree = dict(tree or {})
        cfg = cls()
        changes = {}
        for key in ("out", "seed", "c", "rho", "mode", "t_end", "dt", "pgm", "kind", "function", "samples"):
            if key in tree:
                changes[key] = tree.pop(key)
        for key in ("n", "m0", "radii", "c_range"):
            if key in tree:
                changes[key] = tuple(tree.pop(key))
        if "params" in tree:
            changes["params"] = MfgParameters(**{**cfg.params.to_dict(), **tree.pop("params")})
        if "init" in tree:
            init = dict(tree.pop("init"))
            if "wave" in init:
                init["wave"] = tuple(init["wave"])
            changes["init"] = InitialCondition(**init)
        if tree:
            raise UsageError(f"unknown config keys: {sorted(tree)}")
        return replace(cfg, **changes)

    def to_tree(self):
        d = asdict(self)
        d["params"] = self.params.to_dict()
        for key in ("n", "m0", "radii", "c_range"):
            d[key] = None if d[key] is None else list(d[key])
        d["init"]["wave"] = list(self.init.wave)
        return d


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return tuple(values)


def _float_pair(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected LO,HI")
    return tuple(parts)


def _coupling(text):
    if text in COUPLING_KEYWORDS:
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--c takes a number or one of {COUPLING_KEYWORDS}")


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=_seed)
    common.add_argument("--n", type=_int_list, metavar="N[,N...]")
    common.add_argument("--c", type=_coupling, help="coupling value, or 'stable' / 'turing'")
    common.add_argument("--rho", type=float, help="spectral radius override")
    common.add_argument("--mode", choices=(MEANFIELD, AGENTS))
    for name in ("a", "b", "q", "r", "gamma", "eta", "sigma"):
        common.add_argument(f"--{name}", type=float, dest=f"param_{name}")
    common.add_argument("--t-end", type=float, dest="t_end")
    common.add_argument("--dt", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="graphexon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("graph", parents=[common], help="edge list and regularity summary")
    sub.add_parser("spectrum", parents=[common], help="dense spectra and the two-sided bound")
    p = sub.add_parser("orbit", parents=[common], help="truncated dual-orbit spectral radius")
    p.add_argument("--m0", type=_int_list)
    p.add_argument("--radius", type=_int_list, dest="radii", metavar="R[,R...]")
    p = sub.add_parser("stability", parents=[common], help="stability atlas and coupling sweep")
    p.add_argument("--c-range", type=_float_pair, metavar="LO,HI")
    p.add_argument("--samples", type=int)
    p = sub.add_parser("simulate", parents=[common], help="closed-loop mean field or agents")
    p.add_argument("--pgm", action="store_true", default=None, help="also write PGM snapshots")
    p = sub.add_parser("converge", parents=[common], help="operator or measure convergence gaps")
    p.add_argument("--kind", choices=("operator", "measure"))
    p.add_argument("--function", help="named test function")
    return parser


def resolve_config(args):
    tree = {}
    if args.config is not None:
        try:
            tree = yaml.safe_load(args.config.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(tree, dict):
            raise UsageError("config file must hold a mapping")
    try:
        cfg = RunConfig.from_tree(tree)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))
    changes = {}
    for key in ("out", "seed", "n", "c", "rho", "mode", "t_end", "dt", "m0", "radii", "c_range", "samples",
                "pgm", "kind", "function"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    overrides = {k[6:]: v for k, v in vars(args).items() if k.startswith("param_") and v is not None}
    if overrides:
        try:
            changes["params"] = cfg.params.replace(**overrides)
        except ValueError as exc:
            raise UsageError(str(exc))
    return replace(cfg, **changes)


def _outdir(cfg):
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_frame(path, df):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")


def cmd_graph(cfg):
    N = cfg.n[0] if cfg.n else None
    if N is None or N < 2:
        raise UsageError("graph needs --n with N >= 2")
    G = MargulisGraph(N)
    out = _outdir(cfg)
    G.write_edge_list(out / f"edges_N{N}.csv")
    reg = G.regularity_error()
    _write_json(out / f"graph_N{N}.json", {
        "N": N,
        "M_N": G.vertex_count,
        "K": G.K,
        "edge_records": G.K * G.vertex_count,
        "regularity_error": reg,
        "regular": reg == 0,
    })
    return EXIT_OK if reg == 0 else EXIT_FAIL


def cmd_spectrum(cfg):
    if not cfg.n:
        raise UsageError("spectrum needs a non-empty --n list")
    out = _outdir(cfg)
    rows = []
    for N in cfg.n:
        if N < 2:
            raise UsageError(f"N={N} is below 2")
        report = dense_spectrum(MargulisGraph(N))
        _write_json(out / f"spectrum_N{N}.json", {**report.to_dict(), "bound": GABBER_GALIL_BOUND,
                                                  "within_bound": report.within_bound})
        rows.append({"N": N, "lambda2": report.lambda2, "lambda_min": report.lambda_min,
                     "zero_mean_norm": report.zero_mean_norm, "gap": report.gap})
        log.info("N=%d zero_mean_norm=%.12g", N, report.zero_mean_norm)
    _write_frame(out / "spectrum.csv", pd.DataFrame(rows))
    ok = all(r["zero_mean_norm"] <= GABBER_GALIL_BOUND + 1e-9 for r in rows)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_orbit(cfg):
    if len(cfg.m0) != 2 or tuple(cfg.m0) == (0, 0):
        raise UsageError("orbit seed --m0 must be a nonzero pair")
    if not cfg.radii:
        raise UsageError("orbit needs at least one radius")
    out = _outdir(cfg)
    rows = []
    for R in sorted(cfg.radii):
        og = build_orbit_graph(cfg.m0, R)
        rows.append({"R": R, "vertices": og.size, "radius_estimate": orbit_spectral_radius(og)})
    _write_frame(out / "orbit.csv", pd.DataFrame(rows))
    est = [r["radius_estimate"] for r in rows]
    monotone = all(b >= a - 1e-12 for a, b in zip(est, est[1:]))
    return EXIT_OK if monotone and max(est) <= KESTEN_RADIUS + 1e-3 else EXIT_FAIL


def cmd_stability(cfg):
    rho = KESTEN_RADIUS if cfg.rho is None else cfg.rho
    rd = solve_riccati(cfg.params)
    atlas = stability_atlas(rd, rho)
    out = _outdir(cfg)
    _write_json(out / "atlas.json", {**atlas.to_dict(), "params": cfg.params.to_dict(), "Pi": rd.Pi,
                                     "a_c": rd.a_c})
    lo, hi = cfg.c_range
    if not lo < hi or cfg.samples < 2:
        raise UsageError("--c-range must satisfy LO < HI with at least two samples")
    rows, mismatches = [], 0
    for c in np.linspace(lo, hi, cfg.samples):
        d = diagnose_coupling(rd, c, rho, atlas)
        rows.append({"c": c, "label": d.label.value, "Acl_rho": d.rate_rho, "Acl_neg_rho": d.rate_neg_rho,
                     "Acl_one": d.rate_one})
        if d.label in (Coupling.STABLE, Coupling.TURING, Coupling.MEAN_UNSTABLE) and not d.marginal:
            in_turing = rd.a_c < 0 and c in atlas.S1 and atlas.in_instability_manifold(c)
            if (d.label is Coupling.TURING) != in_turing:
                mismatches += 1
    _write_frame(out / "sweep.csv", pd.DataFrame(rows, columns=["c", "label", "Acl_rho", "Acl_neg_rho", "Acl_one"]))
    return EXIT_OK if mismatches == 0 else EXIT_FAIL


def _resolve_coupling(cfg, rd, md):
    if not isinstance(cfg.c, str):
        return float(cfg.c)
    rest = np.delete(md.eigenvalues, md.principal)
    rhos = (KESTEN_RADIUS if cfg.rho is None else cfg.rho, float(rest.max()), float(abs(rest.min())))
    c_stable, c_turing = representative_couplings(rd, rhos)
    c = c_stable if cfg.c == "stable" else c_turing
    if c is None:
        raise UsageError(f"no {cfg.c} coupling exists for these parameters")
    return c


def cmd_simulate(cfg):
    rd = solve_riccati(cfg.params)
    if len(cfg.n) != 1 or cfg.n[0] < 2:
        raise UsageError("simulate takes a single --n with N >= 2")
    G = MargulisGraph(cfg.n[0])
    md = decompose(G)
    c = _resolve_coupling(cfg, rd, md)
    sim = SimulationConfig(N=G.N, params=cfg.params, c=c, t_end=cfg.t_end, dt=cfg.dt, seed=cfg.seed,
                           init=cfg.init, mode=cfg.mode).validate(rd)
    rho = KESTEN_RADIUS if cfg.rho is None else cfg.rho
    atlas = stability_atlas(rd, rho)
    tests = np.vstack([product_sine(G.N, cfg.init.wave), fourier_test_functions(G.N)])
    m0 = cfg.init.sample(G.N, cfg.seed)
    if cfg.mode == MEANFIELD:
        traj = evolve_mean_field(md, rd, c, m0, sim.times, test_fns=tests)
    else:
        traj, _ = simulate_agents(G, rd, c, sim, md)
        traj.test_inner_products = traj.deviation_inner_products(tests)
    out = _outdir(cfg)
    traj.write_csv(out / "trajectory.csv")
    for t in (0.0, sim.t_end):
        values = traj.field_at(traj.index_of(t))
        stem = f"snapshot_t{t:g}"
        write_matrix_csv(values, G.N, out / f"{stem}.csv")
        if cfg.pgm:
            write_pgm(values, G.N, out / f"{stem}.pgm")
    first, last = 0, len(traj.times) - 1
    diagnostics = {
        "c": c,
        "label": diagnose_coupling(rd, c, rho, atlas).label.value,
        "finite_turing_unstable": finite_turing_unstable(rd, c, md.eigenvalues, md.principal),
        "deviation_norm_start": float(traj.deviation_norm[first]),
        "deviation_norm_end": float(traj.deviation_norm[last]),
        "mean_bar_start": float(traj.mean_bar[first]),
        "mean_bar_end": float(traj.mean_bar[last]),
        "test_functions": ["product_sine", "sin_e1", "sin_e2", "sin_e1_plus_e2"],
    }
    _write_json(out / "diagnostics.json", diagnostics)
    manifest = {"command": "simulate", "config": cfg.to_tree(), "resolved_c": c, "seed": cfg.seed,
                "atlas": atlas.to_dict(), "riccati": {"Pi": rd.Pi, "a_c": rd.a_c, "theta": rd.theta}}
    _write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_converge(cfg):
    if len(cfg.n) < 2:
        raise UsageError("converge needs at least two resolutions")
    if any(b <= a for a, b in zip(cfg.n, cfg.n[1:])):
        raise UsageError("--n must be strictly increasing")
    if cfg.kind == "operator":
        registry = TORUS_TEST_FUNCTIONS
    else:
        registry = EDGE_TEST_FUNCTIONS
    name = cfg.function or DEFAULT_FUNCTION[cfg.kind]
    if name not in registry:
        raise UsageError(f"unknown {cfg.kind} test function {name!r}; choose from {sorted(registry)}")
    if cfg.kind == "operator":
        gaps = strong_convergence_gap(registry[name], cfg.n)
    else:
        gaps = weak_convergence_gap(registry[name], cfg.n)
    out = _outdir(cfg)
    _write_frame(out / "converge.csv", pd.DataFrame({"N": list(cfg.n), "gap": gaps}))
    # identically vanishing gaps count as converged
    converged = gaps[-1] < gaps[0] or max(gaps) <= 1e-12
    return EXIT_OK if converged else EXIT_FAIL


COMMANDS = {
    "graph": cmd_graph,
    "spectrum": cmd_spectrum,
    "orbit": cmd_orbit,
    "stability": cmd_stability,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
}


def _thread_limit():
    value = os.environ.get("GRAPHEXON_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise UsageError("GRAPHEXON_THREADS must be a positive integer")
    if n < 1:
        raise UsageError("GRAPHEXON_THREADS must be a positive integer")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.n is None:
            cfg = replace(cfg, n=DEFAULT_N[args.command])
        limit = _thread_limit()
        if limit is None:
            return COMMANDS[args.command](cfg)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"graphexon: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"graphexon: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except NoRealSolutionError as exc:
        print(f"graphexon: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (GraphexonError, ValueError) as exc:
        print(f"graphexon: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"graphexon: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
