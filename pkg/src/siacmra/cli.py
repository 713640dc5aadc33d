"""Command-line experiment driver: each subcommand writes CSV tables and a JSON run manifest."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from siacmra import __version__
from siacmra.enhance import EnhanceConfig, enhance_iterated
from siacmra.errors import ConvergenceError, GeometryError, UnsupportedIndicatorError
from siacmra.field import TEST_FUNCTIONS, elementwise_l2_error, project
from siacmra.indicators import INDICATORS, AdaptError, adapt
from siacmra.mesh import (
    graded_quad_mesh,
    perturbed_delaunay_mesh,
    perturbed_quad_mesh,
    uniform_interval_mesh,
    uniform_quad_mesh,
)
from siacmra.siac import DEFAULT_THETA, Adaptive, Constant, MaxEdge, MinEdge, build_kernel, kernel_moments
from siacmra.solvers import (
    SolverConfig,
    poisson_gauss_problem,
    poisson_sine_problem,
    sine_problem,
    tanh_problem,
)

MESHES = ("interval", "uniform-quad", "perturbed-quad", "delaunay", "graded")
SCALINGS = ("const", "max", "min", "adaptive")
FLOAT = "%.10e"

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunManifest:
    subcommand: str
    params: dict
    seed: int
    version: str = __version__
    outputs: list[str] = dc_field(default_factory=list)
    wall_time: float = 0.0


def _fmt(v) -> str:
    if v is None:
        return "exact"
    if isinstance(v, (float, np.floating)):
        return FLOAT % v
    return str(v)


def write_csv(path: Path, subcommand: str, header: list[str], rows: list[list]) -> Path:
    """Write atomically: temp file in the target directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(f"# siac-mra-kit v1 {subcommand}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    os.replace(tmp, path)
    return path


def _write_manifest(out: Path, manifest: RunManifest) -> Path:
    path = out / f"manifest_{manifest.subcommand}.json"
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return path


# --- shared builders ---------------------------------------------------------------------------------


def build_mesh(kind: str, n: int, ratio: float = 1.0, perturb: float = 0.0, seed: int = 0, periodic: bool = True):
    if n < 1:
        raise ValueError("element count must be positive")
    per2 = (periodic, periodic)
    if kind == "interval":
        return uniform_interval_mesh(n, domain=(0.0, 1.0), periodic=periodic)
    if kind == "uniform-quad":
        return uniform_quad_mesh(n, periodic=per2)
    if kind == "perturbed-quad":
        return perturbed_quad_mesh(n, p_scale=perturb, seed=seed, periodic=per2)
    if kind == "delaunay":
        return perturbed_delaunay_mesh(n, p_scale=perturb, seed=seed, periodic=per2)
    if kind == "graded":
        return graded_quad_mesh(n, ratio, periodic=per2)
    raise ValueError(f"unknown mesh kind {kind!r}")


def build_scaling(name: str, factor: float, mesh=None):
    if name == "const":
        # fixed number equal to the initial mesh's largest edge
        return Constant(factor * float(np.max(mesh.max_edge)))
    if name == "max":
        return MaxEdge(factor)
    if name == "min":
        return MinEdge(factor)
    if name == "adaptive":
        return Adaptive(factor)
    raise ValueError(f"unknown scaling {name!r}")


def _default_factor(args) -> float:
    if args.scale_factor is not None:
        return args.scale_factor
    return float(np.sqrt(2.0)) if getattr(args, "mesh", None) == "uniform-quad" else 1.0


def _run_cells(fn, cells: list, workers: int) -> list:
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


# --- kernel-check ------------------------------------------------------------------------------------


def _kernel_rows(p: int, ell: int, r: int | None) -> tuple[list[list], bool]:
    kernel = build_kernel(p, ell, r)
    rows = [[p, kernel.ell, kernel.r, "coefficient", g, float(c)] for g, c in enumerate(kernel.coeffs)]
    moments = kernel_moments(kernel, kernel.r)
    target = np.zeros_like(moments)
    target[0] = 1.0
    ok = bool(np.all(np.abs(moments - target) <= 1e-11))
    rows += [[p, kernel.ell, kernel.r, "moment", m, float(v)] for m, v in enumerate(moments)]
    return rows, ok


def cmd_kernel_check(args) -> tuple[list[Path], dict]:
    rows, passed = [], True
    for p in args.p:
        r, ok = _kernel_rows(p, args.ell, args.r)
        rows += r
        passed &= ok
    path = write_csv(args.out / "kernel.csv", "kernel-check", ["p", "ell", "r", "quantity", "index", "value"], rows)
    print(f"moment conditions {'pass' if passed else 'FAIL'}")
    return [path], {"moments_pass": passed}


# --- enhance-study -----------------------------------------------------------------------------------


def _enhance_cell(cell: dict) -> list[list]:
    mesh = build_mesh(cell["mesh"], cell["n"], cell["ratio"], cell["perturb"], cell["seed"])
    f = TEST_FUNCTIONS[cell["function"]](cell["k"])
    u = project(f, mesh, cell["p"])
    config = EnhanceConfig(scaling=build_scaling(cell["scaling"], cell["factor"], mesh), theta=cell["theta"])
    recs = enhance_iterated(u, config, cell["steps"], f, cell["k"])
    return [[r.step, r.ppw, r.n_elements, r.l2, r.linf, r.dof] for r in recs]


def _check_theta(args) -> None:
    if not np.isfinite(args.theta):
        raise ValueError("filter angle must be finite")


def cmd_enhance_study(args) -> tuple[list[Path], dict]:
    if args.steps < 0:
        raise ValueError("steps must be nonnegative")
    _check_theta(args)
    factor = _default_factor(args)
    cells = [
        dict(mesh=args.mesh, n=args.n, ratio=args.ratio, perturb=args.perturb, seed=args.seed, function=args.function,
             k=args.k, p=p, scaling=args.scaling, factor=factor, theta=args.theta, steps=args.steps)
        for p in args.p
    ]
    results = _run_cells(_enhance_cell, cells, args.workers)
    outputs = []
    header = ["step", "ppw", "n_elements", "L2", "Linf", "dof"]
    for p, rows in zip(args.p, results):
        outputs.append(write_csv(args.out / f"enhance_{args.function}_{args.mesh}_p{p}.csv", "enhance-study", header, rows))
    if args.plot:
        from siacmra.plotting import plot_error_steps

        series = {f"p={p}": (np.array([r[0] for r in rows]), np.array([r[3] for r in rows])) for p, rows in zip(args.p, results)}
        outputs.append(plot_error_steps(args.out / f"enhance_{args.function}_{args.mesh}.png", series, f"{args.function} k={args.k}, {args.mesh}"))
    return outputs, {"scale_factor": factor}


# --- scaling-study -----------------------------------------------------------------------------------


def _scaling_cell(cell: dict) -> list[list]:
    mesh = build_mesh(cell["mesh"], cell["n"], cell["ratio"], cell["perturb"], cell["seed"])
    f = TEST_FUNCTIONS["sine"](1.0)
    u = project(f, mesh, cell["p"])
    out = {}
    for name, strategy in (("const", MaxEdge(cell["factor"])), ("adaptive", Adaptive(cell["factor"]))):
        out[name] = enhance_iterated(u, EnhanceConfig(scaling=strategy, theta=cell["theta"]), cell["steps"], f)
    return [
        [a.step, a.n_elements, a.dof, a.l2, b.l2, a.linf, b.linf]
        for a, b in zip(out["const"], out["adaptive"])
    ]


def cmd_scaling_study(args) -> tuple[list[Path], dict]:
    if args.mesh == "interval":
        raise ValueError("scaling study needs a two-dimensional mesh")
    _check_theta(args)
    factor = args.scale_factor if args.scale_factor is not None else 1.0
    cells = [
        dict(mesh=args.mesh, n=args.n, ratio=args.ratio, perturb=args.perturb, seed=args.seed, p=p,
             factor=factor, theta=args.theta, steps=args.steps)
        for p in args.p
    ]
    results = _run_cells(_scaling_cell, cells, args.workers)
    header = ["step", "n_elements", "dof", "L2_const", "L2_adaptive", "Linf_const", "Linf_adaptive"]
    outputs = []
    for p, rows in zip(args.p, results):
        outputs.append(write_csv(args.out / f"scaling_{args.mesh}_p{p}.csv", "scaling-study", header, rows))
    if args.plot:
        from siacmra.plotting import plot_error_steps

        series = {}
        for p, rows in zip(args.p, results):
            steps = np.array([r[0] for r in rows])
            series[f"p={p} max edge"] = (steps, np.array([r[3] for r in rows]))
            series[f"p={p} adaptive"] = (steps, np.array([r[4] for r in rows]))
        outputs.append(plot_error_steps(args.out / f"scaling_{args.mesh}.png", series, f"scaling study, {args.mesh}"))
    return outputs, {"scale_factor": factor}


# --- adapt-burgers / adapt-poisson -------------------------------------------------------------------


def _burgers_problem(name: str, cfg: SolverConfig):
    kw = dict(cfl=cfg.cfl, tol=cfg.tol, max_steps=cfg.max_steps)
    if cfg.gamma is not None:
        kw["gamma"] = cfg.gamma
    return (tanh_problem if name == "tanh" else sine_problem)(**kw)


def _poisson_problem(name: str, cfg: SolverConfig):
    return (poisson_gauss_problem if name == "gauss" else poisson_sine_problem)(cpen=cfg.cpen)


def reference_tolerance(problem, mesh, p: int) -> tuple[float, float, int]:
    """Mean element-wise L2 error of the uniform reference solve, its global error and DOF."""
    u = problem.solve(mesh, p)
    err = elementwise_l2_error(u, problem.exact)
    return float(np.mean(err)), float(np.sqrt(np.sum(err**2))), u.dof


def _adapt_cell(cell: dict) -> dict:
    cfg = SolverConfig.from_file(cell["config"]) if cell["config"] else SolverConfig()
    if cell["dim"] == 1:
        problem = _burgers_problem(cell["problem"], cfg)
        make = lambda n: uniform_interval_mesh(n, periodic=problem.periodic)
    else:
        problem = _poisson_problem(cell["problem"], cfg)
        make = lambda n: uniform_quad_mesh(n, periodic=(False, False))
    p = cell["p"]
    ref = None
    eta_tol = cell["eta_tol"]
    if eta_tol == "auto":
        tol, e_ref, dof_ref = reference_tolerance(problem, make(cell["ref_n"]), p)
        eta_tol = tol
        ref = {"n": cell["ref_n"], "eta_tol": tol, "e_h": e_ref, "dof": dof_ref}
    else:
        eta_tol = float(eta_tol)
    config = EnhanceConfig(scaling=build_scaling(cell["scaling"], cell["factor"], make(cell["n"])), theta=cell["theta"], boundary=cell["boundary"])
    mesh, _, report = adapt(problem, make(cell["n"]), p, cell["indicator"], eta_tol, cell["max_iters"], config)
    summary = [[e.iteration, e.n_elements, e.dof, e.eta, e.e_h, e.ieff, e.marked] for e in report.iterations]
    eta_final = report.final.eta_tau
    cent = mesh.centroids
    elements = [[i, int(mesh.level[i]), *map(float, cent[i]), float(eta_final[i])] for i in range(mesh.n_elements)]
    return {
        "p": p, "eta_tol": eta_tol, "reference": ref, "summary": summary, "elements": elements,
        "truncated": report.truncated, "mesh": mesh,
    }


def _cmd_adapt(args, dim: int, subcommand: str) -> tuple[list[Path], dict]:
    if args.indicator not in INDICATORS:
        raise ValueError(f"unknown indicator {args.indicator!r}")
    if args.max_iters < 0:
        raise ValueError("max-iters must be nonnegative")
    if args.eta_tol != "auto":
        if float(args.eta_tol) < 0:
            raise ValueError("eta-tol must be nonnegative or 'auto'")
    if dim == 1:
        boundary = args.boundary or ("skip-overlap" if args.problem == "tanh" else "periodic")
        n0 = args.n if args.n else 8
        ref_n = args.ref_n if args.ref_n else 128
    else:
        boundary = args.boundary or "periodic"
        n0 = args.n if args.n else 8
        ref_n = args.ref_n if args.ref_n else 64
    factor = args.scale_factor if args.scale_factor is not None else 1.0
    cells = [
        dict(dim=dim, problem=args.problem, p=p, indicator=args.indicator, eta_tol=args.eta_tol, max_iters=args.max_iters,
             n=(16 if (dim == 1 and p == 3 and not args.n) else n0), ref_n=ref_n, scaling=args.scaling, factor=factor,
             theta=args.theta, boundary=boundary, config=str(args.config) if args.config else None)
        for p in args.p
    ]
    results = _run_cells(_adapt_cell, cells, args.workers)
    outputs, extra = [], {"boundary": boundary, "runs": []}
    coords = ["x"] if dim == 1 else ["x", "y"]
    for res in results:
        stem = f"adapt_{args.problem}_p{res['p']}_{args.indicator}"
        outputs.append(write_csv(args.out / f"{stem}_summary.csv", subcommand,
                                 ["iter", "n_elements", "dof", "eta", "e_h", "ieff", "marked"], res["summary"]))
        outputs.append(write_csv(args.out / f"{stem}_mesh.csv", subcommand,
                                 ["element", "level", *coords, "eta_tau"], res["elements"]))
        extra["runs"].append({"p": res["p"], "eta_tol": res["eta_tol"], "reference": res["reference"], "truncated": res["truncated"]})
        if args.plot:
            from siacmra.plotting import plot_adapt_history, plot_mesh_levels

            s = np.array([[r[2], r[4] if r[4] is not None else np.nan, r[3]] for r in res["summary"]], dtype=float)
            ref = (res["reference"]["dof"], res["reference"]["e_h"]) if res["reference"] else None
            outputs.append(plot_adapt_history(args.out / f"{stem}_history.png", s[:, 0], s[:, 1], s[:, 2], ref, stem))
            outputs.append(plot_mesh_levels(args.out / f"{stem}_mesh.png", res["mesh"], stem))
    return outputs, extra


def cmd_adapt_burgers(args):
    return _cmd_adapt(args, 1, "adapt-burgers")


def cmd_adapt_poisson(args):
    return _cmd_adapt(args, 2, "adapt-poisson")


# --- argument parsing --------------------------------------------------------------------------------


def _common(sp: argparse.ArgumentParser, p_default: list[int]) -> None:
    sp.add_argument("--p", type=int, nargs="+", default=p_default, help="polynomial degrees (one cell each)")
    sp.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--plot", action="store_true", help="also render PNG figures next to the CSVs")


def _mesh_args(sp: argparse.ArgumentParser, default_mesh: str, default_n: int) -> None:
    sp.add_argument("--mesh", choices=MESHES, default=default_mesh)
    sp.add_argument("--n", type=int, default=default_n, help="elements per direction")
    sp.add_argument("--ratio", type=float, default=100.0, help="largest to smallest width on graded meshes")
    sp.add_argument("--perturb", type=float, default=0.3, help="node perturbation scale on perturbed meshes")
    sp.add_argument("--theta", type=float, default=DEFAULT_THETA, help="line-filter angle in radians")
    sp.add_argument("--steps", type=int, default=2)
    sp.add_argument("--scale-factor", type=float, default=None, help="multiplier on the kernel scaling")


def _adapt_args(sp: argparse.ArgumentParser, problems: tuple[str, ...], default_indicator: str, max_iters: int) -> None:
    sp.add_argument("--problem", choices=problems, default=problems[0])
    sp.add_argument("--indicator", choices=INDICATORS, default=default_indicator)
    sp.add_argument("--eta-tol", default="auto", help="tolerance or 'auto' (mean element error of a uniform reference)")
    sp.add_argument("--max-iters", type=int, default=max_iters)
    sp.add_argument("--n", type=int, default=None, help="initial elements per direction")
    sp.add_argument("--ref-n", type=int, default=None, help="uniform reference resolution for auto tolerance")
    sp.add_argument("--scaling", choices=SCALINGS, default="min")
    sp.add_argument("--scale-factor", type=float, default=None)
    sp.add_argument("--theta", type=float, default=DEFAULT_THETA)
    sp.add_argument("--boundary", choices=("periodic", "skip-overlap"), default=None)
    sp.add_argument("--config", type=Path, default=None, help="key=value solver configuration file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siac-mra", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("kernel-check", help="kernel coefficients and moment residuals")
    _common(sp, [0, 1, 2, 3])
    sp.add_argument("--ell", type=int, default=1)
    sp.add_argument("--r", type=int, default=None)
    sp.set_defaults(func=cmd_kernel_check)

    sp = sub.add_parser("enhance-study", help="error per enhancement step for a test function")
    _common(sp, [0, 1, 2, 3])
    _mesh_args(sp, "interval", 20)
    sp.add_argument("--function", choices=sorted(TEST_FUNCTIONS), default="sine")
    sp.add_argument("--k", type=float, default=1.0, help="frequency or width scaling of the test function")
    sp.add_argument("--scaling", choices=SCALINGS, default="max")
    sp.set_defaults(func=cmd_enhance_study)

    sp = sub.add_parser("scaling-study", help="largest-edge versus adaptive kernel scaling")
    _common(sp, [1, 2])
    _mesh_args(sp, "graded", 16)
    sp.set_defaults(func=cmd_scaling_study)

    sp = sub.add_parser("adapt-burgers", help="adaptive refinement for steady viscous Burgers")
    _common(sp, [1])
    _adapt_args(sp, ("tanh", "sine"), "rec", 7)
    sp.set_defaults(func=cmd_adapt_burgers)

    sp = sub.add_parser("adapt-poisson", help="adaptive refinement for the Poisson problem")
    _common(sp, [2])
    _adapt_args(sp, ("gauss", "sine"), "w", 4)
    sp.set_defaults(func=cmd_adapt_poisson)
    return parser


def _params(args) -> dict:
    out = {}
    for k, v in vars(args).items():
        if k == "func":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        if any(p < 0 or p > 3 for p in args.p):
            raise ValueError("polynomial degrees must be in 0..3")
        if args.workers < 1:
            raise ValueError("workers must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        outputs, extra = args.func(args)
    except (UnsupportedIndicatorError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, AdaptError, GeometryError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    params = _params(args)
    params.update(extra)
    manifest = RunManifest(args.subcommand, params, args.seed, outputs=[str(p.name) for p in outputs])
    manifest.wall_time = time.perf_counter() - start
    path = _write_manifest(args.out, manifest)
    for p in outputs:
        print(p)
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
