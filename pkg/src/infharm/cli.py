"""Experiment runner: configuration, the solve/analyze pipeline and the CLI."""

import argparse
import configparser
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .analysis import angle_field, image_surface, rank_classify, sigma2_integral
from .fespace import VectorField, evaluate
from .mesh import make_structured_mesh
from .problems import EXPERIMENTS, ExactMap, make_problem
from .solver import ContinuationError, SolverConfig, continue_in_p, newton_solve

log = logging.getLogger(__name__)

EMIT_KINDS = ("csv", "vtk", "svg", "checkpoints")
SOLVER_FIELDS = tuple(f.name for f in dataclasses.fields(SolverConfig))


def default_levels():
    return tuple(np.round(np.arange(-20, 21) * 0.05, 12))


@dataclass
class RunConfig:
    experiment: str = "mixed2d"
    mesh_m: int = 64
    solver: SolverConfig = field(default_factory=SolverConfig)
    tau: float = 0.05
    contour_levels: tuple = field(default_factory=default_levels)
    quad_tol: float = 1e-12
    output_dir: Path = Path("out")
    emit: frozenset = frozenset(EMIT_KINDS)
    smooth_box: bool = False
    boundary_file: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if int(self.mesh_m) != self.mesh_m or self.mesh_m < 2:
            raise ValueError("mesh_m must be an integer >= 2")
        self.mesh_m = int(self.mesh_m)
        lv = np.asarray(self.contour_levels, dtype=float)
        if lv.ndim != 1 or np.any(np.diff(lv) <= 0):
            raise ValueError("contour_levels must be strictly increasing")
        self.contour_levels = tuple(lv)
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        bad = set(self.emit) - set(EMIT_KINDS)
        if bad:
            raise ValueError(f"unknown emit kinds {sorted(bad)}")
        self.emit = frozenset(self.emit)
        self.output_dir = Path(self.output_dir)

    def problem(self):
        return make_problem(self.experiment, self.quad_tol, self.smooth_box, self.boundary_file)

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "mesh_m": self.mesh_m,
            "solver": dataclasses.asdict(self.solver),
            "tau": self.tau,
            "contour_levels": list(self.contour_levels),
            "quad_tol": self.quad_tol,
            "output_dir": str(self.output_dir),
            "emit": sorted(self.emit),
            "smooth_box": self.smooth_box,
            "boundary_file": self.boundary_file or "",
        }


def stage_tag(p) -> str:
    """File-name tag for an exponent: p0002, p0861.0325..."""
    p = float(p)
    return f"p{int(p):04d}" if p.is_integer() else f"p{p:09.4f}"


# ---- config parsing ----------------------------------------------------------

def _floats(text):
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def parse_levels(text):
    """Either ``start:stop:step`` (inclusive) or a comma/space separated list."""
    text = str(text).strip()
    if ":" in text:
        a, b, s = (float(t) for t in text.split(":"))
        n = int(round((b - a) / s))
        return tuple(np.round(a + s * np.arange(n + 1), 12))
    return _floats(text)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_CONVERTERS = {
    "experiment": str, "mesh_m": int, "tau": float, "quad_tol": float,
    "contour_levels": parse_levels, "output_dir": Path, "smooth_box": _bool,
    "boundary_file": str,
    "emit": lambda t: frozenset(s for s in str(t).replace(",", " ").split()),
    "p_schedule": _floats, "newton_tol": float, "newton_abs_tol": float,
    "newton_max_iter": int, "shrink": float, "min_step": float, "armijo": float,
    "linear_tol": float, "linear_solver": str, "epsilon": float,
    "max_insertions": int, "projection": str,
}


def read_config_file(path) -> dict:
    """Read ``key = value`` lines (``#`` comments allowed) into typed values."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string("[run]\n" + Path(path).read_text())
    out = {}
    for key, value in parser["run"].items():
        if key not in _CONVERTERS:
            raise ValueError(f"unknown config key {key!r} in {path}")
        out[key] = _CONVERTERS[key](value)
    return out


def build_config(values: dict) -> RunConfig:
    values = dict(values)
    solver = SolverConfig(**{k: values.pop(k) for k in list(values) if k in SOLVER_FIELDS})
    return RunConfig(solver=solver, **values)


# ---- pipeline ----------------------------------------------------------------

def _stage_files(cfg: RunConfig, field_: VectorField, p, header):
    """Analysis and exports for one converged stage."""
    out, tag, mesh = cfg.output_dir, stage_tag(p), field_.mesh
    phase = rank_classify(field_, cfg.tau, cfg.contour_levels)
    G = field_.gradients()
    det = phase.det if phase.det is not None else phase.singular_values[:, 0] * phase.singular_values[:, 1]
    angle = angle_field(field_)
    if "csv" in cfg.emit:
        io.write_solution_csv(out / f"solution_{tag}.csv", field_)
        c = mesh.barycenters
        io.write_csv(out / f"elements_{tag}.csv", {
            "xc": c[:, 0], "yc": c[:, 1], "det": det, "norm": phase.norm,
            "angle": angle, "rank": phase.rank,
        })
    if "vtk" in cfg.emit:
        io.write_vtk(out / f"domain_{tag}.vtk", mesh.vertices, mesh.triangles,
                     point_data={"U": field_.nodal_values},
                     cell_data={"det": det, "norm": phase.norm, "angle": angle,
                                "rank": phase.rank.astype(float)},
                     title=f"{cfg.experiment} p={p:g}")
        surf = image_surface(field_) if field_.n_components in (2, 3) else None
        if surf is not None:
            io.write_vtk(out / f"image_{tag}.vtk", surf.points, surf.triangles,
                         cell_data={"det": det, "rank": phase.rank.astype(float)},
                         title=f"{cfg.experiment} image p={p:g}")
    if "svg" in cfg.emit:
        io.write_svg(out / f"det_{tag}.svg", mesh, det, phase.contours,
                     title=f"{cfg.experiment} det DU, p = {p:g}")
    return {
        "omega1_area": phase.omega1_area,
        "omega2_area": phase.omega2_area,
        "sigma2_integral": sigma2_integral(field_),
        "max_norm": float(np.max(np.sqrt(np.sum(G * G, axis=(1, 2))))),
        "n_contours": len(phase.contours),
    }


def run(cfg: RunConfig) -> int:
    """Continuation, per-stage analysis and exports. Returns 0, or 1 on failure."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem()
    mesh = make_structured_mesh(cfg.mesh_m)
    manifest = {"config": cfg.as_dict(), "stages": {}}
    t_start = time.perf_counter()
    stage_t = [t_start]

    def on_stage(state, rec):
        now = time.perf_counter()
        tag = stage_tag(rec.p)
        header = _header(cfg, problem.N, rec)
        if "checkpoints" in cfg.emit:
            io.write_checkpoint(cfg.output_dir / f"checkpoint_{tag}.bin",
                                state.solution.nodal_values, **header)
        t0 = time.perf_counter()
        summary = _stage_files(cfg, state.solution, rec.p, header)
        manifest["stages"][tag] = {
            "p": rec.p, "converged": rec.converged, "inserted": rec.inserted,
            "newton_iterations": rec.iterations, "residual_norms": rec.residual_norms,
            "log_energies": rec.log_energies, "steps": rec.steps,
            "linear_iterations": rec.linear_iterations, "energy_root": rec.energy_root,
            "solve_seconds": now - stage_t[0], "analysis_seconds": time.perf_counter() - t0,
            **summary,
        }
        stage_t[0] = time.perf_counter()

    status = 0
    try:
        state = continue_in_p(problem, mesh, cfg.solver, callback=on_stage)
    except ContinuationError as err:
        log.error("%s", err)
        state = err.state
        status = 1
    manifest["realized_schedule"] = list(state.realized_schedule)
    manifest["stages_converged"] = len(state.history)
    manifest["failed_p"] = "none" if state.failed_p is None else state.failed_p
    manifest["status"] = "ok" if status == 0 else "failed"
    manifest["total_seconds"] = time.perf_counter() - t_start
    io.write_manifest(cfg.output_dir / "manifest.txt", manifest)
    return status


def _header(cfg, N, rec):
    return {
        "experiment": cfg.experiment, "N": N, "mesh_m": cfg.mesh_m, "p": float(rec.p),
        "newton_iterations": rec.iterations, "final_residual": rec.final_residual,
        "energy_root": rec.energy_root, "log_energy": rec.log_energy,
        "inserted": int(rec.inserted),
    }


def load_checkpoint(path):
    """Return (header, VectorField) from a checkpoint file."""
    header, vals = io.read_checkpoint(path)
    mesh = make_structured_mesh(int(header["mesh_m"]))
    if vals.shape[0] != mesh.n_vertices:
        raise io.CheckpointError(f"{path}: vertex count does not match mesh_m")
    return header, VectorField(mesh, vals)


def analyze(cfg: RunConfig) -> int:
    """Redo analysis and exports from the checkpoints in ``cfg.output_dir``."""
    paths = sorted(cfg.output_dir.glob("checkpoint_p*.bin"))
    if not paths:
        log.error("no checkpoints in %s", cfg.output_dir)
        return 1
    summary = {}
    for path in paths:
        header, fld = load_checkpoint(path)
        summary[stage_tag(header["p"])] = _stage_files(cfg, fld, header["p"], header)
    io.write_manifest(cfg.output_dir / "analysis.txt",
                      {"tau": cfg.tau, "contour_levels": list(cfg.contour_levels), "stages": summary})
    return 0


def exact_eval(experiment, grid_m, quad_tol=1e-12, smooth_box=False):
    """Columns x, y, u1, u2 (of 3/4 exact_map) and det = (9/16) sin(K(x) - K(y))."""
    if experiment not in ("triple", "box"):
        raise ValueError("exact_eval needs an experiment with a parametrisation K (triple or box)")
    problem = make_problem(experiment, quad_tol, smooth_box)
    t = np.linspace(-1.0, 1.0, int(grid_m) + 1)
    X, Y = np.meshgrid(t, t)
    x, y = X.ravel(), Y.ravel()
    u = problem.g(x, y)
    return {"x": x, "y": y, "u1": u[:, 0], "u2": u[:, 1], "det": problem.g.det(x, y)}


def convergence_study(cfg: RunConfig, p, mesh_list):
    """Solve at fixed p on each mesh (continuing from p = 2 when p > 2).

    Reports the sup over vertices of the distance to the finest solution and,
    for experiments with an explicit map, to that map (NaN otherwise).
    """
    problem = cfg.problem()
    sched = tuple(q for q in cfg.solver.p_schedule if q < p) + (p,)
    solver = dataclasses.replace(cfg.solver, p_schedule=sched)
    fields = []
    for m in mesh_list:
        mesh = make_structured_mesh(int(m))
        fields.append(continue_in_p(problem, mesh, solver).solution)
    oracle = problem.g if isinstance(problem.g, ExactMap) else None
    rows = {"m": [], "h": [], "sup_vs_finest": [], "sup_vs_exact": [], "energy_root": []}
    for m, fld in zip(mesh_list, fields):
        v = fld.mesh.vertices
        rows["m"].append(m)
        rows["h"].append(fld.mesh.h_max)
        rows["sup_vs_finest"].append(float(np.abs(fld.nodal_values - evaluate(fields[-1], v)).max()))
        exact = np.nan if oracle is None else float(np.abs(fld.nodal_values - oracle(v[:, 0], v[:, 1])).max())
        rows["sup_vs_exact"].append(exact)
        _, rec = newton_solve(fld, p, solver)
        rows["energy_root"].append(rec.energy_root)
    return rows


# ---- CLI ---------------------------------------------------------------------

def _add_run_flags(sp):
    sp.add_argument("--config", type=Path, help="key = value config file")
    sp.add_argument("--experiment", choices=EXPERIMENTS)
    sp.add_argument("--mesh-m", type=int, dest="mesh_m")
    sp.add_argument("--p-schedule", type=_floats, dest="p_schedule", help="e.g. 2,4,8")
    sp.add_argument("--newton-tol", type=float, dest="newton_tol")
    sp.add_argument("--newton-max-iter", type=int, dest="newton_max_iter")
    sp.add_argument("--linear-solver", choices=("direct", "cg"), dest="linear_solver")
    sp.add_argument("--linear-tol", type=float, dest="linear_tol")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--projection", choices=("boundary", "domain", "interpolate"))
    sp.add_argument("--tau", type=float)
    sp.add_argument("--contour-levels", type=parse_levels, dest="contour_levels",
                    help="start:stop:step or a comma list")
    sp.add_argument("--quad-tol", type=float, dest="quad_tol")
    sp.add_argument("--output-dir", type=Path, dest="output_dir")
    sp.add_argument("--emit", type=_CONVERTERS["emit"], help="subset of csv,vtk,svg,checkpoints")
    sp.add_argument("--smooth-box", action="store_const", const=True, dest="smooth_box")
    sp.add_argument("--boundary-file", dest="boundary_file")


def _config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in _CONVERTERS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return build_config(values)


def make_parser():
    parser = argparse.ArgumentParser(prog="infharm", description="p-Laplace approximation of vectorial infinity-harmonic maps")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("solve", help="continuation in p plus analysis and exports"))
    _add_run_flags(sub.add_parser("analyze", help="rerun the analysis from checkpoints"))
    ex = sub.add_parser("exact", help="tabulate the explicit map and its determinant")
    ex.add_argument("--experiment", choices=("triple", "box"), default="triple")
    ex.add_argument("--grid-m", type=int, default=64, dest="grid_m")
    ex.add_argument("--quad-tol", type=float, default=1e-12, dest="quad_tol")
    ex.add_argument("--smooth-box", action="store_true", dest="smooth_box")
    ex.add_argument("--output", type=Path, required=True)
    cv = sub.add_parser("convergence", help="mesh refinement at a fixed p")
    _add_run_flags(cv)
    cv.add_argument("--p", type=float, required=True)
    cv.add_argument("--meshes", type=lambda t: [int(v) for v in _floats(t)], default=[8, 16, 32])
    cv.add_argument("--output", type=Path, required=True)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "exact":
            io.write_csv(args.output, exact_eval(args.experiment, args.grid_m, args.quad_tol, args.smooth_box))
            return 0
        cfg = _config_from_args(args)
        if args.command == "solve":
            return run(cfg)
        if args.command == "analyze":
            return analyze(cfg)
        p = int(args.p) if float(args.p).is_integer() else args.p
        io.write_csv(args.output, convergence_study(cfg, p, args.meshes))
        return 0
    except (ValueError, OSError) as err:
        print(f"infharm: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
