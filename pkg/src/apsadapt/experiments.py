"""Reproduction runs: uniform and anisotropic effectivity tables, the
conditioning contrast and adaptation studies, written as CSV (and VTK)."""

import csv
import os
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .adapt import AdaptConfig, adapt_loop, initial_mesh
from .estimate import element_indicators
from .fem import h1_relative_error, solve_aps, solve_p_direct
from .mesh import build_structured_mesh, classify_boundary, perturbed_mesh
from .problem import make_case
from .vtk import write_vtk

EXPERIMENTS = ("single_solve", "uniform_table", "aniso_table", "conditioning", "adapt_study")
CASES = ("smooth", "layer")
UNIFORM_LADDER = (0.1, 0.05, 0.025, 0.0125, 0.00625)
RIGHT_LADDER = tuple((0.1, 0.01 / 2**k) for k in range(8))
WRONG_LADDER = tuple((0.1 / 2**k, 0.1) for k in range(5))
FOUR_TO_ONE_LADDER = tuple((0.025 / 2**k, 0.1 / 2**k) for k in range(5))
ANISO_JITTER = 0.25
CONDITIONING_EPS = (1.0, 1e-2, 1e-4, 1e-6, 1e-8, 1e-10)
ADAPT_TOLS = (0.25, 0.125, 0.0625, 0.03125)
BASELINE_H = 0.00625

TABLE_COLUMNS = ["block", "h1", "h2", "nv", "nt", "ei_zz", "ei_a", "ei_sa", "err", "seconds", "status"]
CONDITIONING_COLUMNS = ["eps", "nv", "p_condition", "p_err", "p_status", "aps_err", "aps_residual", "aps_rhs_norm"]
ADAPT_COLUMNS = [
    "tol", "indicator", "iterations", "status", "err", "nv", "ar_max", "ar_avg",
    "ei_zz", "ei_a", "ei_sa", "seconds",
]
BASELINE_COLUMNS = ["h", "nv", "err"]


@dataclass
class ExperimentConfig:
    experiment: str = "single_solve"
    case: str = "smooth"
    alpha: float = 0.0
    eps: float = 1.0
    tol: tuple = ADAPT_TOLS
    indicator: str = "full"
    nx: int = 20
    ny: int = 20
    out: str = "out"
    seed: int = 0
    max_iter: int = 15
    fixed: bool = True
    levels: int = None  # truncate ladders to their first entries
    baseline: bool = False
    vtk: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        tols = (self.tol,) if np.isscalar(self.tol) else tuple(self.tol)
        if not tols or any(not t > 0 for t in tols):
            raise ValueError(f"tol must be positive, got {self.tol}")
        self.tol = tuple(float(t) for t in tols)
        if self.indicator not in ("full", "simplified"):
            raise ValueError(f"indicator must be full or simplified, got {self.indicator!r}")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.levels is not None and self.levels < 1:
            raise ValueError("levels must be positive")

    @property
    def manufactured(self):
        return make_case(self.case, self.alpha, self.eps)


def _ladder(values, levels):
    return tuple(values) if levels is None else tuple(values)[:levels]


def _num(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return v


def write_csv(path, columns, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(r.get(c)) for c in columns])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def evaluate(mesh, case):
    """Solve the APS system on ``mesh`` and return the table row fields."""
    problem = case.problem
    mesh = classify_boundary(mesh, problem.field)
    t0 = time.perf_counter()
    sol = solve_aps(mesh, problem)
    rep = element_indicators(mesh, sol, problem, case)
    eff = rep.effectivity
    return {
        "nv": mesh.nv,
        "nt": mesh.nt,
        "ei_zz": eff["ZZ"],
        "ei_a": eff["A"],
        "ei_sa": eff["SA"],
        "err": rep.true_error["relative_h1"],
        "seconds": time.perf_counter() - t0,
        "status": "ok",
    }, mesh, sol, rep


def _table_row(block, h1, h2, make_mesh, case):
    row = {"block": block, "h1": h1, "h2": h2}
    try:
        row.update(evaluate(make_mesh(), case)[0])
    except Exception as exc:  # recorded per row so the ladder continues
        row["status"] = f"error: {exc}".replace("\n", " ")
    return row


def run_uniform_table(config):
    """Effectivity indices and errors on structured isotropic meshes."""
    case = config.manufactured
    rows = []
    for h in _ladder(UNIFORM_LADDER, config.levels):
        n = round(1.0 / h)
        rows.append(_table_row("uniform", h, h, lambda n=n: build_structured_mesh(n, n), case))
    write_csv(os.path.join(config.out, "table_uniform.csv"), TABLE_COLUMNS, rows)
    return rows


def aniso_mesh(h1, h2, seed=0):
    """Pseudo-unstructured mesh with cell sizes ``h1`` in x and ``h2`` in y."""
    return perturbed_mesh(round(1.0 / h1), round(1.0 / h2), jitter=ANISO_JITTER, seed=seed)


def run_aniso_table(config):
    """Right-direction, wrong-direction and 4:1 ladders on anisotropic meshes."""
    case = config.manufactured
    rows = []
    blocks = (("right", RIGHT_LADDER), ("wrong", WRONG_LADDER), ("four_to_one", FOUR_TO_ONE_LADDER))
    for name, ladder in blocks:
        for h1, h2 in _ladder(ladder, config.levels):
            rows.append(_table_row(name, h1, h2, lambda a=h1, b=h2: aniso_mesh(a, b, config.seed), case))
    write_csv(os.path.join(config.out, "table_aniso.csv"), TABLE_COLUMNS, rows)
    return rows


def run_conditioning(config, eps_values=CONDITIONING_EPS):
    """P-model condition number and error against the APS error across eps."""
    mesh0 = build_structured_mesh(config.nx, config.ny)
    rows = []
    for eps in _ladder(eps_values, config.levels):
        case = make_case(config.case, config.alpha, eps)
        problem = case.problem
        mesh = classify_boundary(mesh0, problem.field)
        row = {"eps": eps, "nv": mesh.nv}
        phi, stats = solve_p_direct(mesh, problem)
        if phi is None:
            row["p_status"] = "unsolvable"
        else:
            row.update(p_condition=stats.get("condition"), p_status="ok")
            try:
                row["p_err"] = h1_relative_error(mesh, phi, case)
            except ZeroDivisionError:
                row["p_status"] = "degenerate"
        sol = solve_aps(mesh, problem)
        row.update(
            aps_err=h1_relative_error(mesh, sol.phi, case),
            aps_residual=sol.solver_stats["residual"],
            aps_rhs_norm=sol.solver_stats["rhs_norm"],
        )
        rows.append(row)
    write_csv(os.path.join(config.out, "conditioning.csv"), CONDITIONING_COLUMNS, rows)
    return rows


def _tag(tol):
    return f"{tol:g}".replace(".", "p")


def run_adapt_study(config, start_mesh=None):
    """Adaptive loop for every TOL; trace CSV and final VTK per TOL plus a
    summary CSV, and optionally the uniform-mesh baseline."""
    case = config.manufactured
    problem = case.problem
    os.makedirs(config.out, exist_ok=True)
    rows = []
    for tol in config.tol:
        acfg = AdaptConfig(
            tol=tol, max_iterations=config.max_iter, indicator=config.indicator, fixed_iterations=config.fixed,
            **config.extra,
        )
        t0 = time.perf_counter()
        mesh, sol, trace = adapt_loop(start_mesh or initial_mesh(config.seed), problem, acfg, case)
        tag = _tag(tol)
        trace.write_csv(os.path.join(config.out, f"trace_tol{tag}.csv"))
        last = trace.last
        if config.vtk:
            g = mesh.geometry
            write_vtk(
                mesh, os.path.join(config.out, f"mesh_tol{tag}.vtk"),
                point_data={"phi": sol.phi, "q": sol.q, "phi_exact": case.phi_exact(mesh.vertices)},
                cell_data={"aspect": g.aspect, "lambda1": g.lam[:, 0], "lambda2": g.lam[:, 1]},
                title=f"adapted mesh tol={tol:g} indicator={config.indicator}",
            )
        rows.append({
            "tol": tol, "indicator": config.indicator, "iterations": len(trace), "status": trace.status,
            "err": last["err"], "nv": last["nv"], "ar_max": last["ar_max"], "ar_avg": last["ar_avg"],
            "ei_zz": last["ei_zz"], "ei_a": last["ei_a"], "ei_sa": last["ei_sa"],
            "seconds": time.perf_counter() - t0,
        })
    write_csv(os.path.join(config.out, "adapt_summary.csv"), ADAPT_COLUMNS, rows)
    if config.baseline:
        n = round(1.0 / BASELINE_H)
        info = evaluate(build_structured_mesh(n, n), case)[0]
        write_csv(
            os.path.join(config.out, "uniform_baseline.csv"), BASELINE_COLUMNS,
            [{"h": BASELINE_H, "nv": info["nv"], "err": info["err"]}],
        )
    return rows


SOLVE_COLUMNS = ["nx", "ny", "nv", "nt", "ei_zz", "ei_a", "ei_sa", "err", "residual", "seconds"]


def run_single_solve(config):
    case = config.manufactured
    info, mesh, sol, rep = evaluate(build_structured_mesh(config.nx, config.ny), case)
    row = dict(info, nx=config.nx, ny=config.ny, residual=sol.solver_stats["residual"])
    write_csv(os.path.join(config.out, "solve.csv"), SOLVE_COLUMNS, [row])
    if config.vtk:
        write_vtk(
            mesh, os.path.join(config.out, "solve.vtk"),
            point_data={"phi": sol.phi, "q": sol.q, "phi_exact": case.phi_exact(mesh.vertices)},
            cell_data={"eta_full": rep.eta_full_K, "eta_simpl": rep.eta_simpl_K},
        )
    return [row]


RUNNERS = {
    "single_solve": run_single_solve,
    "uniform_table": run_uniform_table,
    "aniso_table": run_aniso_table,
    "conditioning": run_conditioning,
    "adapt_study": run_adapt_study,
}


def run(config):
    return RUNNERS[config.experiment](config)


def _parse_value(name, text, default):
    text = text.strip()
    if name == "tol":
        return tuple(float(t) for t in text.replace(",", " ").split())
    if name == "levels":
        return None if text.lower() in ("", "none") else int(text)
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


CONFIG_KEYS = {f.name: f.default for f in fields(ExperimentConfig) if f.name != "extra"}


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "max_iterations":
            key = "max_iter"
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val, CONFIG_KEYS[key])
    return values


def load_config(path=None, **overrides):
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values = parse_config_text(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def fitted_order(h, err):
    """Least-squares slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


__all__ = [
    "ExperimentConfig", "run", "run_uniform_table", "run_aniso_table", "run_conditioning",
    "run_adapt_study", "run_single_solve", "load_config", "parse_config_text", "fitted_order",
    "aniso_mesh", "evaluate", "write_csv", "read_csv",
]
