# frontend/cli.py - Command-line surface: one click subcommand per workflow
import logging
import math
from pathlib import Path
from typing import Optional

import click
import numpy as np
import pandas as pd

from config.settings import RunConfig, SolverSettings
from core.derivator import default_grid, resolve_derivator
from core.errors import ConfigError
from core.g_ode import LinearGODE, solve_linear
from core.stieltjes_integral import integrate, lp_norm
from backend.fem import (
    analytic_square_eigenvalues, assemble_mass, assemble_stiffness, interior_nodes,
    mesh_from_spec, project, solve_generalized_eig,
)
from backend.silkworm import SilkwormParams, solve_2d
from backend.spectral_solver import ParabolicProblem, SpectralSolver
from helpers.file_handler import FileHandler
from helpers.utils import configure_logging, format_float, modal_forcing, modal_u0, named_integrand, parse_float_list

logger = logging.getLogger(__name__)


class OutputWriter:
    """Sends tables and JSON either to a file or to stdout"""

    def __init__(self):
        self.files = FileHandler()

    def table(self, df: pd.DataFrame, path: Optional[Path] = None) -> None:
        if path is None:
            click.echo(self.files.to_csv_text(df), nl=False)
        else:
            self.files.write_table(df, path)
            logger.info("Wrote %d rows to %s", len(df), path)

    def json(self, data, path: Optional[Path] = None) -> None:
        text = self.files.write_json(data, path)
        if path is None:
            click.echo(text)
        else:
            logger.info("Wrote %s", path)


def _run_config(ctx: click.Context, subcommand: str, derivator: str = "identity", params=None, outputs=None) -> RunConfig:
    return RunConfig(
        subcommand=subcommand,
        derivator=derivator,
        params=params or {},
        outputs={k: (Path(v) if v else None) for k, v in (outputs or {}).items()},
        tol=ctx.obj["tol"],
        seed=ctx.obj["seed"],
    )


def _solver(ctx: click.Context, points: Optional[int] = None) -> SpectralSolver:
    return SpectralSolver(tol=ctx.obj["tol"], workers=ctx.obj["workers"], points_per_stretch=points or ctx.obj["points"])


def _modal_problem_data(mesh_spec: Optional[str], analytic: bool, modes: int, k1: float, k2: float,
                        dirichlet: bool, u0_name: str, seed: int):
    """Eigenvalues and modal u0 either from a mesh eigen-solve or from the analytic unit square"""
    if analytic == bool(mesh_spec):
        raise ConfigError("give exactly one of --mesh and --analytic-square")
    if analytic:
        eigenvalues = analytic_square_eigenvalues(modes, k1, k2, dirichlet)
        return eigenvalues, modal_u0(u0_name, modes, seed)
    mesh = mesh_from_spec(mesh_spec)
    M = assemble_mass(mesh)
    R = assemble_stiffness(mesh, k1, k2)
    basis = solve_generalized_eig(R, M, modes, interior_nodes(mesh) if dirichlet else None)
    u0 = modal_u0(u0_name, basis.n_modes, seed, lambda u: project(u, basis, M), mesh.nodes)
    return basis.eigenvalues, u0


@click.group()
@click.option("--tol", type=float, default=None, help="Quadrature tolerance (default: GSPECTRAL_TOL or 1e-10).")
@click.option("--workers", type=int, default=None, help="Threads for per-mode solves.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for randomized profiles.")
@click.option("--log-level", default=None, help="Logging level (default: GSPECTRAL_LOG_LEVEL or WARNING).")
@click.pass_context
def cli(ctx: click.Context, tol, workers, seed, log_level):
    """Parabolic equations with Stieltjes time derivatives, solved spectrally."""
    defaults = SolverSettings.get_default_config()
    configure_logging(log_level or defaults["log_level"])
    ctx.ensure_object(dict)
    ctx.obj.update(
        tol=defaults["tol"] if tol is None else tol,
        workers=defaults["workers"] if workers is None else workers,
        points=defaults["points_per_stretch"],
        seed=seed,
        writer=OutputWriter(),
    )


@cli.command()
@click.option("--derivator", default="identity", show_default=True, help="Builtin name or derivator JSON path.")
@click.option("--t", "times", multiple=True, type=float, help="Evaluation time (repeatable).")
@click.option("--full", is_flag=True, help="Print t, g, right_limit, delta as CSV.")
@click.option("--from", "a", type=float, default=None, help="Interval start for measures.")
@click.option("--to", "b", type=float, default=None, help="Interval end for measures.")
@click.option("--dump", is_flag=True, help="Print the derivator as JSON.")
@click.pass_context
def gcalc(ctx, derivator, times, full, a, b, dump):
    """Evaluate a derivator, its jumps and its measure."""
    _run_config(ctx, "gcalc", derivator)
    d = resolve_derivator(derivator)
    writer = ctx.obj["writer"]
    if dump:
        writer.json(d.to_dict())
    if times:
        if full:
            g, g_right, delta = d.sample(times)
            writer.table(pd.DataFrame({"t": list(times), "g": g, "right_limit": g_right, "delta": delta}))
        else:
            for t in times:
                click.echo(format_float(d.eval(t)))
    if a is not None or b is not None:
        if a is None or b is None:
            raise ConfigError("--from and --to must be given together")
        jumps = d.jumps_in(a, b)
        writer.table(pd.DataFrame([{
            "a": a,
            "b": b,
            "measure": d.measure(a, b),
            "measure_minus_jumps": d.measure_minus_jumps(a, b),
            "jumps": len(jumps),
        }]))


@cli.command("integrate")
@click.option("--derivator", default="identity", show_default=True)
@click.option("--integrand", "name", default="one", show_default=True, help="one, t, t2, cos, sin or exp.")
@click.option("--from", "a", type=float, default=0.0, show_default=True)
@click.option("--to", "b", type=float, required=True)
@click.option("--norm", "p", type=str, default=None, help="Print the L^p_g norm instead (p >= 1 or 'inf').")
@click.pass_context
def integrate_cmd(ctx, derivator, name, a, b, p):
    """Lebesgue-Stieltjes integral of a named integrand over [from, to)."""
    cfg = _run_config(ctx, "integrate", derivator)
    d = resolve_derivator(derivator)
    f = named_integrand(name)
    if p is None:
        value = integrate(d, f, a, b, cfg.tol)
    else:
        exponent = math.inf if p.lower() == "inf" else float(p)
        value = lp_norm(d, f, exponent, a, b, cfg.tol)
    click.echo(format_float(value))


@cli.command()
@click.option("--derivator", default="identity", show_default=True)
@click.option("--lambda", "lam", type=float, required=True, help="Constant coefficient lambda.")
@click.option("--x0", type=float, default=1.0, show_default=True)
@click.option("--forcing", type=float, default=0.0, show_default=True, help="Constant forcing f.")
@click.option("--from", "a", type=float, default=0.0, show_default=True)
@click.option("--to", "b", type=float, required=True)
@click.option("--grid-n", type=int, default=None, help="Uniform points per smooth stretch.")
@click.option("--to-csv", "out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def godesolve(ctx, derivator, lam, x0, forcing, a, b, grid_n, out):
    """Solve x'_g = f - lambda x on [from, to]."""
    cfg = _run_config(ctx, "godesolve", derivator, {"lambda": lam, "x0": x0}, {"out": out})
    d = resolve_derivator(derivator)
    ode = LinearGODE(lambda_coef=lam, forcing=forcing or None, x0=x0, window=(a, b))
    grid = default_grid(d, a, b, grid_n or ctx.obj["points"])
    sol = solve_linear(ode, d, grid, cfg.tol)
    right = [sol.right_values.get(i) for i in range(sol.grid.size)]
    ctx.obj["writer"].table(
        pd.DataFrame({"t": sol.grid, "value": sol.left_values, "right_value": right}),
        cfg.outputs["out"],
    )


@cli.command()
@click.option("--mesh", "mesh_spec", required=True, help="Mesh file or square:N.")
@click.option("--eta", type=float, default=1.0, show_default=True, help="Diffusion coefficient k1.")
@click.option("--kappa", type=float, default=1.0, show_default=True, help="Reaction coefficient k2.")
@click.option("--modes", type=int, default=10, show_default=True)
@click.option("--dirichlet", is_flag=True, help="Homogeneous Dirichlet conditions (interior nodes only).")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def eig(ctx, mesh_spec, eta, kappa, modes, dirichlet, out):
    """Lowest eigenpairs of (eta K + kappa M) v = lambda M v."""
    cfg = _run_config(ctx, "eig", params={"mesh": mesh_spec, "modes": modes}, outputs={"out": out})
    mesh = mesh_from_spec(mesh_spec)
    basis = solve_generalized_eig(
        assemble_stiffness(mesh, eta, kappa), assemble_mass(mesh), modes,
        interior_nodes(mesh) if dirichlet else None,
    )
    frame = pd.DataFrame({"mode": np.arange(1, basis.n_modes + 1), "eigenvalue": basis.eigenvalues})
    ctx.obj["writer"].table(frame, cfg.outputs["out"])


@cli.command("check-hyp")
@click.option("--derivator", default="identity", show_default=True)
@click.option("--lambda", "lams", type=float, multiple=True, help="Eigenvalue (repeatable).")
@click.option("--mesh", "mesh_spec", default=None, help="Take eigenvalues from a mesh instead.")
@click.option("--analytic-square", "analytic", is_flag=True, help="Take eigenvalues of the unit square.")
@click.option("--modes", type=int, default=10, show_default=True)
@click.option("--k1", type=float, default=1.0, show_default=True)
@click.option("--k2", type=float, default=0.0, show_default=True)
@click.option("--T", "horizon", type=float, default=1.0, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def check_hyp(ctx, derivator, lams, mesh_spec, analytic, modes, k1, k2, horizon, report):
    """Check hypotheses H1-H5; exits with code 2 when H1 fails."""
    cfg = _run_config(ctx, "check-hyp", derivator, {"T": horizon}, {"report": report})
    d = resolve_derivator(derivator)
    if lams:
        eigenvalues = np.sort(np.asarray(lams, dtype=float))
    else:
        eigenvalues, _ = _modal_problem_data(mesh_spec, analytic, modes, k1, k2, True, "first_mode", cfg.seed)
    problem = ParabolicProblem(d, eigenvalues, np.zeros(eigenvalues.size), horizon=horizon)
    result = _solver(ctx).check_hypotheses(problem)
    ctx.obj["writer"].json({**result.to_dict(), "run": cfg.to_dict()}, cfg.outputs["report"])
    violation = result.first_h1_violation()
    if violation is not None:
        raise violation


@cli.command()
@click.option("--mesh", "mesh_spec", default=None, help="Mesh file or square:N.")
@click.option("--analytic-square", "analytic", is_flag=True, help="Use the unit-square eigenvalues.")
@click.option("--modes", type=int, default=20, show_default=True)
@click.option("--derivator", default="identity", show_default=True)
@click.option("--T", "horizon", type=float, default=1.0, show_default=True)
@click.option("--u0", "u0_name", default="first_mode", show_default=True)
@click.option("--forcing", "forcing_name", default="zero", show_default=True)
@click.option("--k1", type=float, default=1.0, show_default=True)
@click.option("--k2", type=float, default=0.0, show_default=True)
@click.option("--neumann", is_flag=True, help="Neumann instead of Dirichlet conditions.")
@click.option("--points", type=int, default=None, help="Grid points per smooth stretch.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--report", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def solve(ctx, mesh_spec, analytic, modes, derivator, horizon, u0_name, forcing_name,
          k1, k2, neumann, points, out, report):
    """Solve the truncated spectral problem and write modal values."""
    cfg = _run_config(ctx, "solve", derivator, {"T": horizon, "modes": modes}, {"out": out, "report": report})
    d = resolve_derivator(derivator)
    eigenvalues, u0 = _modal_problem_data(mesh_spec, analytic, modes, k1, k2, not neumann, u0_name, cfg.seed)
    problem = ParabolicProblem(
        d, eigenvalues, u0,
        forcing_coeffs=modal_forcing(forcing_name, eigenvalues.size, horizon),
        horizon=horizon,
    )
    solver = _solver(ctx, points)
    hypotheses = solver.check_hypotheses(problem)
    violation = hypotheses.first_h1_violation()
    if violation is not None:
        if cfg.outputs["report"] is not None:
            FileHandler.write_json({**hypotheses.to_dict(), "run": cfg.to_dict()}, cfg.outputs["report"])
        raise violation
    bundle = solver.solve(problem)
    writer = ctx.obj["writer"]
    writer.table(bundle.to_frame(), cfg.outputs["out"])
    if cfg.outputs["report"] is not None:
        document = {**hypotheses.to_dict(), "run": cfg.to_dict()}
        document["energy"] = solver.energy_check(problem, bundle, hypotheses).to_dict()
        document["norms"] = {
            "linf_l2": bundle.norm_linf_l2,
            "l2_h1": bundle.norm_l2_h1,
            "dual": bundle.dual_norm,
        }
        FileHandler.write_json(document, cfg.outputs["report"])


@cli.command()
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--mesh", "mesh_spec", default="square:16", show_default=True)
@click.option("--modes", type=int, default=None, help="Number of eigenmodes (default from params, 150).")
@click.option("--snapshots", default="", help="Comma-separated snapshot times.")
@click.option("--out-prefix", default="silkworm", show_default=True)
@click.pass_context
def silkworm(ctx, params_path, mesh_spec, modes, snapshots, out_prefix):
    """Silkworm experiment: 0-d mean model against the spatial mean of the 2-d model."""
    params = SilkwormParams.from_json(params_path) if params_path else SilkwormParams()
    if modes is not None:
        params = SilkwormParams.from_dict({**params.to_dict(), "n_modes": modes})
    mean_path = Path(f"{out_prefix}_mean.csv")
    cfg = _run_config(ctx, "silkworm", "silkworm", params.to_dict(), {"mean": mean_path})
    mesh = mesh_from_spec(mesh_spec)
    output = solve_2d(params, mesh, snapshots=parse_float_list(snapshots), tol=cfg.tol)

    writer = ctx.obj["writer"]
    writer.table(output.to_frame(), cfg.outputs["mean"])
    for t, nodal in output.snapshots.items():
        frame = pd.DataFrame({
            "node": np.arange(1, mesh.n_nodes + 1),
            "x": mesh.nodes[:, 0],
            "y": mesh.nodes[:, 1],
            "u": nodal,
        })
        writer.table(frame, Path(f"{out_prefix}_snapshot_t{format_float(t)}.csv"))
    click.echo(f"mean deviation 2-d vs 0-d: {output.mean_deviation:.3e}", err=True)
