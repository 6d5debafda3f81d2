"""
Command-line front end: ``python -m mie <command> --config scenario.toml``.

Exit codes: 0 success or passed check, 1 failed check, 2 solver error,
3 configuration or usage error.
"""

import functools
import itertools
import logging
from pathlib import Path
from typing import List, Optional

import click
import numpy as np

from mie.cli.io import read_field, write_estimate, write_field, write_json, write_trace
from mie.cli.orchestrator import Orchestrator
from mie.cli.scenario import (
    MechanismSection,
    Scenario,
    build_chain,
    build_generator,
    build_grid,
    build_terminal,
    load_scenario,
    resolve_relative,
    solver_options,
)
from mie.config import settings
from mie.errors import ConfigError, MIEError
from mie.feynman_kac.coshsinh import coshsinh_b_field, coshsinh_example
from mie.feynman_kac.linear import (
    exponential_solve_backward,
    linear_solve_backward,
    monte_carlo_fk,
    scalar_fk,
    series_solve_backward,
)
from mie.model.fields import terminal_array
from mie.model.generator import mechanism_kernel_check
from mie.solvers.blowup import march_with_blowup_monitor
from mie.solvers.global_1d import solve_1d_global
from mie.solvers.picard import epsilon_stepper, picard_solve, residual
from mie.solvers.results import SolveReport
from mie.verify import checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SOLVER_ERROR = 2
EXIT_CONFIG_ERROR = 3


def common_options(func):
    """Flags shared by every subcommand; each command reads the ones it needs."""
    options = [
        click.option("--config", "config", required=True, type=click.Path(dir_okay=False), help="Scenario TOML file."),
        click.option("--tol", type=float, default=None, help="Convergence / check tolerance."),
        click.option("--max-iter", type=int, default=None, help="Picard iteration cap."),
        click.option("--threshold", type=float, default=None, help="Blow-up statistic threshold."),
        click.option("--mode", type=str, default=None, help="Solver method, Feynman-Kac mode or check name."),
        click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Output directory."),
        click.option("--seed", type=int, default=None, help="Seed for sampled paths."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def guarded(func):
    """Map library errors to exit codes and finish through ctx.exit."""

    @functools.wraps(func)
    @click.pass_context
    def wrapper(ctx, *args, **kwargs):
        try:
            code = func(*args, **kwargs)
        except ConfigError as e:
            logger.error("[CLI] configuration error: %s", e)
            code = EXIT_CONFIG_ERROR
        except MIEError as e:
            logger.error("[CLI] %s: %s", type(e).__name__, e)
            code = EXIT_SOLVER_ERROR
        ctx.exit(code)

    return wrapper


def _out_path(sc: Scenario, config: str, out_dir: Optional[str], suffix: str) -> Path:
    base = Path(out_dir) if out_dir is not None else resolve_relative(Path(config), sc.output.dir)
    return base / f"{sc.output.prefix}_{suffix}"


def _instance(sc: Scenario):
    grid = build_grid(sc)
    chain = build_chain(sc, grid)
    gen = build_generator(sc)
    g = build_terminal(sc, chain.state_count, gen.k)
    return grid, chain, gen, g


# =========================
# COMMANDS
# =========================


@click.group()
def cli():
    """Solvers and checkers for Markovian integral equations."""
    logging.basicConfig(level=settings.log_level, format="%(levelname)s %(name)s %(message)s")


@cli.command()
@common_options
@guarded
def solve(config, tol, max_iter, threshold, mode, out_dir, seed):
    """Solve the scenario's equation; writes the field CSV and a report JSON."""
    sc = load_scenario(config)
    grid, chain, gen, g = _instance(sc)
    opts = solver_options(sc, tol=tol, max_iter=max_iter, threshold=threshold)
    method = mode or sc.solver.method

    if method == "picard":
        field, report = picard_solve(chain, grid, gen, g, opts)
    elif method == "epsilon":
        field = epsilon_stepper(chain, grid, gen, g)
        report = SolveReport(
            converged=True,
            iterations=1,
            final_residual=0.0,
            defect=float(np.nanmax(residual(chain, grid, gen, field))),
            interval=(0.0, grid.T),
        )
    elif method == "global_1d":
        field, report = solve_1d_global(chain, grid, gen, g, opts=opts)
    else:
        raise ConfigError(f"unknown solver method {method!r}")

    write_field(_out_path(sc, config, out_dir, "field.csv"), field)
    write_json(_out_path(sc, config, out_dir, "report.json"), report)
    if report.blowup is not None:
        write_trace(_out_path(sc, config, out_dir, "trace.csv"), grid, report.condition_trace)
    logger.info("[CLI] solve (%s) finished, converged=%s", method, report.converged)
    return EXIT_OK


@cli.command()
@common_options
@guarded
def blowup(config, tol, max_iter, threshold, mode, out_dir, seed):
    """March backward under the blow-up monitor; writes the partial field, trace and report."""
    sc = load_scenario(config)
    grid, chain, gen, g = _instance(sc)
    opts = solver_options(sc, tol=tol, max_iter=max_iter, threshold=threshold)
    field, report = march_with_blowup_monitor(chain, grid, gen, g, opts=opts)

    write_field(_out_path(sc, config, out_dir, "field.csv"), field)
    write_trace(_out_path(sc, config, out_dir, "trace.csv"), grid, report.condition_trace)
    write_json(_out_path(sc, config, out_dir, "report.json"), report)
    return EXIT_OK


@cli.command()
@common_options
@guarded
def fk(config, tol, max_iter, threshold, mode, out_dir, seed):
    """Affine Feynman-Kac representation in the selected mode."""
    sc = load_scenario(config)
    if sc.fk is None:
        raise ConfigError("scenario has no [fk] section")
    grid = build_grid(sc)
    chain = build_chain(sc, grid)
    g = build_terminal(sc, chain.state_count, sc.generator.k)
    section = sc.fk
    mode = mode or section.mode
    target = _out_path(sc, config, out_dir, "field.csv")

    if mode == "product":
        field = linear_solve_backward(chain, grid, section.a, section.b, g)
    elif mode == "exp":
        field = exponential_solve_backward(chain, grid, section.a, section.b, g)
    elif mode == "scalar":
        field = scalar_fk(chain, grid, section.a, section.b, g)
    elif mode == "series":
        field = series_solve_backward(chain, grid, section.a, section.b, g, section.order)
    elif mode == "mc":
        estimate = monte_carlo_fk(
            chain,
            grid,
            section.a,
            section.b,
            g,
            count=section.paths,
            seed=section.seed if seed is None else seed,
            j_from=section.j_from,
        )
        write_estimate(target, grid.nodes[section.j_from], estimate.mean, estimate.stderr)
        return EXIT_OK
    else:
        raise ConfigError(f"unknown Feynman-Kac mode {mode!r}")

    write_field(target, field)
    return EXIT_OK


@cli.command()
@common_options
@guarded
def verify(config, tol, max_iter, threshold, mode, out_dir, seed):
    """Run a named inequality check on solver output; exit 1 when it fails."""
    sc = load_scenario(config)
    if sc.verify is None:
        raise ConfigError("scenario has no [verify] section")
    section = sc.verify
    check = mode or section.check
    grid, chain, gen, _ = _instance(sc)
    base = Path(config)

    field_path = resolve_relative(base, section.field)
    if field_path is None:
        raise ConfigError("[verify] needs a field")
    u = read_field(field_path, grid)

    def tilde_field():
        path = resolve_relative(base, section.field_tilde)
        if path is None:
            raise ConfigError(f"check {check!r} needs field_tilde")
        return read_field(path, grid)

    if check == "comparison":
        tilde_path = resolve_relative(base, section.scenario_tilde)
        if tilde_path is None:
            raise ConfigError("comparison needs scenario_tilde")
        sc_tilde = load_scenario(tilde_path)
        if not build_grid(sc_tilde).same_nodes(grid):
            raise ConfigError("the two scenarios use different grids")
        result = checks.check_comparison(u, tilde_field(), gen, build_generator(sc_tilde), tol=tol)
    elif check == "growth":
        result = checks.check_growth(chain, grid, gen, u, section.bound_a, section.bound_b, tol=tol)
    elif check == "one_sided_growth":
        result = checks.check_one_sided_growth(chain, grid, gen, u, section.bound_a, section.bound_b, section.endpoint, tol=tol)
    elif check == "boundary_lower":
        result = checks.check_boundary_lower(chain, grid, gen, u, section.endpoint, tol=tol)
    elif check == "stability":
        u_tilde = tilde_field()
        evaluation = sc.solver.evaluation
        result = checks.check_stability(
            chain,
            grid,
            gen,
            u,
            u_tilde,
            residual(chain, grid, gen, u, evaluation),
            residual(chain, grid, gen, u_tilde, evaluation),
            tol=tol,
        )
    elif check == "gronwall":
        v = u.scalar()
        result = checks.check_gronwall(chain, grid, v, v[-1], section.bound_a, section.bound_b, tol=tol)
    else:
        raise ConfigError(f"unknown check {check!r}")

    write_json(_out_path(sc, config, out_dir, "check.json"), result)
    logger.info("[CLI] check %s passed=%s worst_slack=%s", check, result.passed, result.worst_slack)
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


@cli.command()
@common_options
@guarded
def mechanism(config, tol, max_iter, threshold, mode, out_dir, seed):
    """Compare the stable-kernel quadrature with d w^alpha over a parameter table."""
    sc = load_scenario(config)
    section = sc.mechanism or MechanismSection()

    orchestrator = Orchestrator()
    cases = list(itertools.product(section.d, section.alpha, section.w))
    for d, alpha, w in cases:
        orchestrator.register_job(f"{d}/{alpha}/{w}", mechanism_kernel_check, d, alpha, w, section.quadrature_nodes)
    results = orchestrator.run()

    rows: List[dict] = []
    for (d, alpha, w), result in zip(cases, results.values()):
        if isinstance(result, Exception):
            raise result
        rows.append(
            {
                "d": d,
                "alpha": alpha,
                "w": w,
                "closed_form": result.closed_form,
                "quadrature": result.quadrature,
                "abs_error": result.abs_error,
            }
        )
    payload = {"cases": rows, "max_abs_error": max(r["abs_error"] for r in rows) if rows else 0.0}
    write_json(_out_path(sc, config, out_dir, "mechanism.json"), payload)
    return EXIT_OK


@cli.command()
@common_options
@guarded
def coshsinh(config, tol, max_iter, threshold, mode, out_dir, seed):
    """Closed-form cosh/sinh field next to the product-matrix recursion."""
    sc = load_scenario(config)
    if sc.coshsinh is None:
        raise ConfigError("scenario has no [coshsinh] section")
    section = sc.coshsinh
    grid = build_grid(sc)
    chain = build_chain(sc, grid)
    N, S = chain.steps, chain.state_count
    g = np.concatenate(
        [terminal_array(section.g1, S, 1, "g1"), terminal_array(section.g2, S, 1, "g2")],
        axis=1,
    )

    orchestrator = Orchestrator()
    orchestrator.register_job(
        "closed_form", coshsinh_example, chain, grid, section.c, section.delta, section.eps, section.g1, section.g2
    )
    orchestrator.register_job(
        "recursion",
        linear_solve_backward,
        chain,
        grid,
        np.zeros(2),
        coshsinh_b_field(section.c, section.delta, section.eps, N, S),
        g,
    )
    results = orchestrator.run()
    for result in results.values():
        if isinstance(result, Exception):
            raise result

    closed, recursion = results["closed_form"], results["recursion"]
    gap = float(np.max(np.abs(closed.values - recursion.values)))
    write_field(_out_path(sc, config, out_dir, "field.csv"), closed)
    write_json(
        _out_path(sc, config, out_dir, "agreement.json"),
        {
            "closed_form_t0": closed.values[0].tolist(),
            "recursion_t0": recursion.values[0].tolist(),
            "max_abs_difference": gap,
            "steps": N,
        },
    )
    logger.info("[CLI] cosh/sinh closed form vs recursion: max difference %.3e", gap)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point returning the exit code; usage errors map to 3."""
    try:
        return int(cli.main(args=argv, prog_name="mie", standalone_mode=False) or 0)
    except click.exceptions.Abort:
        return EXIT_CONFIG_ERROR
    except click.ClickException as e:
        e.show()
        return EXIT_CONFIG_ERROR
