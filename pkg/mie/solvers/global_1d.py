"""
Global bounded solutions for k = 1 on an interval domain, by clipping the
terminal data away from the endpoints and solving level by level.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Tuple

import numpy as np

from mie.errors import DomainExitError, InvalidArgumentError, PreconditionError
from mie.model.fields import terminal_array
from mie.model.generator import Generator
from mie.model.markov import MarkovChainModel
from mie.model.timegrid import TimeGrid
from mie.solvers.blowup import march_with_blowup_monitor
from mie.solvers.picard import picard_solve
from mie.solvers.results import SolutionField, SolveReport, SolverOptions

logger = logging.getLogger(__name__)


def check_endpoint_signs(gen: Generator, steps: int, states: int, tol: float) -> None:
    """f(t, x, lower) <= 0 and f(t, x, upper) >= 0 at every finite endpoint."""
    closed = gen.closure()
    lo, hi = float(gen.domain.lower[0]), float(gen.domain.upper[0])
    idx = np.arange(states)
    for j in range(steps):
        if math.isfinite(lo):
            f_lo = closed.evaluate(j, idx, np.full((states, 1), lo)).reshape(states)
            if np.any(f_lo > tol):
                x = int(np.argmax(f_lo))
                raise PreconditionError(f"f(t_{j}, {x}, {lo}) = {f_lo[x]:.6g} > 0 at the lower endpoint")
        if math.isfinite(hi):
            f_hi = closed.evaluate(j, idx, np.full((states, 1), hi)).reshape(states)
            if np.any(f_hi < -tol):
                x = int(np.argmin(f_hi))
                raise PreconditionError(f"f(t_{j}, {x}, {hi}) = {f_hi[x]:.6g} < 0 at the upper endpoint")


def clip_terminal(g: np.ndarray, lower: float, upper: float, n: int) -> np.ndarray:
    """Terminal data at clip level n."""
    if math.isfinite(lower) and math.isfinite(upper):
        gap = (upper - lower) * 2.0 ** (-n)
        return np.minimum(np.maximum(g, lower + gap), upper - gap)
    if math.isfinite(lower):
        return np.maximum(g, lower + 2.0 ** (-n))
    if math.isfinite(upper):
        return np.minimum(g, upper - 2.0 ** (-n))
    return g


def levels_decrease(differences, tol: float) -> bool:
    """Successive clip-level differences are nonincreasing up to ``tol``."""
    return all(b <= a + tol for a, b in zip(differences, differences[1:]))


def solve_1d_global(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    g,
    clip_depth: Optional[int] = None,
    opts: Optional[SolverOptions] = None,
) -> Tuple[SolutionField, SolveReport]:
    """
    Solve with clipped terminal data g_n for n = 1..clip_depth.

    The driver is used on the closed interval. Levels stop early once two
    successive solutions differ by less than ``opts.tol``. A level that leaves
    the domain is re-run under the blow-up monitor and its report returned.
    ``report.levels_decreasing`` flags whether the level differences shrink.
    """
    opts = opts or SolverOptions()
    depth = opts.clip_depth if clip_depth is None else int(clip_depth)
    if depth < 1:
        raise InvalidArgumentError(f"clip_depth must be positive, got {depth}")
    if gen.k != 1:
        raise InvalidArgumentError(f"the interval solver needs k = 1, got k = {gen.k}")
    chain.check_grid(grid)

    closed = gen.closure()
    g = terminal_array(g, chain.state_count, 1)
    if not np.all(closed.domain.contains(g)):
        raise PreconditionError("terminal data must lie in the closed interval")
    check_endpoint_signs(gen, chain.steps, chain.state_count, opts.tol)

    lo, hi = float(gen.domain.lower[0]), float(gen.domain.upper[0])
    if not (math.isfinite(lo) or math.isfinite(hi)):
        return picard_solve(chain, grid, closed, g, opts)

    previous = None
    differences = []
    field, report = None, None
    for n in range(1, depth + 1):
        g_n = clip_terminal(g, lo, hi, n)
        try:
            field, report = picard_solve(chain, grid, closed, g_n, opts)
        except DomainExitError as exc:
            logger.warning("[Global1D] level %d left the domain at node %d, switching to the monitor", n, exc.node)
            field, report = march_with_blowup_monitor(chain, grid, gen, g_n, opts=opts)
            report.level_differences = differences
            return field, report

        if previous is not None:
            diff = float(np.max(np.abs(field.values - previous)))
            differences.append(diff)
            logger.debug("[Global1D] level %d difference %.3e", n, diff)
            if diff < opts.tol:
                break
        previous = field.values

    report.level_differences = differences
    report.levels_decreasing = levels_decrease(differences, opts.tol)
    if not report.levels_decreasing:
        logger.warning("[Global1D] clip-level differences do not decrease: %s", differences)
    logger.info("[Global1D] %d clip levels, last difference %s", len(differences) + 1, differences[-1] if differences else None)
    return field, report
