"""
Backward march with a monitor for the non-extendibility statistic

    q_j = min_x min{ dist(u(j, x), boundary of D), 1 / (1 + |u(j, x)|) }.

The march halts at the first slice with q_j below the threshold, or when a
slice leaves D. Halting is a normal outcome and is reported, not raised.
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from mie.errors import DomainExitError, PreconditionError
from mie.model.generator import Generator
from mie.model.markov import MarkovChainModel
from mie.model.timegrid import TimeGrid
from mie.solvers.picard import prepare
from mie.solvers.results import BlowupRecord, SolutionField, SolveReport, SolverOptions

logger = logging.getLogger(__name__)


def condition_statistic(gen: Generator, slice_values: np.ndarray) -> Tuple[float, str]:
    """q for one slice and which term attains it ("boundary" or "growth")."""
    dist = gen.domain.distance_to_boundary(slice_values)
    growth = 1.0 / (1.0 + np.linalg.norm(slice_values, axis=-1))
    per_state = np.minimum(dist, growth)
    x = int(np.argmin(per_state))
    trigger = "boundary" if dist[x] < growth[x] else "growth"
    return float(per_state[x]), trigger


def march_with_blowup_monitor(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    g,
    threshold: Optional[float] = None,
    opts: Optional[SolverOptions] = None,
) -> Tuple[SolutionField, SolveReport]:
    """
    March u(j) = v_j - w_j f(j, v_j), v_j = P_j u(j + 1), backward from T.

    Args:
        threshold: Halting level for the statistic; defaults to
            ``opts.blowup_threshold``.

    Returns:
        The field on [t_halt, T] (NaN before) and a report whose ``blowup``
        record holds t_halt and the trigger, or no record when the march
        reached t_0 = 0.
    """
    opts = opts or SolverOptions()
    threshold = opts.blowup_threshold if threshold is None else float(threshold)
    if not threshold > 0:
        raise PreconditionError(f"threshold must be positive, got {threshold}")
    g = prepare(chain, grid, gen, g)
    if float(np.min(gen.domain.distance_to_boundary(g))) <= 0.0:
        raise PreconditionError("terminal data must be bounded away from the boundary")

    N = chain.steps
    u = np.full((N + 1,) + g.shape, np.nan)
    u[N] = g
    trace = [None] * (N + 1)
    halt = None
    trigger = None

    q, which = condition_statistic(gen, g)
    trace[N] = q
    if q < threshold:
        halt, trigger = N, which

    j = N - 1
    while halt is None and j >= 0:
        v = chain.step(j, u[j + 1])
        try:
            step = v - grid.weights[j] * gen(j, v)
        except DomainExitError as exc:
            halt = j + 1
            trigger = "growth" if not np.all(np.isfinite(exc.value)) else "boundary"
            break
        inside = gen.domain.contains(step)
        if not np.all(inside):
            halt = j + 1
            trigger = "growth" if not np.all(np.isfinite(step)) else "boundary"
            break
        u[j] = step
        q, which = condition_statistic(gen, step)
        trace[j] = q
        if q < threshold:
            halt, trigger = j, which
        j -= 1

    start = 0 if halt is None else halt
    field = SolutionField(grid, u, start_index=start)
    t_halt = float(grid.nodes[start])

    blowup = None
    if halt is not None:
        blowup = BlowupRecord(t_minus_estimate=t_halt, trigger=trigger, halt_index=halt, trace=trace)
        logger.info("[Blowup] halted at t = %.6g (node %d), trigger %s", t_halt, halt, trigger)
    else:
        logger.info("[Blowup] no halt, solution exists on [0, %.6g]", grid.T)

    report = SolveReport(
        converged=halt is None,
        iterations=1,
        final_residual=0.0,
        blowup=blowup,
        interval=(t_halt, grid.T),
        condition_trace=trace,
    )
    return field, report
