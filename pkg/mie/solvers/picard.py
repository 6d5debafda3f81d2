"""
Picard iteration, the explicit epsilon-approximate stepper, defects and the
local-horizon selector for the discretized equation

    u(j, x) = E_{j,x}[g(X_N)] - E_{j,x}[ sum_{l >= j} w_l f(l, X_l, z_l) ]

where z_l is the propagated value E_{l, X_l}[u(l + 1, X_{l+1})] ("propagated")
or the slice value u(l, X_l) ("slice").
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from mie.errors import DomainExitError, InvalidArgumentError, PreconditionError
from mie.model.fields import Box, terminal_array
from mie.model.generator import Generator, lipschitz_profile
from mie.model.markov import MarkovChainModel, propagate_all
from mie.model.timegrid import TimeGrid
from mie.solvers.results import SolutionField, SolveReport, SolverOptions

logger = logging.getLogger(__name__)

BOUND_RTOL = 1e-9


# =========================
# SHARED HELPERS
# =========================


def prepare(chain: MarkovChainModel, grid: TimeGrid, gen: Generator, g) -> np.ndarray:
    """Validate an instance and return g as shape (S, k), checked against D."""
    chain.check_grid(grid)
    gen.validate(chain.steps, chain.state_count)
    g = terminal_array(g, chain.state_count, gen.k)
    inside = gen.domain.contains(g)
    if not np.all(inside):
        x = int(np.argmin(inside))
        raise DomainExitError(chain.steps, x, g[x], "terminal data is outside the domain")
    return g


def propagated_values(chain: MarkovChainModel, u: np.ndarray, j_from: int = 0) -> np.ndarray:
    """v_j = P_j u(j + 1) for j = j_from..N-1, given u on nodes j_from..N."""
    return np.einsum("jxy,jyk->jxk", chain.transitions[j_from:], u[1:])


def check_iterate(gen: Generator, u: np.ndarray, j_from: int = 0) -> None:
    inside = gen.domain.contains(u)
    if not np.all(inside):
        bad_j, bad_x = np.nonzero(~inside)
        pick = int(np.argmax(bad_j))
        j, x = int(bad_j[pick]), int(bad_x[pick])
        raise DomainExitError(j + j_from, x, u[j, x])


def contraction_tail_bounds(c: Sequence[float], n_max: int, strict: bool = True) -> np.ndarray:
    """
    Coefficients B_n, n = 0..n_max, with sup|u_{n+1} - u_n| <= B_n sup|u_1 - u_0|.

    Args:
        c: Per-step contraction weights w_l * lambda_l.
        n_max: Largest n.
        strict: Propagated evaluation (driver at the next slice) gives
            Lambda^n / n!. Slice evaluation gives the complete homogeneous
            symmetric sums h_n(c).
    """
    c = np.asarray(c, dtype=float)
    n = np.arange(n_max + 1)
    if strict:
        lam = float(c.sum())
        if lam == 0.0:
            return (n == 0).astype(float)
        with np.errstate(over="ignore"):
            return np.exp(n * math.log(lam) - np.array([math.lgamma(m + 1) for m in n]))
    h = np.zeros(n_max + 1)
    h[0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for cl in c:
            if cl == 0.0:
                continue
            h = np.convolve(h, cl ** n)[: n_max + 1]
    return h


def _picard_map(chain, grid, gen, u, G, evaluation) -> Tuple[np.ndarray, float]:
    """One sweep u -> G - A with A(j) = P_j A(j + 1) + w_j f(j, z_j)."""
    N = chain.steps
    args = propagated_values(chain, u) if evaluation == "propagated" else u[:N]
    F = gen.evaluate_all(args)
    out = np.empty_like(u)
    out[N] = u[N]
    A = np.zeros_like(u[N])
    peak = 0.0
    for j in range(N - 1, -1, -1):
        A = chain.step(j, A) + grid.weights[j] * F[j]
        out[j] = G[j] - A
        peak = max(peak, float(np.max(np.abs(A))))
    return out, peak


# =========================
# PICARD ITERATION
# =========================


def picard_solve(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    g,
    opts: Optional[SolverOptions] = None,
) -> Tuple[SolutionField, SolveReport]:
    """
    Solve by Picard iteration started from u_0 = E[g(X_N)].

    Args:
        chain: Markov chain on the grid steps.
        grid: Time grid.
        gen: Driver.
        g: Terminal data, one value in D per state.
        opts: Solver options.

    Returns:
        The last iterate and a report. Non-convergence is reported, not raised.
        Iterates leaving D raise DomainExitError.
    """
    opts = opts or SolverOptions()
    g = prepare(chain, grid, gen, g)
    N = chain.steps

    G = propagate_all(chain, g)
    check_iterate(gen, G)
    u = G.copy()
    hull = Box.hull(G)
    scale = float(np.max(np.abs(G)))
    increments = []
    converged = False

    for n in range(1, opts.max_iter + 1):
        phi, peak = _picard_map(chain, grid, gen, u, G, opts.evaluation)
        new = phi if opts.damping == 1.0 else opts.damping * phi + (1.0 - opts.damping) * u
        new[N] = g
        check_iterate(gen, new)

        inc = float(np.max(np.linalg.norm(new - u, axis=-1)))
        increments.append(inc)
        u = new
        hull = hull.union(Box.hull(u))
        scale = max(scale, peak, float(np.max(np.abs(u))))
        logger.debug("[Picard] iteration %d increment %.3e", n, inc)

        if inc <= opts.tol:
            converged = True
            break

    if converged:
        logger.info("[Picard] converged after %d iterations", len(increments))
    else:
        logger.warning("[Picard] no convergence after %d iterations (increment %.3e)", len(increments), increments[-1])

    lam, estimated = lipschitz_profile(gen.closure(), hull, range(N), chain.state_count)
    c = grid.weights * lam
    tail_ok = None
    if opts.damping == 1.0:
        tail_ok = _tail_bound_holds(increments, c, opts.evaluation == "propagated", N, scale)
        if not tail_ok:
            logger.warning("[Picard] increments exceed the contraction tail bound (Lambda = %.4g)", float(c.sum()))

    field = SolutionField(grid, u)
    report = SolveReport(
        converged=converged,
        iterations=len(increments),
        final_residual=increments[-1],
        lipschitz_mass=float(c.sum()),
        lipschitz_estimated=estimated,
        increments=increments,
        tail_bound_ok=tail_ok,
        interval=(0.0, grid.T),
    )
    report.defect = float(np.nanmax(residual(chain, grid, gen, field, opts.evaluation)))
    return field, report


def _tail_bound_holds(increments, c, strict: bool, N: int, scale: float) -> bool:
    if len(increments) < 2:
        return True
    bounds = contraction_tail_bounds(c, len(increments) - 1, strict)
    d0 = increments[0]
    floor = 16.0 * (N + 1) * np.finfo(float).eps * (1.0 + scale)
    for n, inc in enumerate(increments[1:], start=1):
        if inc > bounds[n] * d0 * (1.0 + BOUND_RTOL) + floor:
            return False
    return True


# =========================
# EXPLICIT STEPPER
# =========================


def epsilon_stepper(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    g,
    macro_nodes: Optional[Sequence[int]] = None,
) -> SolutionField:
    """
    Explicit construction over macro intervals m_0 = 0 < ... < m_n = N.

    On [m_{i-1}, m_i] the anchor Psi(j) = E_{j,x}[u(m_i, X_{m_i})] is frozen
    and u(j) = Psi(j) - E_{j,x}[sum_{l=j}^{m_i - 1} w_l f(l, X_l, Psi(l))].
    With every node a macro node this is the propagated scheme.
    """
    g = prepare(chain, grid, gen, g)
    N = chain.steps
    macro = list(range(N + 1)) if macro_nodes is None else sorted(set(int(m) for m in macro_nodes))
    if not macro or macro[0] != 0 or macro[-1] != N:
        raise InvalidArgumentError(f"macro nodes must include 0 and {N}")

    u = np.empty((N + 1,) + g.shape)
    closed = gen.closure()
    u[N] = g
    for lo, hi in zip(reversed(macro[:-1]), reversed(macro[1:])):
        psi = u[hi]
        A = np.zeros_like(psi)
        for j in range(hi - 1, lo - 1, -1):
            psi = chain.step(j, psi)
            A = chain.step(j, A) + grid.weights[j] * gen(j, psi)
            u[j] = psi - A
            check_iterate(closed, u[j : j + 1], j)
    logger.debug("[Stepper] %d macro intervals", len(macro) - 1)
    return SolutionField(grid, u)


# =========================
# DEFECT
# =========================


def residual(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    u: SolutionField,
    evaluation: str = "propagated",
) -> np.ndarray:
    """
    One-step defect |E_{j,x}[u(j+1)] - u(j, x) - w_j f(j, x, z_j)| for j = 0..N-1.

    Returns shape (N, S). Rows before the field's start index are NaN.
    """
    chain.check_grid(grid)
    values = u.values
    N = chain.steps
    start = u.start_index
    out = np.full((N, chain.state_count), np.nan)
    if start >= N:
        return out

    v = propagated_values(chain, values[start:], start)
    args = v if evaluation == "propagated" else values[start:N]
    F = gen.evaluate_all(args, j_from=start)
    defect = v - values[start:N] - grid.weights[start:, None, None] * F
    out[start:] = np.linalg.norm(defect, axis=-1)
    return out


# =========================
# LOCAL HORIZON
# =========================


def local_horizon(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    g,
    beta: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Grid-aligned horizon alpha on which the explicit construction stays within
    beta of the propagated terminal data.

    beta defaults to half the distance of the hull of {E_{j,x}[g(X_N)]} from the
    boundary (1.0 when D = R^k) and is capped there. alpha is the largest T - t_j
    such that E_{l,x}[sum_{m >= l} w_m a(m, X_m)] <= beta for every l >= j,
    with a the mu-bound on the beta-neighbourhood box.
    """
    g = prepare(chain, grid, gen, g)
    if gen.mu_bound is None:
        raise PreconditionError("local_horizon needs a generator with mu_bound metadata")

    G = propagate_all(chain, g)
    hull = Box.hull(G)
    dist = min(
        float(np.min(hull.lower - gen.domain.lower)),
        float(np.min(gen.domain.upper - hull.upper)),
    )
    if dist <= 0.0 or not np.all(gen.domain.contains(G)):
        raise PreconditionError("terminal data touches the boundary of the domain")

    cap = dist / 2.0
    if beta is None:
        beta = cap if math.isfinite(cap) else 1.0
    elif beta <= 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}")
    elif beta > cap:
        logger.warning("[Horizon] beta %.4g exceeds half the boundary distance, clamped to %.4g", beta, cap)
        beta = cap

    K = hull.widened(beta)
    states = np.arange(chain.state_count)
    N = chain.steps
    A = np.zeros(chain.state_count)
    first = N
    for j in range(N - 1, -1, -1):
        a = np.asarray(gen.mu_bound(j, states, K), dtype=float)
        A = chain.step(j, A) + grid.weights[j] * a
        if float(np.max(A)) > beta:
            break
        first = j

    alpha = grid.T - float(grid.nodes[first])
    if alpha <= 0.0:
        raise PreconditionError("no grid-aligned horizon keeps the construction within beta")
    logger.info("[Horizon] beta %.4g alpha %.4g", beta, alpha)
    return alpha, float(beta)
