"""
Executable forms of the comparison, growth, Gronwall, boundary and stability
inequalities, plus the propagator identities.

Every checker validates its premise, computes the bound with the same
backward machinery the solvers use, and returns a CheckResult. Points where
a premise fails are skipped and counted; a failed premise on sampled driver
values raises PreconditionError.
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel

from mie.config import settings
from mie.errors import InvalidArgumentError, PreconditionError
from mie.feynman_kac.sigma import SigmaPropagator, sigma_product, sigma_product_inverse
from mie.model.fields import Box, scalar_field
from mie.model.generator import Generator, lipschitz_profile
from mie.model.markov import MarkovChainModel, propagate_all
from mie.model.timegrid import TimeGrid
from mie.solvers.picard import propagated_values
from mie.solvers.results import SolutionField
from mie.verify.bounds import exponential_bound, gronwall_premise_rhs, survival_factor

logger = logging.getLogger(__name__)


class CheckResult(BaseModel):
    passed: bool
    worst_slack: Optional[float] = None
    witness: Optional[Tuple[int, int]] = None
    tolerance: float
    checked: int
    skipped: int = 0


def _result(slack: np.ndarray, scale: np.ndarray, tol: float, mask: Optional[np.ndarray] = None, skipped: int = 0) -> CheckResult:
    """slack >= -(tol + tol * max|scale|) on the masked points."""
    slack = np.asarray(slack, dtype=float)
    ok = np.isfinite(slack) if mask is None else (mask & np.isfinite(slack))
    checked = int(ok.sum())
    finite_scale = np.abs(np.asarray(scale, dtype=float)[ok]) if checked else np.zeros(1)
    tolerance = tol + tol * float(np.max(finite_scale)) if checked else tol
    if checked == 0:
        return CheckResult(passed=True, tolerance=tolerance, checked=0, skipped=skipped)
    masked = np.where(ok, slack, np.inf)
    idx = np.unravel_index(int(np.argmin(masked)), masked.shape)
    worst = float(masked[idx])
    witness = (int(idx[0]), int(idx[1])) if len(idx) == 2 else None
    return CheckResult(passed=worst >= -tolerance, worst_slack=worst, witness=witness, tolerance=tolerance, checked=checked, skipped=skipped)


def _tol(tol: Optional[float]) -> float:
    return settings.CHECK_TOL if tol is None else float(tol)


def _scalar_values(u) -> np.ndarray:
    if isinstance(u, SolutionField):
        return u.scalar()
    arr = np.asarray(u, dtype=float)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"expected a scalar field of shape (N + 1, S), got {arr.shape}")
    return arr


def _valid_mask(u: SolutionField) -> np.ndarray:
    mask = np.zeros(u.values.shape[:2], dtype=bool)
    mask[u.start_index:] = True
    return mask


def _sample_points(gen: Generator, chain: MarkovChainModel, u: SolutionField):
    """(j, args, per_state) triples where the driver is sampled: propagated values and a lattice over the hull."""
    start = u.start_index
    v = propagated_values(chain, u.values[start:], start)
    lattice = Box.hull(u.valid()).lattice()
    lattice = lattice[gen.domain.contains(lattice)]
    for i, j in enumerate(range(start, chain.steps)):
        yield j, v[i], True
        if len(lattice):
            yield j, lattice, False


def _driver_at(gen: Generator, j: int, S: int, pts: np.ndarray, per_state: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate f at sampled points; returns (states, points, values).

    With per_state the i-th row of pts belongs to state i, otherwise every
    point is paired with every state.
    """
    if per_state:
        states, pts_rep = np.arange(S), pts
        values = gen.evaluate(j, states, pts_rep)
        return states, pts_rep, np.asarray(values, dtype=float).reshape(S, gen.k)
    states = np.repeat(np.arange(S), len(pts))
    pts_rep = np.tile(pts, (S, 1))
    values = np.asarray(gen.evaluate(j, states, pts_rep), dtype=float).reshape(len(states), gen.k)
    return states, pts_rep, values


# =========================
# GRONWALL
# =========================


def check_gronwall(chain: MarkovChainModel, grid: TimeGrid, v, h, a_field, b_field, tol: Optional[float] = None) -> CheckResult:
    """
    Premise  v(j) <= E[h] + E[sum_{l>=j} w_l (a_l + b_l v(l + 1))]
    implies  v(j) <= E[exp(sum w b) (h + sum w a)].

    A point (j, x) is checked only when the premise holds at every node from
    j on, since the conclusion at j leans on the later values of v.
    """
    tol = _tol(tol)
    chain.check_grid(grid)
    N, S = chain.steps, chain.state_count
    v = _scalar_values(v)
    h = np.asarray(h, dtype=float).reshape(S)
    a = scalar_field(a_field, name="a").full(N, S)
    b = scalar_field(b_field, name="b").full(N, S)
    if v.shape != (N + 1, S):
        raise InvalidArgumentError(f"v must have shape ({N + 1}, {S}), got {v.shape}")
    for name, arr in (("v", v), ("h", h), ("a", a), ("b", b)):
        if np.any(arr < 0):
            raise InvalidArgumentError(f"{name} must be nonnegative")

    rhs = gronwall_premise_rhs(chain, grid, v, h, a, b)
    holds = v <= rhs + tol * (1.0 + np.abs(rhs))
    # premise on the whole future of each node
    future = np.logical_and.accumulate(holds.all(axis=1)[::-1])[::-1]
    premise = holds & future[:, None]
    bound = exponential_bound(chain, grid, h, b, grid.weights[:, None] * a)
    skipped = int((~premise).sum())
    if skipped:
        logger.info("[Gronwall] premise fails at %d points, skipped", skipped)
    return _result(bound - v, bound, tol, premise, skipped)


# =========================
# GROWTH
# =========================


def check_growth(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    u: SolutionField,
    a_field,
    b_field,
    tol: Optional[float] = None,
) -> CheckResult:
    """|u(j, x)| <= E[exp(sum w b) (|g| + sum w a)] given |f| <= a + b |w| on sampled points."""
    tol = _tol(tol)
    chain.check_grid(grid)
    N, S = chain.steps, chain.state_count
    a = scalar_field(a_field, name="a").full(N, S)
    b = scalar_field(b_field, name="b").full(N, S)

    for j, pts, per_state in _sample_points(gen, chain, u):
        states, wpts, f = _driver_at(gen, j, S, pts, per_state)
        limit = a[j, states] + b[j, states] * np.linalg.norm(wpts, axis=-1)
        size = np.linalg.norm(f, axis=-1)
        if np.any(size > limit + tol * (1.0 + limit)):
            i = int(np.argmax(size - limit))
            raise PreconditionError(f"|f| = {size[i]:.6g} exceeds a + b|w| = {limit[i]:.6g} at step {j}, state {states[i]}")

    g_norm = np.linalg.norm(u.terminal, axis=-1)
    bound = exponential_bound(chain, grid, g_norm, b, grid.weights[:, None] * a)
    size = np.linalg.norm(u.values, axis=-1)
    return _result(bound - size, bound, tol, _valid_mask(u))


def _one_dimensional(gen: Generator, u: SolutionField, endpoint: str) -> Tuple[Generator, np.ndarray, float]:
    if gen.k != 1 or u.k != 1:
        raise InvalidArgumentError("this check needs k = 1")
    if endpoint not in ("lower", "upper"):
        raise InvalidArgumentError(f"endpoint must be 'lower' or 'upper', got {endpoint!r}")
    values = u.scalar()
    if endpoint == "upper":
        gen, values = gen.reflected(), -values
    d = float(gen.domain.lower[0])
    if not np.isfinite(d):
        raise InvalidArgumentError(f"the {endpoint} endpoint of the domain is not finite")
    return gen, values, d


def check_one_sided_growth(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    u: SolutionField,
    a_field,
    b_field,
    endpoint: str = "lower",
    tol: Optional[float] = None,
) -> CheckResult:
    """
    u - d <= E[exp(sum w b) ((g - d) + sum w (a + b |d|))] given f >= -a - b |w|,
    with d the chosen finite endpoint (the upper one through the reflected driver).
    """
    tol = _tol(tol)
    chain.check_grid(grid)
    N, S = chain.steps, chain.state_count
    a = scalar_field(a_field, name="a").full(N, S)
    b = scalar_field(b_field, name="b").full(N, S)
    gen, values, d = _one_dimensional(gen, u, endpoint)
    oriented = SolutionField(u.grid, values[..., None], u.start_index)

    for j, pts, per_state in _sample_points(gen, chain, oriented):
        states, wpts, f = _driver_at(gen, j, S, pts, per_state)
        floor = -(a[j, states] + b[j, states] * np.abs(wpts[:, 0]))
        if np.any(f[:, 0] < floor - tol * (1.0 + np.abs(floor))):
            i = int(np.argmin(f[:, 0] - floor))
            raise PreconditionError(f"f = {f[i, 0]:.6g} is below -a - b|w| = {floor[i]:.6g} at step {j}")

    h = values[-1] - d
    bound = exponential_bound(chain, grid, h, b, grid.weights[:, None] * (a + b * abs(d)))
    return _result(bound - (values - d), bound, tol, _valid_mask(u))


# =========================
# BOUNDARY
# =========================


def check_boundary_lower(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    u: SolutionField,
    endpoint: str = "lower",
    tol: Optional[float] = None,
) -> CheckResult:
    """
    u(j, x) - d >= c_j (E_{j,x}[g] - d) with c_j = prod_{l>=j} (1 - w_l n_l),
    n_l the Lipschitz constant on [d, max u]. Needs f(t, x, d) <= 0.
    """
    tol = _tol(tol)
    chain.check_grid(grid)
    N, S = chain.steps, chain.state_count
    gen, values, d = _one_dimensional(gen, u, endpoint)
    closed = gen.closure()

    idx = np.arange(S)
    for j in range(N):
        f_d = np.asarray(closed.evaluate(j, idx, np.full((S, 1), d)), dtype=float).reshape(S)
        if np.any(f_d > tol):
            raise PreconditionError(f"f(t_{j}, x, {d}) = {float(f_d.max()):.6g} > 0 at the endpoint")

    top = max(float(np.nanmax(values[u.start_index:])), d)
    rates, _ = lipschitz_profile(closed, Box([d], [top]), range(N), S)
    c = survival_factor(grid.weights, rates)
    expected = propagate_all(chain, values[-1])
    bound = c[:, None] * (expected - d)
    return _result((values - d) - bound, values - d, tol, _valid_mask(u))


# =========================
# COMPARISON
# =========================


def check_comparison(
    u: SolutionField,
    u_tilde: SolutionField,
    gen: Generator,
    gen_tilde: Generator,
    tol: Optional[float] = None,
) -> CheckResult:
    """
    u >= u_tilde pointwise when f <= f_tilde on sampled points and g >= g_tilde.

    Needs w_j lambda_j <= 1 on every step, lambda_j the Lipschitz constant of f
    on the hull of both fields.
    """
    tol = _tol(tol)
    if u.k != 1 or u_tilde.k != 1 or gen.k != 1 or gen_tilde.k != 1:
        raise InvalidArgumentError("comparison needs k = 1")
    if not u.grid.same_nodes(u_tilde.grid) or u.values.shape != u_tilde.values.shape:
        raise InvalidArgumentError("fields live on different grids")

    g, g_tilde = u.terminal[:, 0], u_tilde.terminal[:, 0]
    if np.any(g < g_tilde - tol):
        raise PreconditionError("terminal data violates g >= g_tilde")

    S = u.state_count
    N = u.grid.steps
    start = max(u.start_index, u_tilde.start_index)
    hull = Box.hull(u.values[start:]).union(Box.hull(u_tilde.values[start:]))
    # w -> w - w_j f(j, x, w) must be nondecreasing on the hull
    rates, estimated = lipschitz_profile(gen.closure(), hull, range(start, N), S)
    contraction = u.grid.weights[start:] * rates
    if len(contraction) and float(contraction.max()) > 1.0 + tol:
        j = start + int(np.argmax(contraction))
        raise PreconditionError(
            f"w lambda = {float(contraction.max()):.6g} exceeds 1 at step {j}; the scheme is not monotone there"
        )
    if estimated:
        logger.warning("[Comparison] Lipschitz constants are lattice estimates")

    lattice = hull.lattice()
    for j in range(start, N):
        pts = np.concatenate([lattice, u.values[j], u_tilde.values[j]])
        pts = pts[gen.domain.contains(pts) & gen_tilde.domain.contains(pts)]
        if len(pts) == 0:
            continue
        _, _, f = _driver_at(gen, j, S, pts)
        _, _, f_t = _driver_at(gen_tilde, j, S, pts)
        if np.any(f[:, 0] > f_t[:, 0] + tol * (1.0 + np.abs(f_t[:, 0]))):
            raise PreconditionError(f"sampled f exceeds f_tilde at step {j}")

    mask = np.zeros(u.values.shape[:2], dtype=bool)
    mask[start:] = True
    diff = u.scalar() - u_tilde.scalar()
    return _result(diff, np.maximum(np.abs(u.scalar()), np.abs(u_tilde.scalar())), tol, mask)


# =========================
# STABILITY
# =========================


def check_stability(
    chain: MarkovChainModel,
    grid: TimeGrid,
    gen: Generator,
    u: SolutionField,
    u_tilde: SolutionField,
    r: Optional[np.ndarray] = None,
    r_tilde: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
) -> CheckResult:
    """
    |u - u_tilde| <= E[exp(sum w lambda) (|g - g_tilde| + sum (r + r_tilde))]
    for two approximate solutions of the same equation with one-step defects r, r_tilde.
    """
    tol = _tol(tol)
    chain.check_grid(grid)
    if not u.grid.same_nodes(u_tilde.grid) or u.values.shape != u_tilde.values.shape:
        raise InvalidArgumentError("fields live on different grids")
    N, S = chain.steps, chain.state_count
    start = max(u.start_index, u_tilde.start_index)

    r = np.zeros((N, S)) if r is None else np.nan_to_num(np.asarray(r, dtype=float))
    r_tilde = np.zeros((N, S)) if r_tilde is None else np.nan_to_num(np.asarray(r_tilde, dtype=float))
    if r.shape != (N, S) or r_tilde.shape != (N, S):
        raise InvalidArgumentError(f"defects must have shape ({N}, {S})")

    hull = Box.hull(u.values[start:]).union(Box.hull(u_tilde.values[start:]))
    rates, estimated = lipschitz_profile(gen.closure(), hull, range(N), S)
    if estimated:
        logger.warning("[Stability] Lipschitz constants are lattice estimates")

    h = np.linalg.norm(u.terminal - u_tilde.terminal, axis=-1)
    bound = exponential_bound(chain, grid, h, np.broadcast_to(rates[:, None], (N, S)), r + r_tilde)
    gap = np.linalg.norm(u.values - u_tilde.values, axis=-1)
    mask = np.zeros((N + 1, S), dtype=bool)
    mask[start:] = True
    return _result(bound - gap, bound, tol, mask)


# =========================
# PROPAGATOR IDENTITIES
# =========================


def check_sigma(prop: SigmaPropagator, path, j_from: int, j_mid: int, j_to: int, tol: Optional[float] = None) -> CheckResult:
    """Identity at coincident nodes, cocycle, inverse and the norm bound for the product propagator."""
    tol = _tol(tol)
    if not (j_from <= j_mid <= j_to):
        raise InvalidArgumentError("need j_from <= j_mid <= j_to")
    k = prop.k
    eye = np.eye(k)
    full = sigma_product(prop, path, j_from, j_to)
    left = sigma_product(prop, path, j_from, j_mid).matrix
    right = sigma_product(prop, path, j_mid, j_to).matrix

    slacks = [-float(np.linalg.norm(sigma_product(prop, path, j, j).matrix - eye)) for j in (j_from, j_mid, j_to)]
    slacks.append(-float(np.linalg.norm(left @ right - full.matrix)))
    if full.invertible:
        inverse = sigma_product_inverse(prop, path, j_from, j_to)
        slacks.append(-float(np.linalg.norm(full.matrix @ inverse - eye)))
    slacks.append(full.norm_bound - float(np.linalg.norm(full.matrix)))

    slack = np.array(slacks)
    tolerance = tol + tol * full.norm_bound
    worst = float(slack.min())
    return CheckResult(passed=worst >= -tolerance, worst_slack=worst, tolerance=tolerance, checked=len(slacks))
