"""
Drivers f(t_j, x, w) with their domains and regularity metadata.

Callbacks are vectorized over states: ``evaluate(j, states, w)`` receives an
int array of state indices of shape (S,) and values of shape (S, k) and
returns shape (S, k). ``lipschitz`` and ``mu_bound`` take ``(j, states, K)``
with K a compact Box and return one nonnegative number per state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as gamma_fn

from mie.errors import DomainExitError, InvalidArgumentError
from mie.model.fields import Box, Domain, NodeField, matrix_field, scalar_field, vector_field

logger = logging.getLogger(__name__)

EvalFn = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
BoundFn = Callable[[int, np.ndarray, Box], np.ndarray]


@dataclass(frozen=True, eq=False)
class Generator:
    """Driver f: [0, T] x S x D -> R^k."""

    k: int
    domain: Domain
    evaluate: EvalFn
    mu_bound: Optional[BoundFn] = None
    lipschitz: Optional[BoundFn] = None
    family_tag: str = "custom"
    fields: Tuple[NodeField, ...] = ()
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 1:
            raise InvalidArgumentError(f"dimension must be positive, got {self.k}")
        if self.domain.k != self.k:
            raise InvalidArgumentError(f"domain has dimension {self.domain.k}, generator has {self.k}")

    def __call__(self, j: int, w: np.ndarray, states: Optional[np.ndarray] = None) -> np.ndarray:
        """f(t_j, x, w[x]) for every row of w. Raises DomainExitError outside D."""
        w = np.asarray(w, dtype=float).reshape(-1, self.k)
        states = np.arange(len(w)) if states is None else np.asarray(states, dtype=int)
        inside = self.domain.contains(w)
        if not np.all(inside):
            bad = int(np.argmin(inside))
            raise DomainExitError(j, int(states[bad]), w[bad])
        out = np.asarray(self.evaluate(j, states, w), dtype=float)
        return out.reshape(len(w), self.k)

    def evaluate_all(self, args: np.ndarray, j_from: int = 0) -> np.ndarray:
        """f(t_j, x, args[j - j_from, x]) for a stack of slices, shape (M, S, k).

        The domain check runs once over the whole stack; the reported offender
        is the one closest to the terminal time.
        """
        args = np.asarray(args, dtype=float)
        inside = self.domain.contains(args)
        if not np.all(inside):
            bad_j, bad_x = np.nonzero(~inside)
            pick = int(np.argmax(bad_j))
            j, x = int(bad_j[pick]), int(bad_x[pick])
            raise DomainExitError(j + j_from, x, args[j, x])
        states = np.arange(args.shape[1])
        out = np.empty_like(args)
        for i in range(args.shape[0]):
            out[i] = np.asarray(self.evaluate(i + j_from, states, args[i]), dtype=float).reshape(args.shape[1], self.k)
        return out

    def validate(self, steps: int, states: int) -> None:
        for f in self.fields:
            f.validate(steps, states)

    def closure(self) -> "Generator":
        """The same driver on the closed domain. Built-in families are continuous up to the boundary."""
        return replace(self, domain=self.domain.closure())

    def reflected(self) -> "Generator":
        """(t, x, w) -> -f(t, x, -w) on -D."""
        base = self

        def evaluate(j, states, w):
            return -np.asarray(base.evaluate(j, states, -w), dtype=float)

        def flip(fn):
            if fn is None:
                return None
            return lambda j, states, K: fn(j, states, Box(-K.upper, -K.lower))

        return Generator(
            k=self.k,
            domain=self.domain.reflected(),
            evaluate=evaluate,
            mu_bound=flip(self.mu_bound),
            lipschitz=flip(self.lipschitz),
            family_tag=f"reflected-{self.family_tag}",
            fields=self.fields,
            params=dict(self.params),
        )


# =========================
# BUILT-IN FAMILIES
# =========================


def make_zero(k: int = 1, domain: Optional[Domain] = None) -> Generator:
    """f = 0."""
    return Generator(
        k=k,
        domain=domain or Domain.whole(k),
        evaluate=lambda j, states, w: np.zeros((len(states), k)),
        mu_bound=lambda j, states, K: np.zeros(len(states)),
        lipschitz=lambda j, states, K: np.zeros(len(states)),
        family_tag="zero",
    )


def make_affine(a_field, b_field, k: int = 1) -> Generator:
    """
    Affine driver f(t_j, x, w) = a(t_j, x) + b(t_j, x) w on R^k.

    Args:
        a_field: Vector field in R^k (scalar-valued when k = 1).
        b_field: Matrix field in R^{k x k} (scalar-valued when k = 1).
        k: Dimension.

    Returns:
        Generator with Lipschitz metadata |b|_F and mu-bound |a| + |b|_F sup_K |w|.
    """
    a = vector_field(a_field, k, name="a")
    b = matrix_field(b_field, k, name="b")

    def evaluate(j, states, w):
        return a.at(j, states) + np.einsum("sij,sj->si", b.at(j, states), w)

    def lipschitz(j, states, K):
        return np.linalg.norm(b.at(j, states), axis=(1, 2))

    def mu_bound(j, states, K):
        return np.linalg.norm(a.at(j, states), axis=1) + lipschitz(j, states, K) * K.sup_norm()

    return Generator(
        k=k,
        domain=Domain.whole(k),
        evaluate=evaluate,
        mu_bound=mu_bound,
        lipschitz=lipschitz,
        family_tag="affine",
        fields=(a, b),
        params={"a": a, "b": b},
    )


def make_power(terms: Sequence[Tuple[object, float]], k: int = 1, domain: Optional[Domain] = None) -> Generator:
    """
    Componentwise power polynomial f(w)_m = sum_i c_i(t_j, x) w_m^{p_i}.

    Args:
        terms: (coefficient field, power) pairs with power 0 or >= 1.
            Coefficient fields are scalar-valued.
        k: Dimension.
        domain: Defaults to R^k, or [0, inf)^k when a power is not an integer.
    """
    coefs: List[NodeField] = []
    powers: List[float] = []
    for i, (c, p) in enumerate(terms):
        p = float(p)
        if not (p == 0.0 or p >= 1.0):
            raise InvalidArgumentError(f"power {p} must be 0 or at least 1")
        coefs.append(scalar_field(c, name=f"c_{i}"))
        powers.append(p)

    fractional = any(p != math.floor(p) for p in powers)
    if domain is None:
        domain = Domain.nonnegative(k) if fractional else Domain.whole(k)
    if fractional and np.any(domain.lower < 0):
        raise InvalidArgumentError("non-integer powers need a domain inside [0, inf)")

    def evaluate(j, states, w):
        out = np.zeros_like(w, dtype=float)
        for c, p in zip(coefs, powers):
            out += c.at(j, states)[:, None] * np.power(w, p)
        return out

    def lipschitz(j, states, K):
        s = float(np.max(np.maximum(np.abs(K.lower), np.abs(K.upper))))
        total = np.zeros(len(states))
        for c, p in zip(coefs, powers):
            if p >= 1.0:
                total += np.abs(c.at(j, states)) * p * s ** (p - 1.0)
        return total

    def mu_bound(j, states, K):
        s = float(np.max(np.maximum(np.abs(K.lower), np.abs(K.upper))))
        total = np.zeros(len(states))
        for c, p in zip(coefs, powers):
            total += np.abs(c.at(j, states)) * s ** p
        return math.sqrt(k) * total

    return Generator(
        k=k,
        domain=domain,
        evaluate=evaluate,
        mu_bound=mu_bound,
        lipschitz=lipschitz,
        family_tag="power",
        fields=tuple(coefs),
        params={"powers": tuple(powers)},
    )


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Quadrature table for a general branching kernel n(t, x, du) = sum_i weight_i(t, x) delta_{atom_i}."""

    atoms: np.ndarray
    weights: NodeField

    @classmethod
    def build(cls, atoms: Sequence[float], weights) -> "KernelTable":
        atoms = np.atleast_1d(np.asarray(atoms, dtype=float))
        if atoms.ndim != 1 or np.any(atoms <= 0) or not np.all(np.isfinite(atoms)):
            raise InvalidArgumentError("kernel atoms must be positive and finite")
        return cls(atoms, NodeField(weights, (len(atoms),), name="kernel_weights"))


@dataclass(frozen=True, eq=False)
class BranchingMechanism:
    """b w + c w^2 + sum_i d_i w^{alpha_i} + integral (e^{-uw} - 1 + uw) n(du)."""

    b: object = 0.0
    c: object = 0.0
    stable_terms: Tuple[Tuple[object, float], ...] = ()
    kernel: Optional[KernelTable] = None


def _kernel_term(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """e^{-uw} - 1 + uw, with a series for small uw."""
    x = np.multiply.outer(w, u)
    small = x < 1e-3
    series = x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    return np.where(small, series, np.expm1(-x) + x)


def make_branching(m: BranchingMechanism) -> Generator:
    """Superprocess branching mechanism on D = [0, inf)."""
    b = scalar_field(m.b, name="b")
    c = scalar_field(m.c, name="c")
    stable: List[Tuple[NodeField, float]] = []
    for i, (d, alpha) in enumerate(m.stable_terms):
        alpha = float(alpha)
        if not (1.0 < alpha < 2.0):
            raise InvalidArgumentError(f"stable index {alpha} must lie strictly inside (1, 2)")
        stable.append((scalar_field(d, name=f"d_{i}"), alpha))
    kernel = m.kernel

    def evaluate(j, states, w):
        w1 = w[:, 0]
        out = b.at(j, states) * w1 + c.at(j, states) * w1 * w1
        for d, alpha in stable:
            out = out + d.at(j, states) * np.power(w1, alpha)
        if kernel is not None:
            out = out + np.sum(kernel.weights.at(j, states) * _kernel_term(w1, kernel.atoms), axis=1)
        return out[:, None]

    def lipschitz(j, states, K):
        s = float(max(K.upper[0], 0.0))
        total = np.abs(b.at(j, states)) + 2.0 * np.abs(c.at(j, states)) * s
        for d, alpha in stable:
            total = total + np.abs(d.at(j, states)) * alpha * s ** (alpha - 1.0)
        if kernel is not None:
            slope = kernel.atoms * -np.expm1(-kernel.atoms * s)
            total = total + np.abs(kernel.weights.at(j, states)) @ slope
        return total

    def mu_bound(j, states, K):
        s = float(max(K.upper[0], 0.0))
        total = np.abs(b.at(j, states)) * s + np.abs(c.at(j, states)) * s * s
        for d, alpha in stable:
            total = total + np.abs(d.at(j, states)) * s ** alpha
        if kernel is not None:
            total = total + np.abs(kernel.weights.at(j, states)) @ _kernel_term(np.array(s), kernel.atoms)
        return total

    fields = [b, c] + [d for d, _ in stable]
    if kernel is not None:
        fields.append(kernel.weights)

    return Generator(
        k=1,
        domain=Domain.nonnegative(1),
        evaluate=evaluate,
        mu_bound=mu_bound,
        lipschitz=lipschitz,
        family_tag="branching",
        fields=tuple(fields),
        params={"alphas": tuple(a for _, a in stable)},
    )


# =========================
# LIPSCHITZ CONSTANTS
# =========================


@dataclass(frozen=True)
class LipschitzBound:
    value: float
    is_estimate: bool


def _lattice_quotient(gen: Generator, j: int, states: np.ndarray, points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    best = 0.0
    dw = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    np.fill_diagonal(dw, np.inf)
    for x in states:
        vals = np.asarray(gen.evaluate(j, np.full(len(points), x), points), dtype=float).reshape(len(points), gen.k)
        df = np.linalg.norm(vals[:, None, :] - vals[None, :, :], axis=-1)
        best = max(best, float(np.nanmax(df / dw)))
    return best


def _check_box(gen: Generator, K: Box) -> None:
    if K.k != gen.k:
        raise InvalidArgumentError(f"box has dimension {K.k}, generator has {gen.k}")
    if not K.is_finite():
        raise InvalidArgumentError("K must be compact")
    if not gen.domain.contains_box(K):
        raise InvalidArgumentError(f"K = {K.lower}..{K.upper} is not inside the domain closure {gen.domain.describe()}")


def lipschitz_profile(gen: Generator, K: Box, j_range: Sequence[int], state_count: int = 1) -> Tuple[np.ndarray, bool]:
    """Per-step constants lambda_j = sup_x lipschitz(j, x, K), and whether they are lattice estimates."""
    _check_box(gen, K)
    states = np.arange(state_count)
    steps = list(j_range)
    if gen.lipschitz is not None:
        return np.array([float(np.max(gen.lipschitz(j, states, K))) for j in steps]), False
    points = K.lattice()
    return np.array([_lattice_quotient(gen, j, states, points) for j in steps]), True


def lipschitz_on(gen: Generator, K: Box, j_range: Sequence[int], state_count: int = 1) -> LipschitzBound:
    """
    Uniform Lipschitz constant of f on K over the given steps and all states.

    Uses the generator's metadata when present. Otherwise returns the largest
    difference quotient over all pairs of a deterministic lattice in K and
    flags the result as an estimate.
    """
    profile, estimated = lipschitz_profile(gen, K, j_range, state_count)
    value = float(profile.max()) if len(profile) else 0.0
    if estimated:
        logger.warning("[Lipschitz] no metadata for %s driver, lattice estimate %.6g", gen.family_tag, value)
    return LipschitzBound(value, estimated)


# =========================
# STABLE KERNEL QUADRATURE
# =========================


@dataclass(frozen=True)
class KernelCheck:
    closed_form: float
    quadrature: float
    abs_error: float


GAUSS_POINTS = 10


def _graded_panels(upper: float, panels: int) -> np.ndarray:
    """Breakpoints upper * (i / n)^3, refined toward 0."""
    return upper * (np.arange(panels + 1) / panels) ** 3


def _composite_gauss(fn: Callable[[np.ndarray], np.ndarray], breaks: np.ndarray) -> float:
    xg, wg = leggauss(GAUSS_POINTS)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid + half * xg[None, :]
    return float(np.sum(half * wg[None, :] * fn(pts)))


def _phi(x: np.ndarray) -> np.ndarray:
    """(e^{-x} - 1 + x) / x^2, with its limit 1/2 at 0."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-2
    safe = np.where(small, 1.0, x)
    series = 0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x * (1.0 / 120.0 - x / 720.0)))
    return np.where(small, series, (np.expm1(-safe) + safe) / (safe * safe))


TAIL_CUTOFF = 40.0


def mechanism_kernel_check(d: float, alpha: float, w: float, quadrature_nodes: int = 32) -> KernelCheck:
    """
    Compare d w^alpha with the quadrature of its stable-kernel integral.

    The integral of (e^{-uw} - 1 + uw) C u^{-1-alpha} over (0, inf), with
    C = d alpha (alpha - 1) / Gamma(2 - alpha), becomes C w^alpha J after
    v = uw, where J integrates h(v) v^{-1-alpha} and h(v) = e^{-v} - 1 + v.
    J is split at v = 1:

    - on (0, 1], v = s^beta with beta = 1 / (2 - alpha) turns the integrand
      into beta phi(s^beta), phi(v) = h(v) / v^2, bounded on [0, 1] and
      integrated on Gauss-Legendre panels graded cubically toward 0;
    - on [1, inf), the polynomial part integrates to 1 / (alpha - 1) - 1 / alpha
      and e^{-v} v^{-1-alpha} is integrated on uniform panels up to
      v = 1 + TAIL_CUTOFF.

    ``quadrature_nodes`` is the panel count of each piece.
    """
    if not (1.0 < alpha < 2.0):
        raise InvalidArgumentError(f"alpha must lie strictly inside (1, 2), got {alpha}")
    if w < 0:
        raise InvalidArgumentError(f"w must be nonnegative, got {w}")
    if d < 0:
        raise InvalidArgumentError(f"d must be nonnegative, got {d}")
    if quadrature_nodes < 1:
        raise InvalidArgumentError("quadrature_nodes must be positive")

    closed = float(d * w ** alpha) if w > 0 else 0.0
    if w == 0 or d == 0:
        return KernelCheck(closed, 0.0, abs(closed))

    beta = 1.0 / (2.0 - alpha)

    def near(s):
        return beta * _phi(np.power(s, beta))

    def tail(y):
        # e^{-v} v^{-1-alpha} at v = 1 + y
        return np.exp(-1.0 - y) * np.power(1.0 + y, -1.0 - alpha)

    near_part = _composite_gauss(near, _graded_panels(1.0, quadrature_nodes))
    tail_part = _composite_gauss(tail, np.linspace(0.0, TAIL_CUTOFF, quadrature_nodes + 1))
    J = near_part + 1.0 / (alpha - 1.0) - 1.0 / alpha + tail_part
    const = d * alpha * (alpha - 1.0) / gamma_fn(2.0 - alpha)
    quad = float(const * w ** alpha * J)
    return KernelCheck(closed, quad, abs(quad - closed))
