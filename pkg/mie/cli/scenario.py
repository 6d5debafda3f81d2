"""
Scenario files: TOML documents validated with pydantic and turned into
model objects (grid, chain, generator, terminal data, solver options).
"""

import functools
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from mie.errors import ConfigError, MIEError
from mie.model.fields import Domain, terminal_array
from mie.model.generator import (
    BranchingMechanism,
    Generator,
    KernelTable,
    make_affine,
    make_branching,
    make_power,
    make_zero,
)
from mie.model.markov import MarkovChainModel
from mie.model.timegrid import TimeGrid, build_uniform, density_from_config, from_nodes
from mie.solvers.results import SolverOptions

# Coefficients are a constant, a per-state list or a per-(node, state) nested list.
Coefficient = Union[float, List[Any]]


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =========================
# SECTIONS
# =========================


class GridSection(Section):
    T: Optional[float] = None
    steps: Optional[int] = None
    density: Union[None, str, Dict[str, List[float]]] = None
    nodes: Optional[List[float]] = None
    weights: Optional[List[float]] = None

    @model_validator(mode="after")
    def _uniform_or_explicit(self):
        if self.nodes is None and (self.T is None or self.steps is None):
            raise ValueError("grid needs either T and steps or explicit nodes")
        if self.nodes is not None and self.T is not None:
            raise ValueError("grid takes either T and steps or explicit nodes, not both")
        return self


class ChainSection(Section):
    states: int = Field(1, ge=1)
    kind: Literal["identity", "uniform", "homogeneous", "explicit"] = "identity"
    matrix: Optional[List[List[float]]] = None
    transitions: Optional[List[List[List[float]]]] = None

    @model_validator(mode="before")
    @classmethod
    def _transitions_shorthand(cls, data):
        # transitions = "identity" | "uniform" | one matrix | per-step matrices, without kind
        if not isinstance(data, dict) or data.get("transitions") is None or "kind" in data:
            return data
        data = dict(data)
        value = data["transitions"]
        if isinstance(value, str):
            data["kind"] = data.pop("transitions")
        elif np.ndim(value) == 2:
            data["kind"], data["matrix"] = "homogeneous", data.pop("transitions")
        else:
            data["kind"] = "explicit"
        return data


class DomainSection(Section):
    lower: List[float]
    upper: List[float]
    lower_closed: bool = False
    upper_closed: bool = False


class PowerTerm(Section):
    coef: Coefficient
    power: float


class StableTerm(Section):
    d: Coefficient
    alpha: float


class KernelSection(Section):
    atoms: List[float]
    weights: List[Any]


class GeneratorSection(Section):
    family: Literal["zero", "affine", "power", "branching"] = "zero"
    k: int = Field(1, ge=1)
    domain: Optional[DomainSection] = None
    # affine
    a: Coefficient = 0.0
    b: Coefficient = 0.0
    # power
    terms: List[PowerTerm] = Field(default_factory=list)
    # branching (b above is the linear coefficient)
    c: Coefficient = 0.0
    stable: List[StableTerm] = Field(default_factory=list)
    kernel: Optional[KernelSection] = None


class TerminalSection(Section):
    values: Optional[List[Any]] = None
    function: Optional[Literal["constant", "linear", "indicator"]] = None
    value: float = 0.0
    slope: float = 1.0
    intercept: float = 0.0
    state: int = 0

    @model_validator(mode="after")
    def _one_source(self):
        if (self.values is None) == (self.function is None):
            raise ValueError("terminal needs exactly one of values or function")
        return self


class SolverSection(Section):
    method: Literal["picard", "epsilon", "global_1d"] = "picard"
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    damping: float = 1.0
    evaluation: Literal["propagated", "slice"] = "propagated"
    clip_depth: Optional[int] = None
    threshold: Optional[float] = None


class OutputSection(Section):
    dir: str = "out"
    prefix: str = "run"


class FKSection(Section):
    mode: Literal["product", "exp", "scalar", "series", "mc"] = "product"
    a: Coefficient = 0.0
    b: Coefficient = 0.0
    order: int = Field(8, ge=0)
    paths: int = Field(1000, ge=1)
    seed: int = 0
    j_from: int = Field(0, ge=0)


class VerifySection(Section):
    check: Literal["comparison", "growth", "one_sided_growth", "boundary_lower", "stability", "gronwall"]
    field: Optional[str] = None
    scenario_tilde: Optional[str] = None
    field_tilde: Optional[str] = None
    bound_a: Coefficient = 0.0
    bound_b: Coefficient = 0.0
    endpoint: Literal["lower", "upper"] = "lower"


class MechanismSection(Section):
    d: List[float] = Field(default_factory=lambda: [1.0, 2.0])
    alpha: List[float] = Field(default_factory=lambda: [1.2, 1.5, 1.8])
    w: List[float] = Field(default_factory=lambda: [0.5, 1.0, 4.0])
    quadrature_nodes: int = Field(32, ge=1)


class CoshSinhSection(Section):
    c: Coefficient = 1.0
    delta: float = 1.0
    eps: float = 1.0
    g1: Coefficient = 1.0
    g2: Coefficient = 0.0


class Scenario(Section):
    grid: Optional[GridSection] = None
    chain: ChainSection = Field(default_factory=ChainSection)
    generator: GeneratorSection = Field(default_factory=GeneratorSection)
    terminal: Optional[TerminalSection] = None
    solver: SolverSection = Field(default_factory=SolverSection)
    output: OutputSection = Field(default_factory=OutputSection)
    fk: Optional[FKSection] = None
    verify: Optional[VerifySection] = None
    mechanism: Optional[MechanismSection] = None
    coshsinh: Optional[CoshSinhSection] = None

    @model_validator(mode="after")
    def _cross_references(self):
        if self.chain.transitions is not None and self.grid is not None:
            steps = self.grid.steps if self.grid.nodes is None else len(self.grid.nodes) - 1
            if len(self.chain.transitions) != steps:
                raise ValueError(f"chain has {len(self.chain.transitions)} steps, grid has {steps}")
        if self.generator.domain is not None:
            dom = self.generator.domain
            if len(dom.lower) != self.generator.k or len(dom.upper) != self.generator.k:
                raise ValueError("domain dimension must equal generator k")
        return self


# =========================
# LOADING
# =========================


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a scenario file. Every failure surfaces as ConfigError."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read scenario {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    try:
        return Scenario.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e


def _require(section, name: str):
    if section is None:
        raise ConfigError(f"scenario has no [{name}] section")
    return section


def _wrap(build):
    """Model-layer argument errors inside a scenario are configuration errors."""

    @functools.wraps(build)
    def inner(*args, **kwargs):
        try:
            return build(*args, **kwargs)
        except ConfigError:
            raise
        except (MIEError, ValueError) as e:
            raise ConfigError(str(e)) from e

    return inner


@_wrap
def build_grid(sc: Scenario) -> TimeGrid:
    section = _require(sc.grid, "grid")
    if section.nodes is not None:
        return from_nodes(section.nodes, section.weights)
    return build_uniform(section.T, section.steps, density_from_config(section.density))


@_wrap
def build_chain(sc: Scenario, grid: TimeGrid) -> MarkovChainModel:
    section = sc.chain
    N, S = grid.steps, section.states
    if section.kind == "identity":
        chain = MarkovChainModel.identity(N, S)
    elif section.kind == "uniform":
        chain = MarkovChainModel.uniform(N, S)
    elif section.kind == "homogeneous":
        if section.matrix is None:
            raise ConfigError("homogeneous chain needs a matrix")
        chain = MarkovChainModel.homogeneous(section.matrix, N)
    else:
        if section.transitions is None:
            raise ConfigError("explicit chain needs transitions")
        chain = MarkovChainModel(np.asarray(section.transitions, dtype=float))
    if chain.state_count != S:
        raise ConfigError(f"chain has {chain.state_count} states, [chain].states is {S}")
    chain.check_grid(grid)
    return chain


def _domain(section: Optional[DomainSection]) -> Optional[Domain]:
    if section is None:
        return None
    return Domain.box(section.lower, section.upper, section.lower_closed, section.upper_closed)


@_wrap
def build_generator(sc: Scenario) -> Generator:
    section = sc.generator
    k = section.k
    domain = _domain(section.domain)
    if section.family == "zero":
        return make_zero(k, domain)
    if section.family == "affine":
        gen = make_affine(section.a, section.b, k)
        if domain is not None and not domain.is_whole:
            raise ConfigError("the affine family lives on the whole space; drop [generator.domain]")
        return gen
    if section.family == "power":
        return make_power([(t.coef, t.power) for t in section.terms], k, domain)
    if k != 1:
        raise ConfigError("the branching family is one-dimensional")
    kernel = None
    if section.kernel is not None:
        kernel = KernelTable.build(section.kernel.atoms, section.kernel.weights)
    mechanism = BranchingMechanism(
        b=section.b,
        c=section.c,
        stable_terms=tuple((s.d, s.alpha) for s in section.stable),
        kernel=kernel,
    )
    return make_branching(mechanism)


@_wrap
def build_terminal(sc: Scenario, states: int, k: int) -> np.ndarray:
    """Terminal data of shape (S, k); named functions act on the state index."""
    section = _require(sc.terminal, "terminal")
    if section.values is not None:
        return terminal_array(section.values, states, k)
    x = np.arange(states, dtype=float)
    if section.function == "constant":
        column = np.full(states, section.value)
    elif section.function == "linear":
        column = section.intercept + section.slope * x
    else:
        if not 0 <= section.state < states:
            raise ConfigError(f"indicator state {section.state} is out of range")
        column = (x == section.state).astype(float)
    return np.repeat(column[:, None], k, axis=1)


@_wrap
def solver_options(sc: Scenario, tol: Optional[float] = None, max_iter: Optional[int] = None, threshold: Optional[float] = None) -> SolverOptions:
    """Options from [solver] with flag overrides applied on top."""
    section = sc.solver
    kwargs: Dict[str, Any] = {"damping": section.damping, "evaluation": section.evaluation}
    for name, value in (
        ("tol", tol if tol is not None else section.tol),
        ("max_iter", max_iter if max_iter is not None else section.max_iter),
        ("clip_depth", section.clip_depth),
        ("blowup_threshold", threshold if threshold is not None else section.threshold),
    ):
        if value is not None:
            kwargs[name] = value
    return SolverOptions(**kwargs)


def resolve_relative(base: Path, target: Optional[str]) -> Optional[Path]:
    """Paths inside a scenario are relative to the scenario file."""
    if target is None:
        return None
    p = Path(target)
    return p if p.is_absolute() else base.parent / p