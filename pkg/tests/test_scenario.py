from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from mie.cli.orchestrator import Orchestrator
from mie.cli.scenario import (
    Scenario,
    build_chain,
    build_generator,
    build_grid,
    build_terminal,
    load_scenario,
    resolve_relative,
    solver_options,
)
from mie.errors import ConfigError


def _scenario(**sections):
    sections.setdefault("grid", {"T": 1.0, "steps": 4})
    return Scenario.model_validate(sections)


# =========================
# GRID AND CHAIN
# =========================


def test_linear_density_weights():
    sc = _scenario(grid={"T": 1.0, "steps": 2, "density": "linear"})
    np.testing.assert_allclose(build_grid(sc).weights, [0.0, 0.25])


def test_explicit_nodes():
    sc = _scenario(grid={"nodes": [0.0, 0.3, 1.0]})
    grid = build_grid(sc)
    assert grid.steps == 2
    np.testing.assert_allclose(grid.weights, [0.3, 0.7])


def test_grid_needs_a_shape():
    with pytest.raises(ValidationError):
        _scenario(grid={"T": 1.0})


def test_chain_kinds():
    sc = _scenario(chain={"states": 2, "kind": "homogeneous", "matrix": [[0.9, 0.1], [0.3, 0.7]]})
    chain = build_chain(sc, build_grid(sc))
    assert chain.transitions.shape == (4, 2, 2)
    np.testing.assert_allclose(chain.transitions[3], [[0.9, 0.1], [0.3, 0.7]])

    sc = _scenario(chain={"states": 3, "kind": "uniform"})
    np.testing.assert_allclose(build_chain(sc, build_grid(sc)).transitions, 1.0 / 3.0)


@pytest.mark.parametrize(
    "chain",
    [
        {"states": 2, "kind": "homogeneous"},
        {"states": 3, "kind": "homogeneous", "matrix": [[0.9, 0.1], [0.3, 0.7]]},
        {"states": 2, "kind": "explicit"},
    ],
)
def test_chain_errors_are_config_errors(chain):
    sc = _scenario(chain=chain)
    with pytest.raises(ConfigError):
        build_chain(sc, build_grid(sc))


def test_explicit_transitions_must_match_the_grid():
    with pytest.raises(ValidationError):
        _scenario(chain={"states": 1, "kind": "explicit", "transitions": [[[1.0]]] * 3})


@pytest.mark.parametrize(
    "transitions, kind",
    [
        ("identity", "identity"),
        ("uniform", "uniform"),
        ([[0.5, 0.5], [0.0, 1.0]], "homogeneous"),
        ([[[0.5, 0.5], [0.0, 1.0]]] * 4, "explicit"),
    ],
)
def test_chain_transitions_shorthand(transitions, kind):
    sc = _scenario(chain={"states": 2, "transitions": transitions})
    assert sc.chain.kind == kind
    chain = build_chain(sc, build_grid(sc))
    assert chain.transitions.shape == (4, 2, 2)
    if kind in ("homogeneous", "explicit"):
        np.testing.assert_allclose(chain.transitions[2], [[0.5, 0.5], [0.0, 1.0]])


def test_chain_transitions_shorthand_rejects_unknown_names():
    with pytest.raises(ValidationError):
        _scenario(chain={"states": 2, "transitions": "cyclic"})


# =========================
# GENERATORS
# =========================


def test_branching_generator():
    sc = _scenario(
        generator={
            "family": "branching",
            "b": 0.5,
            "c": 1.0,
            "stable": [{"d": 1.0, "alpha": 1.5}],
            "kernel": {"atoms": [1.0, 2.0], "weights": [0.1, 0.2]},
        }
    )
    gen = build_generator(sc)
    value = gen.evaluate(0, np.array([0]), np.array([[1.0]]))[0, 0]
    expected = 0.5 + 1.0 + 1.0 + 0.1 * np.exp(-1.0) + 0.2 * (np.exp(-2.0) + 1.0)
    assert value == pytest.approx(expected, rel=1e-12)


def test_power_generator_with_domain():
    sc = _scenario(
        generator={
            "family": "power",
            "terms": [{"coef": 1.0, "power": 1}, {"coef": -1.0, "power": 2}],
            "domain": {"lower": [0.0], "upper": [1.0], "lower_closed": True, "upper_closed": True},
        }
    )
    gen = build_generator(sc)
    assert gen.evaluate(0, np.array([0]), np.array([[0.5]]))[0, 0] == pytest.approx(0.25)
    assert bool(gen.domain.contains(np.array([[1.0]]))[0])


@pytest.mark.parametrize(
    "generator",
    [
        {"family": "branching", "k": 2},
        {"family": "affine", "a": 1.0, "domain": {"lower": [0.0], "upper": [1.0]}},
        {"family": "branching", "stable": [{"d": 1.0, "alpha": 2.5}]},
    ],
)
def test_generator_errors_are_config_errors(generator):
    sc = _scenario(generator=generator)
    with pytest.raises(ConfigError):
        build_generator(sc)


def test_domain_dimension_must_match_k():
    with pytest.raises(ValidationError):
        _scenario(generator={"family": "zero", "k": 2, "domain": {"lower": [0.0], "upper": [1.0]}})


# =========================
# TERMINAL DATA AND OPTIONS
# =========================


def test_terminal_functions():
    sc = _scenario(terminal={"function": "linear", "slope": 2.0, "intercept": 1.0})
    np.testing.assert_array_equal(build_terminal(sc, 3, 1), [[1.0], [3.0], [5.0]])

    sc = _scenario(terminal={"function": "indicator", "state": 1})
    np.testing.assert_array_equal(build_terminal(sc, 3, 2), [[0.0, 0.0], [1.0, 1.0], [0.0, 0.0]])

    sc = _scenario(terminal={"function": "constant", "value": 0.7})
    np.testing.assert_array_equal(build_terminal(sc, 2, 1), [[0.7], [0.7]])


def test_terminal_errors():
    with pytest.raises(ValidationError):
        _scenario(terminal={"values": [1.0], "function": "constant"})
    with pytest.raises(ConfigError):
        build_terminal(_scenario(terminal={"function": "indicator", "state": 5}), 3, 1)
    with pytest.raises(ConfigError):
        build_terminal(_scenario(), 3, 1)


def test_flags_override_solver_section():
    sc = _scenario(solver={"tol": 1e-6, "max_iter": 20, "threshold": 0.05, "damping": 0.5})
    opts = solver_options(sc)
    assert (opts.tol, opts.max_iter, opts.blowup_threshold, opts.damping) == (1e-6, 20, 0.05, 0.5)

    opts = solver_options(sc, tol=1e-9, threshold=0.2)
    assert (opts.tol, opts.max_iter, opts.blowup_threshold) == (1e-9, 20, 0.2)

    with pytest.raises(ConfigError):
        solver_options(_scenario(solver={"tol": -1.0}))


def test_load_scenario_wraps_errors(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[chain]\nstates = 0\n")
    with pytest.raises(ConfigError):
        load_scenario(path)


def test_resolve_relative(tmp_path):
    base = tmp_path / "dir" / "scenario.toml"
    assert resolve_relative(base, "out/f.csv") == tmp_path / "dir" / "out" / "f.csv"
    assert resolve_relative(base, str(tmp_path / "abs.csv")) == tmp_path / "abs.csv"
    assert resolve_relative(base, None) is None


# =========================
# ORCHESTRATOR
# =========================


def _fail():
    raise RuntimeError("boom")


def test_orchestrator_collects_results_and_failures():
    orchestrator = Orchestrator(max_workers=2)
    orchestrator.register_job("square", pow, 3, 2)
    orchestrator.register_job("fail", _fail)
    orchestrator.register_job("sum", sum, [1, 2, 3])
    results = orchestrator.run()

    assert list(results) == ["square", "fail", "sum"]
    assert results["square"] == 9
    assert isinstance(results["fail"], RuntimeError)
    assert results["sum"] == 6


def test_orchestrator_with_one_worker():
    orchestrator = Orchestrator(max_workers=1)
    for i in range(5):
        orchestrator.register_job(f"job{i}", Path, f"p{i}")
    results = orchestrator.run()
    assert [str(p) for p in results.values()] == [f"p{i}" for i in range(5)]
