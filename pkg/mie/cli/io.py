"""
CSV and JSON artifacts.

Fields are written as ``node_time,state,u_1,...,u_k`` with floats in their
shortest round-trip decimal form, so reading a file back reproduces the
in-memory values exactly. Nothing time-dependent is written.
"""

import json
from pathlib import Path
from typing import Any, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from mie.errors import ConfigError
from mie.model.timegrid import TimeGrid, from_nodes
from mie.solvers.results import SolutionField

PathLike = Union[str, Path]


def _fmt(x: float) -> str:
    return repr(float(x))


def field_frame(field: SolutionField) -> pd.DataFrame:
    """Rows for the valid nodes, ordered by node then state."""
    N1, S, k = field.values.shape
    nodes = np.arange(field.start_index, N1)
    j_idx = np.repeat(nodes, S)
    x_idx = np.tile(np.arange(S), len(nodes))
    data = {
        "node_time": [_fmt(t) for t in field.grid.nodes[j_idx]],
        "state": x_idx,
    }
    for m in range(k):
        data[f"u_{m + 1}"] = [_fmt(v) for v in field.values[j_idx, x_idx, m]]
    return pd.DataFrame(data)


def write_field(path: PathLike, field: SolutionField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    field_frame(field).to_csv(path, index=False, lineterminator="\n")
    return path


def read_field(path: PathLike, grid: Optional[TimeGrid] = None) -> SolutionField:
    """
    Read a field CSV.

    Args:
        path: File written by write_field.
        grid: Grid the field lives on. Required for partial fields; without it
            the grid is rebuilt from the node times with Lebesgue weights.

    Returns:
        The field, with NaN before its first written node.
    """
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"cannot read field {path}: {e}") from e
    columns = [c for c in df.columns if c.startswith("u_")]
    if "node_time" not in df.columns or "state" not in df.columns or not columns:
        raise ConfigError(f"{path}: expected columns node_time,state,u_1,...")

    times = np.unique(df["node_time"].to_numpy(dtype=float))
    S = int(df["state"].max()) + 1
    k = len(columns)
    if grid is None:
        grid = from_nodes(times)
    positions = np.searchsorted(grid.nodes, times)
    if np.any(positions >= len(grid.nodes)) or np.any(grid.nodes[np.minimum(positions, grid.steps)] != times):
        raise ConfigError(f"{path}: node times do not match the scenario grid")
    start = int(positions[0])
    if not np.array_equal(positions, np.arange(start, grid.steps + 1)):
        raise ConfigError(f"{path}: field must cover a contiguous tail of the grid")

    values = np.full((grid.steps + 1, S, k), np.nan)
    j = np.searchsorted(grid.nodes, df["node_time"].to_numpy(dtype=float))
    x = df["state"].to_numpy(dtype=int)
    values[j, x] = df[columns].to_numpy(dtype=float)
    if np.any(np.isnan(values[start:])):
        raise ConfigError(f"{path}: missing (node, state) rows")
    return SolutionField(grid, values, start_index=start)


def write_trace(path: PathLike, grid: TimeGrid, trace: List[Optional[float]]) -> Path:
    """Blow-up trace as ``node_time,condB_statistic`` for the nodes the march reached."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [(j, q) for j, q in enumerate(trace) if q is not None]
    df = pd.DataFrame(
        {
            "node_time": [_fmt(grid.nodes[j]) for j, _ in rows],
            "condB_statistic": [_fmt(q) for _, q in rows],
        }
    )
    df.to_csv(path, index=False, lineterminator="\n")
    return path


def write_json(path: PathLike, payload: Union[BaseModel, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return path


def write_estimate(path: PathLike, t: float, mean: np.ndarray, stderr: np.ndarray) -> Path:
    """Per-state estimate at a single node, with ``stderr_m`` columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    S, k = mean.shape
    data = {"node_time": [_fmt(t)] * S, "state": np.arange(S)}
    for m in range(k):
        data[f"u_{m + 1}"] = [_fmt(v) for v in mean[:, m]]
    for m in range(k):
        data[f"stderr_{m + 1}"] = [_fmt(v) for v in stderr[:, m]]
    pd.DataFrame(data).to_csv(path, index=False, lineterminator="\n")
    return path
