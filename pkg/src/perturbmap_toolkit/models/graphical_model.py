from typing import Sequence

import numpy as np

from perturbmap_toolkit.config import ToolkitConfig
from perturbmap_toolkit.errors import EnumerationCapError, ModelFormatError
from perturbmap_toolkit.models.types import Configuration, Factor, GraphicalModel, SpinGlassMode


def check_enumerable(model: GraphicalModel, cap: int | None = None) -> int:
    cap = ToolkitConfig.enumeration_cap if cap is None else cap
    size = model.space_size
    if size > cap:
        raise EnumerationCapError(size, cap)
    return size


def enumerate_configurations(
    cardinalities: Sequence[int], start: int = 0, stop: int | None = None
) -> np.ndarray:
    dims = tuple(int(k) for k in cardinalities)
    stop = int(np.prod(dims)) if stop is None else stop
    flat = np.arange(start, stop, dtype=np.int64)
    return np.stack(np.unravel_index(flat, dims), axis=1).astype(np.int64)


def potential_vector(model: GraphicalModel, configs: np.ndarray) -> np.ndarray:
    configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
    values = np.full(configs.shape[0], model.constant, dtype=float)
    for factor in model.factors:
        dims = tuple(model.cardinalities[v] for v in factor.scope)
        idx = np.ravel_multi_index(tuple(configs[:, v] for v in factor.scope), dims)
        values = values + factor.log_table[idx]
    return values


def validate_configuration(model: GraphicalModel, x: Sequence[int]) -> Configuration:
    config = tuple(int(v) for v in x)
    if len(config) != model.variable_count:
        raise ModelFormatError(f"configuration has {len(config)} entries, model has {model.variable_count} variables")
    for i, (value, k) in enumerate(zip(config, model.cardinalities)):
        if not 0 <= value < k:
            raise ModelFormatError(f"value {value} of variable {i} outside [0, {k})")
    return config


def potential(model: GraphicalModel, x: Sequence[int]) -> float:
    config = validate_configuration(model, x)
    return float(potential_vector(model, np.asarray([config]))[0])


def canonical_log_table(log_table: np.ndarray, rounds: int = 32) -> np.ndarray:
    """Nudge each entry to a fixed point of log(exp(x)) so UAI text reloads bit for bit."""
    table = np.asarray(log_table, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        for _ in range(rounds):
            back = np.log(np.exp(table))
            if np.array_equal(back, table):
                break
            table = back
    return table


def clamp(model: GraphicalModel, prefix: Sequence[int]) -> GraphicalModel:
    """Fix the leading variables to `prefix`; covered factors fold into the model constant."""
    prefix = tuple(int(v) for v in prefix)
    p = len(prefix)
    if p == 0:
        return model
    if p >= model.variable_count:
        raise ModelFormatError("clamping prefix must leave at least one variable free")
    for i, value in enumerate(prefix):
        if not 0 <= value < model.cardinalities[i]:
            raise ModelFormatError(f"prefix value {value} of variable {i} outside [0, {model.cardinalities[i]})")

    constant = model.constant
    factors: list[Factor] = []
    for factor in model.factors:
        dims = tuple(model.cardinalities[v] for v in factor.scope)
        table = factor.log_table.reshape(dims)
        index = tuple(prefix[v] if v < p else slice(None) for v in factor.scope)
        restricted = table[index]
        free_scope = tuple(v - p for v in factor.scope if v >= p)
        if not free_scope:
            constant = constant + float(restricted)
        else:
            factors.append(Factor(free_scope, np.ascontiguousarray(restricted).reshape(-1)))
    if constant != model.constant:
        # written out as a constant unary table over the first free variable
        constant = float(canonical_log_table(np.full(model.cardinalities[p], constant))[0])
    return GraphicalModel(model.cardinalities[p:], tuple(factors), constant)


def merge_variables(model: GraphicalModel, subset: Sequence[int], cap: int | None = None) -> GraphicalModel:
    """Replace the variables in `subset` by one joint variable placed first.

    The joint variable enumerates x_S row-major in ascending variable order; the
    remaining variables follow in their original order.
    """
    cap = ToolkitConfig.enumeration_cap if cap is None else cap
    members = sorted({int(v) for v in subset})
    if not members:
        raise ModelFormatError("subset must be non-empty")
    if members[0] < 0 or members[-1] >= model.variable_count:
        raise ModelFormatError(f"subset {members} has indices outside the model")
    joint_dims = tuple(model.cardinalities[v] for v in members)
    joint_size = int(np.prod(joint_dims, dtype=object))
    if joint_size > cap:
        raise EnumerationCapError(joint_size, cap)

    rest = [v for v in range(model.variable_count) if v not in members]
    new_index = {v: i + 1 for i, v in enumerate(rest)}
    cardinalities = (joint_size,) + tuple(model.cardinalities[v] for v in rest)
    joint_values = enumerate_configurations(joint_dims)

    factors: list[Factor] = []
    for factor in model.factors:
        if not any(v in members for v in factor.scope):
            factors.append(Factor(tuple(new_index[v] for v in factor.scope), factor.log_table))
            continue
        other = [v for v in factor.scope if v not in members]
        other_dims = tuple(model.cardinalities[v] for v in other)
        other_values = enumerate_configurations(other_dims) if other else np.zeros((1, 0), dtype=np.int64)
        columns = []
        for v in factor.scope:
            if v in members:
                col = joint_values[:, members.index(v)][:, None]
                columns.append(np.broadcast_to(col, (joint_size, other_values.shape[0])))
            else:
                col = other_values[:, other.index(v)][None, :]
                columns.append(np.broadcast_to(col, (joint_size, other_values.shape[0])))
        dims = tuple(model.cardinalities[v] for v in factor.scope)
        table = factor.log_table[np.ravel_multi_index(tuple(columns), dims)]
        factors.append(Factor((0,) + tuple(new_index[v] for v in other), table.reshape(-1)))
    return GraphicalModel(cardinalities, tuple(factors), model.constant)


def flatten(model: GraphicalModel, cap: int | None = None) -> GraphicalModel:
    return merge_variables(model, range(model.variable_count), cap)


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            node = r * cols + c
            if c + 1 < cols:
                edges.append((node, node + 1))
            if r + 1 < rows:
                edges.append((node, node + cols))
    return edges


def spin_glass_grid(
    rows: int,
    cols: int,
    coupling: float,
    mode: SpinGlassMode = "mixed",
    seed: int = 0,
) -> GraphicalModel:
    """Binary grid MRF with Ising energy theta_i s_i + theta_ij s_i s_j, spins s = 2x - 1.

    Draw order: all unary parameters (row-major nodes), then all edge parameters in
    `grid_edges` order, from numpy's default generator seeded with `seed`.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"grid needs rows, cols >= 1, got {rows}x{cols}")
    if coupling < 0:
        raise ValueError(f"coupling must be >= 0, got {coupling}")
    if mode not in ("attractive", "mixed"):
        raise ValueError(f"unknown spin-glass mode {mode!r}")

    rng = np.random.default_rng(seed)
    edges = grid_edges(rows, cols)
    unary = rng.uniform(-1.0, 1.0, size=rows * cols)
    low = 0.0 if mode == "attractive" else -coupling
    pairwise = rng.uniform(low, coupling, size=len(edges))

    factors = [Factor((i,), canonical_log_table([-theta, theta])) for i, theta in enumerate(unary)]
    factors += [
        Factor(edge, canonical_log_table([theta, -theta, -theta, theta])) for edge, theta in zip(edges, pairwise)
    ]
    return GraphicalModel((2,) * (rows * cols), tuple(factors))
