"""Sum-unary, partial, average-unary and subset perturbation draws.

Every perturbed cell gets an independent Gumbel(-c) draw: one per (variable, state) for
unary perturbations, one per joint setting of x_S for a subset. Batched draws run in
fixed-size blocks, block b reading from derive_rng(seed, kind, *stream, b).
"""
from typing import Sequence

import numpy as np

from perturbmap_toolkit.config import ToolkitConfig
from perturbmap_toolkit.errors import ModelFormatError
from perturbmap_toolkit.inference.map_solvers import MapSolver
from perturbmap_toolkit.models.graphical_model import clamp, merge_variables, potential
from perturbmap_toolkit.models.types import (
    GraphicalModel,
    PerturbationDraws,
    PerturbationKind,
    PerturbationSample,
)
from perturbmap_toolkit.tricks.estimators import sample_gumbel
from perturbmap_toolkit.utils.seeding import block_sizes, derive_rng, derive_seed, ordered_map


def gumbel_tables(cardinalities: Sequence[int], rng: np.random.Generator, rows: int = 1) -> list[np.ndarray]:
    return [sample_gumbel(rng, (rows, int(k))) for k in cardinalities]


def noise_at(tables: Sequence[np.ndarray], configs: np.ndarray) -> np.ndarray:
    rows = np.arange(configs.shape[0])
    return np.sum([table[rows, configs[:, i]] for i, table in enumerate(tables)], axis=0)


def _solver_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def sample_U(model: GraphicalModel, solver: MapSolver, rng: np.random.Generator) -> PerturbationSample:
    tables = gumbel_tables(model.cardinalities, rng)
    configs, values = solver.solve_batch(model, tables, 1.0, seed=_solver_seed(rng))
    return PerturbationSample(
        value=float(values[0]),
        kind="sum_unary",
        solver_exact=solver.exact,
        config=tuple(int(v) for v in configs[0]),
        noise=float(noise_at(tables, configs)[0]),
    )


def sample_partial_U(
    model: GraphicalModel, j: int, prefix: Sequence[int], solver: MapSolver, rng: np.random.Generator
) -> PerturbationSample:
    """U_j: variables 1..j-1 clamped to `prefix`, variables j..n perturbed (j is 1-based)."""
    prefix = tuple(int(v) for v in prefix)
    if len(prefix) != j - 1:
        raise ModelFormatError(f"U_{j} needs a prefix of length {j - 1}, got {len(prefix)}")
    if len(prefix) == model.variable_count:
        # nothing left to perturb
        return PerturbationSample(potential(model, prefix), "partial", True, prefix, 0.0, (j, prefix))
    inner = sample_U(clamp(model, prefix), solver, rng)
    return PerturbationSample(inner.value, "partial", inner.solver_exact, prefix + inner.config, inner.noise, (j, prefix))


def sample_L(model: GraphicalModel, solver: MapSolver, rng: np.random.Generator) -> PerturbationSample:
    tables = gumbel_tables(model.cardinalities, rng)
    configs, values = solver.solve_batch(model, tables, 1.0 / model.variable_count, seed=_solver_seed(rng))
    return PerturbationSample(
        value=float(values[0]),
        kind="avg_unary",
        solver_exact=solver.exact,
        config=tuple(int(v) for v in configs[0]),
        noise=float(noise_at(tables, configs)[0]),
    )


def sample_subset(
    model: GraphicalModel,
    subset: Sequence[int],
    solver: MapSolver,
    rng: np.random.Generator,
    cap: int | None = None,
) -> PerturbationSample:
    members = sorted({int(v) for v in subset})
    merged = merge_variables(model, members, cap)
    tables = _subset_tables(merged, rng, 1)
    configs, values = solver.solve_batch(merged, tables, 1.0, seed=_solver_seed(rng))
    original = unmerge_configs(model, members, configs)
    return PerturbationSample(
        value=float(values[0]),
        kind="subset",
        solver_exact=solver.exact,
        config=tuple(int(v) for v in original[0]),
        noise=float(tables[0][0, configs[0, 0]]),
        detail=tuple(members),
    )


def _subset_tables(merged: GraphicalModel, rng: np.random.Generator, rows: int) -> list[np.ndarray]:
    # only the joint variable is perturbed
    return [sample_gumbel(rng, (rows, merged.cardinalities[0]))] + [
        np.zeros((rows, k)) for k in merged.cardinalities[1:]
    ]


def unmerge_configs(model: GraphicalModel, members: Sequence[int], merged_configs: np.ndarray) -> np.ndarray:
    merged_configs = np.atleast_2d(merged_configs)
    members = list(members)
    rest = [v for v in range(model.variable_count) if v not in members]
    joint = np.unravel_index(merged_configs[:, 0], tuple(model.cardinalities[v] for v in members))
    out = np.empty((merged_configs.shape[0], model.variable_count), dtype=np.int64)
    for i, v in enumerate(members):
        out[:, v] = joint[i]
    for i, v in enumerate(rest):
        out[:, v] = merged_configs[:, i + 1]
    return out


def draw_perturbations(
    model: GraphicalModel,
    kind: PerturbationKind,
    M: int,
    seed: int,
    solver: MapSolver,
    *,
    subset: Sequence[int] | None = None,
    stream: Sequence[int | str] = (),
    workers: int = 1,
    block_size: int = ToolkitConfig.draw_block_size,
    cap: int | None = None,
) -> PerturbationDraws:
    """M draws of U ("sum_unary"), L ("avg_unary") or the subset MAP value ("subset")."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    members: list[int] = []
    if kind == "subset":
        if not subset:
            raise ModelFormatError("subset perturbation needs a non-empty subset")
        members = sorted({int(v) for v in subset})
        target = merge_variables(model, members, cap)
        keys = (kind, len(members), *members, *stream)
    elif kind in ("sum_unary", "avg_unary"):
        target = model
        keys = (kind, *stream)
    else:
        raise ValueError(f"draw_perturbations does not handle kind {kind!r}; use draw_partial")
    scale = 1.0 / model.variable_count if kind == "avg_unary" else 1.0
    sizes = block_sizes(M, block_size)

    def block(b: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rng = derive_rng(seed, *keys, b)
        if kind == "subset":
            tables = _subset_tables(target, rng, sizes[b])
        else:
            tables = gumbel_tables(target.cardinalities, rng, sizes[b])
        configs, values = solver.solve_batch(target, tables, scale, seed=derive_seed(seed, *keys, "solver", b))
        return configs, values, noise_at(tables, configs)

    parts = ordered_map(block, len(sizes), workers)
    configs = np.concatenate([p[0] for p in parts], axis=0)
    if kind == "subset":
        configs = unmerge_configs(model, members, configs)
    return PerturbationDraws(
        kind=kind,
        values=np.concatenate([p[1] for p in parts]),
        configs=configs,
        noise=np.concatenate([p[2] for p in parts]),
        solver=solver.name,
        solver_exact=solver.exact,
    )


def draw_partial(
    model: GraphicalModel,
    prefix: Sequence[int],
    M: int,
    seed: int,
    solver: MapSolver,
    *,
    stream: Sequence[int | str] = (),
    workers: int = 1,
    block_size: int = ToolkitConfig.draw_block_size,
) -> PerturbationDraws:
    prefix = tuple(int(v) for v in prefix)
    if len(prefix) == model.variable_count:
        value = potential(model, prefix)
        return PerturbationDraws("partial", np.full(M, value), np.zeros((M, 0), dtype=np.int64), np.zeros(M), solver.name, True)
    clamped = clamp(model, prefix)
    draws = draw_perturbations(
        clamped,
        "sum_unary",
        M,
        seed,
        solver,
        stream=("partial", len(prefix), *prefix, *stream),
        workers=workers,
        block_size=block_size,
    )
    return PerturbationDraws("partial", draws.values, draws.configs, draws.noise, draws.solver, draws.solver_exact)
