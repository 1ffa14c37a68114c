from collections import OrderedDict
import logging
import threading
from typing import Protocol, Sequence

import numpy as np

from perturbmap_toolkit.config import ToolkitConfig
from perturbmap_toolkit.errors import ModelFormatError
from perturbmap_toolkit.models.graphical_model import check_enumerable, enumerate_configurations, potential_vector
from perturbmap_toolkit.models.types import GraphicalModel, MapResult, SolverName, UnaryOffsets
from perturbmap_toolkit.utils.seeding import derive_rng

logger = logging.getLogger(__name__)

# rows x configurations evaluated at once by the batched exhaustive solver
_BATCH_ELEMENTS = 2**22


class MapSolver(Protocol):
    name: str
    exact: bool

    def solve(self, model: GraphicalModel, offsets: UnaryOffsets) -> MapResult: ...

    def solve_batch(
        self, model: GraphicalModel, tables: Sequence[np.ndarray], scale: float = 1.0, seed: int = 0
    ) -> tuple[np.ndarray, np.ndarray]: ...


def _check_offsets(model: GraphicalModel, tables: Sequence[np.ndarray], batched: bool) -> None:
    if len(tables) != model.variable_count:
        raise ModelFormatError(f"{len(tables)} offset tables for {model.variable_count} variables")
    for i, (table, k) in enumerate(zip(tables, model.cardinalities)):
        width = table.shape[-1] if batched else table.size
        if width != k:
            raise ModelFormatError(f"offset table {i} has {width} entries, variable has {k} states")


class ExhaustiveSolver:
    name = "exhaustive"
    exact = True

    def __init__(self, cap: int | None = None, cache_size: int = 8) -> None:
        self.cap = ToolkitConfig.enumeration_cap if cap is None else cap
        self.cache_size = cache_size
        self._cache: OrderedDict[int, tuple[GraphicalModel, np.ndarray, np.ndarray]] = OrderedDict()
        self._lock = threading.Lock()

    def solve(self, model: GraphicalModel, offsets: UnaryOffsets) -> MapResult:
        _check_offsets(model, offsets.tables, batched=False)
        batch = [table[None, :] for table in offsets.tables]
        configs, values = self.solve_batch(model, batch, offsets.scale)
        return MapResult(config=tuple(int(v) for v in configs[0]), value=float(values[0]), exact=True)

    def solve_batch(
        self, model: GraphicalModel, tables: Sequence[np.ndarray], scale: float = 1.0, seed: int = 0
    ) -> tuple[np.ndarray, np.ndarray]:
        tables = [np.atleast_2d(np.asarray(t, dtype=float)) for t in tables]
        _check_offsets(model, tables, batched=True)
        configs, phi = self.enumerated(model)
        rows = tables[0].shape[0]
        step = max(1, _BATCH_ELEMENTS // max(phi.size, 1))
        best = np.empty(rows, dtype=np.int64)
        values = np.empty(rows, dtype=float)
        for start in range(0, rows, step):
            stop = min(start + step, rows)
            noise = np.zeros((stop - start, phi.size))
            for i, table in enumerate(tables):
                noise += table[start:stop][:, configs[:, i]]
            perturbed = phi[None, :] + scale * noise
            # argmax returns the first maximiser, i.e. the lexicographically smallest
            best[start:stop] = np.argmax(perturbed, axis=1)
            values[start:stop] = perturbed[np.arange(stop - start), best[start:stop]]
        return configs[best], values

    def enumerated(self, model: GraphicalModel) -> tuple[np.ndarray, np.ndarray]:
        key = id(model)
        with self._lock:
            cached = self._cache.get(key)
            if cached is not None and cached[0] is model:
                self._cache.move_to_end(key)
                return cached[1], cached[2]
            check_enumerable(model, self.cap)
            configs = enumerate_configurations(model.cardinalities)
            phi = potential_vector(model, configs)
            self._cache[key] = (model, configs, phi)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
            return configs, phi


class ICMSolver:
    """Iterated conditional modes from random starts; sweeps in ascending variable order."""

    name = "icm"
    exact = False

    def __init__(self, restarts: int = ToolkitConfig.icm_restarts, seed: int = 0) -> None:
        if restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {restarts}")
        self.restarts = restarts
        self.seed = seed

    def solve(self, model: GraphicalModel, offsets: UnaryOffsets, seed: int | None = None) -> MapResult:
        _check_offsets(model, offsets.tables, batched=False)
        rng = derive_rng(self.seed if seed is None else seed, "icm")
        config, value = self._solve_one(model, offsets.tables, offsets.scale, rng)
        return MapResult(config=config, value=value, exact=False)

    def solve_batch(
        self, model: GraphicalModel, tables: Sequence[np.ndarray], scale: float = 1.0, seed: int = 0
    ) -> tuple[np.ndarray, np.ndarray]:
        tables = [np.atleast_2d(np.asarray(t, dtype=float)) for t in tables]
        _check_offsets(model, tables, batched=True)
        rows = tables[0].shape[0]
        configs = np.empty((rows, model.variable_count), dtype=np.int64)
        values = np.empty(rows, dtype=float)
        for r in range(rows):
            rng = derive_rng(seed, "icm", r)
            config, value = self._solve_one(model, [t[r] for t in tables], scale, rng)
            configs[r] = config
            values[r] = value
        logger.debug("icm: %d perturbed problems, %d restarts each", rows, self.restarts)
        return configs, values

    def _solve_one(
        self, model: GraphicalModel, tables: Sequence[np.ndarray], scale: float, rng: np.random.Generator
    ) -> tuple[tuple[int, ...], float]:
        incident = _incident_factors(model)
        best_config: tuple[int, ...] | None = None
        best_value = -np.inf
        for _ in range(self.restarts):
            x = np.array([rng.integers(k) for k in model.cardinalities], dtype=np.int64)
            changed = True
            while changed:
                changed = False
                for i, k in enumerate(model.cardinalities):
                    candidates = np.repeat(x[None, :], k, axis=0)
                    candidates[:, i] = np.arange(k)
                    local = scale * tables[i].copy()
                    for factor in incident[i]:
                        dims = tuple(model.cardinalities[v] for v in factor.scope)
                        idx = np.ravel_multi_index(tuple(candidates[:, v] for v in factor.scope), dims)
                        local = local + factor.log_table[idx]
                    choice = int(np.argmax(local))
                    if local[choice] > local[x[i]]:
                        x[i] = choice
                        changed = True
            value = float(potential_vector(model, x[None, :])[0]) + scale * float(
                sum(table[v] for table, v in zip(tables, x))
            )
            if best_config is None or value > best_value:
                best_config, best_value = tuple(int(v) for v in x), value
        return best_config, best_value


def _incident_factors(model: GraphicalModel) -> list[list]:
    incident: list[list] = [[] for _ in range(model.variable_count)]
    for factor in model.factors:
        for v in factor.scope:
            incident[v].append(factor)
    return incident


def solve_exhaustive(model: GraphicalModel, offsets: UnaryOffsets, cap: int | None = None) -> MapResult:
    return ExhaustiveSolver(cap).solve(model, offsets)


def solve_icm(model: GraphicalModel, offsets: UnaryOffsets, restarts: int, seed: int) -> MapResult:
    return ICMSolver(restarts, seed).solve(model, offsets)


def build_solver(
    name: SolverName | str = "exhaustive",
    restarts: int = ToolkitConfig.icm_restarts,
    seed: int = 0,
    cap: int | None = None,
) -> MapSolver:
    normalized = (name or "exhaustive").strip().lower()
    if normalized == "exhaustive":
        return ExhaustiveSolver(cap)
    if normalized == "icm":
        return ICMSolver(restarts, seed)
    raise ValueError(f"unknown solver {name!r}; expected 'exhaustive' or 'icm'")
