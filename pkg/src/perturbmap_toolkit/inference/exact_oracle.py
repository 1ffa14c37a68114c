import logging
from typing import Sequence

import numpy as np
from scipy.special import entr, logsumexp, rel_entr

from perturbmap_toolkit.config import ToolkitConfig
from perturbmap_toolkit.errors import NormalizationError, SupportError, ToolkitError
from perturbmap_toolkit.models.graphical_model import check_enumerable, enumerate_configurations, potential_vector
from perturbmap_toolkit.models.types import ExactSummary, GraphicalModel
from perturbmap_toolkit.utils.seeding import ordered_map
from perturbmap_toolkit.utils.stats import total_variation

logger = logging.getLogger(__name__)

__all__ = ["entropy", "kl_divergence", "potential_table", "summarize", "total_variation"]


def potential_table(
    model: GraphicalModel,
    cap: int | None = None,
    chunk_size: int = ToolkitConfig.oracle_chunk_size,
    workers: int = 1,
) -> np.ndarray:
    size = check_enumerable(model, cap)
    starts = list(range(0, size, chunk_size))

    def chunk(i: int) -> np.ndarray:
        start = starts[i]
        configs = enumerate_configurations(model.cardinalities, start, min(start + chunk_size, size))
        return potential_vector(model, configs)

    return np.concatenate(ordered_map(chunk, len(starts), workers))


def summarize(
    model: GraphicalModel,
    cap: int | None = None,
    chunk_size: int = ToolkitConfig.oracle_chunk_size,
    workers: int = 1,
) -> ExactSummary:
    phi = potential_table(model, cap, chunk_size, workers)
    # fixed chunk boundaries keep the reduction order independent of `workers`
    partial = np.array([logsumexp(phi[start:start + chunk_size]) for start in range(0, phi.size, chunk_size)])
    log_partition = float(logsumexp(partial))
    if not np.isfinite(log_partition):
        raise ToolkitError("every configuration has potential -inf; the partition function is zero")

    gibbs = np.exp(phi - log_partition)
    best = int(np.argmax(phi))
    map_config = tuple(int(v) for v in np.unravel_index(best, model.cardinalities))
    logger.debug("oracle: |X|=%d lnZ=%.6f map=%s", phi.size, log_partition, map_config)
    return ExactSummary(
        log_partition=log_partition,
        gibbs=gibbs,
        map_config=map_config,
        map_value=float(phi[best]),
    )


def _as_distribution(dist: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(dist, dtype=float).reshape(-1)
    if (values < 0).any() or not np.isfinite(values).all():
        raise NormalizationError(f"{name} has negative or non-finite entries")
    total = values.sum()
    if abs(total - 1.0) > ToolkitConfig.normalization_tolerance:
        raise NormalizationError(f"{name} sums to {total!r}, not 1")
    return values


def entropy(dist: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    return float(entr(_as_distribution(dist, "distribution")).sum())


def kl_divergence(q: Sequence[float] | np.ndarray, p: Sequence[float] | np.ndarray) -> float:
    q = _as_distribution(q, "q")
    p = _as_distribution(p, "p")
    if q.shape != p.shape:
        raise SupportError(f"support sizes differ: {q.size} vs {p.size}")
    violations = np.flatnonzero((p == 0) & (q > 0))
    if violations.size:
        raise SupportError(f"q is not absolutely continuous w.r.t. p at indices {violations[:5].tolist()}")
    return float(max(rel_entr(q, p).sum(), 0.0))
