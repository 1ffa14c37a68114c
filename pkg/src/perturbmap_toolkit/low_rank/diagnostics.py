import logging

import numpy as np

from perturbmap_toolkit.inference.exact_oracle import entropy, kl_divergence, summarize
from perturbmap_toolkit.inference.map_solvers import MapSolver
from perturbmap_toolkit.low_rank.perturbations import draw_perturbations
from perturbmap_toolkit.models.types import DiagnosticsReport, GraphicalModel
from perturbmap_toolkit.utils.stats import standard_error

logger = logging.getLogger(__name__)


def empirical_distribution(configs: np.ndarray, cardinalities: tuple[int, ...]) -> np.ndarray:
    flat = np.ravel_multi_index(np.asarray(configs, dtype=np.int64).T, cardinalities)
    size = int(np.prod(cardinalities))
    return np.bincount(flat, minlength=size) / configs.shape[0]


def smooth(q: np.ndarray, p: np.ndarray, M: int) -> np.ndarray:
    support = p > 0
    smoothed = q + support / (M * q.size)
    return smoothed / smoothed.sum()


def diagnostics(
    model: GraphicalModel,
    M: int,
    solver: MapSolver,
    seed: int,
    workers: int = 1,
    cap: int | None = None,
) -> DiagnosticsReport:
    """Sum- and average-unary argmax laws compared against the Gibbs distribution.

    q_sum is the law of the sum-unary argmax x*, q_avg that of the average-unary
    argmax x**. The entropy bound B(p) sums the selected noise over variables for
    q_sum and averages it for q_avg.
    """
    if M < 2:
        raise ValueError(f"diagnostics needs M >= 2, got {M}")
    if M < 1000:
        logger.warning("diagnostics with M=%d: the empirical argmax laws will be coarse", M)
    oracle = summarize(model, cap, workers=workers)
    p = oracle.gibbs
    log_Z = oracle.log_partition
    n = model.variable_count

    upper = draw_perturbations(model, "sum_unary", M, seed, solver, stream=("diagnostics",), workers=workers)
    lower = draw_perturbations(model, "avg_unary", M, seed, solver, stream=("diagnostics",), workers=workers)
    if not solver.exact:
        logger.warning("diagnostics with approximate solver %r: the identities assume exact MAP", solver.name)

    q_sum = smooth(empirical_distribution(upper.configs, model.cardinalities), p, M)
    q_avg = smooth(empirical_distribution(lower.configs, model.cardinalities), p, M)
    averaged_noise = lower.noise / n

    return DiagnosticsReport(
        q_sum=q_sum,
        q_avg=q_avg,
        entropy_bound_B=float(np.mean(upper.noise)),
        entropy_bound_avg=float(np.mean(averaged_noise)),
        gap_upper=float(np.mean(upper.values)) - log_Z,
        gap_lower=log_Z - float(np.mean(lower.values)),
        kl_sum=kl_divergence(q_sum, p),
        kl_avg=kl_divergence(q_avg, p),
        entropy_q_sum=entropy(q_sum),
        entropy_q_avg=entropy(q_avg),
        se_upper=standard_error(upper.values),
        se_lower=standard_error(lower.values),
        se_B=standard_error(upper.noise),
        se_B_avg=standard_error(averaged_noise),
        sample_count=M,
    )
