import logging
import math
from typing import Sequence

import numpy as np

from perturbmap_toolkit.errors import ToolkitError
from perturbmap_toolkit.inference.exact_oracle import summarize
from perturbmap_toolkit.inference.map_solvers import ExhaustiveSolver
from perturbmap_toolkit.models.graphical_model import flatten
from perturbmap_toolkit.models.types import GraphicalModel, MseCell, Target, TrickSpec
from perturbmap_toolkit.tricks.estimators import analytic_stats, estimate, sample_gumbel
from perturbmap_toolkit.utils.seeding import derive_rng, ordered_map
from perturbmap_toolkit.utils.stats import variance_standard_error

logger = logging.getLogger(__name__)


def replicate_estimates(
    model: GraphicalModel,
    trick: TrickSpec,
    M: int,
    K: int,
    seed: int,
    target: Target = "Z",
    stream: int = 0,
    debias: bool = False,
    workers: int = 1,
    cap: int | None = None,
) -> np.ndarray:
    if M < 1 or K < 1:
        raise ValueError(f"M and K must be >= 1, got M={M} K={K}")
    joint = flatten(model, cap)
    solver = ExhaustiveSolver(cap)
    width = joint.cardinalities[0]

    def one(k: int) -> float:
        rng = derive_rng(seed, "mse", stream, k)
        _, values = solver.solve_batch(joint, [sample_gumbel(rng, (M, width))])
        try:
            return estimate(trick, values, target, debias).estimate
        except ToolkitError:
            return math.nan

    return np.asarray(ordered_map(one, K, workers), dtype=float)


def summarize_cell(
    estimates: np.ndarray, truth: float, alpha: float, M: int, target: Target, analytic=None
) -> MseCell:
    e = np.asarray(estimates, dtype=float)
    K = e.size
    finite = bool(np.isfinite(e).all())
    errors = e - truth
    with np.errstate(invalid="ignore", over="ignore"):
        mean = float(np.mean(e))
        variance = float(np.var(e, ddof=1)) if K > 1 else 0.0
        sq = errors**2
        mse = float(np.mean(sq))
        bias_se = float(np.std(e, ddof=1) / math.sqrt(K)) if K > 1 else 0.0
        mse_se = float(np.std(sq, ddof=1) / math.sqrt(K)) if K > 1 else 0.0
    unstable = (target == "Z" and M <= 2) or not finite
    if unstable:
        logger.warning("alpha=%g M=%d %s-target: estimator moments are unstable", alpha, M, target)
    return MseCell(
        alpha=alpha,
        M=M,
        K=K,
        target=target,
        truth=truth,
        mean=mean,
        bias=mean - truth,
        variance=variance,
        mse=mse,
        bias_se=bias_se,
        variance_se=variance_standard_error(e) if finite else math.nan,
        mse_se=mse_se,
        unstable=unstable,
        analytic=analytic,
    )


def mse_sweep(
    model: GraphicalModel,
    alphas: Sequence[float],
    Ms: Sequence[int],
    K: int,
    seed: int,
    target: Target = "Z",
    debias: bool = False,
    workers: int = 1,
    cap: int | None = None,
) -> list[MseCell]:
    """One MseCell per (alpha, M), alpha-major.

    alpha = 0 is the Gumbel trick, alpha = 1 the Exponential trick. Cells with the same
    M share their replicate draws across alpha.
    """
    if target not in ("Z", "lnZ"):
        raise ValueError(f"mse_sweep compares against Z or lnZ, not {target!r}")
    log_Z = summarize(model, cap, workers=workers).log_partition
    truth = math.exp(log_Z) if target == "Z" else log_Z

    cells = []
    for alpha in alphas:
        trick = TrickSpec.from_alpha(alpha)
        for column, M in enumerate(Ms):
            estimates = replicate_estimates(model, trick, M, K, seed, target, column, debias, workers, cap)
            analytic = None
            if trick.kind in ("gumbel", "exponential") and not debias:
                analytic = analytic_stats(trick, target, math.exp(log_Z), M)
            cells.append(summarize_cell(estimates, truth, float(alpha), M, target, analytic))
            logger.info("mse cell alpha=%g M=%d: mse=%.6g", alpha, M, cells[-1].mse)
    return cells
