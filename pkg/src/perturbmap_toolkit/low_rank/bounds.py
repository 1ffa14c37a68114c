"""Upper and lower bounds on ln Z from low-rank perturbation MAP values.

With B(alpha) := ln Gamma(1 + alpha) / alpha + c, the estimators are

    U(alpha)   = n B(alpha) - (1/alpha) ln mean exp(-alpha U)
    L(alpha)   = B(alpha) - (1/(n alpha)) ln mean exp(-n alpha L)
    L_S(alpha) = B(alpha) - (1/alpha) ln mean exp(-alpha V_S)

and alpha = 0 is the limit, the plain sample mean. Means of exponentials go through a
shifted log-sum-exp. Standard errors use the delta method on the log of the mean.
"""
import logging
import math
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from perturbmap_toolkit.config import EULER_GAMMA
from perturbmap_toolkit.errors import TrickDomainError
from perturbmap_toolkit.inference.exact_oracle import summarize
from perturbmap_toolkit.inference.map_solvers import MapSolver
from perturbmap_toolkit.low_rank.perturbations import draw_partial, draw_perturbations
from perturbmap_toolkit.models.types import BoundKind, BoundReport, ClampingCheck, GraphicalModel, MseCell
from perturbmap_toolkit.tricks.mse_study import summarize_cell
from perturbmap_toolkit.utils.seeding import ordered_map
from perturbmap_toolkit.utils.stats import log_mean_exp, log_mean_exp_se, standard_error, variance_standard_error

logger = logging.getLogger(__name__)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not alpha > -1.0 or not math.isfinite(alpha):
        raise TrickDomainError(f"alpha must lie in (-1, 0) or (0, inf) or be 0, got {alpha}")
    return alpha


def alpha_is_safe(alpha: float, n: int) -> bool:
    """E[exp(-alpha U)] is finite for alpha > -1/(2 sqrt(n))."""
    return alpha > -1.0 / (2.0 * math.sqrt(n))


def gamma_offset(alpha: float) -> float:
    """ln Gamma(1 + alpha) / alpha + c, continuous at alpha = 0 where it is 0."""
    if alpha == 0.0:
        return 0.0
    return float(gammaln(1.0 + alpha)) / alpha + EULER_GAMMA


def moment_bound(values: Sequence[float] | np.ndarray, alpha: float, n: int) -> tuple[float, float]:
    """n (ln Gamma(1+alpha)/alpha + c) - (1/alpha) ln mean exp(-alpha V), with its SE."""
    v = np.asarray(values, dtype=float)
    alpha = check_alpha(alpha)
    if alpha == 0.0:
        return float(np.mean(v)), standard_error(v)
    w = -alpha * v
    estimate = n * gamma_offset(alpha) - log_mean_exp(w) / alpha
    return float(estimate), log_mean_exp_se(w) / abs(alpha)


def upper_from_samples(U: Sequence[float] | np.ndarray, alpha: float, n: int) -> tuple[float, float]:
    return moment_bound(U, alpha, n)


def lower_from_samples(L: Sequence[float] | np.ndarray, alpha: float, n: int) -> tuple[float, float]:
    # L(alpha) is the n-variable upper-bound form evaluated on n L, divided by n
    estimate, se = moment_bound(n * np.asarray(L, dtype=float), alpha, n)
    return estimate / n, se / n


def subset_from_samples(V: Sequence[float] | np.ndarray, alpha: float) -> tuple[float, float]:
    return moment_bound(V, alpha, 1)


def _warn_if_approximate(solver: MapSolver, bound: str) -> None:
    if not solver.exact:
        logger.warning("%s bound computed with approximate solver %r; validity is not guaranteed", bound, solver.name)


def _check_sample_count(M: int) -> None:
    if M < 2:
        raise ValueError(f"bound estimation needs M >= 2, got {M}")


def upper_bound_curve(
    model: GraphicalModel,
    alphas: Sequence[float],
    M: int,
    solver: MapSolver,
    seed: int,
    workers: int = 1,
) -> list[BoundReport]:
    _check_sample_count(M)
    alphas = [check_alpha(a) for a in alphas]
    _warn_if_approximate(solver, "upper")
    n = model.variable_count
    draws = draw_perturbations(model, "sum_unary", M, seed, solver, workers=workers)
    reports = []
    for alpha in alphas:
        estimate, se = upper_from_samples(draws.values, alpha, n)
        if not alpha_is_safe(alpha, n):
            logger.warning("alpha=%g is outside the safe range alpha > -1/(2 sqrt(%d))", alpha, n)
        reports.append(BoundReport(alpha, "upper", estimate, se, M, solver.name, alpha_is_safe(alpha, n), solver.exact))
    return reports


def upper_bound(
    model: GraphicalModel, alpha: float, M: int, solver: MapSolver, seed: int, workers: int = 1
) -> BoundReport:
    return upper_bound_curve(model, [alpha], M, solver, seed, workers)[0]


def lower_bound_curve(
    model: GraphicalModel,
    alphas: Sequence[float],
    M: int,
    solver: MapSolver,
    seed: int,
    workers: int = 1,
) -> list[BoundReport]:
    _check_sample_count(M)
    alphas = [check_alpha(a) for a in alphas]
    _warn_if_approximate(solver, "lower")
    n = model.variable_count
    draws = draw_perturbations(model, "avg_unary", M, seed, solver, workers=workers)
    reports = []
    for alpha in alphas:
        estimate, se = lower_from_samples(draws.values, alpha, n)
        reports.append(BoundReport(alpha, "lower", estimate, se, M, solver.name, alpha_is_safe(alpha, n), solver.exact))
    return reports


def lower_bound_avg(
    model: GraphicalModel, alpha: float, M: int, solver: MapSolver, seed: int, workers: int = 1
) -> BoundReport:
    return lower_bound_curve(model, [alpha], M, solver, seed, workers)[0]


def lower_bound_subset(
    model: GraphicalModel,
    subset: Sequence[int],
    alpha: float,
    M: int,
    solver: MapSolver,
    seed: int,
    workers: int = 1,
    cap: int | None = None,
) -> BoundReport:
    _check_sample_count(M)
    alpha = check_alpha(alpha)
    _warn_if_approximate(solver, "subset lower")
    draws = draw_perturbations(model, "subset", M, seed, solver, subset=subset, workers=workers, cap=cap)
    estimate, se = subset_from_samples(draws.values, alpha)
    return BoundReport(alpha, "lower_subset", estimate, se, M, solver.name, alpha_is_safe(alpha, 1), solver.exact)


def lower_bound_singletons(
    model: GraphicalModel,
    alpha: float,
    M: int,
    solver: MapSolver,
    seed: int,
    workers: int = 1,
) -> BoundReport:
    n = model.variable_count
    reports = [lower_bound_subset(model, [i], alpha, M, solver, seed, workers) for i in range(n)]
    estimate = float(np.mean([r.estimate for r in reports]))
    se = math.sqrt(sum(r.std_error**2 for r in reports)) / n
    return BoundReport(
        reports[0].alpha, "lower_singletons", estimate, se, M, solver.name, alpha_is_safe(reports[0].alpha, 1), solver.exact
    )


def lower_bound_jensen_floor(lower_at_zero: float, alpha: float) -> float:
    """L(0) + ln Gamma(1+alpha)/alpha + c, which L(alpha) cannot fall below for alpha in (-1, 0)."""
    alpha = check_alpha(alpha)
    if alpha > 0:
        raise TrickDomainError(f"the Jensen floor holds for alpha in (-1, 0], got {alpha}")
    return lower_at_zero + gamma_offset(alpha)


def derivative_at_zero(U: Sequence[float] | np.ndarray, n: int) -> float:
    """dU(alpha)/dalpha at 0: n pi^2 / 12 - var(U) / 2."""
    u = np.asarray(U, dtype=float)
    if u.size < 2:
        raise ValueError(f"derivative_at_zero needs M >= 2, got {u.size}")
    return n * math.pi**2 / 12.0 - float(np.var(u, ddof=1)) / 2.0


def derivative_at_zero_with_se(U: Sequence[float] | np.ndarray, n: int) -> tuple[float, float]:
    return derivative_at_zero(U, n), variance_standard_error(U) / 2.0


def partial_bound(
    model: GraphicalModel,
    prefix: Sequence[int],
    alpha: float,
    M: int,
    solver: MapSolver,
    seed: int,
    stream: Sequence[int | str] = (),
    workers: int = 1,
) -> tuple[float, float]:
    """U(alpha) of the model clamped to `prefix`, phi(prefix) exactly when nothing is free."""
    free = model.variable_count - len(prefix)
    draws = draw_partial(model, prefix, M, seed, solver, stream=stream, workers=workers)
    if free == 0:
        return float(draws.values[0]), 0.0
    return moment_bound(draws.values, alpha, free)


def clamping_check(
    model: GraphicalModel,
    alpha: float,
    j: int,
    prefix: Sequence[int],
    M: int,
    solver: MapSolver,
    seed: int,
    workers: int = 1,
) -> ClampingCheck:
    """Compare ln sum_{x_j} exp U_{j+1}(alpha) against U_j(alpha) at a fixed prefix.

    `j` is 1-based and `prefix` fixes variables 1..j-1. The left side clamps x_j to
    every state in turn; clamping never loosens the bound, so lhs <= rhs in expectation.
    """
    prefix = tuple(int(v) for v in prefix)
    n = model.variable_count
    if not 1 <= j <= n:
        raise ValueError(f"j must lie in [1, {n}], got {j}")
    if len(prefix) != j - 1:
        raise ValueError(f"clamping at j={j} needs a prefix of length {j - 1}, got {len(prefix)}")
    alpha = check_alpha(alpha)
    rhs, rhs_se = partial_bound(model, prefix, alpha, M, solver, seed, ("clamp",), workers)
    branches = [
        partial_bound(model, prefix + (x,), alpha, M, solver, seed, ("clamp",), workers)
        for x in range(model.cardinalities[j - 1])
    ]
    estimates = np.array([b[0] for b in branches])
    ses = np.array([b[1] for b in branches])
    lhs = float(logsumexp(estimates))
    weights = np.exp(estimates - lhs)
    lhs_se = float(np.sqrt(np.sum((weights * ses) ** 2)))
    combined = math.hypot(lhs_se, rhs_se)
    holds = lhs <= rhs + 3.0 * combined
    if not holds:
        logger.warning("clamping check failed at j=%d prefix=%s alpha=%g: %.6g > %.6g", j, prefix, alpha, lhs, rhs)
    return ClampingCheck(alpha, j, prefix, lhs, rhs, lhs_se, rhs_se, holds)


def bound_mse_sweep(
    model: GraphicalModel,
    alphas: Sequence[float],
    M: int,
    K: int,
    solver: MapSolver,
    seed: int,
    bound: BoundKind = "upper",
    workers: int = 1,
) -> list[MseCell]:
    """Treat U(alpha) or L(alpha) as a ln Z estimator: K replicates per alpha, moments against the oracle.

    Replicate k shares its draws across every alpha.
    """
    if bound not in ("upper", "lower"):
        raise ValueError(f"bound must be 'upper' or 'lower', got {bound!r}")
    _check_sample_count(M)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    alphas = [check_alpha(a) for a in alphas]
    _warn_if_approximate(solver, bound)
    log_Z = summarize(model, workers=workers).log_partition
    n = model.variable_count
    kind = "sum_unary" if bound == "upper" else "avg_unary"
    from_samples = upper_from_samples if bound == "upper" else lower_from_samples

    def replicate(k: int) -> list[float]:
        draws = draw_perturbations(model, kind, M, seed, solver, stream=("replicate", k))
        return [from_samples(draws.values, alpha, n)[0] for alpha in alphas]

    table = np.asarray(ordered_map(replicate, K, workers), dtype=float).reshape(K, len(alphas))
    return [summarize_cell(table[:, i], log_Z, alpha, M, "lnZ") for i, alpha in enumerate(alphas)]
