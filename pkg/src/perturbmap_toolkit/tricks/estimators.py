import logging
import math
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import digamma, gammaln, polygamma

from perturbmap_toolkit.config import EULER_GAMMA, ToolkitConfig
from perturbmap_toolkit.errors import TrickDomainError
from perturbmap_toolkit.inference.map_solvers import ExhaustiveSolver
from perturbmap_toolkit.models.graphical_model import check_enumerable, flatten, potential_vector
from perturbmap_toolkit.models.types import AnalyticStats, Configuration, EstimateReport, GraphicalModel, Target, TrickSpec
from perturbmap_toolkit.tricks.trick_family import f_inverse, f_inverse_derivative, g_of_max
from perturbmap_toolkit.utils.seeding import block_sizes, derive_rng, ordered_map
from perturbmap_toolkit.utils.stats import standard_error

logger = logging.getLogger(__name__)


def gumbel_from_uniform(u):
    """Inverse-CDF map of uniforms on (0, 1) to Gumbel(-c), which has mean 0."""
    return -np.log(-np.log(u)) - EULER_GAMMA


def sample_gumbel(rng: np.random.Generator, size=None):
    u = rng.random(size)
    bad = (u <= 0.0) | (u >= 1.0)
    while np.any(bad):
        if np.ndim(u) == 0:
            u = rng.random()
        else:
            u[bad] = rng.random(int(np.count_nonzero(bad)))
        bad = (u <= 0.0) | (u >= 1.0)
    out = gumbel_from_uniform(u)
    return float(out) if np.ndim(out) == 0 else out


def full_rank_max_sample(
    model: GraphicalModel, rng: np.random.Generator, cap: int | None = None
) -> tuple[float, Configuration]:
    """One draw of max_x {phi(x) + gamma(x)} ~ Gumbel(-c + ln Z) and its argmax ~ p."""
    joint = flatten(model, cap)
    noise = sample_gumbel(rng, (1, joint.cardinalities[0]))
    index, value = ExhaustiveSolver(cap).solve_batch(joint, [noise])
    config = np.unravel_index(int(index[0, 0]), model.cardinalities)
    return float(value[0]), tuple(int(v) for v in config)


def full_rank_max_values(
    model: GraphicalModel,
    count: int,
    seed: int,
    cap: int | None = None,
    workers: int = 1,
    block_size: int = ToolkitConfig.draw_block_size,
) -> tuple[np.ndarray, np.ndarray]:
    joint = flatten(model, cap)
    solver = ExhaustiveSolver(cap)
    sizes = block_sizes(count, block_size)

    def block(b: int) -> tuple[np.ndarray, np.ndarray]:
        rng = derive_rng(seed, "full_rank", b)
        noise = sample_gumbel(rng, (sizes[b], joint.cardinalities[0]))
        index, values = solver.solve_batch(joint, [noise])
        return values, index[:, 0]

    parts = ordered_map(block, len(sizes), workers)
    if not parts:
        return np.empty(0), np.empty(0, dtype=np.int64)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def exponential_clock_sample(
    model: GraphicalModel, rng: np.random.Generator, cap: int | None = None
) -> tuple[float, Configuration]:
    """Competing clocks with rates e^{phi(x)}: the first ring time is Exp(Z), its clock ~ p."""
    check_enumerable(model, cap)
    phi = potential_vector(model, np.stack(np.unravel_index(np.arange(model.space_size), model.cardinalities), axis=1))
    with np.errstate(over="ignore"):
        times = rng.standard_exponential(phi.size) * np.exp(-phi)
    first = int(np.argmin(times))
    return float(times[first]), tuple(int(v) for v in np.unravel_index(first, model.cardinalities))


def clock_times(values: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.exp(-EULER_GAMMA - np.asarray(values, dtype=float))


def estimate(
    trick: TrickSpec,
    values: Sequence[float] | np.ndarray,
    target: Target = "f",
    debias: bool = False,
) -> EstimateReport:
    v = np.asarray(values, dtype=float).reshape(-1)
    M = v.size
    if M < 1:
        raise ValueError("estimate needs at least one sample")
    if target == "Z" and M < 3:
        logger.warning("Z-target estimate with M=%d: the estimator variance is infinite below M=3", M)

    samples = g_of_max(trick, v)
    mean = float(np.mean(samples))
    se_mean = standard_error(samples)

    if target == "f":
        return EstimateReport("f", mean, se_mean, M, trick, debiased=False)

    Z_hat = f_inverse(trick, mean)
    slope = abs(f_inverse_derivative(trick, mean))
    if target == "Z":
        value, se = Z_hat, slope * se_mean
        applied = False
        if debias:
            factor = _z_debias_factor(trick, M)
            if factor is not None:
                value, se, applied = value * factor, se * factor, True
        return EstimateReport("Z", value, se, M, trick, debiased=applied)

    if target != "lnZ":
        raise ValueError(f"unknown target {target!r}")
    if trick.kind == "gumbel":
        return EstimateReport("lnZ", mean, se_mean, M, trick, debiased=False)
    if not Z_hat > 0:
        raise TrickDomainError(f"{trick.label}: back-transformed Z is not positive", raw_mean=mean)
    value = math.log(Z_hat)
    applied = False
    if debias and trick.kind == "exponential":
        value -= math.log(M) - float(digamma(M))
        applied = True
    return EstimateReport("lnZ", value, slope * se_mean / Z_hat, M, trick, debiased=applied)


def _z_debias_factor(trick: TrickSpec, M: int) -> float | None:
    if M < 2:
        logger.warning("cannot debias a Z estimate from M=%d sample", M)
        return None
    if trick.kind == "exponential":
        return (M - 1) / M
    if trick.kind == "gumbel":
        return math.exp(-(M * float(gammaln(1.0 - 1.0 / M)) - EULER_GAMMA))
    logger.warning("no closed-form Z debiasing for %s", trick.label)
    return None


def analytic_stats(trick: TrickSpec | str, target: Target, Z: float, M: int) -> AnalyticStats:
    """Closed-form squared bias, variance and MSE of the Gumbel and Exponential estimators."""
    kind = trick if isinstance(trick, str) else trick.kind
    if kind not in ("gumbel", "exponential"):
        raise TrickDomainError(f"closed-form statistics exist only for gumbel and exponential, not {kind}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    inf = math.inf

    if target == "lnZ":
        if kind == "gumbel":
            variance = math.pi**2 / (6.0 * M)
            return AnalyticStats(0.0, variance, variance, True)
        bias_sq = (math.log(M) - float(digamma(M))) ** 2
        variance = float(polygamma(1, M))
        return AnalyticStats(bias_sq, variance, bias_sq + variance, True)

    if target != "Z":
        raise ValueError(f"analytic statistics cover targets 'Z' and 'lnZ', not {target!r}")
    if kind == "gumbel":
        if M == 1:
            return AnalyticStats(inf, inf, inf, False)
        mean_factor = math.exp(M * float(gammaln(1.0 - 1.0 / M)) - EULER_GAMMA)
        bias_sq = Z**2 * (mean_factor - 1.0) ** 2
        if M == 2:
            return AnalyticStats(bias_sq, inf, inf, False)
        second = math.exp(M * float(gammaln(1.0 - 2.0 / M)) - 2.0 * EULER_GAMMA)
        variance = Z**2 * (second - mean_factor**2)
        return AnalyticStats(bias_sq, variance, bias_sq + variance, True)

    if M == 1:
        return AnalyticStats(inf, inf, inf, False)
    bias_sq = Z**2 / (M - 1) ** 2
    if M == 2:
        return AnalyticStats(bias_sq, inf, inf, False)
    variance = Z**2 * M**2 / ((M - 1) ** 2 * (M - 2))
    return AnalyticStats(bias_sq, variance, bias_sq + variance, True)


def bayes_posterior(values: Sequence[float] | np.ndarray):
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size < 1:
        raise ValueError("posterior needs at least one sample")
    if (x <= 0).any():
        raise ValueError("exponential-scale samples must be > 0")
    total = float(x.sum())
    if not total > 0:
        raise ValueError("samples sum to zero")
    return stats.gamma(a=x.size, scale=1.0 / total)


def bayes_posterior_mean(values: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size < 1:
        raise ValueError("posterior needs at least one sample")
    if (x <= 0).any():
        raise ValueError("exponential-scale samples must be > 0")
    total = float(x.sum())
    if not total > 0:
        raise ValueError("samples sum to zero")
    return x.size / total
