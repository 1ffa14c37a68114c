import math

import numpy as np
from scipy.special import gammaln

from perturbmap_toolkit.config import EULER_GAMMA
from perturbmap_toolkit.errors import TrickDomainError
from perturbmap_toolkit.models.types import TrickSpec


def g_transform(trick: TrickSpec, x):
    x = np.asarray(x, dtype=float)
    if (x < 0).any() or (trick.kind in ("gumbel", "frechet") and (x == 0).any()):
        raise TrickDomainError(f"{trick.label}: g(x) needs x {'> 0' if trick.kind in ('gumbel', 'frechet') else '>= 0'}")
    if trick.kind == "gumbel":
        out = -np.log(x) - EULER_GAMMA
    elif trick.is_power:
        out = x if trick.alpha == 1.0 else np.power(x, trick.alpha)
    elif trick.kind == "pareto":
        out = np.exp(x)
    else:
        out = (x > trick.t).astype(float)
    return float(out) if out.ndim == 0 else out


def g_of_max(trick: TrickSpec, values):
    """g(e^{-c} e^{-V}) for full-rank max values V, evaluated without leaving log space where possible."""
    v = np.asarray(values, dtype=float)
    log_t = -EULER_GAMMA - v
    if trick.kind == "gumbel":
        out = v.copy()
    elif trick.is_power:
        out = np.exp(trick.alpha * log_t)
    elif trick.kind == "pareto":
        out = np.exp(np.exp(log_t))
    else:
        out = (log_t > math.log(trick.t)).astype(float)
    return float(out) if out.ndim == 0 else out


def _power_constant(alpha: float) -> float:
    return math.exp(gammaln(1.0 + alpha))


def f_of_Z(trick: TrickSpec, Z: float) -> float:
    if not Z > 0:
        raise TrickDomainError(f"{trick.label}: Z must be > 0, got {Z}")
    if trick.kind == "gumbel":
        return math.log(Z)
    if trick.is_power:
        return Z ** (-trick.alpha) * _power_constant(trick.alpha)
    if trick.kind == "pareto":
        if not Z > 1:
            raise TrickDomainError(f"pareto trick needs Z > 1, got {Z}")
        return Z / (Z - 1.0)
    return math.exp(-trick.t * Z)


def f_inverse(trick: TrickSpec, m: float) -> float:
    if trick.kind == "gumbel":
        return math.exp(m)
    if trick.is_power:
        if not m > 0:
            raise TrickDomainError(f"{trick.label}: mean must be > 0", raw_mean=m)
        return (m / _power_constant(trick.alpha)) ** (-1.0 / trick.alpha)
    if trick.kind == "pareto":
        if not m > 1:
            raise TrickDomainError("pareto trick: mean must be > 1", raw_mean=m)
        return m / (m - 1.0)
    if not 0 < m <= 1:
        raise TrickDomainError(f"{trick.label}: mean must lie in (0, 1]", raw_mean=m)
    return -math.log(m) / trick.t


def f_inverse_derivative(trick: TrickSpec, m: float) -> float:
    if trick.kind == "gumbel":
        return math.exp(m)
    if trick.is_power:
        return -f_inverse(trick, m) / (trick.alpha * m)
    if trick.kind == "pareto":
        return -1.0 / (m - 1.0) ** 2
    return -1.0 / (trick.t * m)


def g_variance(trick: TrickSpec, Z: float) -> float:
    if not Z > 0:
        raise TrickDomainError(f"{trick.label}: Z must be > 0, got {Z}")
    if trick.kind == "gumbel":
        return math.pi**2 / 6.0
    if trick.is_power:
        a = trick.alpha
        if a <= -0.5:
            raise TrickDomainError(f"{trick.label}: g(T) has infinite variance for alpha <= -1/2")
        return (math.exp(gammaln(1 + 2 * a)) - _power_constant(a) ** 2) / Z ** (2 * a)
    if trick.kind == "pareto":
        if not Z > 2:
            raise TrickDomainError(f"pareto trick: g(T) has infinite variance for Z <= 2, got {Z}")
        return Z / ((Z - 1.0) ** 2 * (Z - 2.0))
    q = math.exp(-trick.t * Z)
    return q * (1.0 - q)


def asymptotic_variance(trick: TrickSpec, Z: float) -> float:
    """Coefficient of 1/M in the asymptotic variance of the back-transformed Z estimator."""
    if not Z > 0:
        raise TrickDomainError(f"{trick.label}: Z must be > 0, got {Z}")
    if trick.kind == "gumbel":
        return math.pi**2 / 6.0 * Z**2
    if trick.is_power:
        a = trick.alpha
        if a <= -0.5:
            raise TrickDomainError(f"{trick.label}: asymptotic variance is finite only for alpha > -1/2")
        return math.expm1(gammaln(1 + 2 * a) - 2 * gammaln(1 + a)) / a**2 * Z**2
    if trick.kind == "pareto":
        if not Z > 2:
            raise TrickDomainError(f"pareto trick: asymptotic variance needs Z > 2, got {Z}")
        return Z**2 / (Z - 2.0) ** 2
    return (1.0 - math.exp(-trick.t * Z)) ** 2 / trick.t**2
