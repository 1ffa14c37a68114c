from typing import Sequence

import numpy as np
from scipy.special import logsumexp


def standard_error(x: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(x.size))


def variance_standard_error(x: Sequence[float] | np.ndarray) -> float:
    """Large-sample SE of the unbiased sample variance: sqrt((m4 - s^4 (M-3)/(M-1)) / M)."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if m < 4:
        return 0.0
    centred = x - x.mean()
    s2 = float(np.var(x, ddof=1))
    m4 = float(np.mean(centred**4))
    return float(np.sqrt(max(m4 - s2 * s2 * (m - 3) / (m - 1), 0.0) / m))


def log_mean_exp(x: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(logsumexp(x) - np.log(x.size))


def log_mean_exp_se(x: Sequence[float] | np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    shifted = np.exp(x - np.max(x))
    mean = shifted.mean()
    if mean <= 0:
        return 0.0
    return float(np.std(shifted, ddof=1) / (np.sqrt(x.size) * mean))


def total_variation(q: Sequence[float] | np.ndarray, p: Sequence[float] | np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(q, dtype=float) - np.asarray(p, dtype=float)).sum())
