from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from perturbmap_toolkit.errors import ModelFormatError, TrickDomainError

TrickKind = Literal["gumbel", "exponential", "weibull", "frechet", "pareto", "tail"]
Target = Literal["f", "Z", "lnZ"]
SpinGlassMode = Literal["attractive", "mixed"]
PerturbationKind = Literal["sum_unary", "partial", "avg_unary", "subset"]
BoundKind = Literal["upper", "lower", "lower_subset", "lower_singletons"]
SolverName = Literal["exhaustive", "icm"]

Configuration = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Factor:
    """Log-potential table over an ordered scope, row-major with the last scope variable fastest."""

    scope: tuple[int, ...]
    log_table: np.ndarray

    def __post_init__(self) -> None:
        table = np.array(self.log_table, dtype=float).reshape(-1)
        table.setflags(write=False)
        object.__setattr__(self, "scope", tuple(int(v) for v in self.scope))
        object.__setattr__(self, "log_table", table)
        if not self.scope:
            raise ModelFormatError("factor scope must be non-empty")
        if len(set(self.scope)) != len(self.scope):
            raise ModelFormatError(f"factor scope {self.scope} has duplicate variables")
        if np.isnan(table).any() or np.isposinf(table).any():
            raise ModelFormatError(f"factor over {self.scope} has NaN or +inf log-potential")


@dataclass(frozen=True, eq=False)
class GraphicalModel:
    """Discrete model with potential phi(x) = constant + sum of factor log-values.

    `constant` is the designated constant term that clamping folds fully covered
    factors into; it is part of phi everywhere (potential, oracle, solvers).
    """

    cardinalities: tuple[int, ...]
    factors: tuple[Factor, ...]
    constant: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "cardinalities", tuple(int(k) for k in self.cardinalities))
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "constant", float(self.constant))
        n = len(self.cardinalities)
        if n < 1:
            raise ModelFormatError("model needs at least one variable")
        if any(k < 1 for k in self.cardinalities):
            raise ModelFormatError(f"cardinalities must be >= 1, got {self.cardinalities}")
        if np.isnan(self.constant) or self.constant == np.inf:
            raise ModelFormatError("model constant must be finite or -inf")
        for factor in self.factors:
            for v in factor.scope:
                if v < 0 or v >= n:
                    raise ModelFormatError(f"scope index out of range: {v} not in [0, {n})")
            expected = int(np.prod([self.cardinalities[v] for v in factor.scope]))
            if factor.log_table.size != expected:
                raise ModelFormatError(
                    f"table-length mismatch for scope {factor.scope}: "
                    f"expected {expected}, got {factor.log_table.size}"
                )

    @property
    def variable_count(self) -> int:
        return len(self.cardinalities)

    @property
    def space_size(self) -> int:
        return int(np.prod(self.cardinalities, dtype=object))


@dataclass(frozen=True)
class TrickSpec:
    kind: TrickKind
    alpha: Optional[float] = None
    t: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind == "exponential" and self.alpha is None:
            object.__setattr__(self, "alpha", 1.0)
        if self.kind in ("weibull", "frechet", "exponential"):
            if self.alpha is None:
                raise TrickDomainError(f"{self.kind} trick requires alpha")
            object.__setattr__(self, "alpha", float(self.alpha))
        if self.kind == "weibull" and not self.alpha > 0:
            raise TrickDomainError(f"weibull trick requires alpha > 0, got {self.alpha}")
        if self.kind == "frechet" and not -1.0 < self.alpha < 0.0:
            raise TrickDomainError(f"frechet trick requires -1 < alpha < 0, got {self.alpha}")
        if self.kind == "exponential" and self.alpha != 1.0:
            raise TrickDomainError("exponential trick is the weibull trick with alpha = 1")
        if self.kind == "tail":
            if self.t is None or not self.t > 0:
                raise TrickDomainError(f"tail trick requires t > 0, got {self.t}")
            object.__setattr__(self, "t", float(self.t))

    @classmethod
    def gumbel(cls) -> "TrickSpec":
        return cls("gumbel")

    @classmethod
    def exponential(cls) -> "TrickSpec":
        return cls("exponential", alpha=1.0)

    @classmethod
    def weibull(cls, alpha: float) -> "TrickSpec":
        return cls("weibull", alpha=alpha)

    @classmethod
    def frechet(cls, alpha: float) -> "TrickSpec":
        return cls("frechet", alpha=alpha)

    @classmethod
    def pareto(cls) -> "TrickSpec":
        return cls("pareto")

    @classmethod
    def tail(cls, t: float) -> "TrickSpec":
        return cls("tail", t=t)

    @classmethod
    def from_alpha(cls, alpha: float) -> "TrickSpec":
        alpha = float(alpha)
        if alpha == 0.0:
            return cls.gumbel()
        if alpha == 1.0:
            return cls.exponential()
        if alpha > 0:
            return cls.weibull(alpha)
        return cls.frechet(alpha)

    @property
    def is_power(self) -> bool:
        return self.kind in ("weibull", "frechet", "exponential")

    @property
    def label(self) -> str:
        if self.kind in ("weibull", "frechet"):
            return f"{self.kind}(alpha={self.alpha:g})"
        if self.kind == "tail":
            return f"tail(t={self.t:g})"
        return self.kind


@dataclass(frozen=True)
class EstimateReport:
    target: Target
    estimate: float
    std_error: float
    sample_count: int
    trick: TrickSpec
    debiased: bool = False


@dataclass(frozen=True)
class AnalyticStats:
    bias_sq: float
    variance: float
    mse: float
    valid: bool


@dataclass(frozen=True, eq=False)
class UnaryOffsets:
    tables: tuple[np.ndarray, ...]
    scale: float = 1.0

    def __post_init__(self) -> None:
        tables = tuple(np.asarray(t, dtype=float).reshape(-1) for t in self.tables)
        object.__setattr__(self, "tables", tables)
        object.__setattr__(self, "scale", float(self.scale))
        if not self.scale > 0:
            raise ValueError(f"offset scale must be > 0, got {self.scale}")
        for table in tables:
            if not np.isfinite(table).all():
                raise ValueError("offset entries must be finite")

    @classmethod
    def zeros(cls, cardinalities: Sequence[int], scale: float = 1.0) -> "UnaryOffsets":
        return cls(tuple(np.zeros(k) for k in cardinalities), scale)

    def offset_of(self, config: Sequence[int]) -> float:
        return self.scale * float(sum(table[x] for table, x in zip(self.tables, config)))


@dataclass(frozen=True)
class MapResult:
    config: Configuration
    value: float
    exact: bool


@dataclass(frozen=True, eq=False)
class ExactSummary:
    log_partition: float
    gibbs: np.ndarray
    map_config: Configuration
    map_value: float


@dataclass(frozen=True)
class PerturbationSample:
    value: float
    kind: PerturbationKind
    solver_exact: bool
    config: Configuration = ()
    noise: float = 0.0
    detail: tuple = ()


@dataclass(frozen=True)
class BoundReport:
    alpha: float
    bound: BoundKind
    estimate: float
    std_error: float
    sample_count: int
    solver: str
    alpha_safe: bool
    solver_exact: bool = True


@dataclass(frozen=True)
class SamplerStep:
    variable: int
    probabilities: tuple[float, ...]
    reject: float
    clamped: bool = False


@dataclass
class SamplerTrace:
    accepted: bool
    config: Optional[Configuration]
    restarts: int
    per_step: list[SamplerStep] = field(default_factory=list)
    negative_mass_clamped: bool = False


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    q_sum: np.ndarray
    q_avg: np.ndarray
    entropy_bound_B: float
    entropy_bound_avg: float
    gap_upper: float
    gap_lower: float
    kl_sum: float
    kl_avg: float
    entropy_q_sum: float
    entropy_q_avg: float
    se_upper: float
    se_lower: float
    se_B: float
    se_B_avg: float
    sample_count: int

    @property
    def identity_residual(self) -> float:
        """(U(0) - lnZ) + KL(q_sum||p) - (B(p) - H(q_sum)); zero in exact expectation."""
        return (self.gap_upper + self.kl_sum) - (self.entropy_bound_B - self.entropy_q_sum)

    @property
    def identity_se(self) -> float:
        return float(np.hypot(self.se_upper, self.se_B))


@dataclass(frozen=True)
class RunConfig:
    command: str
    seed: int
    model_path: Optional[str] = None
    grid: Optional[tuple[int, int]] = None
    coupling: float = 1.0
    mode: SpinGlassMode = "mixed"
    model_seed: int = 0
    trick: Optional[str] = None
    alphas: tuple[float, ...] = ()
    t: Optional[float] = None
    target: Target = "lnZ"
    debias: bool = False
    M: int = 1000
    Ms: tuple[int, ...] = ()
    K: int = 100
    M_inner: int = 1000
    count: int = 100
    solver: SolverName = "exhaustive"
    restarts: int = 10
    max_restarts: int = 1000
    bound: str = "upper"
    subset: tuple[int, ...] = ()
    workers: int = 1
    out: Optional[str] = None


@dataclass(frozen=True)
class MseCell:
    alpha: float
    M: int
    K: int
    target: Target
    truth: float
    mean: float
    bias: float
    variance: float
    mse: float
    bias_se: float
    variance_se: float
    mse_se: float
    unstable: bool
    analytic: Optional[AnalyticStats] = None

    @property
    def bias_sq(self) -> float:
        return self.bias**2


@dataclass(frozen=True, eq=False)
class PerturbationDraws:
    """M batched perturbed-MAP draws; `noise` is the unscaled sum_i gamma_i(x*_i) per draw."""

    kind: PerturbationKind
    values: np.ndarray
    configs: np.ndarray
    noise: np.ndarray
    solver: str
    solver_exact: bool

    @property
    def sample_count(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ClampingCheck:
    alpha: float
    j: int
    prefix: Configuration
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    holds: bool

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.lhs_se, self.rhs_se))


@dataclass(frozen=True, eq=False)
class SamplerSummary:
    traces: tuple[SamplerTrace, ...]
    accepted_count: int
    passes: int
    distribution: Optional[np.ndarray] = None
    tv_distance: Optional[float] = None

    @property
    def accept_rate(self) -> float:
        return self.accepted_count / self.passes if self.passes else 0.0

    @property
    def clamped_count(self) -> int:
        return sum(1 for trace in self.traces if trace.negative_mass_clamped)
