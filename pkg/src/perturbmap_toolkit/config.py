from dataclasses import dataclass, field
from typing import Mapping

from perturbmap_toolkit.models.types import TrickSpec

EULER_GAMMA = 0.57721566490153286


@dataclass(frozen=True)
class ToolkitConfig:
    enumeration_cap: int = 2**22
    draw_block_size: int = 1024
    oracle_chunk_size: int = 2**16
    icm_restarts: int = 10
    max_restarts: int = 1000
    reject_slack: float = 1e-9
    normalization_tolerance: float = 1e-9
    euler_gamma: float = EULER_GAMMA
    alpha_grid: tuple[float, ...] = field(default_factory=lambda: (-0.04, -0.02, 0.0, 0.25, 0.5, 1.0, 2.0))


def default_trick_profiles() -> Mapping[str, TrickSpec]:
    return {
        "gumbel": TrickSpec.gumbel(),
        "exponential": TrickSpec.exponential(),
        "weibull": TrickSpec.weibull(2.0),
        "frechet": TrickSpec.frechet(-0.25),
        "pareto": TrickSpec.pareto(),
        "tail": TrickSpec.tail(1.0),
    }
