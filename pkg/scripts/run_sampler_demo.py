from pathlib import Path
import sys

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

import numpy as np

from perturbmap_toolkit.inference.exact_oracle import summarize
from perturbmap_toolkit.inference.map_solvers import ExhaustiveSolver
from perturbmap_toolkit.low_rank.sequential_sampler import sequential_sample_many
from perturbmap_toolkit.models.types import Factor, GraphicalModel


def main() -> None:
    # gibbs (1/3, 1/6, 1/6, 1/3)
    model = GraphicalModel((2, 2), (Factor((0, 1), np.log([2.0, 1.0, 1.0, 2.0])),))
    summary = sequential_sample_many(model, alpha=1.0, M_inner=5000, count=500, solver=ExhaustiveSolver(), seed=2)

    print("=== Sequential sampler ===")
    print(f"accept rate: {summary.accept_rate:.3f}")
    print(f"empirical:   {np.round(summary.distribution, 3)}")
    print(f"gibbs:       {np.round(summarize(model).gibbs, 3)}")
    print(f"TV distance: {summary.tv_distance:.4f}")


if __name__ == "__main__":
    main()
