from pathlib import Path
from pprint import pprint
import sys

# Allow running this script directly without manually exporting PYTHONPATH.
ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from perturbmap_toolkit.inference.exact_oracle import summarize
from perturbmap_toolkit.inference.map_solvers import ExhaustiveSolver
from perturbmap_toolkit.low_rank.bounds import lower_bound_curve, upper_bound_curve
from perturbmap_toolkit.models.graphical_model import spin_glass_grid


def main() -> None:
    model = spin_glass_grid(3, 3, coupling=1.0, mode="mixed", seed=13)
    oracle = summarize(model)
    solver = ExhaustiveSolver()
    alphas = [-0.04, 0.0, 0.5, 1.0, 2.0]

    print(f"=== 3x3 mixed spin glass, exact ln Z = {oracle.log_partition:.6f} ===")
    print("\n=== Upper bounds U(alpha) ===")
    pprint(upper_bound_curve(model, alphas, M=2000, solver=solver, seed=1))
    print("\n=== Lower bounds L(alpha) ===")
    pprint(lower_bound_curve(model, alphas, M=2000, solver=solver, seed=1))


if __name__ == "__main__":
    main()
