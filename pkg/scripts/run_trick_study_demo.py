from pathlib import Path
import sys

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from perturbmap_toolkit.models.graphical_model import spin_glass_grid
from perturbmap_toolkit.tricks.mse_study import mse_sweep


def main() -> None:
    model = spin_glass_grid(1, 2, coupling=1.0, mode="mixed", seed=3)
    cells = mse_sweep(model, alphas=[0.0, 0.5, 1.0, 1.5], Ms=[10, 100], K=2000, seed=7, target="Z")

    print(f"{'alpha':>6} {'M':>5} {'mse':>12} {'analytic':>12}")
    for cell in cells:
        analytic = f"{cell.analytic.mse:12.6g}" if cell.analytic and cell.analytic.valid else f"{'-':>12}"
        print(f"{cell.alpha:6.2f} {cell.M:5d} {cell.mse:12.6g} {analytic}")


if __name__ == "__main__":
    main()
