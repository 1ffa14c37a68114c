"""Command-line front end: `perturbmap <command> ...`.

Every command writes CSV (to --out or stdout) that starts with "#" metadata lines
recording the toolkit version and the full run configuration.
"""
import argparse
import csv
from dataclasses import asdict
import io
import logging
import math
from pathlib import Path
import re
import sys
from typing import Callable, Iterable, Mapping, Sequence

from perturbmap_toolkit import __version__
from perturbmap_toolkit.config import ToolkitConfig, default_trick_profiles
from perturbmap_toolkit.config_runtime import RuntimeSettings, load_runtime_settings
from perturbmap_toolkit.data.uai_repository import UaiModelRepository, dump_uai
from perturbmap_toolkit.errors import EnumerationCapError, ToolkitError
from perturbmap_toolkit.inference.exact_oracle import summarize
from perturbmap_toolkit.inference.map_solvers import build_solver
from perturbmap_toolkit.low_rank.bounds import (
    alpha_is_safe,
    bound_mse_sweep,
    lower_bound_curve,
    lower_bound_singletons,
    lower_bound_subset,
    upper_bound_curve,
)
from perturbmap_toolkit.low_rank.diagnostics import diagnostics
from perturbmap_toolkit.low_rank.sequential_sampler import sequential_sample_many
from perturbmap_toolkit.models.graphical_model import spin_glass_grid
from perturbmap_toolkit.models.types import GraphicalModel, RunConfig, TrickSpec
from perturbmap_toolkit.tricks.estimators import estimate, full_rank_max_values
from perturbmap_toolkit.tricks.mse_study import mse_sweep
from perturbmap_toolkit.utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)


def parse_alpha_grid(text: str) -> tuple[float, ...]:
    """'start:step:stop' (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            start, step, stop = (float(part) for part in text.split(":"))
            if not step > 0 or stop < start:
                raise argparse.ArgumentTypeError(f"alpha grid {text!r} needs step > 0 and stop >= start")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 12) for i in range(count))
        return tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse alpha grid {text!r}") from None


def parse_grid(text: str) -> tuple[int, int]:
    try:
        rows, cols = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like RxC, got {text!r}") from None
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError(f"grid dimensions must be >= 1, got {text!r}")
    return rows, cols


def parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# options whose value may start with "-" (negative alphas)
NUMERIC_VALUE_OPTIONS = ("--alphas", "--alpha")
_NEGATIVE_VALUE = re.compile(r"^-[\d.]")


def join_negative_values(argv: Sequence[str]) -> list[str]:
    """Rewrite `--alphas -0.04:0.05:1` as `--alphas=-0.04:0.05:1` so argparse keeps the value."""
    argv = list(argv)
    joined: list[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token in NUMERIC_VALUE_OPTIONS and i + 1 < len(argv) and _NEGATIVE_VALUE.match(argv[i + 1]):
            joined.append(f"{token}={argv[i + 1]}")
            i += 2
            continue
        joined.append(token)
        i += 1
    return joined


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""
    if isinstance(value, (tuple, list)):
        return " ".join(format_value(v) for v in value)
    return "" if value is None else str(value)


def render_csv(
    run: RunConfig, fieldnames: Sequence[str], rows: Iterable[Mapping], trailer: Sequence[str] = ()
) -> str:
    buffer = io.StringIO()
    buffer.write(f"# perturbmap-toolkit {__version__}\n")
    for key, value in asdict(run).items():
        buffer.write(f"# {key}={format_value(value)}\n")
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: format_value(row.get(key)) for key in fieldnames})
    for line in trailer:
        buffer.write(f"# {line}\n")
    return buffer.getvalue()


def emit(text: str, out: str | None) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info("wrote %s", path)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="Seed for every random stream of the run")
    common.add_argument("--workers", type=int, default=None, help="Worker threads (default: runtime config)")
    common.add_argument("--config", type=Path, default=None, help="Runtime config JSON file")
    common.add_argument("--log-level", default=None, help="Logging level (default: runtime config)")
    common.add_argument("--out", default=None, help="Output path (default: stdout)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("model_file", nargs="?", default=None, help="UAI-MARKOV model file")
    model.add_argument("--model", dest="model_path", default=None, help="UAI-MARKOV model file")
    model.add_argument("--grid", type=parse_grid, default=None, help="Generate an RxC spin glass instead")
    model.add_argument("--coupling", type=float, default=1.0)
    model.add_argument("--mode", choices=["attractive", "mixed"], default="mixed")
    model.add_argument("--model-seed", type=int, default=0, help="Seed of the generated spin glass")

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--solver", choices=["exhaustive", "icm"], default="exhaustive")
    solver.add_argument("--restarts", type=int, default=ToolkitConfig.icm_restarts, help="ICM restarts")

    parser = argparse.ArgumentParser(prog="perturbmap", description="Perturb-and-MAP partition function toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="Generate a spin-glass grid as UAI-MARKOV")
    gen.add_argument("--grid", type=parse_grid, required=True)
    gen.add_argument("--coupling", type=float, default=1.0)
    gen.add_argument("--mode", choices=["attractive", "mixed"], default="mixed")

    sub.add_parser("exact", parents=[common, model], help="Brute-force ln Z and MAP")

    est = sub.add_parser("estimate", parents=[common, model], help="Full-rank trick estimate")
    est.add_argument("--trick", choices=sorted(default_trick_profiles()), default=None)
    est.add_argument("--alpha", type=float, default=None, help="Weibull/Frechet alpha (0 = Gumbel)")
    est.add_argument("--t", type=float, default=None, help="Tail-trick threshold")
    est.add_argument("--target", choices=["f", "Z", "lnZ"], default="lnZ")
    est.add_argument("--debias", action="store_true")
    est.add_argument("--M", type=int, default=1000)

    bounds = sub.add_parser("bounds", parents=[common, model, solver], help="U(alpha) / L(alpha) bounds")
    bounds.add_argument("--alphas", type=parse_alpha_grid, default=(0.0,), help="start:step:stop or a,b,c")
    bounds.add_argument("--M", type=int, default=1000)
    bounds.add_argument("--bound", choices=["upper", "lower", "singletons", "subset"], default="upper")
    bounds.add_argument("--subset", type=parse_int_list, default=(), help="Variables of the subset bound")

    sweep = sub.add_parser("sweep-alpha", parents=[common, model, solver], help="MSE of U(alpha) as a ln Z estimator")
    sweep.add_argument("--alphas", type=parse_alpha_grid, required=True, help="start:step:stop or a,b,c")
    sweep.add_argument("--M", type=int, default=1000)
    sweep.add_argument("--K", type=int, default=100)
    sweep.add_argument("--bound", choices=["upper", "lower"], default="upper")

    sample = sub.add_parser("sample", parents=[common, model, solver], help="Sequential Gibbs sampler")
    sample.add_argument("--alpha", type=float, default=1.0)
    sample.add_argument("--M-inner", dest="M_inner", type=int, default=1000)
    sample.add_argument("--count", type=int, default=100)
    sample.add_argument("--max-restarts", type=int, default=ToolkitConfig.max_restarts)

    study = sub.add_parser("mse-study", parents=[common, model], help="Empirical vs closed-form estimator MSE")
    study.add_argument("--alphas", type=parse_alpha_grid, default=(0.0, 1.0))
    study.add_argument("--Ms", type=parse_int_list, default=(10, 100))
    study.add_argument("--K", type=int, default=1000)
    study.add_argument("--target", choices=["Z", "lnZ"], default="Z")
    study.add_argument("--debias", action="store_true")

    diag = sub.add_parser("diagnostics", parents=[common, model, solver], help="Entropy and KL error identities")
    diag.add_argument("--M", type=int, default=10000)
    return parser


def run_config_from_args(args: argparse.Namespace, workers: int) -> RunConfig:
    model_path = getattr(args, "model_path", None) or getattr(args, "model_file", None)
    if model_path:
        model_path = str(Path(model_path).expanduser().resolve())
    out = str(Path(args.out).expanduser().resolve()) if args.out else None
    alphas = getattr(args, "alphas", None)
    if alphas is None and getattr(args, "alpha", None) is not None:
        alphas = (args.alpha,)
    return RunConfig(
        command=args.command,
        seed=args.seed,
        model_path=model_path,
        grid=getattr(args, "grid", None),
        coupling=getattr(args, "coupling", 1.0),
        mode=getattr(args, "mode", "mixed"),
        model_seed=args.seed if args.command == "gen" else getattr(args, "model_seed", 0),
        trick=getattr(args, "trick", None),
        alphas=tuple(alphas or ()),
        t=getattr(args, "t", None),
        target=getattr(args, "target", "lnZ"),
        debias=getattr(args, "debias", False),
        M=getattr(args, "M", 1000),
        Ms=tuple(getattr(args, "Ms", ())),
        K=getattr(args, "K", 100),
        M_inner=getattr(args, "M_inner", 1000),
        count=getattr(args, "count", 100),
        solver=getattr(args, "solver", "exhaustive"),
        restarts=getattr(args, "restarts", ToolkitConfig.icm_restarts),
        max_restarts=getattr(args, "max_restarts", ToolkitConfig.max_restarts),
        bound=getattr(args, "bound", "upper"),
        subset=tuple(getattr(args, "subset", ())),
        workers=workers,
        out=out,
    )


def load_model(run: RunConfig) -> GraphicalModel:
    if run.model_path:
        return UaiModelRepository(run.model_path).load()
    if run.grid:
        return spin_glass_grid(run.grid[0], run.grid[1], run.coupling, run.mode, run.model_seed)
    raise ValueError("provide a model file (positional or --model) or --grid")


def trick_from_run(run: RunConfig) -> TrickSpec:
    alpha = run.alphas[0] if run.alphas else None
    if run.trick is None:
        return TrickSpec.from_alpha(alpha) if alpha is not None else TrickSpec.gumbel()
    if run.trick in ("weibull", "frechet"):
        if alpha is None:
            raise ValueError(f"--trick {run.trick} needs --alpha")
        return TrickSpec(run.trick, alpha=alpha)
    if run.trick == "tail":
        if run.t is None:
            raise ValueError("--trick tail needs --t")
        return TrickSpec.tail(run.t)
    return default_trick_profiles()[run.trick]


def check_trick_arguments(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    trick = getattr(args, "trick", None)
    if trick == "tail" and args.t is None:
        parser.error("--trick tail needs --t (the threshold is not tuned automatically)")
    if trick in ("weibull", "frechet") and args.alpha is None:
        parser.error(f"--trick {trick} needs --alpha")


def cmd_gen(run: RunConfig, settings: RuntimeSettings) -> str:
    model = spin_glass_grid(run.grid[0], run.grid[1], run.coupling, run.mode, run.model_seed)
    if run.out:
        UaiModelRepository(run.out).save(model)
        return ""
    return dump_uai(model)


def cmd_exact(run: RunConfig, settings: RuntimeSettings) -> str:
    model = load_model(run)
    oracle = summarize(model, settings.enumeration_cap, workers=run.workers)
    row = {
        "log_partition": oracle.log_partition,
        "map_value": oracle.map_value,
        "map_config": oracle.map_config,
        "configurations": model.space_size,
    }
    return render_csv(run, list(row), [row])


def cmd_estimate(run: RunConfig, settings: RuntimeSettings) -> str:
    model = load_model(run)
    trick = trick_from_run(run)
    values, _ = full_rank_max_values(model, run.M, run.seed, settings.enumeration_cap, run.workers)
    report = estimate(trick, values, run.target, run.debias)
    row = {
        "trick": trick.label,
        "target": report.target,
        "estimate": report.estimate,
        "std_error": report.std_error,
        "M": report.sample_count,
        "debiased": report.debiased,
    }
    return render_csv(run, list(row), [row])


def cmd_bounds(run: RunConfig, settings: RuntimeSettings) -> str:
    model = load_model(run)
    solver = build_solver(run.solver, run.restarts, run.seed, settings.enumeration_cap)
    if run.bound == "upper":
        reports = upper_bound_curve(model, run.alphas, run.M, solver, run.seed, run.workers)
    elif run.bound == "lower":
        reports = lower_bound_curve(model, run.alphas, run.M, solver, run.seed, run.workers)
    elif run.bound == "singletons":
        reports = [lower_bound_singletons(model, a, run.M, solver, run.seed, run.workers) for a in run.alphas]
    else:
        if not run.subset:
            raise ValueError("--bound subset needs --subset")
        reports = [
            lower_bound_subset(model, run.subset, a, run.M, solver, run.seed, run.workers, settings.enumeration_cap)
            for a in run.alphas
        ]
    fields = ["bound", "alpha", "estimate", "std_error", "M", "solver", "solver_exact", "alpha_safe"]
    rows = [
        {
            "bound": r.bound,
            "alpha": r.alpha,
            "estimate": r.estimate,
            "std_error": r.std_error,
            "M": r.sample_count,
            "solver": r.solver,
            "solver_exact": r.solver_exact,
            "alpha_safe": r.alpha_safe,
        }
        for r in reports
    ]
    return render_csv(run, fields, rows)


def cmd_sweep_alpha(run: RunConfig, settings: RuntimeSettings) -> str:
    model = load_model(run)
    solver = build_solver(run.solver, run.restarts, run.seed, settings.enumeration_cap)
    # alpha = 0 is always evaluated as the reference; draws are shared across alpha
    grid = tuple(run.alphas) if 0.0 in run.alphas else tuple(run.alphas) + (0.0,)
    swept = bound_mse_sweep(model, grid, run.M, run.K, solver, run.seed, run.bound, run.workers)
    reference = swept[grid.index(0.0)]
    cells = swept[: len(run.alphas)]
    n = model.variable_count
    fields = ["alpha", "mean", "bias", "variance", "mse", "se", "alpha_safe"]
    rows = [
        {
            "alpha": c.alpha,
            "mean": c.mean,
            "bias": c.bias,
            "variance": c.variance,
            "mse": c.mse,
            "se": c.mse_se,
            "alpha_safe": alpha_is_safe(c.alpha, n),
        }
        for c in cells
    ]
    finite = [c for c in cells if math.isfinite(c.mse)]
    trailer = []
    if finite and reference.mse > 0:
        best = min(finite, key=lambda c: c.mse)
        # MSE ~ 1/M asymptotically, so the MSE ratio is the ratio of samples needed
        trailer = [
            f"best_alpha={format_value(best.alpha)}",
            f"samples_saved={format_value(1.0 - best.mse / reference.mse)}",
        ]
    return render_csv(run, fields, rows, trailer)


def cmd_sample(run: RunConfig, settings: RuntimeSettings) -> str:
    model = load_model(run)
    solver = build_solver(run.solver, run.restarts, run.seed, settings.enumeration_cap)
    alpha = run.alphas[0] if run.alphas else 1.0
    summary = sequential_sample_many(
        model,
        alpha,
        run.M_inner,
        run.count,
        solver,
        run.seed,
        run.max_restarts,
        workers=run.workers,
        cap=settings.enumeration_cap,
    )
    fields = ["run", "restarts", "clamped"] + [f"x{i}" for i in range(model.variable_count)]
    rows = []
    for i, trace in enumerate(summary.traces):
        if not trace.accepted:
            continue
        row = {"run": i, "restarts": trace.restarts, "clamped": trace.negative_mass_clamped}
        row.update({f"x{v}": value for v, value in enumerate(trace.config)})
        rows.append(row)
    trailer = [f"accepted={summary.accepted_count} passes={summary.passes} accept_rate={summary.accept_rate!r}"]
    if summary.tv_distance is not None:
        trailer.append(f"tv_distance={summary.tv_distance!r}")
    return render_csv(run, fields, rows, trailer)


def cmd_mse_study(run: RunConfig, settings: RuntimeSettings) -> str:
    model = load_model(run)
    cells = mse_sweep(
        model, run.alphas, run.Ms, run.K, run.seed, run.target, run.debias, run.workers, settings.enumeration_cap
    )
    fields = [
        "alpha",
        "M",
        "K",
        "target",
        "truth",
        "mean",
        "bias_sq",
        "variance",
        "mse",
        "mse_se",
        "analytic_bias_sq",
        "analytic_variance",
        "analytic_mse",
        "unstable",
    ]
    rows = []
    for c in cells:
        valid = c.analytic is not None and c.analytic.valid
        rows.append(
            {
                "alpha": c.alpha,
                "M": c.M,
                "K": c.K,
                "target": c.target,
                "truth": c.truth,
                "mean": c.mean,
                "bias_sq": c.bias_sq,
                "variance": c.variance,
                "mse": c.mse,
                "mse_se": c.mse_se,
                "analytic_bias_sq": c.analytic.bias_sq if valid else None,
                "analytic_variance": c.analytic.variance if valid else None,
                "analytic_mse": c.analytic.mse if valid else None,
                "unstable": c.unstable,
            }
        )
    return render_csv(run, fields, rows)


def cmd_diagnostics(run: RunConfig, settings: RuntimeSettings) -> str:
    model = load_model(run)
    solver = build_solver(run.solver, run.restarts, run.seed, settings.enumeration_cap)
    report = diagnostics(model, run.M, solver, run.seed, run.workers, settings.enumeration_cap)
    row = {
        "gap_upper": report.gap_upper,
        "kl_sum": report.kl_sum,
        "entropy_bound_B": report.entropy_bound_B,
        "entropy_q_sum": report.entropy_q_sum,
        "identity_residual": report.identity_residual,
        "identity_se": report.identity_se,
        "gap_lower": report.gap_lower,
        "kl_avg": report.kl_avg,
        "se_lower": report.se_lower,
        "entropy_bound_avg": report.entropy_bound_avg,
        "entropy_q_avg": report.entropy_q_avg,
        "se_B_avg": report.se_B_avg,
        "M": report.sample_count,
    }
    return render_csv(run, list(row), [row])


COMMANDS: dict[str, Callable[[RunConfig, RuntimeSettings], str]] = {
    "gen": cmd_gen,
    "exact": cmd_exact,
    "estimate": cmd_estimate,
    "bounds": cmd_bounds,
    "sweep-alpha": cmd_sweep_alpha,
    "sample": cmd_sample,
    "mse-study": cmd_mse_study,
    "diagnostics": cmd_diagnostics,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(join_negative_values(sys.argv[1:] if argv is None else argv))
    check_trick_arguments(parser, args)
    settings = load_runtime_settings(args.config)
    configure_logging(args.log_level or settings.log_level)
    workers = max(1, args.workers if args.workers is not None else settings.workers)
    try:
        run = run_config_from_args(args, workers)
        emit(COMMANDS[run.command](run, settings), run.out if run.command != "gen" else None)
    except EnumerationCapError as exc:
        print(f"perturbmap: error: {exc} (raise enumeration_cap in the runtime config)", file=sys.stderr)
        return 1
    except (ToolkitError, ValueError, OSError) as exc:
        print(f"perturbmap: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
