from typing import Callable, List, TypedDict
import logging
import warnings

import numpy as np

# LangGraph currently pulls langchain-core, which emits a Python 3.14 warning
# for legacy pydantic v1 compatibility internals. Suppress this specific warning.
warnings.filterwarnings(
    "ignore",
    message="Core Pydantic V1 functionality isn't compatible with Python 3.14 or greater.",
    category=UserWarning,
)

from langgraph.graph import END, START, StateGraph

from perturbmap_toolkit.config import ToolkitConfig
from perturbmap_toolkit.errors import EnumerationCapError, TrickDomainError
from perturbmap_toolkit.inference.exact_oracle import summarize, total_variation
from perturbmap_toolkit.inference.map_solvers import MapSolver
from perturbmap_toolkit.low_rank.bounds import check_alpha, partial_bound
from perturbmap_toolkit.models.types import Configuration, GraphicalModel, SamplerStep, SamplerSummary, SamplerTrace
from perturbmap_toolkit.utils.seeding import derive_rng, derive_seed, ordered_map

logger = logging.getLogger(__name__)

# prefix -> log-scale bound U_{j}(alpha) of the model clamped to that prefix
MomentEstimator = Callable[[Configuration], float]


class SamplerState(TypedDict, total=False):
    seed: int
    prefix: Configuration
    restarts: int
    per_step: List[SamplerStep]
    probabilities: tuple[float, ...]
    reject: float
    clamped_any: bool
    outcome: str
    trace: SamplerTrace


class SequentialSampler:
    """Draws x_1, x_2, ... in turn from clamped-bound ratios, restarting on the reject mass.

    p_j(x_j) = exp(U_{j+1}(x_1..x_j) - U_j(x_1..x_{j-1})) with every U estimated fresh
    from `M_inner` partial perturbation draws; whatever mass is left over rejects.
    """

    def __init__(
        self,
        model: GraphicalModel,
        alpha: float,
        M_inner: int,
        solver: MapSolver,
        max_restarts: int = ToolkitConfig.max_restarts,
        moment_estimator: MomentEstimator | None = None,
        workers: int = 1,
        reject_slack: float = ToolkitConfig.reject_slack,
    ) -> None:
        alpha = check_alpha(alpha)
        if alpha == 0.0:
            raise TrickDomainError("the sequential sampler needs alpha in (-1, 0) or (0, inf)")
        if M_inner < 1:
            raise ValueError(f"M_inner must be >= 1, got {M_inner}")
        if max_restarts < 0:
            raise ValueError(f"max_restarts must be >= 0, got {max_restarts}")
        self.model = model
        self.alpha = alpha
        self.M_inner = M_inner
        self.solver = solver
        self.max_restarts = max_restarts
        self.moment_estimator = moment_estimator
        self.workers = workers
        self.reject_slack = reject_slack
        self.graph = self._build_graph()

    def run(self, seed: int) -> SamplerTrace:
        final_state = self.graph.invoke({"seed": seed}, config={"recursion_limit": self._recursion_limit()})
        return final_state["trace"]

    def _recursion_limit(self) -> int:
        per_pass = 2 * self.model.variable_count + 2
        return (self.max_restarts + 2) * per_pass + 10

    def _build_graph(self):
        graph = StateGraph(SamplerState)
        graph.add_node("initialize", self._initialize_node)
        graph.add_node("start_pass", self._start_pass_node)
        graph.add_node("score_variable", self._score_variable_node)
        graph.add_node("draw_value", self._draw_value_node)
        graph.add_node("restart", self._restart_node)
        graph.add_node("give_up", self._give_up_node)
        graph.add_node("finalize", self._finalize_node)

        graph.add_edge(START, "initialize")
        graph.add_edge("initialize", "start_pass")
        graph.add_edge("start_pass", "score_variable")
        graph.add_edge("score_variable", "draw_value")
        graph.add_conditional_edges(
            "draw_value",
            self._route_after_draw,
            {
                "continue": "score_variable",
                "reject": "restart",
                "done": "finalize",
            },
        )
        graph.add_conditional_edges(
            "restart",
            self._route_after_restart,
            {
                "retry": "start_pass",
                "give_up": "give_up",
            },
        )
        graph.add_edge("finalize", END)
        graph.add_edge("give_up", END)

        return graph.compile()

    def _initialize_node(self, state: SamplerState) -> SamplerState:
        return {"restarts": 0, "per_step": [], "clamped_any": False}

    def _start_pass_node(self, state: SamplerState) -> SamplerState:
        return {"prefix": ()}

    def _score_variable_node(self, state: SamplerState) -> SamplerState:
        prefix = state["prefix"]
        j = len(prefix)
        current = self._bound(state, prefix)
        branches = np.array([self._bound(state, prefix + (x,)) for x in range(self.model.cardinalities[j])])
        probabilities = np.exp(branches - current)
        total = float(probabilities.sum())
        reject = 1.0 - total
        clamped = False
        if reject < -self.reject_slack:
            # finite-sample artifact: the exact reject mass is never negative
            logger.warning("negative reject mass %.3g at variable %d; renormalizing", reject, j)
            probabilities = probabilities / total
            reject = 0.0
            clamped = True
        elif reject < 0.0:
            reject = 0.0

        step = SamplerStep(j, tuple(float(p) for p in probabilities), reject, clamped)
        return {
            "probabilities": step.probabilities,
            "reject": reject,
            "per_step": state.get("per_step", []) + [step],
            "clamped_any": state.get("clamped_any", False) or clamped,
        }

    def _draw_value_node(self, state: SamplerState) -> SamplerState:
        prefix = state["prefix"]
        j = len(prefix)
        rng = derive_rng(state["seed"], "sampler_draw", state["restarts"], j)
        cumulative = np.cumsum(state["probabilities"])
        choice = int(np.searchsorted(cumulative, rng.random(), side="right"))
        if choice >= cumulative.size:
            if state["reject"] > 0.0:
                return {"outcome": "reject"}
            choice = cumulative.size - 1
        prefix = prefix + (choice,)
        outcome = "done" if len(prefix) == self.model.variable_count else "continue"
        return {"prefix": prefix, "outcome": outcome}

    def _route_after_draw(self, state: SamplerState) -> str:
        return state["outcome"]

    def _restart_node(self, state: SamplerState) -> SamplerState:
        return {"restarts": state["restarts"] + 1}

    def _route_after_restart(self, state: SamplerState) -> str:
        if state["restarts"] > self.max_restarts:
            return "give_up"
        return "retry"

    def _give_up_node(self, state: SamplerState) -> SamplerState:
        logger.warning("sequential sampler gave up after %d restarts", self.max_restarts)
        trace = SamplerTrace(
            accepted=False,
            config=None,
            restarts=state["restarts"],
            per_step=state.get("per_step", []),
            negative_mass_clamped=state.get("clamped_any", False),
        )
        return {"trace": trace}

    def _finalize_node(self, state: SamplerState) -> SamplerState:
        trace = SamplerTrace(
            accepted=True,
            config=state["prefix"],
            restarts=state["restarts"],
            per_step=state.get("per_step", []),
            negative_mass_clamped=state.get("clamped_any", False),
        )
        return {"trace": trace}

    def _bound(self, state: SamplerState, prefix: Configuration) -> float:
        if self.moment_estimator is not None:
            return float(self.moment_estimator(prefix))
        stream = ("sampler", state["restarts"], len(state["prefix"]))
        estimate, _ = partial_bound(
            self.model, prefix, self.alpha, self.M_inner, self.solver, state["seed"], stream, self.workers
        )
        return estimate


def sequential_sample(
    model: GraphicalModel,
    alpha: float,
    M_inner: int,
    solver: MapSolver,
    seed: int,
    max_restarts: int = ToolkitConfig.max_restarts,
    moment_estimator: MomentEstimator | None = None,
    workers: int = 1,
) -> SamplerTrace:
    sampler = SequentialSampler(model, alpha, M_inner, solver, max_restarts, moment_estimator, workers)
    return sampler.run(seed)


def sequential_sample_many(
    model: GraphicalModel,
    alpha: float,
    M_inner: int,
    count: int,
    solver: MapSolver,
    seed: int,
    max_restarts: int = ToolkitConfig.max_restarts,
    moment_estimator: MomentEstimator | None = None,
    workers: int = 1,
    cap: int | None = None,
) -> SamplerSummary:
    """`count` independent sampler runs, run i seeded by (seed, i).

    The empirical distribution and its total-variation distance to the Gibbs
    distribution are filled in when the model is small enough for the oracle.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    sampler = SequentialSampler(model, alpha, M_inner, solver, max_restarts, moment_estimator)
    traces = ordered_map(lambda i: sampler.run(derive_seed(seed, "sample", i)), count, workers)
    accepted = [t.config for t in traces if t.accepted]
    passes = sum(t.restarts + (1 if t.accepted else 0) for t in traces)

    distribution = None
    tv = None
    if accepted:
        try:
            gibbs = summarize(model, cap).gibbs
        except EnumerationCapError:
            logger.info("model too large for the oracle; skipping the total-variation check")
        else:
            flat = np.ravel_multi_index(np.asarray(accepted, dtype=np.int64).T, model.cardinalities)
            distribution = np.bincount(flat, minlength=gibbs.size) / len(accepted)
            tv = total_variation(distribution, gibbs)
    logger.info("sampler: %d/%d runs accepted over %d passes", len(accepted), count, passes)
    return SamplerSummary(tuple(traces), len(accepted), passes, distribution, tv)
