import math
import unittest

import numpy as np

from perturbmap_toolkit.errors import TrickDomainError
from perturbmap_toolkit.inference.exact_oracle import summarize
from perturbmap_toolkit.inference.map_solvers import ExhaustiveSolver
from perturbmap_toolkit.low_rank.sequential_sampler import SequentialSampler, sequential_sample, sequential_sample_many
from perturbmap_toolkit.models.graphical_model import clamp, potential
from perturbmap_toolkit.models.types import Factor, GraphicalModel


def pair_model() -> GraphicalModel:
    return GraphicalModel((2, 2), (Factor((0, 1), np.log([2.0, 1.0, 1.0, 2.0])),))


def exact_log_partition(model: GraphicalModel):
    """Moment estimator returning the clamped ln Z, which makes every step an exact conditional."""

    def estimator(prefix):
        if len(prefix) == model.variable_count:
            return potential(model, prefix)
        return summarize(clamp(model, prefix)).log_partition

    return estimator


class SequentialSamplerTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.solver = ExhaustiveSolver()
        cls.pair = pair_model()
        cls.gibbs = summarize(cls.pair).gibbs

    def test_exact_moments_reproduce_gibbs_for_one_variable(self) -> None:
        model = GraphicalModel((3,), (Factor((0,), [0.0, 1.0, 0.5]),))
        trace = sequential_sample(model, 0.5, 1, self.solver, seed=0, moment_estimator=exact_log_partition(model))
        self.assertTrue(trace.accepted)
        self.assertEqual(trace.restarts, 0)
        (step,) = trace.per_step
        np.testing.assert_allclose(step.probabilities, summarize(model).gibbs, atol=1e-12)
        self.assertAlmostEqual(step.reject, 0.0, places=12)
        self.assertFalse(step.clamped)

    def test_exact_moments_sample_gibbs(self) -> None:
        summary = sequential_sample_many(
            self.pair, 1.0, 1, 1000, self.solver, seed=1, moment_estimator=exact_log_partition(self.pair)
        )
        self.assertEqual(summary.accepted_count, 1000)
        self.assertEqual(summary.passes, 1000)
        self.assertLessEqual(summary.tv_distance, 0.06)

    def test_monte_carlo_moments_sample_gibbs(self) -> None:
        summary = sequential_sample_many(self.pair, 1.0, 2000, 300, self.solver, seed=2)
        self.assertEqual(summary.accepted_count, 300)
        self.assertEqual(summary.passes, sum(t.restarts + 1 for t in summary.traces))
        self.assertAlmostEqual(float(summary.distribution.sum()), 1.0, places=12)
        self.assertLessEqual(summary.tv_distance, 0.15)

    def test_tv_distance_shrinks_with_inner_samples(self) -> None:
        # x0 = 0 leaves an independent pair, x0 = 1 a strongly coupled one; both halves weigh about 40
        log_table = np.array([2.3, 2.3, 2.3, 2.3, 3.0, -3.0, -3.0, 3.0])
        model = GraphicalModel((2, 2, 2), (Factor((0, 1, 2), log_table),))
        tv = [
            sequential_sample_many(model, 1.0, M_inner, 1200, self.solver, seed=8).tv_distance
            for M_inner in (2, 20, 2000)
        ]
        self.assertLess(tv[1], tv[0])
        self.assertLess(tv[2], tv[0])
        self.assertLessEqual(tv[2], tv[1] + 0.03)
        self.assertLessEqual(tv[2], 0.08)

    def test_step_probabilities_are_consistent(self) -> None:
        summary = sequential_sample_many(self.pair, 0.5, 500, 40, self.solver, seed=3)
        for trace in summary.traces:
            self.assertEqual(len(trace.config), 2)
            for step in trace.per_step:
                self.assertTrue(all(p >= 0.0 for p in step.probabilities))
                self.assertGreaterEqual(step.reject, 0.0)
                self.assertAlmostEqual(sum(step.probabilities) + step.reject, 1.0, places=8)

    def test_uniform_model_rarely_restarts(self) -> None:
        flat = GraphicalModel((2, 2), ())
        summary = sequential_sample_many(flat, 0.5, 2000, 100, self.solver, seed=4)
        self.assertGreaterEqual(summary.accept_rate, 0.9)

    def test_gives_up_after_max_restarts(self) -> None:
        def nothing_left(prefix):
            return 0.0 if not prefix else -math.inf

        with self.assertLogs("perturbmap_toolkit.low_rank.sequential_sampler", level="WARNING"):
            trace = sequential_sample(
                self.pair, 1.0, 1, self.solver, seed=5, max_restarts=3, moment_estimator=nothing_left
            )
        self.assertFalse(trace.accepted)
        self.assertIsNone(trace.config)
        self.assertEqual(trace.restarts, 4)
        self.assertEqual(len(trace.per_step), 4)
        self.assertTrue(all(step.reject == 1.0 for step in trace.per_step))

    def test_negative_reject_mass_is_renormalized(self) -> None:
        def too_much(prefix):
            return 0.1 * len(prefix)

        with self.assertLogs("perturbmap_toolkit.low_rank.sequential_sampler", level="WARNING"):
            summary = sequential_sample_many(self.pair, 1.0, 1, 5, self.solver, seed=6, moment_estimator=too_much)
        self.assertEqual(summary.clamped_count, 5)
        for trace in summary.traces:
            self.assertTrue(trace.accepted)
            self.assertTrue(trace.negative_mass_clamped)
            for step in trace.per_step:
                self.assertTrue(step.clamped)
                self.assertEqual(step.reject, 0.0)
                np.testing.assert_allclose(step.probabilities, [0.5, 0.5])

    def test_argument_checks(self) -> None:
        with self.assertRaises(TrickDomainError):
            SequentialSampler(self.pair, 0.0, 10, self.solver)
        with self.assertRaises(TrickDomainError):
            SequentialSampler(self.pair, -1.5, 10, self.solver)
        with self.assertRaises(ValueError):
            SequentialSampler(self.pair, 1.0, 0, self.solver)
        with self.assertRaises(ValueError):
            SequentialSampler(self.pair, 1.0, 10, self.solver, max_restarts=-1)
        with self.assertRaises(ValueError):
            sequential_sample_many(self.pair, 1.0, 10, 0, self.solver, seed=0)

    def test_runs_do_not_depend_on_workers(self) -> None:
        serial = sequential_sample_many(self.pair, 1.0, 200, 20, self.solver, seed=7, workers=1)
        threaded = sequential_sample_many(self.pair, 1.0, 200, 20, self.solver, seed=7, workers=3)
        self.assertEqual([t.config for t in serial.traces], [t.config for t in threaded.traces])
        self.assertEqual([t.restarts for t in serial.traces], [t.restarts for t in threaded.traces])
        self.assertEqual(serial.tv_distance, threaded.tv_distance)


if __name__ == "__main__":
    unittest.main()
