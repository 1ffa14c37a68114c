import math
import unittest

import numpy as np
from scipy import stats
from scipy.special import polygamma

from perturbmap_toolkit.config import EULER_GAMMA
from perturbmap_toolkit.errors import TrickDomainError
from perturbmap_toolkit.models.types import Factor, GraphicalModel, TrickSpec
from perturbmap_toolkit.tricks.estimators import (
    analytic_stats,
    bayes_posterior,
    bayes_posterior_mean,
    clock_times,
    estimate,
    exponential_clock_sample,
    full_rank_max_sample,
    full_rank_max_values,
    sample_gumbel,
)
from perturbmap_toolkit.tricks.mse_study import mse_sweep, replicate_estimates, summarize_cell
from perturbmap_toolkit.tricks.trick_family import (
    asymptotic_variance,
    f_inverse,
    f_of_Z,
    g_transform,
    g_variance,
)
from perturbmap_toolkit.utils.seeding import derive_rng
from perturbmap_toolkit.utils.stats import variance_standard_error

GIBBS_PAIR = np.array([1 / 3, 1 / 6, 1 / 6, 1 / 3])


def pair_model() -> GraphicalModel:
    return GraphicalModel((2, 2), (Factor((0, 1), np.log([2.0, 1.0, 1.0, 2.0])),))


class TrickSpecTests(unittest.TestCase):
    def test_domains(self) -> None:
        for build in (
            lambda: TrickSpec.frechet(-1.5),
            lambda: TrickSpec.frechet(0.5),
            lambda: TrickSpec.weibull(-1.0),
            lambda: TrickSpec("exponential", alpha=2.0),
            lambda: TrickSpec.tail(0.0),
        ):
            with self.assertRaises(TrickDomainError):
                build()

    def test_from_alpha(self) -> None:
        self.assertEqual(TrickSpec.from_alpha(0.0).kind, "gumbel")
        self.assertEqual(TrickSpec.from_alpha(1.0).kind, "exponential")
        self.assertEqual(TrickSpec.from_alpha(2.0), TrickSpec.weibull(2.0))
        self.assertEqual(TrickSpec.from_alpha(-0.25), TrickSpec.frechet(-0.25))
        self.assertEqual(TrickSpec.weibull(2.0).label, "weibull(alpha=2)")


class TrickFamilyTests(unittest.TestCase):
    def test_f_of_Z_cases(self) -> None:
        self.assertAlmostEqual(f_of_Z(TrickSpec.gumbel(), math.e), 1.0, places=12)
        self.assertAlmostEqual(f_of_Z(TrickSpec.exponential(), 2.0), 0.5, places=12)
        self.assertAlmostEqual(f_of_Z(TrickSpec.weibull(2.0), 2.0), 0.5, places=12)
        self.assertAlmostEqual(f_of_Z(TrickSpec.frechet(-0.5), 4.0), 2.0 * math.sqrt(math.pi), places=12)
        self.assertAlmostEqual(f_of_Z(TrickSpec.pareto(), 3.0), 1.5, places=12)
        self.assertAlmostEqual(f_of_Z(TrickSpec.tail(1.0), 2.0), math.exp(-2.0), places=12)

    def test_f_inverse_recovers_Z(self) -> None:
        tricks = [
            TrickSpec.gumbel(),
            TrickSpec.exponential(),
            TrickSpec.weibull(0.5),
            TrickSpec.frechet(-0.25),
            TrickSpec.pareto(),
            TrickSpec.tail(0.5),
        ]
        for trick in tricks:
            for Z in (1.5, 3.0, 10.0):
                with self.subTest(trick=trick.label, Z=Z):
                    self.assertAlmostEqual(f_inverse(trick, f_of_Z(trick, Z)) / Z, 1.0, places=10)

    def test_domain_errors(self) -> None:
        with self.assertRaises(TrickDomainError):
            f_of_Z(TrickSpec.pareto(), 0.5)
        with self.assertRaises(TrickDomainError):
            f_of_Z(TrickSpec.gumbel(), 0.0)
        with self.assertRaises(TrickDomainError) as ctx:
            f_inverse(TrickSpec.tail(1.0), 0.0)
        self.assertEqual(ctx.exception.raw_mean, 0.0)
        with self.assertRaises(TrickDomainError):
            f_inverse(TrickSpec.exponential(), -0.1)

    def test_g_transform_cases(self) -> None:
        self.assertAlmostEqual(g_transform(TrickSpec.gumbel(), 1.0), -EULER_GAMMA, places=12)
        self.assertEqual(g_transform(TrickSpec.exponential(), 2.0), 2.0)
        self.assertAlmostEqual(g_transform(TrickSpec.weibull(2.0), 3.0), 9.0, places=12)
        self.assertEqual(g_transform(TrickSpec.pareto(), 0.0), 1.0)
        np.testing.assert_array_equal(g_transform(TrickSpec.tail(1.0), [0.5, 2.0]), [0.0, 1.0])
        with self.assertRaises(TrickDomainError):
            g_transform(TrickSpec.gumbel(), 0.0)
        with self.assertRaises(TrickDomainError):
            g_transform(TrickSpec.exponential(), -1.0)

    def test_g_is_unbiased_for_f(self) -> None:
        # pareto needs Z > 4 for a finite fourth moment of g(T)
        cases = [
            (TrickSpec.gumbel(), 3.0),
            (TrickSpec.exponential(), 3.0),
            (TrickSpec.weibull(2.0), 3.0),
            (TrickSpec.frechet(-0.25), 3.0),
            (TrickSpec.tail(0.5), 3.0),
            (TrickSpec.pareto(), 6.0),
        ]
        for trick, Z in cases:
            with self.subTest(trick=trick.label):
                T = derive_rng(0, "unbiased", trick.kind).exponential(1.0 / Z, size=10**6)
                g = g_transform(trick, T)
                se = float(np.std(g, ddof=1) / math.sqrt(g.size))
                self.assertLess(abs(float(np.mean(g)) - f_of_Z(trick, Z)), 4 * se)

    def test_g_variance(self) -> None:
        self.assertAlmostEqual(g_variance(TrickSpec.gumbel(), 5.0), math.pi**2 / 6, places=12)
        self.assertAlmostEqual(g_variance(TrickSpec.exponential(), 2.0), 0.25, places=12)
        q = math.exp(-2.0)
        self.assertAlmostEqual(g_variance(TrickSpec.tail(1.0), 2.0), q * (1 - q), places=12)
        with self.assertRaises(TrickDomainError):
            g_variance(TrickSpec.frechet(-0.6), 1.0)
        self.assertAlmostEqual(g_variance(TrickSpec.pareto(), 3.0), 0.75, places=12)
        with self.assertRaises(TrickDomainError):
            g_variance(TrickSpec.pareto(), 2.0)

    def test_g_variance_matches_simulation(self) -> None:
        for trick, Z in ((TrickSpec.weibull(0.5), 2.0), (TrickSpec.frechet(-0.1), 2.0), (TrickSpec.pareto(), 12.0)):
            with self.subTest(trick=trick.label):
                T = derive_rng(1, "variance", trick.kind).exponential(1.0 / Z, size=10**6)
                g = g_transform(trick, T)
                self.assertLess(abs(float(np.var(g, ddof=1)) - g_variance(trick, Z)), 5 * variance_standard_error(g))

    def test_asymptotic_variances(self) -> None:
        self.assertAlmostEqual(asymptotic_variance(TrickSpec.gumbel(), 2.0), 4 * math.pi**2 / 6, places=12)
        self.assertAlmostEqual(asymptotic_variance(TrickSpec.exponential(), 2.0), 4.0, places=12)
        self.assertAlmostEqual(asymptotic_variance(TrickSpec.pareto(), 4.0), 4.0, places=12)
        self.assertAlmostEqual(asymptotic_variance(TrickSpec.tail(1.0), 1.0), (1 - math.exp(-1)) ** 2, places=12)
        # the small-alpha Weibull limit is the Gumbel coefficient
        self.assertAlmostEqual(asymptotic_variance(TrickSpec.weibull(1e-4), 1.0), math.pi**2 / 6, places=3)
        with self.assertRaises(TrickDomainError):
            asymptotic_variance(TrickSpec.frechet(-0.5), 1.0)
        with self.assertRaises(TrickDomainError):
            asymptotic_variance(TrickSpec.pareto(), 1.5)

    def test_weibull_variance_is_smallest_near_exponential(self) -> None:
        alphas = np.linspace(0.05, 3.0, 60)
        coefficients = [asymptotic_variance(TrickSpec.weibull(a), 1.0) for a in alphas]
        best = float(alphas[int(np.argmin(coefficients))])
        self.assertGreaterEqual(best, 0.7)
        self.assertLessEqual(best, 1.3)


class SamplingTests(unittest.TestCase):
    def test_gumbel_noise_has_zero_mean(self) -> None:
        draws = sample_gumbel(derive_rng(1, "noise"), 10**6)
        se = math.pi / math.sqrt(6) / 1000
        self.assertLess(abs(float(np.mean(draws))), 4 * se)
        self.assertIsInstance(sample_gumbel(derive_rng(1, "scalar")), float)

    def test_full_rank_max_is_gumbel_around_log_Z(self) -> None:
        M = 20000
        values, flat = full_rank_max_values(pair_model(), M, seed=3)
        se = math.pi / math.sqrt(6 * M)
        self.assertLess(abs(float(np.mean(values)) - math.log(6.0)), 4 * se)
        counts = np.bincount(flat, minlength=4)
        self.assertGreater(stats.chisquare(counts, GIBBS_PAIR * M).pvalue, 1e-4)

    def test_free_model_max_mean_is_log_four(self) -> None:
        M = 20000
        values, _ = full_rank_max_values(GraphicalModel((2, 2), ()), M, seed=4)
        self.assertLess(abs(float(np.mean(values)) - math.log(4.0)), 4 * math.pi / math.sqrt(6 * M))

    def test_full_rank_values_do_not_depend_on_workers(self) -> None:
        serial = full_rank_max_values(pair_model(), 3000, seed=5, block_size=512, workers=1)
        threaded = full_rank_max_values(pair_model(), 3000, seed=5, block_size=512, workers=3)
        np.testing.assert_array_equal(serial[0], threaded[0])
        np.testing.assert_array_equal(serial[1], threaded[1])

    def test_single_full_rank_sample(self) -> None:
        value, config = full_rank_max_sample(pair_model(), derive_rng(6, "single"))
        self.assertTrue(math.isfinite(value))
        self.assertEqual(len(config), 2)

    def test_exponential_clock(self) -> None:
        rng = derive_rng(7, "clock")
        draws = [exponential_clock_sample(pair_model(), rng) for _ in range(5000)]
        times = np.array([t for t, _ in draws])
        self.assertLess(abs(float(times.mean()) - 1 / 6), 4 * (1 / 6) / math.sqrt(times.size))
        flat = [x[0] * 2 + x[1] for _, x in draws]
        counts = np.bincount(flat, minlength=4)
        self.assertGreater(stats.chisquare(counts, GIBBS_PAIR * len(draws)).pvalue, 1e-4)

    def test_clock_times_are_exponential(self) -> None:
        values, _ = full_rank_max_values(pair_model(), 20000, seed=8)
        times = clock_times(values)
        self.assertLess(abs(float(times.mean()) - 1 / 6), 4 * (1 / 6) / math.sqrt(times.size))


class EstimateTests(unittest.TestCase):
    def test_gumbel_targets(self) -> None:
        values = [1.0, 2.0, 3.0]
        f = estimate(TrickSpec.gumbel(), values)
        self.assertAlmostEqual(f.estimate, 2.0)
        self.assertAlmostEqual(f.std_error, 1 / math.sqrt(3))
        log_z = estimate(TrickSpec.gumbel(), values, "lnZ")
        self.assertAlmostEqual(log_z.estimate, 2.0)
        z = estimate(TrickSpec.gumbel(), values, "Z")
        self.assertAlmostEqual(z.estimate, math.exp(2.0))
        self.assertAlmostEqual(z.std_error, math.exp(2.0) / math.sqrt(3))
        self.assertEqual(z.sample_count, 3)

    def test_exponential_log_debias_at_one_sample(self) -> None:
        report = estimate(TrickSpec.exponential(), [0.7], "lnZ", debias=True)
        self.assertAlmostEqual(report.estimate, 0.7, places=12)
        self.assertTrue(report.debiased)
        self.assertEqual(report.std_error, 0.0)

    def test_exponential_Z_debias(self) -> None:
        values = [0.1, 0.5, 1.2, 2.0]
        raw = estimate(TrickSpec.exponential(), values, "Z")
        expected = 1.0 / float(np.mean(np.exp(-EULER_GAMMA - np.array(values))))
        self.assertAlmostEqual(raw.estimate, expected, places=12)
        debiased = estimate(TrickSpec.exponential(), values, "Z", debias=True)
        self.assertAlmostEqual(debiased.estimate, raw.estimate * 3 / 4, places=12)
        self.assertTrue(debiased.debiased)

    def test_debias_without_closed_form_is_skipped(self) -> None:
        with self.assertLogs("perturbmap_toolkit.tricks.estimators", level="WARNING"):
            report = estimate(TrickSpec.weibull(2.0), [0.1, 0.5, 1.2], "Z", debias=True)
        self.assertFalse(report.debiased)

    def test_small_sample_Z_target_warns(self) -> None:
        with self.assertLogs("perturbmap_toolkit.tricks.estimators", level="WARNING"):
            estimate(TrickSpec.exponential(), [0.1, 0.2], "Z")

    def test_tail_with_zero_mean_reports_raw_mean(self) -> None:
        with self.assertRaises(TrickDomainError) as ctx:
            estimate(TrickSpec.tail(1.0), [5.0, 6.0, 7.0], "Z")
        self.assertEqual(ctx.exception.raw_mean, 0.0)

    def test_unknown_target(self) -> None:
        with self.assertRaises(ValueError):
            estimate(TrickSpec.gumbel(), [1.0], "logits")
        with self.assertRaises(ValueError):
            estimate(TrickSpec.gumbel(), [])


class AnalyticStatsTests(unittest.TestCase):
    def test_log_target(self) -> None:
        gumbel = analytic_stats("gumbel", "lnZ", 5.0, 10)
        self.assertEqual(gumbel.bias_sq, 0.0)
        self.assertAlmostEqual(gumbel.variance, math.pi**2 / 60, places=12)
        exponential = analytic_stats(TrickSpec.exponential(), "lnZ", 5.0, 1)
        self.assertAlmostEqual(exponential.bias_sq, EULER_GAMMA**2, places=12)
        self.assertAlmostEqual(exponential.variance, math.pi**2 / 6, places=12)

    def test_Z_target(self) -> None:
        stats_ = analytic_stats("exponential", "Z", 2.0, 3)
        self.assertAlmostEqual(stats_.bias_sq, 1.0, places=12)
        self.assertAlmostEqual(stats_.variance, 9.0, places=12)
        self.assertAlmostEqual(stats_.mse, 10.0, places=12)
        self.assertTrue(stats_.valid)

    def test_small_M_is_invalid(self) -> None:
        for kind in ("gumbel", "exponential"):
            for M in (1, 2):
                with self.subTest(kind=kind, M=M):
                    result = analytic_stats(kind, "Z", 1.0, M)
                    self.assertFalse(result.valid)
                    self.assertEqual(result.variance, math.inf)

    def test_other_tricks_are_rejected(self) -> None:
        with self.assertRaises(TrickDomainError):
            analytic_stats(TrickSpec.weibull(2.0), "Z", 1.0, 10)


class MseStudyTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        # one configuration with phi = 0, so Z = 1 and the max value is pure noise
        cls.point = GraphicalModel((1,), ())

    def test_log_target_matches_closed_form(self) -> None:
        cells = mse_sweep(self.point, [0.0, 1.0], [10], K=10000, seed=11, target="lnZ")
        self.assertEqual([(c.alpha, c.M) for c in cells], [(0.0, 10), (1.0, 10)])
        gumbel, exponential = cells
        self.assertLess(abs(gumbel.variance - math.pi**2 / 60), 4 * gumbel.variance_se)
        self.assertLess(abs(gumbel.bias), 4 * gumbel.bias_se)
        self.assertLess(abs(exponential.mse - exponential.analytic.mse), 4 * exponential.mse_se)
        self.assertAlmostEqual(exponential.analytic.variance, float(polygamma(1, 10)), places=12)

    def test_Z_target_matches_closed_form(self) -> None:
        (cell,) = mse_sweep(self.point, [1.0], [10], K=10000, seed=12, target="Z")
        self.assertEqual(cell.truth, 1.0)
        self.assertFalse(cell.unstable)
        self.assertLess(abs(cell.mse - cell.analytic.mse), 4 * cell.mse_se)

    def test_gumbel_and_exponential_match_closed_form_across_M(self) -> None:
        for target, seed in (("lnZ", 15), ("Z", 16)):
            cells = mse_sweep(self.point, [0.0, 1.0], [5, 10, 50], K=10000, seed=seed, target=target)
            # heavier tails on the Z scale
            width = 4.0 if target == "lnZ" else 5.0
            for cell in cells:
                with self.subTest(target=target, alpha=cell.alpha, M=cell.M):
                    self.assertTrue(cell.analytic.valid)
                    expected_bias = math.sqrt(cell.analytic.bias_sq)
                    self.assertLess(abs(cell.bias - expected_bias), width * cell.bias_se)
                    if target == "Z" and cell.M == 5:
                        # fourth moment of the error is infinite at M = 5
                        continue
                    self.assertLess(abs(cell.variance - cell.analytic.variance), width * cell.variance_se)
                    self.assertLess(abs(cell.mse - cell.analytic.mse), width * cell.mse_se)

    def test_exponential_is_more_efficient_than_gumbel(self) -> None:
        gumbel, exponential = mse_sweep(self.point, [0.0, 1.0], [100], K=4000, seed=13, target="Z")
        ratio = gumbel.mse / exponential.mse
        self.assertGreater(ratio, 0.85 * math.pi**2 / 6)
        self.assertLess(ratio, 1.15 * math.pi**2 / 6)

    def test_power_family_mse_is_smallest_near_exponential(self) -> None:
        alphas = [-0.25, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]
        M = 100
        cells = mse_sweep(self.point, alphas, [M], K=4000, seed=17, target="Z")
        by_alpha = {cell.alpha: cell for cell in cells}
        best = min(cells, key=lambda cell: cell.mse)
        self.assertGreaterEqual(best.alpha, 0.7)
        self.assertLessEqual(best.alpha, 1.3)
        self.assertLess(by_alpha[1.0].mse, by_alpha[0.0].mse)
        self.assertLess(by_alpha[1.0].mse, by_alpha[-0.25].mse)
        for cell in cells:
            with self.subTest(alpha=cell.alpha):
                self.assertFalse(cell.unstable)
                predicted = asymptotic_variance(TrickSpec.from_alpha(cell.alpha), 1.0) / M
                self.assertGreater(cell.mse / predicted, 0.8)
                self.assertLess(cell.mse / predicted, 1.2)

    def test_gumbel_log_variance_does_not_depend_on_Z(self) -> None:
        target = math.pi**2 / (6 * 20)
        for model, seed in ((self.point, 21), (pair_model(), 22)):
            e = replicate_estimates(model, TrickSpec.gumbel(), 20, 4000, seed, "lnZ")
            cell = summarize_cell(e, 0.0, 0.0, 20, "lnZ")
            self.assertLess(abs(cell.variance - target), 4 * cell.variance_se)

    def test_single_sample_Z_cells_are_unstable(self) -> None:
        with self.assertLogs("perturbmap_toolkit.tricks.mse_study", level="WARNING"):
            (cell,) = mse_sweep(self.point, [1.0], [1], K=50, seed=14, target="Z")
        self.assertTrue(cell.unstable)
        self.assertFalse(cell.analytic.valid)

    def test_non_finite_estimates_are_unstable(self) -> None:
        cell = summarize_cell(np.array([1.0, math.nan, 2.0]), 1.0, 0.5, 10, "lnZ")
        self.assertTrue(cell.unstable)

    def test_bad_target(self) -> None:
        with self.assertRaises(ValueError):
            mse_sweep(self.point, [0.0], [10], K=5, seed=0, target="f")


class BayesPosteriorTests(unittest.TestCase):
    def test_posterior_mean(self) -> None:
        self.assertAlmostEqual(bayes_posterior_mean([1.0, 1.0]), 1.0)
        values = [0.2, 0.4, 1.4]
        self.assertAlmostEqual(bayes_posterior_mean(values), 3 / 2.0, places=12)
        self.assertAlmostEqual(float(bayes_posterior(values).mean()), bayes_posterior_mean(values), places=12)

    def test_posterior_concentrates_on_Z(self) -> None:
        Z = 4.0
        times = derive_rng(15, "bayes").exponential(1.0 / Z, size=20000)
        posterior = bayes_posterior(times)
        low, high = posterior.interval(0.9999)
        self.assertLess(low, Z)
        self.assertGreater(high, Z)

    def test_invalid_samples(self) -> None:
        with self.assertRaises(ValueError):
            bayes_posterior_mean([])
        with self.assertRaises(ValueError):
            bayes_posterior([1.0, -1.0])
        with self.assertRaises(ValueError):
            bayes_posterior_mean([0.0, 1.0])


if __name__ == "__main__":
    unittest.main()
