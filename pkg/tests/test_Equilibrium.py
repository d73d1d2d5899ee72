"""
Equilibrium solver unit tests

"""

import os
import sys
import unittest
from unittest.mock import patch as unittest_mock_patch

import numpy as np

# Ensure the parent directory is in sys.path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from Curves import Country, Curve, CurveKind, Economy, EconomyValidationError, TariffMatrix  # noqa: E402
from Equilibrium import (ConvergenceError, EnumerationLimitError, IndeterminatePatternError,  # noqa: E402
                         InfeasiblePatternError, SolverMethod, SolverOptions, SolverOptionsError,
                         argmax_support, best_response, effective_revenue, enumerate_equilibria,
                         equilibrium_from_flows, solve, solve_equilibrium, solve_fixed_network,
                         verify_selection)
from Flows import TradePattern  # noqa: E402
from NetStruct import is_dag  # noqa: E402


EU, USA, CHINA = 0, 1, 2
P = 39.75 / 8.45  # common price of the 10 percent Chinese tariff economy


def country(cid, supply, demand):
    """supply and demand as (intercept, slope) pairs"""
    return Country(cid, cid, Curve.linear(CurveKind.SUPPLY, *supply), Curve.linear(CurveKind.DEMAND, *demand))


def wine_economy(usa_supply=3.0, usa_tariff_on_eu=0.0):
    countries = (
        country('EU', (2, 0.5), (8, 1)),
        country('USA', (usa_supply, 0.5), (7, 0.8)),
        country('China', (5, 1), (8, 1)),
    )
    tariffs = [[0, 0, 0], [usa_tariff_on_eu, 0, 0], [0.1, 0.1, 0]]
    return Economy(countries, TariffMatrix.from_rows(tariffs))


def zero_tariff_economy():
    countries = (
        country('EU', (2, 0.5), (8, 1)),
        country('USA', (3, 0.5), (7, 0.8)),
        country('China', (4, 1), (9, 1)),
    )
    return Economy(countries, TariffMatrix.zeros(3))


def random_economy(rng, n, zero_tariffs=False):
    countries = tuple(
        country(f'C{k}', (rng.uniform(1, 5), rng.uniform(0.3, 1.5)), (rng.uniform(6, 10), rng.uniform(0.3, 1.5)))
        for k in range(n)
    )
    if zero_tariffs:
        return Economy(countries, TariffMatrix.zeros(n))
    rows = rng.uniform(0.01, 0.5, size=(n, n))
    np.fill_diagonal(rows, 0.0)
    return Economy(countries, TariffMatrix.from_rows(rows.tolist()))


TABLE1_NETWORK = TradePattern.from_links(3, [(EU, EU), (EU, USA), (USA, USA), (USA, CHINA), (CHINA, CHINA)])
VARIANT_NETWORK = TradePattern.from_links(3, [(EU, EU), (EU, CHINA), (USA, USA), (CHINA, CHINA)])
FIXED = SolverOptions(method=SolverMethod.FIXED_NETWORK)
EXACT = SolverOptions(method=SolverMethod.FIXED_NETWORK, exact=True)


class SolverOptionsTests(unittest.TestCase):

    def test_tolerance_defaults(self):
        self.assertEqual(SolverOptions().tolerance, 1e-6)
        self.assertEqual(FIXED.tolerance, 1e-9)
        self.assertEqual(SolverOptions(method='enumerate').tolerance, 1e-9)
        self.assertEqual(SolverOptions(price_tol=1e-4).tolerance, 1e-4)

    def test_out_of_range(self):
        cases = [
            ('unknown method', dict(method='newton')),
            ('zero damping', dict(damping=0)),
            ('damping above one', dict(damping=1.5)),
            ('negative price tolerance', dict(price_tol=-1e-6)),
            ('zero tie tolerance', dict(tie_tol=0)),
            ('no iterations', dict(max_iterations=0)),
        ]
        for desc, kwargs in cases:
            with self.subTest(msg=desc):
                with self.assertRaises(SolverOptionsError):
                    SolverOptions(**kwargs)

    def test_replace(self):
        options = SolverOptions().replace(method='enumerate', initial_prices=[1, 2])
        self.assertIs(options.method, SolverMethod.ENUMERATE)
        self.assertEqual(options.initial_prices, (1.0, 2.0))


class EffectiveRevenueTests(unittest.TestCase):

    def test_revenue_and_argmax(self):
        view = effective_revenue((4.0, 6.0, 4.0), TariffMatrix.zeros(3), EU)
        self.assertEqual(view.revenues, (4.0, 6.0, 4.0))
        self.assertEqual(view.best, 6.0)
        self.assertEqual(view.argmax, frozenset({USA}))

    def test_tariffs_equalize_revenue(self):
        """With China's tariff every destination pays the EU the same"""
        view = effective_revenue((P, P, 1.1 * P), wine_economy().tariffs, EU)
        self.assertEqual(view.argmax, frozenset({EU, USA, CHINA}))
        self.assertAlmostEqual(view.best, P, places=12)

    def test_negative_price(self):
        with self.assertRaises(ValueError):
            effective_revenue((1.0, -1.0), TariffMatrix.zeros(2), 0)


class BestResponseTests(unittest.TestCase):

    def test_caps_and_indifference(self):
        economy = Economy(wine_economy().countries, TariffMatrix.zeros(3))
        response = best_response(economy, (4.0, 6.0, 4.0), 4.0, EU)
        self.assertEqual(response.free, (True, False, True))
        self.assertAlmostEqual(response.lower[USA], 5 / 1.3, places=12)
        self.assertAlmostEqual(response.upper[USA], 5 / 1.3, places=12)
        self.assertEqual(response.lower[EU], 0.0)
        self.assertAlmostEqual(response.upper[EU], 4.0, places=12)
        self.assertAlmostEqual(response.upper[CHINA], 4.0, places=12)

    def test_unprofitable_destinations(self):
        response = best_response(wine_economy(), (3.0, 3.0, 3.0), 5.0, EU)
        self.assertEqual(response.upper, (0.0, 0.0, 0.0))
        self.assertEqual(response.free, (False, False, False))


class FixedNetworkTests(unittest.TestCase):

    def test_fixed_network_flows(self):
        """The fixed network reproduces the common price and pins every link"""
        for desc, options in (('exact', EXACT), ('floating point', FIXED)):
            with self.subTest(msg=desc):
                eq = solve_fixed_network(wine_economy(), TABLE1_NETWORK, options)
                np.testing.assert_allclose(eq.consumer_prices, [P, P, 1.1 * P], atol=1e-9)
                np.testing.assert_allclose(eq.producer_prices, [P, P, 1.1 * P], atol=1e-9)
                self.assertAlmostEqual(eq.flows[EU, EU], 3.295858, places=6)
                self.assertAlmostEqual(eq.flows[USA, EU], 2.112426, places=6)
                self.assertAlmostEqual(eq.flows[USA, USA], 0.757396, places=6)
                self.assertAlmostEqual(eq.flows[CHINA, USA], 2.650888, places=6)
                self.assertAlmostEqual(eq.flows[CHINA, CHINA], 0.174556, places=6)
                self.assertEqual(eq.pattern, TABLE1_NETWORK)
                self.assertFalse(eq.diagnostics.multiple_flows)
                self.assertEqual(eq.diagnostics.method, 'fixed_network')
                self.assertLess(eq.diagnostics.max_clearing_residual, 1e-9)

    def test_fixed_network_is_an_equilibrium(self):
        eq = solve_fixed_network(wine_economy(), TABLE1_NETWORK, EXACT)
        self.assertEqual(verify_selection(wine_economy(), eq), [])

    def test_variant_network(self):
        economy = wine_economy(usa_supply=4.0, usa_tariff_on_eu=0.2)
        eq = solve_fixed_network(economy, VARIANT_NETWORK, EXACT)
        np.testing.assert_allclose(eq.consumer_prices, [25 / 5.2, 5.1538462, 5.2884615], atol=1e-7)
        self.assertAlmostEqual(eq.flows[EU, EU], 3.1923, places=4)
        self.assertAlmostEqual(eq.flows[CHINA, EU], 2.4231, places=4)
        self.assertAlmostEqual(eq.flows[USA, USA], 2.3077, places=4)
        self.assertAlmostEqual(eq.flows[CHINA, CHINA], 0.2885, places=4)
        self.assertEqual(verify_selection(economy, eq), [])

    def test_negative_flow(self):
        """China cannot sell to the EU at the price the EU's own producers set"""
        network = TradePattern.from_links(3, [(EU, EU), (CHINA, EU)])
        with self.assertRaises(InfeasiblePatternError) as ctx:
            solve_fixed_network(wine_economy(), network, EXACT)
        self.assertEqual(ctx.exception.link, (CHINA, EU))
        self.assertAlmostEqual(ctx.exception.value, -0.75, places=9)
        self.assertIn('China->EU', str(ctx.exception))

    def test_indeterminate(self):
        cases = [
            ('empty pattern', TradePattern.from_links(3, [])),
            ('cycle between two countries', TradePattern.from_links(3, [(0, 0), (0, 1), (1, 0), (1, 1)])),
        ]
        for desc, network in cases:
            for mode, options in (('exact', EXACT), ('floating point', FIXED)):
                with self.subTest(msg=desc, mode=mode):
                    with self.assertRaises(IndeterminatePatternError):
                        solve_fixed_network(zero_tariff_economy(), network, options)

    def test_unserved_market_and_idle_producer(self):
        eq = solve_fixed_network(wine_economy(), TradePattern.from_links(3, [(EU, EU), (USA, USA)]), EXACT)
        self.assertEqual(eq.consumer_prices[CHINA], 8.0)
        self.assertEqual(eq.producer_prices[CHINA], 5.0)
        self.assertAlmostEqual(eq.consumer_prices[EU], 4.0, places=12)

    def test_wrong_pattern_size(self):
        with self.assertRaises(ValueError):
            solve_fixed_network(wine_economy(), TradePattern.full(2), FIXED)

    def test_invalid_economy(self):
        economy = wine_economy().with_tariff(0, 1, -0.5)
        with self.assertRaises(EconomyValidationError):
            solve_fixed_network(economy, TABLE1_NETWORK, FIXED)

    def test_piecewise_curves_use_newton(self):
        """Kinked curves are solved segment by segment, even in exact mode"""
        eu = Country('EU', 'EU', Curve.piecewise(CurveKind.SUPPLY, [(0, 2), (2, 3)], terminal_slope=1),
                     Curve.linear(CurveKind.DEMAND, 8, 1))
        home = Country('H', 'H', Curve.linear(CurveKind.SUPPLY, 3, 1), Curve.linear(CurveKind.DEMAND, 7, 1))
        economy = Economy((eu, home), TariffMatrix.zeros(2))
        network = TradePattern.from_links(2, [(0, 0), (0, 1), (1, 1)])
        with unittest_mock_patch('Equilibrium.Log.info') as mock_info:
            eq = solve_fixed_network(economy, network, EXACT)
        mock_info.assert_called_once()
        self.assertLess(eq.diagnostics.max_clearing_residual, 1e-9)
        self.assertAlmostEqual(eq.consumer_prices[0], eq.producer_prices[0], places=9)
        self.assertAlmostEqual(eq.consumer_prices[1], eq.producer_prices[0], places=9)


class SolveEquilibriumTests(unittest.TestCase):

    def test_common_price(self):
        """All three countries trade at P, China pays its tariff on top"""
        eq = solve(wine_economy())
        np.testing.assert_allclose(eq.consumer_prices, [P, P, 1.1 * P], atol=1e-6)
        np.testing.assert_allclose(eq.producer_prices, [P, P, 1.1 * P], atol=1e-6)
        np.testing.assert_allclose(
            eq.flows,
            [[3.295858, 0, 0], [0, 2.869822, 0], [2.112426, 0.538462, 0.174556]],
            atol=1e-5)
        self.assertTrue(eq.diagnostics.multiple_flows)
        self.assertEqual(verify_selection(wine_economy(), eq), [])

    def test_common_price_pattern_solves_as_fixed_network(self):
        """The representative has five links and solving on them gives back the prices"""
        economy = wine_economy()
        eq = solve(economy)
        self.assertEqual(eq.pattern.m, 5)
        self.assertEqual(eq.flows[USA, EU], 0.0)
        again = solve_fixed_network(economy, eq.pattern, EXACT)
        np.testing.assert_allclose(again.consumer_prices, eq.consumer_prices, atol=1e-8)
        np.testing.assert_allclose(again.flows, eq.flows, atol=1e-6)

    def test_tariff_on_eu_wine(self):
        economy = wine_economy(usa_supply=3.0, usa_tariff_on_eu=0.2)
        eq = solve(economy)
        np.testing.assert_allclose(eq.consumer_prices, [P, P, 1.1 * P], atol=1e-6)
        self.assertEqual(eq.pattern.links,
                         frozenset({(EU, EU), (EU, CHINA), (USA, USA), (USA, CHINA), (CHINA, CHINA)}))

    def test_variant_is_unique(self):
        economy = wine_economy(usa_supply=4.0, usa_tariff_on_eu=0.2)
        eq = solve(economy)
        np.testing.assert_allclose(eq.consumer_prices, [25 / 5.2, 5.1538462, 5.2884615], atol=1e-6)
        self.assertEqual(eq.pattern, VARIANT_NETWORK)
        self.assertFalse(eq.diagnostics.multiple_flows)

    def test_zero_tariffs_single_price(self):
        eq = solve(zero_tariff_economy())
        np.testing.assert_allclose(eq.consumer_prices, [53 / 11] * 3, atol=1e-6)
        np.testing.assert_allclose(eq.producer_prices, [53 / 11] * 3, atol=1e-6)

    def test_single_country_autarky(self):
        economy = Economy((country('EU', (2, 0.5), (8, 1)),), TariffMatrix.zeros(1))
        eq = solve(economy)
        self.assertAlmostEqual(eq.consumer_prices[0], 4.0, places=9)
        self.assertAlmostEqual(eq.flows[0, 0], 4.0, places=9)

    def test_warm_start(self):
        options = SolverOptions(initial_prices=(4.7, 4.7, 5.2))
        eq = solve_equilibrium(wine_economy(), options)
        np.testing.assert_allclose(eq.consumer_prices, [P, P, 1.1 * P], atol=1e-6)
        with self.assertRaises(SolverOptionsError):
            solve_equilibrium(wine_economy(), SolverOptions(initial_prices=(1.0, 2.0)))

    def test_iteration_budget(self):
        options = SolverOptions(max_iterations=1, fallback=False)
        with self.assertRaises(ConvergenceError) as ctx:
            solve(wine_economy(), options)
        self.assertEqual(ctx.exception.iterations, 1)
        self.assertEqual(len(ctx.exception.residuals), 3)
        self.assertIn('enumerate', str(ctx.exception))

        with unittest_mock_patch('Equilibrium.Log.info') as mock_info:
            eq = solve(wine_economy(), options.replace(fallback=True))
        mock_info.assert_called_once()
        self.assertEqual(eq.diagnostics.method, 'enumerate')
        np.testing.assert_allclose(eq.consumer_prices, [P, P, 1.1 * P], atol=1e-9)

    def test_dispatch(self):
        eq = solve(wine_economy(), FIXED, fixed_network=TABLE1_NETWORK)
        self.assertEqual(eq.pattern, TABLE1_NETWORK)
        with self.assertRaises(SolverOptionsError):
            solve(wine_economy(), FIXED)
        eq = solve(wine_economy(), SolverOptions(method=SolverMethod.ENUMERATE))
        self.assertEqual(eq.diagnostics.method, 'enumerate')


class EnumerationTests(unittest.TestCase):

    def test_single_equilibrium(self):
        found = enumerate_equilibria(wine_economy())
        self.assertEqual(len(found), 1)
        np.testing.assert_allclose(found[0].consumer_prices, [P, P, 1.1 * P], atol=1e-9)

    def test_symmetric_countries_do_not_trade(self):
        """Identical countries without tariffs are indifferent; the representative keeps trade at home"""
        twin = (country('A', (2, 1), (8, 1)), country('B', (2, 1), (8, 1)))
        found = enumerate_equilibria(Economy(twin, TariffMatrix.zeros(2)))
        self.assertEqual(len(found), 1)
        np.testing.assert_allclose(found[0].consumer_prices, [5.0, 5.0], atol=1e-9)
        np.testing.assert_allclose(found[0].flows, [[3.0, 0.0], [0.0, 3.0]], atol=1e-9)
        self.assertTrue(found[0].diagnostics.multiple_flows)

    def test_tariff_on_eu_wine_confirmed_by_enumeration(self):
        """Exhaustive search finds only the five-link equilibrium at the common price"""
        found = enumerate_equilibria(wine_economy(usa_supply=3.0, usa_tariff_on_eu=0.2))
        self.assertEqual(len(found), 1)
        np.testing.assert_allclose(found[0].consumer_prices, [P, P, 1.1 * P], atol=1e-9)
        self.assertEqual(found[0].pattern.links,
                         frozenset({(EU, EU), (EU, CHINA), (USA, USA), (USA, CHINA), (CHINA, CHINA)}))
        self.assertEqual(verify_selection(wine_economy(3.0, 0.2), found[0]), [])

    def test_country_limit(self):
        rng = np.random.default_rng(5)
        with self.assertRaises(EnumerationLimitError):
            enumerate_equilibria(random_economy(rng, 5))


class VerifySelectionTests(unittest.TestCase):

    def test_printed_flows_violate_selection(self):
        """US wine fetches more abroad than at home under the printed flows"""
        economy = wine_economy(usa_supply=3.0, usa_tariff_on_eu=0.2)
        flows = np.zeros((3, 3))
        flows[EU, EU] = 3.1923076923076925
        flows[CHINA, EU] = 2.4230769230769234
        flows[USA, USA] = 3.0769230769230766
        flows[CHINA, CHINA] = 0.28846153846153855
        eq = equilibrium_from_flows(economy, flows)
        self.assertEqual(eq.diagnostics.method, 'flows')
        self.assertAlmostEqual(eq.producer_prices[USA], 4.5384615, places=6)

        violations = verify_selection(economy, eq)
        self.assertTrue(violations)
        self.assertEqual({v.producer for v in violations}, {USA})
        better = [v for v in violations if v.reason == 'higher effective revenue']
        self.assertEqual({v.destination for v in better}, {EU, CHINA})
        for v in better:
            with self.subTest(destination=v.destination):
                self.assertAlmostEqual(v.gap, 0.269231, places=5)
        self.assertIn('producer USA, destination EU, gap 0.269231', better[0].describe(economy.ids))

    def test_idle_producer_with_profitable_market(self):
        flows = np.zeros((3, 3))
        flows[EU, EU] = 1.0
        eq = equilibrium_from_flows(wine_economy(), flows)
        violations = verify_selection(wine_economy(), eq)
        reasons = {(v.producer, v.reason) for v in violations}
        self.assertIn((USA, 'unserved profitable destination'), reasons)

    def test_bad_flow_matrix(self):
        with self.assertRaises(ValueError):
            equilibrium_from_flows(wine_economy(), np.zeros((2, 2)))
        with self.assertRaises(ValueError):
            equilibrium_from_flows(wine_economy(), -np.ones((3, 3)))

    def test_argmax_support(self):
        support = argmax_support(wine_economy(), (P, P, 1.1 * P), (5.4, 3.4, 0.17))
        self.assertEqual(support.destinations(EU), {EU, USA, CHINA})
        self.assertEqual(support.destinations(CHINA), {CHINA})
        self.assertEqual(argmax_support(wine_economy(), (P, P, 1.1 * P), (0.0, 0.0, 0.0)).m, 0)


class EquilibriumPropertyTests(unittest.TestCase):

    def test_random_economies(self):
        """Solutions clear, pass selection and ship along an acyclic network"""
        rng = np.random.default_rng(20240611)
        for k in range(200):
            economy = random_economy(rng, 3 if k % 4 else 4)
            with self.subTest(economy=k):
                eq = solve(economy)
                self.assertLessEqual(eq.diagnostics.max_clearing_residual, 1e-6)
                self.assertEqual(verify_selection(economy, eq), [])
                acyclic, witness = is_dag(eq.flows)
                self.assertTrue(acyclic, msg=f'cycle {witness}')
                self.assertTrue((eq.flows >= 0).all())

    def test_tatonnement_matches_enumeration(self):
        rng = np.random.default_rng(7)
        for k in range(100):
            economy = random_economy(rng, 3)
            with self.subTest(economy=k):
                eq = solve(economy)
                found = enumerate_equilibria(economy)
                self.assertTrue(found)
                self.assertTrue(any(eq.same_prices(other, 1e-5) for other in found))

    def test_fixed_network_reproduces_solution(self):
        """Solving on the equilibrium's own links gives back its prices"""
        rng = np.random.default_rng(11)
        for k in range(50):
            economy = random_economy(rng, 3)
            with self.subTest(economy=k):
                eq = solve(economy)
                again = solve_fixed_network(economy, eq.pattern, EXACT)
                np.testing.assert_allclose(again.consumer_prices, eq.consumer_prices, rtol=1e-8, atol=1e-8)

    def test_zero_tariffs_law_of_one_price(self):
        rng = np.random.default_rng(3)
        for k in range(30):
            economy = random_economy(rng, 3, zero_tariffs=True)
            with self.subTest(economy=k):
                eq = solve(economy)
                traded = eq.production > 1e-9
                prices = np.concatenate([eq.consumer_prices[eq.consumption > 1e-9], eq.producer_prices[traded]])
                self.assertLessEqual(prices.max() - prices.min(), 1e-6 * (1 + prices.max()))


if __name__ == "__main__":
    unittest.main()
