"""
Trade network structure unit tests

"""

import itertools
import os
import sys
import unittest

import numpy as np

# Ensure the parent directory is in sys.path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from Flows import TradePattern  # noqa: E402
from NetStruct import CycleError, GraphShapeError, TradeGraph, is_dag, pattern_diff, topological_order  # noqa: E402


def has_cycle_brute_force(n, edges):
    """tries every ordered sequence of distinct nodes as a closed walk"""
    for size in range(2, n + 1):
        for nodes in itertools.permutations(range(n), size):
            if all((nodes[k], nodes[(k + 1) % size]) in edges for k in range(size)):
                return True
    return False


class IsDagTests(unittest.TestCase):

    def test_examples(self):
        cases = [
            ('two-country loop', [[0, 1], [1, 0]], False),
            ('domestic flows only', [[5, 0], [0, 5]], True),
            ('chain of exports', [[1, 0, 0], [2, 1, 0], [0, 3, 1]], True),
            ('three-country loop', [[0, 0, 1], [1, 0, 0], [0, 1, 0]], False),
            ('below tolerance', [[0, 1e-12], [1, 0]], True),
        ]
        for desc, flows, expected in cases:
            with self.subTest(msg=desc):
                acyclic, witness = is_dag(flows)
                self.assertEqual(acyclic, expected)
                if expected:
                    self.assertIsNone(witness)
                else:
                    self.assertEqual(witness[0], witness[-1])

    def test_witness_is_a_cycle(self):
        flows = np.zeros((4, 4))
        flows[1, 0] = flows[2, 1] = flows[0, 2] = flows[3, 0] = 1.0
        acyclic, witness = is_dag(flows)
        self.assertFalse(acyclic)
        graph = TradeGraph.from_flows(flows)
        for u, v in zip(witness, witness[1:]):
            self.assertIn((u, v), graph.edges)
        self.assertEqual(set(witness), {0, 1, 2})

    def test_matches_brute_force(self):
        """Every 0/1 pattern on three countries and a sample on four"""
        n = 3
        off_diagonal = [(j, i) for j in range(n) for i in range(n) if i != j]
        for mask in range(1 << len(off_diagonal)):
            edges = {e for k, e in enumerate(off_diagonal) if mask >> k & 1}
            flows = np.zeros((n, n))
            for j, i in edges:
                flows[i, j] = 1.0
            with self.subTest(n=n, edges=sorted(edges)):
                self.assertEqual(is_dag(flows)[0], not has_cycle_brute_force(n, edges))

        rng = np.random.default_rng(42)
        for k in range(300):
            flows = (rng.random((4, 4)) < 0.3).astype(float)
            edges = {(j, i) for i in range(4) for j in range(4) if i != j and flows[i, j] > 0}
            with self.subTest(n=4, sample=k):
                self.assertEqual(is_dag(flows)[0], not has_cycle_brute_force(4, edges))

    def test_bad_matrices(self):
        cases = [
            ('not square', [[0, 1, 0], [1, 0, 0]]),
            ('negative entry', [[0, -1], [0, 0]]),
            ('vector', [1, 2, 3]),
        ]
        for desc, flows in cases:
            with self.subTest(msg=desc):
                with self.assertRaises(GraphShapeError):
                    is_dag(flows)


class TopologicalOrderTests(unittest.TestCase):

    def test_order(self):
        graph = TradeGraph(4, frozenset({(2, 0), (0, 1), (3, 1)}))
        order = topological_order(graph)
        self.assertEqual(order, (2, 0, 3, 1))
        for j, i in graph.edges:
            self.assertLess(order.index(j), order.index(i))

    def test_cycle(self):
        graph = TradeGraph(3, frozenset({(0, 1), (1, 2), (2, 0)}))
        with self.assertRaises(CycleError) as ctx:
            topological_order(graph)
        self.assertEqual(len(ctx.exception.witness), 4)
        self.assertIn('directed cycle', str(ctx.exception))

    def test_self_edge(self):
        with self.assertRaises(GraphShapeError):
            TradeGraph(2, frozenset({(1, 1)}))

    def test_from_pattern_drops_domestic_links(self):
        pattern = TradePattern.from_links(3, [(0, 0), (0, 2), (1, 1), (1, 2), (2, 2)])
        graph = TradeGraph.from_pattern(pattern)
        self.assertEqual(graph.edges, frozenset({(0, 2), (1, 2)}))
        self.assertEqual(topological_order(graph), (0, 1, 2))


class PatternDiffTests(unittest.TestCase):

    def test_diff(self):
        before = TradePattern.from_links(3, [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)])
        after = TradePattern.from_links(3, [(0, 0), (0, 2), (1, 1), (1, 2), (2, 2)])
        diff = pattern_diff(before, after)
        self.assertEqual(diff.removed, frozenset({(0, 1)}))
        self.assertEqual(diff.added, frozenset({(0, 2)}))
        self.assertFalse(diff.empty)
        self.assertEqual(diff.describe(['EU', 'USA', 'China']), 'removed EU->USA; added EU->China')

    def test_no_change(self):
        pattern = TradePattern.full(2)
        diff = pattern_diff(pattern, pattern)
        self.assertTrue(diff.empty)
        self.assertEqual(diff.describe(['A', 'B']), 'no change')

    def test_size_mismatch(self):
        with self.assertRaises(GraphShapeError):
            pattern_diff(TradePattern.full(2), TradePattern.full(3))


if __name__ == "__main__":
    unittest.main()
