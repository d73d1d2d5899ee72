"""
Trade patterns and flow matrices with prescribed margins

A flow matrix q has q[i][j] = quantity produced in j and consumed in i. Given
producer supplies (column sums), market demands (row sums) and a support of
allowed links, these helpers decide feasibility with a max-flow on the
bipartite support graph and pick representative vertices of the flow
polytope with transportation LPs.

"""

from __future__ import annotations  # for forward references in type hints

import hashlib
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import networkx as nx
import numpy as np
from networkx.algorithms.flow import edmonds_karp
from scipy.optimize import linprog


# Logger; may be overridden by users of this module
Log = logging.getLogger(__file__)
Log_Default_Format = '%(levelname)s %(name)s: %(message)s'

DEFAULT_FLOW_TOL = 1e-9
LP_ACCURACY = 1e-7  # relative to the largest margin; HiGHS feasibility tolerance

_SOURCE = 'source'
_SINK = 'sink'


class InfeasibleFlowsError(Exception):
    """Raised when no flow matrix meets the margins on the given support"""

    def __init__(self, certificate: FlowFeasibility) -> None:
        self.certificate = certificate
        super().__init__(certificate.describe())


@dataclass(frozen=True)
class TradePattern:
    """set of active (producer, market) links over n countries"""
    n: int
    links: frozenset[tuple[int, int]]

    @classmethod
    def from_links(cls, n: int, links: Iterable[tuple[int, int]]) -> TradePattern:
        links = frozenset((int(j), int(i)) for j, i in links)
        for j, i in links:
            if not (0 <= j < n and 0 <= i < n):
                raise ValueError(f'link ({j}, {i}) outside of {n} countries')
        return cls(n, links)

    @classmethod
    def from_flows(cls, flows: np.ndarray, tol: float = DEFAULT_FLOW_TOL) -> TradePattern:
        flows = np.asarray(flows, dtype=float)
        n = flows.shape[0]
        return cls(n, frozenset((j, i) for i in range(n) for j in range(n) if flows[i, j] > tol))

    @classmethod
    def full(cls, n: int) -> TradePattern:
        return cls(n, frozenset((j, i) for i in range(n) for j in range(n)))

    @property
    def m(self) -> int:
        return len(self.links)

    def sorted_links(self) -> list[tuple[int, int]]:
        """links ordered by (market, producer), the order of the flow matrix entries"""
        return sorted(self.links, key=lambda link: (link[1], link[0]))

    def destinations(self, producer: int) -> set[int]:
        return {i for j, i in self.links if j == producer}

    def sources(self, market: int) -> set[int]:
        return {j for j, i in self.links if i == market}

    def identifier(self) -> str:
        """stable short hash of the sorted link list"""
        text = ','.join(f'{j}>{i}' for j, i in self.sorted_links())
        hasher = hashlib.md5()  # stable naming only, not security
        hasher.update(f'{self.n}:{text}'.encode('utf-8'))
        return hasher.hexdigest()[:12]

    def describe(self, ids: Sequence[str]) -> list[str]:
        return [f'{ids[j]}->{ids[i]}' for j, i in self.sorted_links()]

    def __or__(self, other: TradePattern) -> TradePattern:
        if other.n != self.n:
            raise ValueError(f'cannot join patterns over {self.n} and {other.n} countries')
        return TradePattern(self.n, self.links | other.links)

    def __contains__(self, link: object) -> bool:
        return link in self.links

    def __iter__(self) -> Iterator[tuple[int, int]]:
        yield from self.sorted_links()

    def __len__(self) -> int:
        return self.m


@dataclass(frozen=True, eq=False)
class FlowFeasibility:
    """
    Outcome of a margin feasibility check. flows always holds the best-effort
    (maximum) assignment; when infeasible, cut lists producers whose supply
    exceeds the demand of every market they can reach.
    """
    feasible: bool
    flows: np.ndarray
    cut: tuple[int, ...] = ()
    reason: str = ''
    shipped: float = 0.0
    total_supply: float = 0.0

    def describe(self) -> str:
        if self.feasible:
            return 'feasible'
        if self.cut:
            return f'{self.reason}: producers {list(self.cut)} (shipped {self.shipped:.6g} of {self.total_supply:.6g})'
        return self.reason


def _margins(supplies: Sequence[float], demands: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(supplies, dtype=float)
    d = np.asarray(demands, dtype=float)
    if s.shape != d.shape or s.ndim != 1:
        raise ValueError('supplies and demands must be vectors of equal length')
    if (s < 0).any() or (d < 0).any():
        raise ValueError('supplies and demands must be nonnegative')
    return s, d


def _support_graph(s: np.ndarray, d: np.ndarray, support: TradePattern) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_node(_SOURCE)
    graph.add_node(_SINK)
    for j, supply in enumerate(s):
        graph.add_edge(_SOURCE, ('p', j), capacity=float(supply))
    for i, demand in enumerate(d):
        graph.add_edge(('m', i), _SINK, capacity=float(demand))
    for j, i in support.links:
        graph.add_edge(('p', j), ('m', i))  # no capacity attribute: unbounded
    return graph


def feasible_flows(supplies: Sequence[float], demands: Sequence[float], support: TradePattern, tol: float = DEFAULT_FLOW_TOL) -> FlowFeasibility:
    """
    Finds q >= 0 with column sums = supplies and row sums = demands whose
    nonzero entries lie on the support, via max-flow on the bipartite graph.
    """
    s, d = _margins(supplies, demands)
    n = len(s)
    total_s, total_d = float(s.sum()), float(d.sum())
    scale = tol * (1.0 + max(total_s, total_d))

    graph = _support_graph(s, d, support)
    shipped, flow_dict = nx.maximum_flow(graph, _SOURCE, _SINK, flow_func=edmonds_karp)
    flows = np.zeros((n, n))
    for j, i in support.links:
        flows[i, j] = flow_dict[('p', j)].get(('m', i), 0.0)

    if abs(total_s - total_d) > scale:
        return FlowFeasibility(False, flows, (), 'global imbalance', shipped, total_s)

    if shipped < total_s - scale:
        _, (reachable, _) = nx.minimum_cut(graph, _SOURCE, _SINK, flow_func=edmonds_karp)
        cut = tuple(sorted(node[1] for node in reachable if isinstance(node, tuple) and node[0] == 'p' and s[node[1]] > scale))
        Log.debug(f'flows infeasible: shipped {shipped:.6g} of {total_s:.6g}, cut {cut}')
        return FlowFeasibility(False, flows, cut, 'supply exceeds reachable demand', shipped, total_s)

    return FlowFeasibility(True, flows, (), '', shipped, total_s)


def _transport_lp(s: np.ndarray, d: np.ndarray, links: list[tuple[int, int]]) -> tuple[np.ndarray, np.ndarray]:
    """equality constraints for producer and market margins over the link list"""
    n = len(s)
    a_eq = np.zeros((2 * n, len(links)))
    for k, (j, i) in enumerate(links):
        a_eq[j, k] = 1.0
        a_eq[n + i, k] = 1.0
    return a_eq, np.concatenate([s, d])


def _solve_lp(cost: np.ndarray, a_eq: np.ndarray, b_eq: np.ndarray, a_ub: np.ndarray | None = None, b_ub: np.ndarray | None = None) -> np.ndarray:
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method='highs')
    if res.status != 0:
        raise RuntimeError(f'transportation solve failed: {res.message}')
    return res.x


def _largest_margin(s: np.ndarray, d: np.ndarray) -> float:
    return float(max(s.max(initial=0.0), d.max(initial=0.0)))


def _to_matrix(n: int, links: list[tuple[int, int]], x: np.ndarray, tol: float, margin: float) -> np.ndarray:
    # entries under the LP accuracy are solver noise, not links
    tol = max(tol, LP_ACCURACY * (1.0 + margin))
    flows = np.zeros((n, n))
    for (j, i), value in zip(links, x):
        flows[i, j] = value if value > tol else 0.0
    return flows


def _checked(supplies: Sequence[float], demands: Sequence[float], support: TradePattern, tol: float) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]]]:
    s, d = _margins(supplies, demands)
    check = feasible_flows(s, d, support, tol)
    if not check.feasible:
        raise InfeasibleFlowsError(check)
    return s, d, support.sorted_links()


def _tie_break_cost(n: int, links: list[tuple[int, int]], reverse: bool) -> np.ndarray:
    # squared entry rank makes the cost strictly Monge, so the optimum is a
    # single vertex: lower producers pair with lower markets (or the reverse)
    rank = np.array([i * n + j for j, i in links], dtype=float)
    return rank ** 2 if reverse else -(rank ** 2)


def canonical_flows(supplies: Sequence[float], demands: Sequence[float], support: TradePattern, tol: float = DEFAULT_FLOW_TOL) -> np.ndarray:
    """
    Deterministic representative: minimum total cross-border quantity, then
    ties broken toward lexicographically earlier (market, producer) pairings.
    """
    s, d, links = _checked(supplies, demands, support, tol)
    n = len(s)
    if not links:
        return np.zeros((n, n))

    a_eq, b_eq = _transport_lp(s, d, links)
    cross = np.array([0.0 if i == j else 1.0 for j, i in links])
    x = _solve_lp(cross, a_eq, b_eq)
    exports = float(cross @ x)

    # second stage keeps exports at the optimum and applies the tie-break
    bound = np.array([exports])
    x = _solve_lp(_tie_break_cost(n, links, reverse=False), a_eq, b_eq, cross.reshape(1, -1), bound)
    return _to_matrix(n, links, x, tol, _largest_margin(s, d))


def reversed_flows(supplies: Sequence[float], demands: Sequence[float], support: TradePattern, tol: float = DEFAULT_FLOW_TOL) -> np.ndarray:
    """vertex of the flow polytope under the reversed tie-break, without the export stage"""
    s, d, links = _checked(supplies, demands, support, tol)
    n = len(s)
    if not links:
        return np.zeros((n, n))
    a_eq, b_eq = _transport_lp(s, d, links)
    x = _solve_lp(_tie_break_cost(n, links, reverse=True), a_eq, b_eq)
    return _to_matrix(n, links, x, tol, _largest_margin(s, d))


def flow_bounds(supplies: Sequence[float], demands: Sequence[float], support: TradePattern, weights: np.ndarray, tol: float = DEFAULT_FLOW_TOL) -> tuple[float, float]:
    """minimum and maximum of sum(weights * q) over every feasible flow matrix"""
    s, d, links = _checked(supplies, demands, support, tol)
    if not links:
        return 0.0, 0.0
    a_eq, b_eq = _transport_lp(s, d, links)
    w = np.array([weights[i][j] for j, i in links], dtype=float)
    lo = float(w @ _solve_lp(w, a_eq, b_eq))
    hi = float(w @ _solve_lp(-w, a_eq, b_eq))
    return lo, hi


def has_multiple_flows(supplies: Sequence[float], demands: Sequence[float], support: TradePattern, canonical: np.ndarray, tol: float = DEFAULT_FLOW_TOL) -> bool:
    """True when the reversed tie-break reaches a different vertex than the canonical one"""
    other = reversed_flows(supplies, demands, support, tol)
    scale = 1.0 + float(np.abs(canonical).max(initial=0.0))
    return not np.allclose(canonical, other, rtol=0.0, atol=1e3 * tol * scale)
