"""
Structure of cross-border trade networks

Countries are nodes and every cross-border flow above the flow tolerance is
a directed edge from producer to market. Domestic flows never become edges.
With strictly positive tariffs an equilibrium network has no directed cycle;
these helpers check that, order the countries along the flows and compare
two trade patterns.

"""

from __future__ import annotations  # for forward references in type hints

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import networkx as nx
import numpy as np

from Flows import DEFAULT_FLOW_TOL, TradePattern


# Logger; may be overridden by users of this module
Log = logging.getLogger(__file__)
Log_Default_Format = '%(levelname)s %(name)s: %(message)s'


class GraphShapeError(ValueError):
    """Raised when a flow matrix or pattern pair has the wrong shape"""
    pass


class CycleError(Exception):
    """Raised when a trade graph that must be acyclic has a cycle"""

    def __init__(self, witness: tuple[int, ...]) -> None:
        self.witness = witness
        super().__init__(f'trade graph has a directed cycle: {" -> ".join(str(k) for k in witness)}')


@dataclass(frozen=True)
class TradeGraph:
    n: int
    edges: frozenset[tuple[int, int]]  # (producer, market), never a self-edge

    def __post_init__(self) -> None:
        for j, i in self.edges:
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise GraphShapeError(f'edge ({j}, {i}) outside of {self.n} countries')
            if i == j:
                raise GraphShapeError(f'self-edge at country {j}')

    @classmethod
    def from_flows(cls, flows: np.ndarray | Sequence[Sequence[float]], tol: float = DEFAULT_FLOW_TOL) -> TradeGraph:
        q = np.asarray(flows, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise GraphShapeError(f'flow matrix must be square; got shape {q.shape}')
        if (q < 0).any():
            raise GraphShapeError('flow matrix has negative entries')
        n = q.shape[0]
        return cls(n, frozenset((j, i) for i in range(n) for j in range(n) if i != j and q[i, j] > tol))

    @classmethod
    def from_pattern(cls, pattern: TradePattern) -> TradeGraph:
        return cls(pattern.n, frozenset((j, i) for j, i in pattern.links if i != j))

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(sorted(self.edges))
        return graph

    def cycle(self) -> Optional[tuple[int, ...]]:
        """one directed cycle as a closed node sequence, or None"""
        try:
            found = nx.find_cycle(self.to_networkx())
        except nx.NetworkXNoCycle:
            return None
        return tuple(u for u, _ in found) + (found[0][0],)


def is_dag(flows: np.ndarray | Sequence[Sequence[float]], tol: float = DEFAULT_FLOW_TOL) -> tuple[bool, Optional[tuple[int, ...]]]:
    """(True, None) when the cross-border trade graph is acyclic, else (False, cycle)"""
    witness = TradeGraph.from_flows(flows, tol).cycle()
    return witness is None, witness


def topological_order(graph: TradeGraph) -> tuple[int, ...]:
    """every edge goes forward; among available countries the lowest index comes first"""
    try:
        return tuple(nx.lexicographical_topological_sort(graph.to_networkx()))
    except nx.NetworkXUnfeasible:
        witness = graph.cycle() or ()
        Log.debug(f'no topological order; cycle through {witness}')
        raise CycleError(witness)


@dataclass(frozen=True)
class PatternDiff:
    added: frozenset[tuple[int, int]]
    removed: frozenset[tuple[int, int]]

    @property
    def empty(self) -> bool:
        return not self.added and not self.removed

    def describe(self, ids: Sequence[str]) -> str:
        parts = []
        if self.removed:
            parts.append('removed ' + ', '.join(f'{ids[j]}->{ids[i]}' for j, i in sorted(self.removed, key=lambda x: (x[1], x[0]))))
        if self.added:
            parts.append('added ' + ', '.join(f'{ids[j]}->{ids[i]}' for j, i in sorted(self.added, key=lambda x: (x[1], x[0]))))
        return '; '.join(parts) or 'no change'


def pattern_diff(a: TradePattern, b: TradePattern) -> PatternDiff:
    """links gained and lost going from pattern a to pattern b"""
    if a.n != b.n:
        raise GraphShapeError(f'patterns cover different country sets ({a.n} vs {b.n})')
    return PatternDiff(added=b.links - a.links, removed=a.links - b.links)
