"""
Tariff equilibrium solvers

A tariff equilibrium is a consumer price vector p_c, a producer price vector
p_f and a flow matrix q (q[i][j] produced in j, consumed in i) such that

    p_c[i] = d_i(sum_j q[i][j])                     market clearing
    p_f[j] = s_j(sum_i q[i][j])                     supply consistency
    producers ship only to destinations with maximal effective revenue
    p_c[h] / (1 + t[h][j]), and p_f[j] equals that maximum when j produces

Four ways to get one:
    solve_fixed_network   exact solve for a given set of active links
    solve_equilibrium     damped tatonnement on p_c, finished off by an exact
                          solve of the price structure it settles on
    enumerate_equilibria  exhaustive oracle over destination sets (n <= 4)
    solve                 method dispatcher with enumeration fallback

"""

from __future__ import annotations  # for forward references in type hints

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np
import sympy

from Curves import (Economy, TariffMatrix, autarky_price, cap_quantity, curve_eval,
                    curve_inverse, extended_slope, extended_value, require_valid)
from Flows import (TradePattern, canonical_flows, feasible_flows,
                   has_multiple_flows)


# Logger; may be overridden by users of this module
Log = logging.getLogger(__file__)
Log_Default_Format = '%(levelname)s %(name)s: %(message)s'

ENUMERATION_LIMIT = 4  # countries; assignments grow as 2**(n*n)
SMOOTHING_START = 0.05  # relative revenue scale of the supply split
SMOOTHING_FLOOR = 1e-6
LEVEL_ITERATIONS = 400  # longest stay at one smoothing level
POLISH_CANDIDATES = 128  # destination-set assignments tried per polish
POLISH_MAX_SPREAD = 0.1  # widest near-tie slack used when guessing destination sets
NEWTON_MAX_STEPS = 100


class SolverOptionsError(ValueError):
    """Raised when solver options are out of range"""
    pass


class IndeterminatePatternError(Exception):
    """Raised when a fixed network does not pin down its flows"""
    pass


class InfeasiblePatternError(Exception):
    """Raised when a fixed network solves to a negative flow"""

    def __init__(self, message: str, link: tuple[int, int], value: float) -> None:
        self.link = link
        self.value = value
        super().__init__(message)


class ConvergenceError(Exception):
    """Raised when an iterative solver exhausts its iteration budget"""

    def __init__(self, message: str, residuals: Sequence[float] = (), iterations: int = 0) -> None:
        self.residuals = tuple(float(r) for r in residuals)
        self.iterations = iterations
        super().__init__(message)


class EnumerationLimitError(Exception):
    """Raised when the enumeration oracle is asked for too many countries"""
    pass


class SolverMethod(str, Enum):
    FIXED_NETWORK = 'fixed_network'
    TATONNEMENT = 'tatonnement'
    ENUMERATE = 'enumerate'


@dataclass(frozen=True)
class SolverOptions:
    price_tol: Optional[float] = None  # None: 1e-6 for tatonnement, 1e-9 otherwise
    tie_tol: float = 1e-7  # relative, for argmax membership
    flow_tol: float = 1e-9
    damping: float = 0.5
    max_iterations: int = 100000
    method: SolverMethod = SolverMethod.TATONNEMENT
    exact: bool = False  # rational arithmetic for linear fixed networks
    fallback: bool = True  # enumerate when tatonnement fails and n is small
    initial_prices: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, 'method', SolverMethod(self.method))
        except ValueError:
            raise SolverOptionsError(f'unknown solver method: {self.method!r}')
        if self.price_tol is not None and not self.price_tol > 0:
            raise SolverOptionsError('price tolerance must be positive')
        if not self.tie_tol > 0 or not self.flow_tol > 0:
            raise SolverOptionsError('tolerances must be positive')
        if not 0 < self.damping <= 1:
            raise SolverOptionsError('damping must be in (0, 1]')
        if self.max_iterations < 1:
            raise SolverOptionsError('max_iterations must be at least 1')
        if self.initial_prices is not None:
            object.__setattr__(self, 'initial_prices', tuple(float(p) for p in self.initial_prices))

    @property
    def tolerance(self) -> float:
        """resolved price tolerance"""
        if self.price_tol is not None:
            return self.price_tol
        return 1e-6 if self.method is SolverMethod.TATONNEMENT else 1e-9

    def replace(self, **changes) -> SolverOptions:
        return replace(self, **changes)


@dataclass(frozen=True)
class SolverDiagnostics:
    max_clearing_residual: float
    max_selection_slack: float
    iterations: int
    multiple_flows: bool
    method: str


@dataclass(frozen=True, eq=False)
class Equilibrium:
    country_ids: tuple[str, ...]
    consumer_prices: np.ndarray
    producer_prices: np.ndarray
    flows: np.ndarray
    pattern: TradePattern
    diagnostics: SolverDiagnostics

    def __post_init__(self) -> None:
        for name in ('consumer_prices', 'producer_prices', 'flows'):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return len(self.country_ids)

    @property
    def consumption(self) -> np.ndarray:
        return self.flows.sum(axis=1)

    @property
    def production(self) -> np.ndarray:
        return self.flows.sum(axis=0)

    def same_prices(self, other: Equilibrium, tol: float = 1e-9) -> bool:
        scale = 1.0 + np.abs(self.consumer_prices)
        return bool((np.abs(self.consumer_prices - other.consumer_prices) <= tol * scale).all())


class RevenueView(NamedTuple):
    revenues: tuple[float, ...]
    best: float
    argmax: frozenset[int]


@dataclass(frozen=True)
class SelectionViolation:
    producer: int
    destination: int
    gap: float
    reason: str

    def describe(self, ids: Sequence[str]) -> str:
        return f'producer {ids[self.producer]}, destination {ids[self.destination]}, gap {self.gap:.6g} ({self.reason})'


@dataclass(frozen=True)
class BestResponse:
    """per-destination flow bounds; free marks indifferent destinations"""
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    free: tuple[bool, ...] = field(default=())

    @property
    def quantities(self) -> tuple[float, ...]:
        return self.upper


def _tariff_array(tariffs: TariffMatrix | np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    if isinstance(tariffs, TariffMatrix):
        return tariffs.as_array()
    return np.asarray(tariffs, dtype=float)


def _is_tie(value: float, best: float, tie_tol: float) -> bool:
    return value >= best - tie_tol * abs(best) - 1e-15


def effective_revenue(consumer_prices: Sequence[float], tariffs: TariffMatrix | np.ndarray, producer: int, tie_tol: float = 1e-7) -> RevenueView:
    """per-destination revenue p_c[h] / (1 + t[h][producer]) with its maximum and argmax set"""
    t = _tariff_array(tariffs)
    prices = np.asarray(consumer_prices, dtype=float)
    if (prices < 0).any():
        raise ValueError('consumer prices must be nonnegative')
    revenues = prices / (1.0 + t[:, producer])
    best = float(revenues.max())
    argmax = frozenset(h for h, r in enumerate(revenues) if _is_tie(float(r), best, tie_tol))
    return RevenueView(tuple(float(r) for r in revenues), best, argmax)


def best_response(economy: Economy, consumer_prices: Sequence[float], producer_price: float, producer: int, tie_tol: float = 1e-7) -> BestResponse:
    """
    Firm best response at given prices: nothing to destinations paying less
    than the producer price, the cap quantity to those paying more, and the
    whole [0, cap] interval where it is indifferent.
    """
    view = effective_revenue(consumer_prices, economy.tariffs, producer, tie_tol)
    supply = economy.countries[producer].supply
    lower, upper, free = [], [], []
    for h, revenue in enumerate(view.revenues):
        cap = cap_quantity(supply, economy.countries[h].demand)
        if abs(revenue - producer_price) <= tie_tol * max(abs(producer_price), 1e-12):
            lower.append(0.0)
            upper.append(cap)
            free.append(True)
        elif revenue > producer_price:
            lower.append(cap)
            upper.append(cap)
            free.append(False)
        else:
            lower.append(0.0)
            upper.append(0.0)
            free.append(False)
    return BestResponse(tuple(lower), tuple(upper), tuple(free))


def _selection_report(economy: Economy, p_c: np.ndarray, p_f: np.ndarray, production: np.ndarray,
                      support: TradePattern, t: np.ndarray, options: SolverOptions) -> tuple[list[SelectionViolation], float]:
    """selection violations and the largest selection slack over all producers"""
    violations: list[SelectionViolation] = []
    slack = 0.0
    for j, country in enumerate(economy.countries):
        view = effective_revenue(p_c, t, j, options.tie_tol)
        tol = options.tolerance * max(1.0, abs(view.best))
        if production[j] > options.flow_tol:
            slack = max(slack, abs(p_f[j] - view.best))
            for h, revenue in enumerate(view.revenues):
                if revenue > p_f[j] + tol:
                    violations.append(SelectionViolation(j, h, revenue - p_f[j], 'higher effective revenue'))
            if p_f[j] > view.best + tol:
                violations.append(SelectionViolation(j, min(view.argmax), p_f[j] - view.best, 'producer price above every destination'))
            for h in sorted(support.destinations(j)):
                slack = max(slack, view.best - view.revenues[h])
                if h not in view.argmax and view.best - view.revenues[h] > tol:
                    violations.append(SelectionViolation(j, min(view.argmax), view.best - view.revenues[h], f'ships to non-maximal destination {h}'))
        else:
            floor = country.supply.intercept
            slack = max(slack, view.best - floor)
            for h, revenue in enumerate(view.revenues):
                if revenue > floor + tol:
                    violations.append(SelectionViolation(j, h, revenue - floor, 'unserved profitable destination'))
    return violations, max(slack, 0.0)


def argmax_support(economy: Economy, consumer_prices: Sequence[float], production: Sequence[float],
                   options: Optional[SolverOptions] = None) -> TradePattern:
    """every link from a producing country to one of its maximal-revenue destinations"""
    options = options or SolverOptions()
    links = []
    for j in range(economy.n):
        if production[j] > options.flow_tol:
            view = effective_revenue(consumer_prices, economy.tariffs, j, options.tie_tol)
            links += [(j, h) for h in view.argmax]
    return TradePattern.from_links(economy.n, links)


def _clearing_residual(economy: Economy, p_c: np.ndarray, p_f: np.ndarray, flows: np.ndarray) -> float:
    consumption, production = flows.sum(axis=1), flows.sum(axis=0)
    worst = 0.0
    for i, c in enumerate(economy.countries):
        worst = max(worst, abs(curve_inverse(c.demand, max(p_c[i], 0.0)) - consumption[i]) / (1.0 + consumption[i]))
        worst = max(worst, abs(curve_inverse(c.supply, max(p_f[i], 0.0)) - production[i]) / (1.0 + production[i]))
    return worst


def _assemble(economy: Economy, p_c: np.ndarray, p_f: np.ndarray, flows: np.ndarray, options: SolverOptions,
              method: str, iterations: int, multiple: bool) -> Equilibrium:
    t = economy.tariffs.as_array()
    pattern = TradePattern.from_flows(flows, options.flow_tol)
    _, slack = _selection_report(economy, p_c, p_f, flows.sum(axis=0), pattern, t, options)
    diagnostics = SolverDiagnostics(
        max_clearing_residual=_clearing_residual(economy, p_c, p_f, flows),
        max_selection_slack=slack,
        iterations=iterations,
        multiple_flows=multiple,
        method=method,
    )
    return Equilibrium(economy.ids, p_c, p_f, flows, pattern, diagnostics)


def equilibrium_from_flows(economy: Economy, flows: np.ndarray, options: Optional[SolverOptions] = None) -> Equilibrium:
    """prices implied by a flow matrix through market clearing and supply consistency"""
    options = options or SolverOptions(method=SolverMethod.FIXED_NETWORK)
    flows = np.asarray(flows, dtype=float)
    if flows.shape != (economy.n, economy.n):
        raise ValueError(f'flow matrix must be {economy.n}x{economy.n}')
    if (flows < 0).any():
        raise ValueError('flows must be nonnegative')
    p_c = np.array([curve_eval(c.demand, q) for c, q in zip(economy.countries, flows.sum(axis=1))])
    p_f = np.array([curve_eval(c.supply, q) for c, q in zip(economy.countries, flows.sum(axis=0))])
    return _assemble(economy, p_c, p_f, flows, options, 'flows', 0, False)


def verify_selection(economy: Economy, eq: Equilibrium, options: Optional[SolverOptions] = None) -> list[SelectionViolation]:
    """violations of the destination selection condition; empty when every producer is consistent"""
    options = options or SolverOptions()
    support = TradePattern.from_flows(eq.flows, options.flow_tol)
    violations, _ = _selection_report(economy, eq.consumer_prices, eq.producer_prices, eq.production,
                                      support, economy.tariffs.as_array(), options)
    return violations


# --- fixed network ---------------------------------------------------------

def _link_system(economy: Economy, links: list[tuple[int, int]], q: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """residuals d_i(C_i) - (1 + t_ij) s_j(P_j) per link and their Jacobian in the link flows"""
    n, m = economy.n, len(links)
    consumption, production = np.zeros(n), np.zeros(n)
    for (j, i), x in zip(links, q):
        consumption[i] += x
        production[j] += x

    resid, jac = np.zeros(m), np.zeros((m, m))
    for row, (j, i) in enumerate(links):
        demand, supply = economy.countries[i].demand, economy.countries[j].supply
        markup = 1.0 + t[i, j]
        resid[row] = extended_value(demand, consumption[i]) - markup * extended_value(supply, production[j])
        d_slope = extended_slope(demand, consumption[i])
        s_slope = extended_slope(supply, production[j])
        for col, (b, a) in enumerate(links):
            jac[row, col] = (d_slope if a == i else 0.0) - (markup * s_slope if b == j else 0.0)
    return resid, jac


def _exact_link_flows(economy: Economy, links: list[tuple[int, int]]) -> np.ndarray:
    """rational solve of the linear link system; every curve must be linear"""
    rat = sympy.Rational
    m = len(links)
    jac, rhs = sympy.zeros(m, m), sympy.zeros(m, 1)
    for row, (j, i) in enumerate(links):
        demand, supply = economy.countries[i].demand, economy.countries[j].supply
        markup = 1 + rat(repr(economy.tariffs[i, j]))
        rhs[row] = -(rat(repr(demand.intercept)) - markup * rat(repr(supply.intercept)))
        for col, (b, a) in enumerate(links):
            jac[row, col] = (-rat(repr(demand.slope)) if a == i else 0) - (markup * rat(repr(supply.slope)) if b == j else 0)
    if jac.det() == 0:
        raise IndeterminatePatternError(f'pattern with {m} links does not determine its flows')
    return np.array([float(x) for x in jac.LUsolve(rhs)], dtype=float)


def _newton_link_flows(economy: Economy, links: list[tuple[int, int]], t: np.ndarray, options: SolverOptions) -> tuple[np.ndarray, int]:
    """Newton with segment iteration; exact in one step when every curve is linear"""
    m = len(links)
    q = np.zeros(m)
    for step in range(1, NEWTON_MAX_STEPS + 1):
        resid, jac = _link_system(economy, links, q, t)
        if np.linalg.matrix_rank(jac) < m:
            raise IndeterminatePatternError(f'pattern with {m} links does not determine its flows')
        q = q - np.linalg.solve(jac, resid)
        resid, _ = _link_system(economy, links, q, t)
        if np.abs(resid).max() <= options.tolerance * (1.0 + np.abs(q).max()):
            return q, step
    raise ConvergenceError(f'fixed-network Newton iteration did not settle in {NEWTON_MAX_STEPS} steps',
                           resid, NEWTON_MAX_STEPS)


def solve_fixed_network(economy: Economy, pattern: TradePattern, options: Optional[SolverOptions] = None) -> Equilibrium:
    """
    Flows on exactly the given links solving d_i(C_i) / (1 + t_ij) = s_j(P_j)
    for every link (m equations in m unknowns). Markets without links get
    price d_i(0) and producers without links s_j(0). Destination selection
    is not enforced; check it with verify_selection.
    """
    options = options or SolverOptions(method=SolverMethod.FIXED_NETWORK)
    require_valid(economy)
    if pattern.n != economy.n:
        raise ValueError(f'pattern covers {pattern.n} countries; economy has {economy.n}')
    links = pattern.sorted_links()
    if not links:
        raise IndeterminatePatternError('pattern has no links')

    t = economy.tariffs.as_array()
    all_linear = all(c.supply.is_linear and c.demand.is_linear for c in economy.countries)
    if options.exact and all_linear:
        q, steps = _exact_link_flows(economy, links), 1
    else:
        if options.exact:
            Log.info('exact mode needs linear curves; using floating point')
        q, steps = _newton_link_flows(economy, links, t, options)

    for (j, i), x in zip(links, q):
        if x < -options.flow_tol:
            ids = economy.ids
            raise InfeasiblePatternError(f'infeasible pattern: link {ids[j]}->{ids[i]} solves to {x:.6g}', (j, i), float(x))

    flows = np.zeros((economy.n, economy.n))
    for (j, i), x in zip(links, q):
        flows[i, j] = max(x, 0.0)
    p_c = np.array([curve_eval(c.demand, x) for c, x in zip(economy.countries, flows.sum(axis=1))])
    p_f = np.array([curve_eval(c.supply, x) for c, x in zip(economy.countries, flows.sum(axis=0))])
    return _assemble(economy, p_c, p_f, flows, options, SolverMethod.FIXED_NETWORK.value, steps, False)


# --- price structures --------------------------------------------------------

Assignment = tuple[frozenset, ...]  # destination set per producer


def _clearing_scale(economy: Economy, markets: list[int], producers: list[int], alpha: dict, beta: dict) -> Optional[float]:
    """
    Root of the component excess demand f(lam) = sum D_h(lam*alpha_h) -
    sum S_j(lam*beta_j). f is nonincreasing and piecewise linear in lam, so
    interpolating between bracketing kinks is exact.
    """
    countries = economy.countries

    def excess(lam: float) -> float:
        demand = sum(curve_inverse(countries[h].demand, lam * alpha[h]) for h in markets)
        supply = sum(curve_inverse(countries[j].supply, lam * beta[j]) for j in producers)
        return demand - supply

    kinks = set()
    for h in markets:
        kinks.update(v / alpha[h] for v in countries[h].demand.values if v > 0)
    for j in producers:
        kinks.update(v / beta[j] for v in countries[j].supply.values if v > 0)

    prev_lam, prev_f = 0.0, excess(0.0)
    if prev_f <= 0:
        return 0.0
    for lam in sorted(kinks):
        f = excess(lam)
        if f <= 0:
            return prev_lam + (lam - prev_lam) * prev_f / (prev_f - f)
        prev_lam, prev_f = lam, f

    # linear tail past the last kink
    step = 1.0 + prev_lam
    slope = (excess(prev_lam + step) - prev_f) / step
    if slope >= 0:
        return None
    return prev_lam - prev_f / slope


def _structure_prices(economy: Economy, assignment: Assignment, t: np.ndarray) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """
    Prices implied by a destination-set assignment. Markets and producers
    joined by destination sets form components whose prices are tied by the
    equal effective revenue conditions; each component has one free scale
    fixed by its aggregate clearing condition. None when the ties conflict.
    """
    n = economy.n
    served_by: list[list[int]] = [[] for _ in range(n)]
    for j, dests in enumerate(assignment):
        for h in dests:
            served_by[h].append(j)

    p_c, p_f = np.zeros(n), np.zeros(n)
    alpha: dict[int, float] = {}
    beta: dict[int, float] = {}
    for j in range(n):
        p_f[j] = economy.countries[j].supply.intercept  # idle producers sit at s_j(0)

    for root in range(n):
        if root in alpha:
            continue
        if not served_by[root]:
            alpha[root] = 1.0
            p_c[root] = economy.countries[root].demand.intercept
            continue

        markets, producers = [root], []
        alpha[root] = 1.0
        queue = deque([('m', root)])
        while queue:
            kind, k = queue.popleft()
            if kind == 'm':
                for j in served_by[k]:
                    ratio = alpha[k] / (1.0 + t[k, j])
                    if j not in beta:
                        beta[j] = ratio
                        producers.append(j)
                        queue.append(('p', j))
                    elif not math.isclose(beta[j], ratio, rel_tol=1e-9):
                        return None
            else:
                for h in assignment[k]:
                    ratio = beta[k] * (1.0 + t[h, k])
                    if h not in alpha:
                        alpha[h] = ratio
                        markets.append(h)
                        queue.append(('m', h))
                    elif not math.isclose(alpha[h], ratio, rel_tol=1e-9):
                        return None

        lam = _clearing_scale(economy, markets, producers, alpha, beta)
        if lam is None:
            return None
        for h in markets:
            p_c[h] = lam * alpha[h]
        for j in producers:
            p_f[j] = max(lam * beta[j], economy.countries[j].supply.intercept)
    return p_c, p_f


def _structure_equilibrium(economy: Economy, assignment: Assignment, t: np.ndarray, options: SolverOptions,
                           method: str, iterations: int) -> Optional[Equilibrium]:
    """the equilibrium induced by an assignment, or None when it is not one"""
    prices = _structure_prices(economy, assignment, t)
    if prices is None:
        return None
    p_c, p_f = prices
    countries = economy.countries
    supplies = np.array([curve_inverse(c.supply, p) for c, p in zip(countries, p_f)])
    supplies[supplies <= options.flow_tol] = 0.0
    demands = np.array([curve_inverse(c.demand, p) for c, p in zip(countries, p_c)])
    support = TradePattern.from_links(economy.n, ((j, h) for j, dests in enumerate(assignment)
                                                  if supplies[j] > 0 for h in dests))

    violations, _ = _selection_report(economy, p_c, p_f, supplies, support, t, options)
    if violations:
        return None
    if not feasible_flows(supplies, demands, support, options.flow_tol).feasible:
        return None
    # the representative and its multiplicity come from every optimal link,
    # not just the destination sets that produced the prices
    optimal = argmax_support(economy, p_c, supplies, options) | support
    flows = canonical_flows(supplies, demands, optimal, options.flow_tol)
    multiple = has_multiple_flows(supplies, demands, optimal, flows, options.flow_tol)
    return _assemble(economy, p_c, p_f, flows, options, method, iterations, multiple)


# --- tatonnement -------------------------------------------------------------

def _relative_excess_demand(economy: Economy, p_c: np.ndarray, t: np.ndarray, smoothing: float) -> np.ndarray:
    """
    (demand - arriving supply) / max(demand, arriving supply) per market.
    Each producer offers S_j(max revenue) and spreads it over destinations
    with weights exp((r_h - r_max) / (smoothing * r_max)); exact ties split
    evenly and the split tends to the argmax set as smoothing shrinks.
    """
    countries = economy.countries
    demands = np.array([curve_inverse(c.demand, p) for c, p in zip(countries, p_c)])
    inflow = np.zeros(economy.n)
    for j, c in enumerate(countries):
        revenues = p_c / (1.0 + t[:, j])
        best = revenues.max()
        supply = curve_inverse(c.supply, best)
        if supply > 0:
            weights = np.exp((revenues - best) / (smoothing * best))
            inflow += supply * weights / weights.sum()
    denom = np.maximum(np.maximum(demands, inflow), 1e-300)
    return np.where((demands > 0) | (inflow > 0), (demands - inflow) / denom, 0.0)


def _near_sets(revenues: np.ndarray, delta: float) -> list[frozenset]:
    """nonempty subsets of the destinations within delta of the best, largest first"""
    best = revenues.max()
    near = [int(h) for h in np.argsort(-revenues, kind='stable') if revenues[h] >= best * (1.0 - delta)]
    subsets = []
    for size in range(len(near), 0, -1):
        subsets += [frozenset(combo) for combo in itertools.combinations(near, size)]
    return subsets


def _candidate_assignments(economy: Economy, p_c: np.ndarray, t: np.ndarray, delta: float) -> Iterator[Assignment]:
    """assignments consistent with the prices up to a relative slack delta"""
    per_producer = []
    for j, c in enumerate(economy.countries):
        revenues = p_c / (1.0 + t[:, j])
        best, floor = revenues.max(), c.supply.intercept
        choices: list[frozenset] = []
        if best >= floor * (1.0 - delta):
            choices += _near_sets(revenues, delta)
        if best <= floor * (1.0 + delta):
            choices.append(frozenset())
        per_producer.append(choices)
    return itertools.islice(itertools.product(*per_producer), POLISH_CANDIDATES)


def _polish(economy: Economy, p_c: np.ndarray, t: np.ndarray, options: SolverOptions, delta: float, iterations: int) -> Optional[Equilibrium]:
    for assignment in _candidate_assignments(economy, p_c, t, delta):
        eq = _structure_equilibrium(economy, assignment, t, options, SolverMethod.TATONNEMENT.value, iterations)
        if eq is not None:
            Log.debug(f'tatonnement polished after {iterations} iterations (slack {delta:.3g})')
            return eq
    return None


def _initial_prices(economy: Economy, options: SolverOptions) -> np.ndarray:
    if options.initial_prices is not None:
        if len(options.initial_prices) != economy.n:
            raise SolverOptionsError(f'initial prices need {economy.n} entries')
        return np.maximum(np.array(options.initial_prices, dtype=float), 1e-12)
    return np.array([max(autarky_price(c), 1e-12) for c in economy.countries])


def solve_equilibrium(economy: Economy, options: Optional[SolverOptions] = None) -> Equilibrium:
    """
    Damped tatonnement on consumer prices, from autarky unless initial prices
    are given. Each round moves every price by its damping times the relative
    excess demand; a market's damping is halved whenever its excess demand
    changes sign and otherwise recovers toward options.damping.

    Supply allocation is smoothed and the smoothing is cut tenfold each time
    the prices settle. At every cut the destination sets suggested by the
    current prices are solved exactly, and the first one passing clearing,
    selection and flow feasibility is returned.
    """
    options = options or SolverOptions()
    require_valid(economy)
    t = economy.tariffs.as_array()
    n = economy.n

    p_c = _initial_prices(economy, options)
    eq = _polish(economy, p_c, t, options, 1e-8, 0)
    if eq is not None:
        return eq

    step = np.full(n, options.damping)
    last_sign = np.zeros(n)
    smoothing = SMOOTHING_START
    level_start = 0
    excess = np.zeros(n)
    for iteration in range(1, options.max_iterations + 1):
        excess = _relative_excess_demand(economy, p_c, t, smoothing)
        stay = iteration - level_start
        if (stay >= 10 and np.abs(excess).max() <= smoothing) or stay >= LEVEL_ITERATIONS:
            eq = _polish(economy, p_c, t, options, min(POLISH_MAX_SPREAD, 10.0 * smoothing), iteration)
            if eq is not None:
                return eq
            smoothing = max(smoothing / 10.0, SMOOTHING_FLOOR)
            level_start = iteration

        sign = np.sign(excess)
        flipped = sign * last_sign < 0
        step = np.where(flipped, step * 0.5, np.minimum(step * 1.2, options.damping))
        last_sign = np.where(sign != 0, sign, last_sign)
        p_c = np.maximum(p_c * (1.0 + step * excess), 1e-12)

    raise ConvergenceError(f'tatonnement did not converge in {options.max_iterations} iterations; '
                           'try the enumerate method for small economies', excess, options.max_iterations)


# --- enumeration oracle ------------------------------------------------------

def enumerate_equilibria(economy: Economy, options: Optional[SolverOptions] = None) -> list[Equilibrium]:
    """
    Every destination-set assignment (empty sets included) is solved exactly
    and kept when it clears, satisfies selection and admits feasible flows.
    Results are deduplicated by consumer price vector.
    """
    options = options or SolverOptions(method=SolverMethod.ENUMERATE)
    require_valid(economy)
    n = economy.n
    if n > ENUMERATION_LIMIT:
        raise EnumerationLimitError(f'enumeration is limited to {ENUMERATION_LIMIT} countries; economy has {n}')

    t = economy.tariffs.as_array()
    subsets = [frozenset(c) for size in range(n + 1) for c in itertools.combinations(range(n), size)]
    found: list[Equilibrium] = []
    tried = 0
    for assignment in itertools.product(subsets, repeat=n):
        tried += 1
        eq = _structure_equilibrium(economy, assignment, t, options, SolverMethod.ENUMERATE.value, tried)
        if eq is not None and not any(eq.same_prices(other) for other in found):
            found.append(eq)
    Log.debug(f'enumeration tried {tried} assignments; {len(found)} distinct price vectors')
    return found


def solve(economy: Economy, options: Optional[SolverOptions] = None, fixed_network: Optional[TradePattern] = None) -> Equilibrium:
    """dispatches on options.method; tatonnement falls back to enumeration for small economies"""
    options = options or SolverOptions()
    if options.method is SolverMethod.FIXED_NETWORK:
        if fixed_network is None:
            raise SolverOptionsError('fixed_network method needs a trade pattern')
        return solve_fixed_network(economy, fixed_network, options)

    if options.method is SolverMethod.ENUMERATE:
        found = enumerate_equilibria(economy, options)
        if not found:
            raise ConvergenceError('enumeration found no equilibrium')
        return found[0]

    try:
        return solve_equilibrium(economy, options)
    except ConvergenceError as e:
        if not options.fallback or economy.n > ENUMERATION_LIMIT:
            raise
        Log.info(f'{e}; falling back to enumeration')
        found = enumerate_equilibria(economy, options)
        if not found:
            raise
        return found[0]
