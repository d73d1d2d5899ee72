"""
Supply and demand curves, countries, tariffs and economies

Piecewise-linear indirect supply s(q) and indirect demand d(q) curves with
closed-form evaluation, inversion and integration. A curve is a list of
breakpoints (q, value) starting at q=0 plus a terminal slope used beyond the
last breakpoint. Demand is clamped to 0 past its choke quantity.

"""

from __future__ import annotations  # for forward references in type hints

import bisect
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np


# Logger; may be overridden by users of this module
Log = logging.getLogger(__file__)
Log_Default_Format = '%(levelname)s %(name)s: %(message)s'

MIN_SLOPE = 1e-12  # strict monotonicity bound per segment


class CurveDomainError(ValueError):
    """Raised when a curve is evaluated outside of its domain"""
    pass


class EconomyValidationError(Exception):
    """Raised when an economy violates one or more model invariants"""

    def __init__(self, issues: Sequence[EconomyIssue]) -> None:
        self.issues = list(issues)
        super().__init__('; '.join(str(i) for i in self.issues))


class CurveKind(str, Enum):
    SUPPLY = 'supply'
    DEMAND = 'demand'


@dataclass(frozen=True)
class Curve:
    """
    Strictly monotone piecewise-linear curve.

    points holds (quantity, value) breakpoints with points[0][0] == 0;
    terminal_slope is the signed slope applied after the last breakpoint.
    """
    kind: CurveKind
    points: tuple[tuple[float, float], ...]
    terminal_slope: float

    @classmethod
    def linear(cls, kind: CurveKind | str, intercept: float, slope: float) -> Curve:
        """intercept + slope*q for supply, intercept - slope*q for demand (slope > 0)"""
        kind = CurveKind(kind)
        signed = slope if kind is CurveKind.SUPPLY else -slope
        return cls(kind, ((0.0, float(intercept)),), float(signed))

    @classmethod
    def piecewise(cls, kind: CurveKind | str, points: Sequence[Sequence[float]], terminal_slope: float | None = None) -> Curve:
        """builds a curve from breakpoints; terminal slope defaults to the last segment's slope"""
        kind = CurveKind(kind)
        pts = tuple((float(q), float(v)) for q, v in points)
        if terminal_slope is None:
            if len(pts) < 2:
                raise CurveDomainError('a single breakpoint needs an explicit terminal slope')
            (q0, v0), (q1, v1) = pts[-2], pts[-1]
            terminal_slope = (v1 - v0) / (q1 - q0) if q1 != q0 else 0.0
        return cls(kind, pts, float(terminal_slope))

    @property
    def is_linear(self) -> bool:
        return len(self.points) == 1

    @property
    def intercept(self) -> float:
        return self.points[0][1]

    @property
    def slope(self) -> float:
        """magnitude of the slope of a linear curve"""
        return abs(self.terminal_slope)

    @property
    def quantities(self) -> tuple[float, ...]:
        return tuple(q for q, _ in self.points)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.points)

    def segment_slopes(self) -> list[float]:
        """slopes of the interior segments followed by the terminal slope"""
        slopes = []
        for (q0, v0), (q1, v1) in zip(self.points, self.points[1:]):
            slopes.append((v1 - v0) / (q1 - q0) if q1 != q0 else math.nan)
        slopes.append(self.terminal_slope)
        return slopes

    def issues(self, where: str = 'curve') -> list[EconomyIssue]:
        """returns the violated curve invariants; empty when the curve is valid"""
        found: list[EconomyIssue] = []
        if not self.points:
            return [EconomyIssue(where, 'curve has no breakpoints')]

        qs, vs = self.quantities, self.values
        if not all(math.isfinite(x) for x in qs + vs + (self.terminal_slope,)):
            found.append(EconomyIssue(where, 'non-finite breakpoint or slope'))
            return found
        if qs[0] != 0.0:
            found.append(EconomyIssue(where, 'first breakpoint must be at quantity 0'))
        if any(q1 <= q0 for q0, q1 in zip(qs, qs[1:])):
            found.append(EconomyIssue(where, 'breakpoint quantities not strictly increasing'))
            return found

        slopes = self.segment_slopes()
        if self.kind is CurveKind.SUPPLY:
            if vs[0] < 0:
                found.append(EconomyIssue(where, 'negative supply intercept'))
            if any(s < MIN_SLOPE for s in slopes):
                found.append(EconomyIssue(where, 'non-monotone supply curve'))
        else:
            if vs[0] <= 0:
                found.append(EconomyIssue(where, 'demand intercept must be positive'))
            for k, s in enumerate(slopes):
                if vs[k] > 0 and s > -MIN_SLOPE:
                    found.append(EconomyIssue(where, 'non-monotone demand curve'))
                    break
                if vs[k] <= 0 and k + 1 < len(vs) and vs[k + 1] > 0:
                    found.append(EconomyIssue(where, 'demand rises again after reaching zero'))
                    break
        return found


@dataclass(frozen=True)
class Country:
    id: str
    name: str
    supply: Curve
    demand: Curve


@dataclass(frozen=True)
class TariffMatrix:
    """ad valorem rates; entries[i][j] is the tariff importer i imposes on exporter j"""
    entries: tuple[tuple[float, ...], ...]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> TariffMatrix:
        return cls(tuple(tuple(float(x) for x in row) for row in rows))

    @classmethod
    def zeros(cls, n: int) -> TariffMatrix:
        return cls(tuple(tuple(0.0 for _ in range(n)) for _ in range(n)))

    def __getitem__(self, ij: tuple[int, int]) -> float:
        i, j = ij
        return self.entries[i][j]

    def __len__(self) -> int:
        return len(self.entries)

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=float)

    def with_entry(self, importer: int, exporter: int, rate: float) -> TariffMatrix:
        rows = [list(r) for r in self.entries]
        rows[importer][exporter] = float(rate)
        return TariffMatrix.from_rows(rows)


@dataclass(frozen=True)
class Economy:
    countries: tuple[Country, ...]
    tariffs: TariffMatrix

    def __post_init__(self) -> None:
        object.__setattr__(self, 'countries', tuple(self.countries))

    @property
    def n(self) -> int:
        return len(self.countries)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.countries)

    def index(self, ref: str | int) -> int:
        """resolves a country id (case-insensitive) or an index"""
        if isinstance(ref, int):
            if 0 <= ref < self.n:
                return ref
            raise KeyError(f'country index out of range: {ref}')
        for i, c in enumerate(self.countries):
            if c.id.lower() == str(ref).strip().lower():
                return i
        raise KeyError(f'unknown country: {ref}')

    def with_tariff(self, importer: int, exporter: int, rate: float) -> Economy:
        return Economy(self.countries, self.tariffs.with_entry(importer, exporter, rate))

    def __iter__(self) -> Iterator[Country]:
        yield from self.countries

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class EconomyIssue:
    location: str
    problem: str
    details: dict = field(default_factory=dict, compare=False)

    def __str__(self) -> str:
        return f'{self.location}: {self.problem}'


def _check_domain(x: float, what: str) -> None:
    if x < 0 or math.isnan(x):
        raise CurveDomainError(f'{what} must be nonnegative; got {x!r}')


def _raw_value(curve: Curve, q: float) -> float:
    """unclamped piecewise-linear value; the first segment extends below q=0"""
    qs = curve.quantities
    k = max(bisect.bisect_right(qs, q) - 1, 0)
    q0, v0 = curve.points[k]
    if k + 1 < len(curve.points):
        q1, v1 = curve.points[k + 1]
        return v0 + (v1 - v0) * (q - q0) / (q1 - q0)
    return v0 + curve.terminal_slope * (q - q0)


def extended_value(curve: Curve, q: float) -> float:
    """the curve's linear extension over every real q; no demand clamp"""
    return _raw_value(curve, q)


def extended_slope(curve: Curve, q: float) -> float:
    k = max(bisect.bisect_right(curve.quantities, q) - 1, 0)
    return curve.segment_slopes()[k]


def curve_eval(curve: Curve, q: float) -> float:
    """returns s(q) or d(q); demand is clamped at 0 beyond the choke quantity"""
    _check_domain(q, 'quantity')
    value = _raw_value(curve, q)
    if curve.kind is CurveKind.DEMAND:
        return max(0.0, value)
    return value


def curve_slope(curve: Curve, q: float) -> float:
    """right derivative of the (clamped) curve at q"""
    _check_domain(q, 'quantity')
    if curve.kind is CurveKind.DEMAND and q >= choke_quantity(curve):
        return 0.0
    k = bisect.bisect_right(curve.quantities, q) - 1
    return curve.segment_slopes()[k]


def choke_quantity(curve: Curve) -> float:
    """quantity at which demand first reaches zero"""
    if curve.kind is not CurveKind.DEMAND:
        raise CurveDomainError('choke quantity is only defined for demand curves')
    pts = curve.points
    for (q0, v0), (q1, v1) in zip(pts, pts[1:]):
        if v0 > 0 >= v1:
            return q0 + v0 * (q1 - q0) / (v0 - v1)
    q_last, v_last = pts[-1]
    if v_last <= 0:
        return q_last
    if curve.terminal_slope >= 0:
        return math.inf
    return q_last + v_last / -curve.terminal_slope


def curve_inverse(curve: Curve, p: float) -> float:
    """
    Quantity at price p. Demand: quantity demanded (0 when p >= d(0)).
    Supply: 0 when p <= s(0), otherwise the unique q with s(q) = p.
    """
    _check_domain(p, 'price')
    pts = curve.points
    if curve.kind is CurveKind.SUPPLY:
        if p <= pts[0][1]:
            return 0.0
        for (q0, v0), (q1, v1) in zip(pts, pts[1:]):
            if p <= v1:
                return q0 + (p - v0) * (q1 - q0) / (v1 - v0)
        q_last, v_last = pts[-1]
        return q_last + (p - v_last) / curve.terminal_slope

    if p >= pts[0][1]:
        return 0.0
    if p <= 0:
        return choke_quantity(curve)
    for (q0, v0), (q1, v1) in zip(pts, pts[1:]):
        if p >= v1:
            return q0 + (v0 - p) * (q1 - q0) / (v0 - v1)
    q_last, v_last = pts[-1]
    return q_last + (v_last - p) / -curve.terminal_slope


def _knots(curve: Curve, q_lo: float, q_hi: float) -> list[float]:
    """interval endpoints plus every kink strictly inside (q_lo, q_hi)"""
    kinks = list(curve.quantities)
    if curve.kind is CurveKind.DEMAND:
        kinks.append(choke_quantity(curve))
    inner = sorted(k for k in set(kinks) if q_lo < k < q_hi)
    return [q_lo] + inner + [q_hi]


def curve_integral(curve: Curve, q_lo: float, q_hi: float) -> float:
    """exact area under the (clamped) curve between q_lo and q_hi"""
    _check_domain(q_lo, 'lower bound')
    if q_hi < q_lo:
        raise CurveDomainError(f'reversed integration bounds: {q_lo} > {q_hi}')
    if q_hi == q_lo:
        return 0.0
    knots = _knots(curve, q_lo, q_hi)
    area = 0.0
    for a, b in zip(knots, knots[1:]):
        area += 0.5 * (b - a) * (curve_eval(curve, a) + curve_eval(curve, b))
    return area


def cap_quantity(supplier: Curve, market_demand: Curve) -> float:
    """
    Quantity where the supplier's curve crosses the market's demand curve;
    0 when s(0) >= d(0). This bounds any single producer-to-market flow.
    """
    if supplier.intercept >= market_demand.intercept:
        return 0.0
    hi = choke_quantity(market_demand)
    kinks = set(supplier.quantities) | set(market_demand.quantities)
    knots = sorted(k for k in kinks if 0 < k < hi) + [hi]
    lo, gap_lo = 0.0, supplier.intercept - market_demand.intercept
    for k in knots:
        if math.isinf(k):
            # both curves linear past the last kink
            slope = curve_slope(supplier, lo) - curve_slope(market_demand, lo)
            return lo - gap_lo / slope
        gap = curve_eval(supplier, k) - curve_eval(market_demand, k)
        if gap >= 0:
            return lo + (k - lo) * (-gap_lo) / (gap - gap_lo)
        lo, gap_lo = k, gap
    return lo


def autarky_price(country: Country) -> float:
    """no-trade price where domestic supply meets domestic demand"""
    q = cap_quantity(country.supply, country.demand)
    if q == 0.0:
        return country.demand.intercept
    return curve_eval(country.demand, q)


def validate_economy(economy: Economy) -> list[EconomyIssue]:
    """lists every violated invariant of the economy; empty means valid"""
    issues: list[EconomyIssue] = []
    n = economy.n
    if n < 1:
        issues.append(EconomyIssue('countries', 'economy needs at least one country'))

    seen: set[str] = set()
    for i, c in enumerate(economy.countries):
        if c.id in seen:
            issues.append(EconomyIssue(f'countries[{i}].id', f'duplicate country id {c.id!r}'))
        seen.add(c.id)
        if c.supply.kind is not CurveKind.SUPPLY:
            issues.append(EconomyIssue(f'countries[{i}].supply', 'curve kind is not supply'))
        if c.demand.kind is not CurveKind.DEMAND:
            issues.append(EconomyIssue(f'countries[{i}].demand', 'curve kind is not demand'))
        issues += c.supply.issues(f'countries[{i}].supply')
        issues += c.demand.issues(f'countries[{i}].demand')

    rows = economy.tariffs.entries
    if len(rows) != n or any(len(r) != n for r in rows):
        issues.append(EconomyIssue('tariffs', f'dimension mismatch: expected {n}x{n} tariff matrix'))
        return issues

    for i in range(n):
        for j in range(n):
            t = rows[i][j]
            where = f'tariffs[{i}][{j}]'
            if not math.isfinite(t):
                issues.append(EconomyIssue(where, 'non-finite tariff'))
            elif t < 0:
                issues.append(EconomyIssue(where, 'negative tariff', {'value': t}))
            elif i == j and t != 0:
                issues.append(EconomyIssue(where, 'nonzero diagonal', {'value': t}))
    return issues


def require_valid(economy: Economy) -> None:
    """raises EconomyValidationError listing every violated invariant"""
    issues = validate_economy(economy)
    if issues:
        Log.debug(f'economy has {len(issues)} issue(s); first: {issues[0]}')
        raise EconomyValidationError(issues)
