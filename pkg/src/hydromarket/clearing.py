"""Bid-based market clearing, residual-demand pricing and revenue curves.

The clearing problem (min sum p_i e_i s.t. sum e_i = d, e_i <= q_i) is solved
by merit order, which is its exact solution; an LP-based route is kept for
cross-checks. The residual-demand price pi_d(e), the sawtooth revenue
R(e) = e * pi_d(e) and its upper concave envelope are the ingredients of a
price maker's stage revenue model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lp as lpm

PRICE_FLOOR = 0.0


@dataclass(frozen=True)
class Bid:
    """One agent's offer for a (stage, scenario, block): ordered price/quantity segments."""

    agent_id: str
    stage: int
    scenario: int
    block: int
    segments: tuple  # ((price, quantity), ...) quantities >= 0

    def total_quantity(self) -> float:
        return float(sum(q for _, q in self.segments))


@dataclass
class ClearingOutcome:
    price: float
    accepted: np.ndarray   # per input segment
    total: float
    deficit: float


@dataclass(frozen=True)
class RevenueCurve:
    """Upper concave envelope of the sampled sawtooth revenue, as vertices
    (e ascending). Facet slopes strictly decrease left to right."""

    vertices: np.ndarray  # (n, 2)

    @property
    def e_max(self) -> float:
        return float(self.vertices[-1, 0])

    def facets(self):
        """(slope, intercept) per hull edge; a single vertex yields no facets."""
        v = self.vertices
        out = []
        for a, b in zip(v[:-1], v[1:]):
            slope = (b[1] - a[1]) / (b[0] - a[0])
            out.append((slope, a[1] - slope * a[0]))
        return out

    def value(self, e) -> float:
        e = float(np.clip(e, self.vertices[0, 0], self.vertices[-1, 0]))
        return float(np.interp(e, self.vertices[:, 0], self.vertices[:, 1]))

    def is_concave(self, tol=1e-9) -> bool:
        slopes = [s for s, _ in self.facets()]
        return all(s1 - s2 > -tol for s1, s2 in zip(slopes[:-1], slopes[1:]))


def _as_segments(bids) -> np.ndarray:
    """Flatten bids (list of Bid or of (price, qty) pairs) to an (n, 2) array."""
    rows = []
    for item in bids:
        if isinstance(item, Bid):
            rows.extend(item.segments)
        else:
            rows.append(item)
    if not rows:
        return np.zeros((0, 2))
    arr = np.asarray(rows, dtype=float)
    return arr


def clear(bids, demand, deficit_cost=1000.0) -> ClearingOutcome:
    """Merit-order clearing; ties at the same price are filled pro rata.

    Spot convention: the price of the marginal dispatched segment; 0 when
    demand is 0; the deficit cost when offers cannot cover demand.
    """
    segments = _as_segments(bids)
    n = len(segments)
    accepted = np.zeros(n)
    if demand <= 0:
        return ClearingOutcome(0.0 if demand == 0 else PRICE_FLOOR, accepted, 0.0, 0.0)
    if n == 0:
        return ClearingOutcome(deficit_cost, accepted, 0.0, float(demand))

    order = np.argsort(segments[:, 0], kind="stable")
    prices = segments[order, 0]
    caps = segments[order, 1]
    remaining = float(demand)
    spot = PRICE_FLOOR
    i = 0
    while i < n and remaining > 1e-12:
        # one price class at a time, pro rata within it
        j = i
        while j < n and prices[j] == prices[i]:
            j += 1
        cls_cap = float(np.sum(caps[i:j]))
        if cls_cap > 1e-15:
            take = min(remaining, cls_cap)
            frac = take / cls_cap
            accepted[order[i:j]] = caps[i:j] * frac
            remaining -= take
            spot = prices[i]
        i = j
    deficit = max(0.0, remaining)
    if deficit > 1e-9:
        spot = deficit_cost
    return ClearingOutcome(float(spot), accepted, float(demand) - deficit, deficit)


def clear_lp(bids, demand, deficit_cost=1000.0) -> ClearingOutcome:
    """Clearing via the auction LP; spot is the dual of the balance constraint.

    Used in tests to cross-check the merit-order route.
    """
    segments = _as_segments(bids)
    lp = lpm.LinearProgram("min")
    evars = [
        lp.add_var(f"e[{i}]", 0.0, q, obj=p) for i, (p, q) in enumerate(segments)
    ]
    dvar = lp.add_var("deficit", 0.0, None, obj=deficit_cost)
    lp.add_constr("balance", [(v, 1.0) for v in evars] + [(dvar, 1.0)], "==", demand)
    sol = lp.solve()
    accepted = sol.primal[: len(segments)] if len(segments) else np.zeros(0)
    deficit = sol.value(dvar)
    spot = 0.0 if demand == 0 else sol.dual("balance")
    return ClearingOutcome(float(spot), accepted, float(demand) - deficit, deficit)


def residual_price(other_bids, demand, e, deficit_cost=1000.0) -> float:
    """Spot price when rivals clear against residual demand (demand - e).

    Nonincreasing, piecewise constant in e; the price floor applies once the
    agent displaces the whole market.
    """
    residual = float(demand) - float(e)
    if residual <= 0:
        return PRICE_FLOOR
    segments = _as_segments(other_bids)
    if len(segments) == 0:
        return deficit_cost
    order = np.argsort(segments[:, 0], kind="stable")
    caps = np.cumsum(segments[order, 1])
    idx = int(np.searchsorted(caps, residual - 1e-12))
    if idx >= len(caps):
        return deficit_cost
    return float(segments[order[idx], 0])


def sawtooth_breakpoints(other_bids, demand, e_max) -> np.ndarray:
    """Energy offers at which pi_d drops: e = d - (cumulative rival capacity),
    plus e = d (full displacement), restricted to (0, e_max)."""
    segments = _as_segments(other_bids)
    pts = [float(demand)]
    if len(segments):
        order = np.argsort(segments[:, 0], kind="stable")
        caps = np.cumsum(segments[order, 1])
        pts.extend(float(demand) - caps)
    pts = [p for p in pts if 0.0 < p < e_max]
    return np.unique(np.asarray(pts))


def sawtooth_revenue(other_bids, demand, e_max, deficit_cost=1000.0, grid=None) -> np.ndarray:
    """Sample (e, R(e) = e * pi_d(e)) over [0, e_max].

    The default grid takes every residual-demand breakpoint b together with
    its left limit b - eps, so the sawtooth tips are captured.
    """
    if e_max <= 0:
        return np.array([[0.0, 0.0]])
    if grid is None:
        eps = 1e-6 * e_max
        bps = sawtooth_breakpoints(other_bids, demand, e_max)
        pts = [0.0, e_max]
        for b in bps:
            pts.append(b)
            if b - eps > 0:
                pts.append(b - eps)
        if 0 < e_max - eps:
            pts.append(e_max - eps)
        grid = np.unique(np.asarray(pts))
    grid = np.asarray(grid, dtype=float)
    rev = np.array([e * residual_price(other_bids, demand, e, deficit_cost) for e in grid])
    return np.column_stack([grid, rev])


def concave_hull(samples) -> RevenueCurve:
    """Upper concave envelope of (e, R) samples via the monotone chain.

    Hull vertices are a subset of the samples; every sample lies on or below
    the hull.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or len(pts) < 1:
        raise ValueError("need at least one (e, R) sample")
    order = np.lexsort((-pts[:, 1], pts[:, 0]))
    pts = pts[order]
    # drop duplicate abscissae, keeping the highest revenue
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.diff(pts[:, 0]) > 0
    pts = pts[keep]
    if len(pts) == 1:
        return RevenueCurve(pts.copy())

    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # pop hull[-1] unless it makes a strict right turn (concave)
            if (y2 - y1) * (p[0] - x2) > (p[1] - y2) * (x2 - x1) + 1e-12:
                break
            hull.pop()
        hull.append((float(p[0]), float(p[1])))
    return RevenueCurve(np.asarray(hull))


def plants_from_bids(bids):
    """Rivals' bid segments as virtual thermal plants (cost = bid price,
    capacity = bid quantity)."""
    from .system import ThermalPlant

    plants = []
    for item in bids:
        if isinstance(item, Bid):
            for k, (p, q) in enumerate(item.segments):
                plants.append(
                    ThermalPlant(f"bid:{item.agent_id}:{item.stage}:{item.block}:{k}", p, q)
                )
        else:
            p, q = item
            plants.append(ThermalPlant(f"bid:{len(plants)}", float(p), float(q)))
    return plants
