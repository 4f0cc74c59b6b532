import numpy as np
import pytest

from hydromarket.clearing import (
    Bid,
    clear,
    clear_lp,
    concave_hull,
    plants_from_bids,
    residual_price,
    sawtooth_breakpoints,
    sawtooth_revenue,
)


def test_clear_merit_order():
    out = clear([(5.0, 10.0), (8.0, 10.0)], 15.0)
    assert out.price == 8.0
    assert np.allclose(out.accepted, [10.0, 5.0])
    assert out.deficit == 0.0


def test_clear_single_bid_marginal():
    out = clear([(7.0, 10.0)], 10.0)
    assert out.price == 7.0
    assert out.accepted[0] == 10.0


def test_clear_zero_demand():
    out = clear([(7.0, 10.0)], 0.0)
    assert out.price == 0.0
    assert out.total == 0.0


def test_clear_deficit():
    out = clear([(7.0, 10.0)], 12.0, deficit_cost=500.0)
    assert out.price == 500.0
    assert out.deficit == pytest.approx(2.0)


def test_clear_no_bids():
    out = clear([], 5.0, deficit_cost=321.0)
    assert out.price == 321.0
    assert out.deficit == 5.0


def test_clear_pro_rata_ties():
    out = clear([(5.0, 10.0), (5.0, 30.0)], 20.0)
    assert out.price == 5.0
    assert np.allclose(out.accepted, [5.0, 15.0])  # 50% of the tied class


def test_clear_accepts_bid_objects():
    bids = [
        Bid("a", 0, 0, 0, ((5.0, 10.0),)),
        Bid("b", 0, 0, 0, ((8.0, 10.0),)),
    ]
    out = clear(bids, 15.0)
    assert out.price == 8.0
    assert np.allclose(out.accepted, [10.0, 5.0])


def test_clear_lp_cross_check():
    rng = np.random.Generator(np.random.Philox(11))
    for _ in range(25):
        n = int(rng.integers(1, 6))
        segs = [(float(rng.integers(1, 8) * 10), float(rng.uniform(0, 10)))
                for _ in range(n)]
        d = float(rng.uniform(0, 12) * n)
        a, b = clear(segs, d), clear_lp(segs, d)
        # dispatch cost and served energy agree; the LP dual may sit anywhere
        # within a degenerate tie, so prices are compared only off ties
        cost_a = float(np.dot(a.accepted, [p for p, _ in segs]))
        cost_b = float(np.dot(b.accepted, [p for p, _ in segs]))
        assert cost_a == pytest.approx(cost_b, abs=1e-6)
        assert a.total == pytest.approx(b.total, abs=1e-7)


def test_residual_price_steps():
    others = [(10.0, 5.0), (20.0, 5.0)]
    assert residual_price(others, 8.0, 0.0) == 20.0
    assert residual_price(others, 8.0, 4.0) == 10.0
    assert residual_price(others, 8.0, 8.0) == 0.0  # fully displaced
    assert residual_price([], 8.0, 0.0, deficit_cost=999.0) == 999.0
    assert residual_price(others, 20.0, 0.0, deficit_cost=999.0) == 999.0


def test_sawtooth_samples():
    others = [(10.0, 5.0), (20.0, 5.0)]
    samples = sawtooth_revenue(others, 8.0, 8.0)
    lookup = dict(samples)
    eps = 1e-6 * 8.0
    assert lookup[3.0 - eps] == pytest.approx((3.0 - eps) * 20.0)  # ~60
    assert lookup[3.0] == pytest.approx(30.0)
    assert lookup[8.0 - eps] == pytest.approx((8.0 - eps) * 10.0)  # ~80
    assert lookup[8.0] == 0.0
    assert lookup[0.0] == 0.0


def test_sawtooth_breakpoints():
    bps = sawtooth_breakpoints([(10.0, 5.0), (20.0, 5.0)], 8.0, 8.0)
    assert np.allclose(bps, [3.0])


def test_sawtooth_monopoly():
    samples = sawtooth_revenue([], 5.0, 10.0, deficit_cost=100.0)
    lookup = dict(samples)
    # deficit price holds until demand is fully served, then revenue drops
    eps = 1e-6 * 10.0
    assert lookup[5.0 - eps] == pytest.approx((5.0 - eps) * 100.0)
    assert lookup[10.0] == 0.0


def test_concave_hull_example():
    curve = concave_hull([(0, 0), (1, 2), (2, 2.5), (3, 4)])
    assert np.allclose(curve.vertices, [(0, 0), (1, 2), (3, 4)])
    assert curve.value(2.0) == pytest.approx(3.0)
    assert curve.is_concave()


def test_concave_hull_collinear():
    curve = concave_hull([(0, 0), (1, 1), (2, 2), (3, 3)])
    assert np.allclose(curve.vertices, [(0, 0), (3, 3)])


def test_concave_hull_two_samples():
    curve = concave_hull([(0, 0), (2, 5)])
    assert len(curve.vertices) == 2
    assert curve.e_max == 2.0


def test_concave_hull_dominates_samples():
    rng = np.random.Generator(np.random.Philox(4))
    for _ in range(20):
        pts = np.column_stack([
            np.sort(rng.uniform(0, 10, 12)),
            rng.uniform(0, 50, 12),
        ])
        curve = concave_hull(pts)
        assert curve.is_concave()
        for e, r in pts:
            assert curve.value(e) >= r - 1e-9


def test_revenue_curve_facets():
    curve = concave_hull([(0.0, 0.0), (3.0, 60.0), (8.0, 80.0)])
    facets = curve.facets()
    assert facets[0] == pytest.approx((20.0, 0.0))
    assert facets[1][0] == pytest.approx(4.0)


def test_plants_from_bids():
    plants = plants_from_bids([(20.0, 5.0)])
    assert plants[0].cost == 20.0 and plants[0].capacity == 5.0
    assert plants_from_bids([]) == []
    bid = Bid("a", 1, 0, 0, ((5.0, 1.0), (6.0, 2.0), (7.0, 3.0)))
    plants = plants_from_bids([bid])
    assert len(plants) == 3
    assert sum(p.capacity for p in plants) == pytest.approx(6.0)
