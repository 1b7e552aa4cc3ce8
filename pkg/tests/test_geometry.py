import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renorm_currents.core import Ball, PointConfig
from renorm_currents.geometry import (
    alive_ids_at,
    collection_at,
    grow,
    growth_family,
    initial_collection,
    merge_balls,
    next_merge_scale,
    trace_from_csv,
    trace_to_csv,
)

from oracles import growth_agrees, random_disjoint_balls


def _contains(big: Ball, small: Ball, tol=1e-9) -> bool:
    return math.dist(big.center, small.center) + small.radius <= big.radius * (1 + tol)


def test_two_ball_merge_time_and_result():
    trace = grow([Ball((0, 0), 1), Ball((4, 0), 1)], 5.0)
    assert trace.merge_times == pytest.approx([4.0])
    (b,) = collection_at(trace, 4.0)
    assert b.center == pytest.approx((2.0, 0.0)) and b.radius == pytest.approx(4.0)
    assert len(collection_at(trace, 4.0, left_limit=True)) == 2
    assert collection_at(trace, 5.0)[0].radius == pytest.approx(5.0)


def test_unequal_merge_uses_weighted_centroid():
    b = merge_balls([Ball((0, 0), 1), Ball((3, 0), 2)])
    assert b.center == pytest.approx((2.0, 0.0)) and b.radius == 3.0


def test_merge_cascade_in_one_event():
    # the merged pair swallows the third ball at the same instant
    balls = [Ball((0, 0), 1), Ball((2.2, 0), 1), Ball((1.1, 2.0), 0.05)]
    trace = grow(balls, 10.0)
    assert len(trace.merge_times) == 1
    assert len(trace.events[1].alive) == 1


def test_grow_rejects_bad_input():
    with pytest.raises(ValueError, match="disjoint"):
        grow([Ball((0, 0), 1), Ball((1, 0), 1)], 5)
    with pytest.raises(ValueError, match="must exceed"):
        grow([Ball((0, 0), 1)], 0.5)


def test_next_merge_scale_single_ball():
    assert next_merge_scale([Ball((0, 0), 1)]) == (math.inf, [])


def test_initial_collection_needs_small_eta():
    cfg = PointConfig([[0, 0], [1, 0]])
    assert len(initial_collection(cfg, 0.2)) == 2
    with pytest.raises(ValueError):
        initial_collection(cfg, 0.6)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 15), st.floats(1.5, 8.0))
def test_growth_invariants(seed, n, factor):
    rng = np.random.default_rng(seed)
    c, r = random_disjoint_balls(rng, n)
    target = factor * r.sum()
    trace = grow([Ball(tuple(x), s) for x, s in zip(c, r)], target)
    prev = None
    for k, e in enumerate(trace.events):
        balls = trace.collection(k)
        assert abs(math.fsum(b.radius for b in balls) - e.time) <= 1e-12 * e.time
        cc = np.array([b.center for b in balls])
        rr = np.array([b.radius for b in balls])
        for i in range(len(balls)):
            for j in range(i + 1, len(balls)):
                assert np.hypot(*(cc[i] - cc[j])) >= (rr[i] + rr[j]) * (1 - 1e-9)
        if prev is not None:
            for b in prev:
                assert any(_contains(a, b.__class__(b.center, b.radius * e.time / prev_t)) for a in balls)
        prev, prev_t = balls, e.time


@pytest.mark.parametrize("seed", range(25))
def test_growth_matches_stepping_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 21))
    c, r = random_disjoint_balls(rng, n)
    target = 4 * r.sum()
    trace = grow([Ball(tuple(x), s) for x, s in zip(c, r)], target)
    assert growth_agrees(trace, c, r, target)


def test_growth_family_covers_range():
    cfg = PointConfig([[0, 0], [0.3, 0], [2, 1]])
    tr = growth_family(cfg, 1.0)
    assert tr.end == pytest.approx(1.0)
    assert tr.n_initial == 3
    early = collection_at(tr, tr.start)
    assert all(b.radius == pytest.approx(tr.start / 3) for b in early)
    for t in np.linspace(tr.start, 1.0, 13):
        balls = collection_at(tr, t)
        assert math.fsum(b.radius for b in balls) == pytest.approx(t, rel=1e-12)
        for p in cfg.points:
            assert any(math.dist(p, b.center) < b.radius for b in balls)


def test_growth_family_late_start():
    cfg = PointConfig([[0, 0], [0.3, 0], [2, 1]])
    tr = growth_family(cfg, 1.0, r0=0.5)
    assert tr.start == pytest.approx(0.5)
    assert math.fsum(b.radius for b in tr.collection(0)) == pytest.approx(0.5)


def test_csv_round_trip():
    cfg = PointConfig(np.random.default_rng(3).uniform(0, 3, (8, 2)))
    tr = growth_family(cfg, 2.0)
    back = trace_from_csv(trace_to_csv(tr))
    assert [e.time for e in back.events] == pytest.approx([e.time for e in tr.events])
    for t in np.linspace(tr.start, tr.end, 7):
        assert sorted(alive_ids_at(back, t)) == sorted(alive_ids_at(tr, t))
