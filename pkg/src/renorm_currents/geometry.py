"""Ball growth with merging.

Disjoint closed balls are inflated about their own centers at a common
multiplicative rate. When two or more become tangent they are replaced by a
single ball whose radius is the sum of theirs, so the total radius of the
collection always equals the growth parameter ``t``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import Ball, PointConfig, separation

TANGENCY_TOL = 1e-12


@dataclass(frozen=True)
class BallRecord:
    """One node of the merge forest.

    The ball keeps its center for its whole life; its radius at time ``t`` is
    ``birth_radius * t / birth_time``.
    """

    id: int
    center: tuple[float, float]
    birth_time: float
    birth_radius: float
    children: tuple[int, ...] = ()
    parent: int | None = None
    death_time: float | None = None

    def radius_at(self, t: float) -> float:
        return self.birth_radius * (t / self.birth_time)

    def ball_at(self, t: float) -> Ball:
        return Ball(self.center, self.radius_at(t))


@dataclass(frozen=True)
class Event:
    time: float
    alive: tuple[int, ...]
    merges: tuple[tuple[int, tuple[int, ...]], ...] = ()


@dataclass(frozen=True)
class GrowthTrace:
    """Event list of a ball growth plus the merge forest.

    ``events[0]`` is the start ``r0``, ``events[-1]`` the end ``r``; every
    event in between carries at least one merge. An event at the end time may
    also carry merges.
    """

    records: tuple[BallRecord, ...]
    events: tuple[Event, ...]
    initial_ids: tuple[int, ...]

    @property
    def start(self) -> float:
        return self.events[0].time

    @property
    def end(self) -> float:
        return self.events[-1].time

    @property
    def merge_times(self) -> list[float]:
        return [e.time for e in self.events if e.merges]

    @property
    def n_initial(self) -> int:
        return len(self.initial_ids)

    def record(self, ball_id: int) -> BallRecord:
        return self.records[ball_id]

    def collection(self, index: int) -> list[Ball]:
        e = self.events[index]
        return [self.records[i].ball_at(e.time) for i in e.alive]

    def leaves(self, ball_id: int) -> frozenset[int]:
        """Initial-ball ids in the subtree of ``ball_id``."""
        stack, out = [ball_id], set()
        while stack:
            b = stack.pop()
            kids = self.records[b].children
            if kids:
                stack.extend(kids)
            else:
                out.add(b)
        return frozenset(out)

    def root_at_end(self, ball_id: int) -> int:
        b = ball_id
        while self.records[b].parent is not None:
            b = self.records[b].parent
        return b

    def total_radius(self, index: int) -> float:
        return math.fsum(b.radius for b in self.collection(index))


def next_merge_scale(balls: Sequence[Ball]) -> tuple[float, list[tuple[int, int]]]:
    """Smallest scale factor at which two balls of the collection touch.

    Returns ``(inf, [])`` for fewer than two balls. All pairs within
    ``TANGENCY_TOL`` of the minimum are reported.
    """
    if len(balls) < 2:
        return math.inf, []
    c = np.array([b.center for b in balls])
    r = np.array([b.radius for b in balls])
    i, j = np.triu_indices(len(balls), k=1)
    ratio = np.hypot(*(c[i] - c[j]).T) / (r[i] + r[j])
    lam = float(ratio.min())
    hit = ratio <= lam + TANGENCY_TOL
    return lam, list(zip(i[hit].tolist(), j[hit].tolist()))


def merge_balls(balls: Sequence[Ball]) -> Ball:
    """Radius-weighted centroid ball with the summed radius.

    Contains every input as long as the inputs form a connected chain of
    intersecting balls.
    """
    if not balls:
        raise ValueError("merge_balls needs at least one ball")
    r = np.array([b.radius for b in balls])
    c = np.array([b.center for b in balls])
    total = math.fsum(r)
    center = (r[:, None] * c).sum(axis=0) / total
    return Ball((float(center[0]), float(center[1])), total)


def _overlap_groups(centers: np.ndarray, radii: np.ndarray) -> list[list[int]] | None:
    """Connected components of the closed-ball intersection graph, or None if disjoint."""
    n = len(radii)
    if n < 2:
        return None
    i, j = np.triu_indices(n, k=1)
    d = np.hypot(*(centers[i] - centers[j]).T)
    hit = d <= (radii[i] + radii[j]) * (1 + TANGENCY_TOL)
    if not hit.any():
        return None
    g = coo_matrix((np.ones(hit.sum()), (i[hit], j[hit])), shape=(n, n))
    _, labels = connected_components(g, directed=False)
    groups: dict[int, list[int]] = {}
    for k, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(k)
    return [g for g in groups.values() if len(g) > 1]


def check_disjoint(balls: Sequence[Ball]) -> None:
    if len(balls) < 2:
        return
    c = np.array([b.center for b in balls])
    r = np.array([b.radius for b in balls])
    if _overlap_groups(c, r):
        raise ValueError("initial balls must be pairwise disjoint")


def grow(initial: Sequence[Ball], target_total_radius: float) -> GrowthTrace:
    """Grow a disjoint collection of closed balls up to the given total radius."""
    initial = list(initial)
    if not initial:
        raise ValueError("grow needs at least one initial ball")
    check_disjoint(initial)
    r0 = math.fsum(b.radius for b in initial)
    target = float(target_total_radius)
    if not target > r0:
        raise ValueError(f"target total radius {target} must exceed the initial total radius {r0}")

    records: list[dict] = [
        dict(id=k, center=b.center, birth_time=r0, birth_radius=b.radius, children=(), parent=None, death_time=None)
        for k, b in enumerate(initial)
    ]
    alive = list(range(len(initial)))
    events = [Event(r0, tuple(alive))]
    t = r0

    def balls_at(ids, time):
        return [Ball(records[k]["center"], records[k]["birth_radius"] * time / records[k]["birth_time"]) for k in ids]

    while True:
        lam, _ = next_merge_scale(balls_at(alive, t))
        t_next = lam * t
        if not t_next <= target:
            if events[-1].time != target:
                events.append(Event(target, tuple(alive)))
            break
        t = t_next
        merges = []
        while True:
            cur = balls_at(alive, t)
            c = np.array([b.center for b in cur])
            r = np.array([b.radius for b in cur])
            groups = _overlap_groups(c, r)
            if not groups:
                break
            dead = set()
            born = []
            for grp in groups:
                ids = tuple(alive[k] for k in grp)
                merged = merge_balls([cur[k] for k in grp])
                new_id = len(records)
                records.append(
                    dict(id=new_id, center=merged.center, birth_time=t, birth_radius=merged.radius,
                         children=ids, parent=None, death_time=None)
                )
                for k in ids:
                    records[k]["parent"] = new_id
                    records[k]["death_time"] = t
                dead.update(ids)
                born.append(new_id)
                merges.append((new_id, ids))
            alive = [k for k in alive if k not in dead] + born
        events.append(Event(t, tuple(alive), tuple(merges)))
        if t >= target:
            break

    return GrowthTrace(
        records=tuple(BallRecord(**rec) for rec in records),
        events=tuple(events),
        initial_ids=tuple(range(len(initial))),
    )


def _event_index(trace: GrowthTrace, t: float, left_limit: bool = False) -> int:
    times = [e.time for e in trace.events]
    lo, hi = trace.start, trace.end
    slack = 1e-12 * max(1.0, abs(hi))
    if not (lo - slack <= t <= hi + slack):
        raise ValueError(f"t = {t} outside the growth range [{lo}, {hi}]")
    idx = int(np.searchsorted(times, t, side="right")) - 1
    idx = max(idx, 0)
    if left_limit and idx > 0 and t == times[idx] and trace.events[idx].merges:
        idx -= 1
    return idx


def collection_at(trace: GrowthTrace, t: float, left_limit: bool = False) -> list[Ball]:
    """Collection at total radius ``t``.

    Right-continuous at merge times; ``left_limit=True`` gives the pre-merge
    collection there instead.
    """
    idx = _event_index(trace, t, left_limit)
    return [trace.records[k].ball_at(t) for k in trace.events[idx].alive]


def alive_ids_at(trace: GrowthTrace, t: float, left_limit: bool = False) -> tuple[int, ...]:
    return trace.events[_event_index(trace, t, left_limit)].alive


def initial_collection(config: PointConfig, eta: float) -> list[Ball]:
    """Closed balls of radius ``eta`` about every point; needs ``0 < eta < eta0``."""
    eta0 = separation(config)
    if not (0 < eta < eta0):
        raise ValueError(f"eta = {eta} must lie in (0, eta0 = {eta0})")
    return [Ball(tuple(p), eta) for p in config.points]


def _merge_free_trace(balls: Sequence[Ball], t0: float, t1: float) -> GrowthTrace:
    recs = tuple(BallRecord(k, b.center, t0, b.radius) for k, b in enumerate(balls))
    ids = tuple(range(len(balls)))
    return GrowthTrace(recs, (Event(t0, ids), Event(t1, ids)), ids)


def concatenate(first: GrowthTrace, second: GrowthTrace, tol: float = 1e-9) -> GrowthTrace:
    """Join two growths where the second starts from the final collection of the first.

    The junction is kept as an event only if a merge happened there.
    """
    end_balls = first.collection(len(first.events) - 1)
    start_balls = second.collection(0)
    if abs(first.end - second.start) > tol * max(1.0, first.end) or len(end_balls) != len(start_balls):
        raise ValueError("second growth must start from the final collection of the first")
    # match second's initial balls to first's final ids by geometry
    mapping: dict[int, int] = {}
    final_ids = list(first.events[-1].alive)
    for sid, sb in zip(second.events[0].alive, start_balls):
        for fid, fb in zip(final_ids, end_balls):
            if fid in mapping.values():
                continue
            if math.dist(sb.center, fb.center) <= tol * max(1.0, fb.radius) and abs(sb.radius - fb.radius) <= tol * fb.radius:
                mapping[sid] = fid
                break
        else:
            raise ValueError("second growth must start from the final collection of the first")

    new_ids: dict[int, int] = {}
    nxt = len(first.records)
    for rec in second.records:
        if rec.id in mapping:
            new_ids[rec.id] = mapping[rec.id]
        else:
            new_ids[rec.id] = nxt
            nxt += 1

    def remap(i):
        return None if i is None else new_ids[i]

    records = list(first.records)
    for rec in second.records:
        nid = new_ids[rec.id]
        if rec.id in mapping:
            old = records[nid]
            records[nid] = BallRecord(old.id, old.center, old.birth_time, old.birth_radius, old.children,
                                      remap(rec.parent), rec.death_time)
        else:
            records.append(BallRecord(nid, rec.center, rec.birth_time, rec.birth_radius,
                                      tuple(new_ids[c] for c in rec.children), remap(rec.parent),
                                      rec.death_time))
    records.sort(key=lambda r: r.id)

    events = list(first.events)
    if not events[-1].merges:
        events.pop()
    for e in second.events[1:]:
        events.append(Event(e.time, tuple(new_ids[i] for i in e.alive),
                            tuple((new_ids[a], tuple(new_ids[c] for c in cs)) for a, cs in e.merges)))
    return GrowthTrace(tuple(records), tuple(events), first.initial_ids)


def growth_family(config: PointConfig, r: float = 1.0, r0: float | None = None) -> GrowthTrace:
    """Ball family on ``[r0, r]`` covering the configuration.

    A reference growth starts from radius ``eta1 = min(eta0/2, 1/(n+1))``
    balls; below total radius ``n * eta1`` the family is extended backward by
    ``{B(p, t/n)}``, which never touches, and the two pieces are joined.
    """
    n = config.n
    eta1 = min(separation(config) / 2.0, 1.0 / (n + 1))
    t_ref = n * eta1
    if r0 is None:
        r0 = t_ref / 2.0
    if not 0 < r0 < r:
        raise ValueError("need 0 < r0 < r")
    if r0 >= t_ref:
        # restart the reference growth from its (disjoint, post-merge) collection at r0
        ref = grow([Ball(tuple(p), eta1) for p in config.points], r)
        return grow(collection_at(ref, r0), r)
    back = _merge_free_trace([Ball(tuple(p), r0 / n) for p in config.points], r0, t_ref)
    if r <= t_ref:
        return _merge_free_trace([Ball(tuple(p), r0 / n) for p in config.points], r0, r)
    ref = grow([Ball(tuple(p), eta1) for p in config.points], r)
    return concatenate(back, ref)


# -- CSV round trip ---------------------------------------------------------

CSV_FIELDS = ("time", "ball_id", "center_x", "center_y", "radius", "parent_id", "total_radius")


def trace_to_csv(trace: GrowthTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for k, e in enumerate(trace.events):
        total = trace.total_radius(k)
        for i in e.alive:
            rec = trace.records[i]
            parent = "" if rec.parent is None else rec.parent
            w.writerow([repr(e.time), i, repr(rec.center[0]), repr(rec.center[1]),
                        repr(rec.radius_at(e.time)), parent, repr(total)])
    return buf.getvalue()


def trace_from_csv(text: str) -> GrowthTrace:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty trace file")
    missing = [f for f in CSV_FIELDS[:6] if f not in rows[0]]
    if missing:
        raise ValueError(f"trace file is missing field(s): {', '.join(missing)}")
    by_time: dict[float, list[dict]] = {}
    for row in rows:
        try:
            t = float(row["time"])
            int(row["ball_id"]), float(row["center_x"]), float(row["center_y"]), float(row["radius"])
        except ValueError as exc:
            raise ValueError(f"malformed trace row {row!r}: {exc}") from None
        by_time.setdefault(t, []).append(row)
    times = sorted(by_time)
    info: dict[int, dict] = {}
    for t in times:
        for row in by_time[t]:
            i = int(row["ball_id"])
            if i not in info:
                info[i] = dict(id=i, center=(float(row["center_x"]), float(row["center_y"])),
                               birth_time=t, birth_radius=float(row["radius"]), children=[], parent=None,
                               death_time=None)
            if row["parent_id"] != "":
                info[i]["parent"] = int(row["parent_id"])
    for i, rec in info.items():
        if rec["parent"] is not None:
            info[rec["parent"]]["children"].append(i)
    for i, rec in info.items():
        if rec["parent"] is not None:
            rec["death_time"] = info[rec["parent"]]["birth_time"]
    ids = sorted(info)
    if ids != list(range(len(ids))):
        raise ValueError("ball ids must be 0..N-1")
    records = tuple(BallRecord(**{**info[i], "children": tuple(sorted(info[i]["children"]))}) for i in ids)
    events = []
    for t in times:
        alive = tuple(int(row["ball_id"]) for row in by_time[t])
        merges = tuple((i, records[i].children) for i in alive if records[i].children and records[i].birth_time == t)
        events.append(Event(t, alive, merges))
    initial = tuple(int(row["ball_id"]) for row in by_time[times[0]])
    return GrowthTrace(records, tuple(events), initial)
