"""Growth annuli and the minimal concentric rearrangement number.

A family of annuli ``{r < |x - c| <= s}`` can be translated to a common
center without overlap exactly when its radial intervals ``(r, s]`` are
pairwise disjoint. The minimal number of such classes is therefore the
chromatic number of an interval-overlap graph, which a left-endpoint sweep
attains (it equals the maximal overlap depth).
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import GrowthTrace


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, float]
    inner: float
    outer: float
    ball_id: int | None = None
    segment: int | None = None

    def __post_init__(self):
        if not (0 < self.inner < self.outer < math.inf):
            raise ValueError(f"annulus radii must satisfy 0 < inner < outer, got ({self.inner}, {self.outer})")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = np.hypot(x[..., 0] - self.center[0], x[..., 1] - self.center[1])
        return (d > self.inner) & (d <= self.outer)


@dataclass(frozen=True)
class AnnuliCollection:
    annuli: tuple[Annulus, ...]
    trace: GrowthTrace | None = None

    def __len__(self):
        return len(self.annuli)

    def __iter__(self):
        return iter(self.annuli)

    def __getitem__(self, i):
        return self.annuli[i]

    @property
    def intervals(self) -> list[tuple[float, float]]:
        return [(a.inner, a.outer) for a in self.annuli]

    def subset(self, indices: Sequence[int]) -> "AnnuliCollection":
        return AnnuliCollection(tuple(self.annuli[i] for i in indices), self.trace)

    def union(self, other: "AnnuliCollection") -> "AnnuliCollection":
        return AnnuliCollection(self.annuli + other.annuli)


@dataclass(frozen=True)
class McrPartition:
    classes: tuple[tuple[int, ...], ...]

    @property
    def K(self) -> int:
        return len(self.classes)

    def class_of(self) -> dict[int, int]:
        return {i: k for k, cls in enumerate(self.classes) for i in cls}


def annuli_from_trace(trace: GrowthTrace) -> AnnuliCollection:
    """Annuli swept by each ball between consecutive events of the growth."""
    out = []
    events = trace.events
    for i in range(len(events) - 1):
        t0, t1 = events[i].time, events[i + 1].time
        if not t1 > t0:
            continue
        for b in events[i].alive:
            rec = trace.records[b]
            out.append(Annulus(rec.center, rec.radius_at(t0), rec.radius_at(t1), ball_id=b, segment=i))
    return AnnuliCollection(tuple(out), trace)


def intervals_overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """Half-open intervals ``(r, s]`` overlap iff ``max(r, r') < min(s, s')``."""
    return max(a[0], b[0]) < min(a[1], b[1])


def is_rearrangeable(intervals: Sequence[tuple[float, float]], rtol: float = 0.0) -> bool:
    """Whether the radial intervals chain as ``r1 < s1 <= r2 < s2 <= ...``."""
    ivs = sorted(intervals)
    for (r1, s1), (r2, s2) in zip(ivs, ivs[1:]):
        if s1 > r2 * (1 + rtol):
            return False
    return True


def overlap_depth(intervals: Sequence[tuple[float, float]]) -> int:
    """``max_t #{i : r_i < t <= s_i}``."""
    events = []
    for r, s in intervals:
        events.append((r, 1))
        events.append((s, -1))
    # at equal coordinates closings come first: (s, ...] ends before (r=s, ...] opens
    events.sort(key=lambda e: (e[0], e[1]))
    depth = best = 0
    for _, d in events:
        depth += d
        best = max(best, depth)
    return best


def mcr_exact(collection: AnnuliCollection | Sequence[tuple[float, float]]) -> McrPartition:
    """Optimal partition into concentrically rearrangeable classes."""
    ivs = collection.intervals if isinstance(collection, AnnuliCollection) else list(collection)
    order = sorted(range(len(ivs)), key=lambda i: (ivs[i][0], ivs[i][1]))
    heap: list[tuple[float, int]] = []
    classes: list[list[int]] = []
    for i in order:
        r, s = ivs[i]
        if heap and heap[0][0] <= r:
            _, k = heapq.heappop(heap)
        else:
            k = len(classes)
            classes.append([])
        classes[k].append(i)
        heapq.heappush(heap, (s, k))
    return McrPartition(tuple(tuple(c) for c in classes))


def mcr_brute(collection: AnnuliCollection | Sequence[tuple[float, float]], max_size: int = 10) -> int:
    """Exhaustive minimum over set partitions. Test oracle only."""
    ivs = collection.intervals if isinstance(collection, AnnuliCollection) else list(collection)
    m = len(ivs)
    if m > max_size:
        raise ValueError(f"mcr_brute supports at most {max_size} annuli, got {m}")
    if m == 0:
        return 0
    best = m

    def search(i: int, classes: list[list[int]]):
        nonlocal best
        if len(classes) >= best:
            return
        if i == m:
            best = len(classes)
            return
        for cls in classes:
            if all(not intervals_overlap(ivs[i], ivs[j]) for j in cls):
                cls.append(i)
                search(i + 1, classes)
                cls.pop()
        classes.append([i])
        search(i + 1, classes)
        classes.pop()

    search(0, [])
    return best


def mcr_paper_partition(collection: AnnuliCollection) -> McrPartition:
    """Partition built along the merge forest; has at most ``n`` classes.

    A leaf ball's chain of nested annuli forms one class. At a merge, the
    annuli of the merged ball all lie outside radius ``s``, the summed radius,
    while each child's classes live inside the child's radius ``< s``; so the
    merged ball's chain can join any one class of one child.
    """
    trace = collection.trace
    if trace is None or any(a.ball_id is None for a in collection.annuli):
        raise ValueError("mcr_paper_partition needs annuli with growth-trace provenance")
    chains: dict[int, list[int]] = {}
    for idx, a in enumerate(collection.annuli):
        chains.setdefault(a.ball_id, []).append(idx)
    for ids in chains.values():
        ids.sort(key=lambda i: collection.annuli[i].inner)

    def build(ball_id: int) -> list[list[int]]:
        rec = trace.records[ball_id]
        own = list(chains.get(ball_id, []))
        if not rec.children:
            return [own] if own else [[]]
        sub = [build(c) for c in rec.children]
        # the child whose classes host this ball's chain: the largest one at the merge
        host = max(range(len(rec.children)), key=lambda k: trace.records[rec.children[k]].radius_at(rec.birth_time))
        sub[host][0] = sub[host][0] + own
        return [cls for classes in sub for cls in classes]

    roots = trace.events[-1].alive
    classes = [cls for root in roots for cls in build(root)]
    classes = [tuple(c) for c in classes if c]
    return McrPartition(tuple(classes))


def partition_is_valid(collection: AnnuliCollection, partition: McrPartition) -> bool:
    seen = sorted(i for cls in partition.classes for i in cls)
    if seen != list(range(len(collection))):
        return False
    ivs = collection.intervals
    return all(is_rearrangeable([ivs[i] for i in cls]) for cls in partition.classes)


def annuli_to_csv(collection: AnnuliCollection, partition: McrPartition | None = None) -> str:
    class_of = partition.class_of() if partition else {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("center_x", "center_y", "inner", "outer", "class_id"))
    for i, a in enumerate(collection.annuli):
        w.writerow((repr(a.center[0]), repr(a.center[1]), repr(a.inner), repr(a.outer), class_of.get(i, "")))
    return buf.getvalue()
