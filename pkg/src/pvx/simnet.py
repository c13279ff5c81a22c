"""Deterministic discrete-event network simulation.

Events live in a heap keyed by (virtual time, tiebreak counter), so the
processing order is a pure function of the seed and the inputs.  Virtual
time is integer microseconds; nothing reads a wall clock.

Per-link behaviour: uniform delay jitter inside [delay_min, delay_max],
independent drop probability, and optional partition windows.  Node fault
scripts use the vocabulary crash@t, mute@t..t', equivocate@h (the last is
interpreted by the consensus layer, not the network).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field


@dataclass(frozen=True)
class FaultScript:
    crash_at: int | None = None
    mute_windows: tuple[tuple[int, int], ...] = ()
    equivocate_heights: frozenset[int] = frozenset()

    def crashed(self, t: int) -> bool:
        return self.crash_at is not None and t >= self.crash_at

    def muted(self, t: int) -> bool:
        return any(a <= t <= b for a, b in self.mute_windows)


def parse_fault(spec: str) -> FaultScript:
    """One clause of the fault vocabulary: "crash@T", "mute@T..T'",
    "equivocate@H" (times in microseconds, H a block height)."""
    op, _, arg = spec.partition("@")
    if not arg:
        raise ValueError(f"fault {spec!r} missing @ argument")
    if op == "crash":
        return FaultScript(crash_at=int(arg))
    if op == "mute":
        start, sep, end = arg.partition("..")
        if not sep:
            raise ValueError(f"mute window {spec!r} needs start..end")
        return FaultScript(mute_windows=((int(start), int(end)),))
    if op == "equivocate":
        return FaultScript(equivocate_heights=frozenset({int(arg)}))
    raise ValueError(f"unknown fault op {op!r}")


def merge_faults(specs: list[str]) -> FaultScript:
    crash = None
    mutes: list[tuple[int, int]] = []
    heights: set[int] = set()
    for spec in specs:
        fs = parse_fault(spec)
        if fs.crash_at is not None:
            crash = fs.crash_at if crash is None else min(crash, fs.crash_at)
        mutes.extend(fs.mute_windows)
        heights.update(fs.equivocate_heights)
    return FaultScript(crash, tuple(mutes), frozenset(heights))


@dataclass(frozen=True)
class Deliver:
    dst: str
    src: str
    message: object


@dataclass(frozen=True)
class TimerFire:
    node_id: str
    kind: str


@dataclass(frozen=True)
class ClientSubmit:
    node_id: str
    tx: object


@dataclass
class NetStats:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    by_type: dict[str, int] = field(default_factory=dict)

    def count_type(self, message: object) -> None:
        name = type(message).__name__
        self.by_type[name] = self.by_type.get(name, 0) + 1


class SimNetwork:
    """Event queue plus the link model shared by all nodes."""

    def __init__(self, node_ids: list[str], seed: int,
                 delay: tuple[int, int] = (1_000, 5_000), drop: float = 0.0,
                 partitions: tuple[tuple[int, int, tuple[frozenset, ...]], ...] = ()):
        self.node_ids = sorted(node_ids)
        self.rng = random.Random(seed)
        self.delay_min, self.delay_max = delay
        self.drop = drop
        self.partitions = partitions
        self.time = 0
        self._counter = 0
        self._queue: list[tuple[int, int, object]] = []
        self.stats = NetStats()

    # -- scheduling ---------------------------------------------------------

    def schedule(self, at: int, event: object) -> None:
        if at < self.time:
            at = self.time
        self._counter += 1
        heapq.heappush(self._queue, (at, self._counter, event))

    def _partitioned(self, src: str, dst: str) -> bool:
        for start, end, groups in self.partitions:
            if start <= self.time <= end:
                for group in groups:
                    if (src in group) != (dst in group):
                        return True
        return False

    def send(self, src: str, dst: str, message: object) -> None:
        self.stats.sent += 1
        self.stats.count_type(message)
        if self._partitioned(src, dst):
            self.stats.dropped += 1
            return
        if self.drop > 0 and self.rng.random() < self.drop:
            self.stats.dropped += 1
            return
        latency = self.rng.randint(self.delay_min, self.delay_max)
        self.schedule(self.time + latency, Deliver(dst, src, message))

    def set_timer(self, node_id: str, kind: str, delay: int) -> None:
        self.schedule(self.time + delay, TimerFire(node_id, kind))

    # -- event loop ---------------------------------------------------------

    def pending(self) -> int:
        return len(self._queue)

    def pop(self) -> object | None:
        if not self._queue:
            return None
        at, _, event = heapq.heappop(self._queue)
        self.time = at
        if isinstance(event, Deliver):
            self.stats.delivered += 1
        return event
