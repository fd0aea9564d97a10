"""Associative scans with span/work flop accounting.

The parallel scan is the classic up-sweep / down-sweep tree: an in-place
up-sweep builds partial reductions, the root is reset to the identity, the
down-sweep turns the tree into exclusive prefixes and a final pass combines
each exclusive prefix with its saved input (``prefix ⊗ element``). Inputs
are padded with the identity up to a power of two.

Execution is organised in *levels*. All invocations inside one level are
independent; the level contributes its total flops to work and its most
expensive invocation to span.
"""
from __future__ import annotations

import operator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Generic, Optional, Sequence, TypeVar

from .numkernel import FlopLedger

T = TypeVar("T")


class _NoIdentity:
    def __repr__(self):
        return "NO_IDENTITY"


NO_IDENTITY: Any = _NoIdentity()


@dataclass(frozen=True)
class Monoid(Generic[T]):
    """Associative ``combine(a, b, ledger)`` with a two-sided identity.

    ``combine`` must be pure; it charges its flops to the ledger it is
    given. Pass ``identity=NO_IDENTITY`` for operators that only support
    sequential scans.
    """

    combine: Callable[[T, T, Optional[FlopLedger]], T]
    identity: Any = NO_IDENTITY
    name: str = ""

    @property
    def has_identity(self) -> bool:
        return self.identity is not NO_IDENTITY

    def __call__(self, a: T, b: T, ledger: Optional[FlopLedger] = None) -> T:
        return self.combine(a, b, ledger)

    def opposite(self) -> "Monoid[T]":
        combine = self.combine
        return Monoid(lambda a, b, led: combine(b, a, led), self.identity, f"{self.name}^op")

    @classmethod
    def from_binary(cls, op: Callable[[T, T], T], identity: Any = NO_IDENTITY,
                    cost: int = 1, name: str = "") -> "Monoid[T]":
        def combine(a, b, ledger):
            if ledger is not None:
                ledger.charge(name or "combine", cost)
            return op(a, b)
        return cls(combine, identity, name)


addition: Monoid = Monoid.from_binary(operator.add, 0, name="add")
subtraction: Monoid = Monoid.from_binary(operator.sub, name="sub")


@dataclass(frozen=True)
class LevelCost:
    work: int
    span: int
    label: str = ""


@dataclass
class ScanReport(Generic[T]):
    results: list
    levels: list[LevelCost] = field(default_factory=list)
    ledger: FlopLedger = field(default_factory=FlopLedger)

    @property
    def work_flops(self) -> int:
        return sum(lv.work for lv in self.levels)

    @property
    def span_flops(self) -> int:
        return sum(lv.span for lv in self.levels)

    @property
    def level_count(self) -> int:
        return len(self.levels)


class Schedule:
    """Runs levels of independent tasks and records their cost.

    A task is a callable taking a private :class:`FlopLedger`. With
    ``workers > 1`` the tasks of one level run on a thread pool; results are
    returned in task order either way.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self.levels: list[LevelCost] = []
        self.ledger = FlopLedger()
        self._pool: Optional[ThreadPoolExecutor] = None

    def __enter__(self) -> "Schedule":
        if self.workers > 1:
            self._pool = ThreadPoolExecutor(self.workers)
        return self

    def __exit__(self, *exc) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def level(self, tasks: Sequence[Callable[[FlopLedger], Any]], label: str = "") -> list:
        if not tasks:
            return []

        def run(task):
            led = FlopLedger()
            return task(led), led

        if self._pool is not None and len(tasks) > 1:
            outs = list(self._pool.map(run, tasks))
        else:
            outs = [run(t) for t in tasks]
        costs = [led.total for _, led in outs]
        self.levels.append(LevelCost(sum(costs), max(costs), label))
        for _, led in outs:
            self.ledger.merge(led)
        return [res for res, _ in outs]

    def map(self, fn: Callable[[Any, FlopLedger], Any], items: Sequence, label: str = "") -> list:
        return self.level([lambda led, x=x: fn(x, led) for x in items], label)

    def report(self, results: list) -> ScanReport:
        return ScanReport(results, list(self.levels), FlopLedger().merge(self.ledger))


def seq_scan(elems: Sequence[T], monoid: Monoid[T]) -> ScanReport:
    """Left-to-right inclusive scan; every combine is its own level."""
    if len(elems) == 0:
        raise ValueError("cannot scan an empty sequence")
    sched = Schedule()
    acc = elems[0]
    results = [acc]
    for e in elems[1:]:
        acc = sched.level([lambda led, a=acc, e=e: monoid.combine(a, e, led)], "seq")[0]
        results.append(acc)
    return sched.report(results)


def _tree_scan(elems: Sequence[T], monoid: Monoid[T], sched: Schedule) -> list:
    n = len(elems)
    size = 1
    while size < n:
        size *= 2
    a = list(elems) + [monoid.identity] * (size - n)
    saved = list(a)
    combine = monoid.combine

    d = 1
    while d < size:  # up-sweep
        pairs = [(i + d - 1, i + 2 * d - 1) for i in range(0, size, 2 * d)]
        out = sched.level([lambda led, j=j, k=k: combine(a[j], a[k], led) for j, k in pairs], "up")
        for (_, k), v in zip(pairs, out):
            a[k] = v
        d *= 2

    a[size - 1] = monoid.identity
    d = size // 2
    while d >= 1:  # down-sweep
        pairs = [(i + d - 1, i + 2 * d - 1) for i in range(0, size, 2 * d)]
        out = sched.level([lambda led, j=j, k=k: combine(a[k], a[j], led) for j, k in pairs], "down")
        for (j, k), v in zip(pairs, out):
            a[j] = a[k]
            a[k] = v
        d //= 2

    return sched.level(
        [lambda led, i=i: combine(a[i], saved[i], led) for i in range(n)], "final"
    )


def block_reduce(elems: Sequence[T], monoid: Monoid[T], l: int,
                 ledger: Optional[FlopLedger] = None) -> list:
    """Combine consecutive runs of ``l`` elements left to right."""
    if l < 1:
        raise ValueError(f"block length must be >= 1, got {l}")
    blocks = []
    for start in range(0, len(elems), l):
        acc = elems[start]
        for e in elems[start + 1:start + l]:
            acc = monoid.combine(acc, e, ledger)
        blocks.append(acc)
    return blocks


def _block_scan(elems, monoid, l, sched):
    chunks = [elems[s:s + l] for s in range(0, len(elems), l)]

    def local_scan(chunk, led):
        acc = chunk[0]
        out = [acc]
        for e in chunk[1:]:
            acc = monoid.combine(acc, e, led)
            out.append(acc)
        return out

    partial = sched.map(local_scan, chunks, "block-local")
    totals = _tree_scan([p[-1] for p in partial], monoid, sched)

    def expand(b, led):
        return [monoid.combine(totals[b - 1], p, led) for p in partial[b]]

    expanded = sched.map(expand, range(1, len(chunks)), "block-expand")
    results = list(partial[0])
    for block in expanded:
        results.extend(block)
    return results


def par_scan(elems: Sequence[T], monoid: Monoid[T], block: int = 1, workers: int = 1,
             schedule: Optional[Schedule] = None) -> ScanReport:
    """Parallel inclusive scan.

    With ``block > 1`` each run of ``block`` elements is scanned locally,
    the block totals go through the tree scan and the local prefixes are
    then prefixed with the preceding block total.

    When ``schedule`` is given, levels are appended to it and the returned
    report covers everything recorded on that schedule.
    """
    if len(elems) == 0:
        raise ValueError("cannot scan an empty sequence")
    if not monoid.has_identity:
        raise ValueError(f"monoid {monoid.name or monoid!r} has no identity; parallel scan needs one")
    if block < 1:
        raise ValueError(f"block length must be >= 1, got {block}")
    if schedule is None:
        with Schedule(workers) as sched:
            return par_scan(elems, monoid, block, schedule=sched)
    if block == 1:
        results = _tree_scan(elems, monoid, schedule)
    else:
        results = _block_scan(list(elems), monoid, block, schedule)
    return schedule.report(results)


def reverse_scan(elems: Sequence[T], monoid: Monoid[T], block: int = 1, workers: int = 1,
                 schedule: Optional[Schedule] = None) -> ScanReport:
    """Suffix products: ``results[k] = a_k ⊗ a_{k+1} ⊗ ... ⊗ a_n`` (time order)."""
    rep = par_scan(list(elems)[::-1], monoid.opposite(), block, workers, schedule)
    rep.results.reverse()
    return rep
