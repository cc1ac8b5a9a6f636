"""Map and Reduce over lists, sequential and partitioned.

The partitioned forms split the list into contiguous sublists, run each part
on an executor and stitch the results back together in part order. Partial
folds are combined left to right by ascending part index, so a fixed ``parts``
count always gives the same floating-point result.
"""

from __future__ import annotations

from concurrent.futures import Executor, Future, FIRST_EXCEPTION, wait
from dataclasses import dataclass
from functools import reduce
from typing import Any, Callable, List, Optional, Sequence, Tuple, TypeVar

A = TypeVar("A")
B = TypeVar("B")


class MapElementError(Exception):
    """Raised when the mapped function fails on one element.

    The original exception is chained as ``__cause__``.
    """

    def __init__(self, index: int, cause: BaseException):
        super().__init__(f"map function failed at index {index}: {cause!r}")
        self.index = index


@dataclass(frozen=True)
class SublistPartition:
    total: int
    parts: int
    boundaries: Tuple[Tuple[int, int], ...]

    @property
    def lengths(self) -> List[int]:
        return [length for _, length in self.boundaries]

    def ranges(self) -> List[range]:
        return [range(start, start + length) for start, length in self.boundaries]

    def __getitem__(self, index: int) -> range:
        start, length = self.boundaries[index]
        return range(start, start + length)

    def __len__(self) -> int:
        return self.parts


def partition(total: int, parts: int) -> SublistPartition:
    """Split ``total`` elements into ``parts`` contiguous sublists.

    The first ``total % parts`` sublists get one extra element.

    >>> partition(7, 3).lengths
    [3, 2, 2]
    """
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    if total < 0:
        raise ValueError(f"total must be >= 0, got {total}")
    base, extra = divmod(total, parts)
    bounds = []
    start = 0
    for j in range(parts):
        length = base + (1 if j < extra else 0)
        bounds.append((start, length))
        start += length
    return SublistPartition(total=total, parts=parts, boundaries=tuple(bounds))


def map_list(F: Callable[[A], B], xs: Sequence[A], offset: int = 0) -> List[B]:
    out = []
    for i, x in enumerate(xs):
        try:
            out.append(F(x))
        except Exception as exc:
            raise MapElementError(offset + i, exc) from exc
    return out


def reduce_list(op: Callable[[B, B], B], identity: B, xs: Sequence[B]) -> B:
    if len(xs) == 0:
        return identity
    return reduce(op, xs)


def _run_parts(executor: Optional[Executor], tasks: List[Callable[[], Any]]) -> List[Any]:
    if executor is None:
        return [task() for task in tasks]
    futures: List[Future] = [executor.submit(task) for task in tasks]
    done, pending = wait(futures, return_when=FIRST_EXCEPTION)
    for fut in futures:
        if fut in done and fut.exception() is not None:
            for other in pending:
                other.cancel()
            raise fut.exception()
    return [fut.result() for fut in futures]


def par_map(
    F: Callable[[A], B],
    xs: Sequence[A],
    parts: int,
    executor: Optional[Executor] = None,
) -> List[B]:
    """Map ``F`` over ``xs`` with one executor task per sublist.

    Without an executor the parts run one after another in the calling thread.
    """
    part = partition(len(xs), parts)
    tasks = [
        (lambda r=r: map_list(F, xs[r.start:r.stop], offset=r.start))
        for r in part.ranges()
    ]
    chunks = _run_parts(executor, tasks)
    out: List[B] = []
    for chunk in chunks:
        out.extend(chunk)
    return out


def par_map_reduce(
    F: Callable[[A], B],
    op: Callable[[B, B], B],
    identity: B,
    xs: Sequence[A],
    parts: int,
    executor: Optional[Executor] = None,
) -> B:
    part = partition(len(xs), parts)
    ranges = [r for r in part.ranges() if len(r) > 0]

    def fold(r: range) -> B:
        return reduce_list(op, identity, map_list(F, xs[r.start:r.stop], offset=r.start))

    partials = _run_parts(executor, [(lambda r=r: fold(r)) for r in ranges])
    return reduce_list(op, identity, partials)
