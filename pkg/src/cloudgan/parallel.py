"""Synchronous data-parallel execution on in-process replicas.

Replicas are threads in a shared pool. Gradients are averaged with a
simulated ring all-reduce: every replica's flat gradient vector is split
into R contiguous chunks with ``np.array_split`` (the first ``N mod R``
chunks get one extra element). During reduce-scatter, chunk ``c`` is
accumulated in ring order starting at replica ``c``:
``x[c] + x[c+1] + ... + x[c+R-1]`` (indices mod R), then broadcast by the
allgather phase and divided by R. The simulation runs sequentially, so the
summation order never depends on thread scheduling.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ParamGrads = list  # list[np.ndarray], aligned with Network.parameters()


class ShardError(ValueError):
    pass


class ReplicaError(RuntimeError):
    """A replica raised; the whole synchronous step was abandoned."""

    def __init__(self, rank: int, cause: BaseException):
        super().__init__(f"replica {rank} failed: {cause!r}")
        self.rank = rank
        self.cause = cause


@dataclass
class ReplicaGroup:
    replicas: int = 1
    workers: int | None = None
    replicas_per_worker: int | None = None
    algorithm: str = "ring"
    deterministic: bool = True
    _pool: ThreadPoolExecutor | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replica count must be >= 1")
        if self.workers is None and self.replicas_per_worker is None:
            self.workers, self.replicas_per_worker = self.replicas, 1
        elif self.workers is None:
            self.workers = self.replicas // self.replicas_per_worker
        elif self.replicas_per_worker is None:
            self.replicas_per_worker = self.replicas // self.workers
        if self.workers * self.replicas_per_worker != self.replicas:
            raise ValueError(
                f"layout {self.workers} workers x {self.replicas_per_worker} replicas != {self.replicas}")
        if self.algorithm not in ("ring", "naive"):
            raise ValueError(f"unknown reduction algorithm {self.algorithm!r}")

    @property
    def R(self) -> int:
        return self.replicas

    def allreduce(self, per_replica: Sequence[ParamGrads]) -> ParamGrads:
        fn = ring_allreduce if self.algorithm == "ring" else naive_allreduce
        return fn(per_replica)

    def pool(self) -> ThreadPoolExecutor:
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.replicas, thread_name_prefix="replica")
        return self._pool

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- sharding -----------------------------------------------------------------

@dataclass
class ShardedBatch:
    shards: list
    dropped: int


def shard_slices(batch_size: int, R: int) -> tuple[list[slice], int]:
    if R < 1:
        raise ShardError("replica count must be >= 1")
    if batch_size < R:
        raise ShardError(f"batch of {batch_size} cannot feed {R} replicas without an empty shard")
    b = batch_size // R
    return [slice(r * b, (r + 1) * b) for r in range(R)], batch_size - b * R


def shard_batch(batch, R: int) -> ShardedBatch:
    """Split along axis 0 into R equal shards in original order.

    ``batch`` is an array or a tuple of arrays sharing the leading length;
    the trailing ``B mod R`` samples are dropped and counted.
    """
    parts = batch if isinstance(batch, tuple) else (batch,)
    n = len(parts[0])
    if any(len(p) != n for p in parts):
        raise ShardError("batch components differ in length")
    slices, dropped = shard_slices(n, R)
    shards = [tuple(p[s] for p in parts) if isinstance(batch, tuple) else batch[s] for s in slices]
    return ShardedBatch(shards, dropped)


# -- reductions -----------------------------------------------------------------

def _check_congruent(per_replica: Sequence[ParamGrads]) -> None:
    if len(per_replica) == 0:
        raise ValueError("no gradient sets to reduce")
    shapes = [np.shape(g) for g in per_replica[0]]
    for r, grads in enumerate(per_replica[1:], start=1):
        if len(grads) != len(shapes) or any(np.shape(g) != s for g, s in zip(grads, shapes)):
            raise ValueError(f"replica {r} gradients are not shape-congruent with replica 0")


def _split_like(vec: np.ndarray, like: ParamGrads) -> ParamGrads:
    out, i = [], 0
    for g in like:
        n = np.size(g)
        out.append(vec[i:i + n].reshape(np.shape(g)))
        i += n
    return out


def naive_allreduce(per_replica: Sequence[ParamGrads]) -> ParamGrads:
    """Gather everything and average, summing in replica-index order."""
    _check_congruent(per_replica)
    R = len(per_replica)
    out = []
    for k in range(len(per_replica[0])):
        acc = np.array(per_replica[0][k], dtype=np.float64, copy=True)
        for r in range(1, R):
            acc = acc + per_replica[r][k]
        out.append(acc / R)
    return out


def ring_allreduce(per_replica: Sequence[ParamGrads]) -> ParamGrads:
    """Mean of the gradient sets via a simulated chunked ring."""
    _check_congruent(per_replica)
    R = len(per_replica)
    like = per_replica[0]
    if R == 1:
        return [np.array(g, dtype=np.float64, copy=True) for g in like]
    bufs = [np.concatenate([np.ravel(g) for g in grads]).astype(np.float64) if len(grads) else np.zeros(0)
            for grads in per_replica]
    bounds = np.cumsum([0] + [len(c) for c in np.array_split(np.arange(len(bufs[0])), R)])
    chunk = [slice(bounds[c], bounds[c + 1]) for c in range(R)]

    # reduce-scatter: at step s replica r sends chunk (r - s) to replica r + 1
    for s in range(R - 1):
        msgs = [(r, (r - s) % R, bufs[r][chunk[(r - s) % R]].copy()) for r in range(R)]
        for r, c, data in msgs:
            dst = (r + 1) % R
            bufs[dst][chunk[c]] = data + bufs[dst][chunk[c]]
    # replica r now owns the full sum of chunk (r + 1); allgather circulates it
    for s in range(R - 1):
        msgs = [(r, (r + 1 - s) % R, bufs[r][chunk[(r + 1 - s) % R]].copy()) for r in range(R)]
        for r, c, data in msgs:
            bufs[(r + 1) % R][chunk[c]] = data
    return _split_like(bufs[0] / R, like)


# -- synchronous step -------------------------------------------------------------

class Collective:
    """Barrier-based sum across the replicas of one step.

    Every replica calls :meth:`sum` the same number of times in the same
    order. In deterministic mode contributions are added in rank order;
    otherwise in arrival order (still identical on every replica).
    """

    def __init__(self, n: int, deterministic: bool = True):
        self.n = n
        self.deterministic = deterministic
        self._barrier = threading.Barrier(n)
        self._slots = [None] * n
        self._arrivals: list[int] = []
        self._lock = threading.Lock()

    def sum(self, rank: int, value: np.ndarray) -> np.ndarray:
        if self.n == 1:
            return value
        self._slots[rank] = value
        with self._lock:
            self._arrivals.append(rank)
        self._barrier.wait()
        order = range(self.n) if self.deterministic else list(self._arrivals)
        total = None
        for r in order:
            total = self._slots[r] if total is None else total + self._slots[r]
        self._barrier.wait()
        if rank == 0:
            self._arrivals.clear()
        self._barrier.wait()
        return total

    def barrier(self) -> None:
        if self.n > 1:
            self._barrier.wait()

    def reducer(self, rank: int) -> Callable[[np.ndarray], np.ndarray]:
        return lambda value: self.sum(rank, value)

    def abort(self) -> None:
        self._barrier.abort()


@dataclass
class SyncStepResult:
    results: list
    grads: ParamGrads | None
    thread_times: list[float]


def _freeze(grads):
    for g in grads:
        if isinstance(g, np.ndarray):
            g.flags.writeable = False
    return grads


def run_sync_step(group: ReplicaGroup, closures: Sequence[Callable],
                  appliers: Sequence[Callable] | None = None) -> SyncStepResult:
    """Run one synchronous data-parallel step.

    ``closures[r](collective, rank)`` returns ``(result, grads)``; ``grads``
    may be None for forward-only phases. Once every replica has finished,
    the gradient sets are frozen and averaged, then ``appliers[r](avg)`` is
    called for each replica. Any replica error aborts the step for all.
    """
    R = group.replicas
    if len(closures) != R:
        raise ValueError(f"expected {R} closures, got {len(closures)}")
    coll = Collective(R, group.deterministic)

    def run(rank):
        t0 = time.thread_time()
        try:
            out = closures[rank](coll, rank)
        except BaseException:
            coll.abort()
            raise
        return out, time.thread_time() - t0

    if R == 1:
        try:
            outs = [run(0)]
        except Exception as e:
            raise ReplicaError(0, e) from e
    else:
        futures = [group.pool().submit(run, r) for r in range(R)]
        outs, first_error = [], None
        for r, f in enumerate(futures):
            try:
                outs.append(f.result())
            except threading.BrokenBarrierError as e:
                first_error = first_error or (r, e)
            except Exception as e:
                # the originating failure wins over the barrier fallout it caused
                if first_error is None or isinstance(first_error[1], threading.BrokenBarrierError):
                    first_error = (r, e)
        if first_error is not None:
            raise ReplicaError(first_error[0], first_error[1]) from first_error[1]

    results = [o[0][0] for o in outs]
    per_grads = [o[0][1] for o in outs]
    avg = None
    if per_grads[0] is not None:
        avg = group.allreduce([_freeze(g) for g in per_grads])
        for apply in appliers or ():
            apply(avg)
    return SyncStepResult(results, avg, [o[1] for o in outs])
