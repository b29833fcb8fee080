"""Shuffling, batching and background prefetching of event streams."""

from __future__ import annotations

import queue
import threading
from pathlib import Path

from ..rng import stream
from ..training import GlobalBatch
from .records import read_records
from .synth import events_to_arrays


class ShuffleBatcher:
    """Buffered shuffle followed by fixed-size batching.

    A buffer of ``buffer_size`` items is filled first; each further input
    replaces a uniformly chosen buffered item, which is emitted. The
    remaining buffer is emitted in random order at the end. ``dropped``
    holds the number of trailing items discarded by ``drop_last`` once
    iteration finishes.
    """

    def __init__(self, items, buffer_size: int, batch_size: int, seed: int = 0, drop_last: bool = True,
                 epoch: int = 0):
        if buffer_size < 1 or batch_size < 1:
            raise ValueError("buffer_size and batch_size must be >= 1")
        self.items = items
        self.buffer_size = buffer_size
        self.batch_size = batch_size
        self.seed = seed
        self.drop_last = drop_last
        self.epoch = epoch
        self.dropped = 0

    def _shuffled(self):
        rng = stream(self.seed, "data", 2, self.epoch)
        buf = []
        for item in self.items:
            if len(buf) < self.buffer_size:
                buf.append(item)
                continue
            j = int(rng.integers(len(buf)))
            yield buf[j]
            buf[j] = item
        for j in rng.permutation(len(buf)):
            yield buf[j]

    def __iter__(self):
        self.dropped = 0
        batch = []
        for item in self._shuffled():
            batch.append(item)
            if len(batch) == self.batch_size:
                yield batch
                batch = []
        if batch:
            if self.drop_last:
                self.dropped = len(batch)
            else:
                yield batch


def shuffle_batch(items, buffer_size: int, batch_size: int, seed: int = 0, drop_last: bool = True) -> ShuffleBatcher:
    return ShuffleBatcher(items, buffer_size, batch_size, seed, drop_last)


_DONE = object()


class _Failure:
    def __init__(self, exc):
        self.exc = exc


class Prefetcher:
    """Iterate ``items`` on a producer thread through a bounded queue."""

    def __init__(self, items, depth: int):
        if depth < 1:
            raise ValueError("prefetch depth must be >= 1")
        self.depth = depth
        self.queue: queue.Queue = queue.Queue(maxsize=depth)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._produce, args=(items,), daemon=True)
        self._thread.start()

    def _put(self, obj) -> bool:
        while not self._stop.is_set():
            try:
                self.queue.put(obj, timeout=0.05)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self, items):
        try:
            for item in items:
                if not self._put(item):
                    return
        except BaseException as e:
            self._put(_Failure(e))
            return
        self._put(_DONE)

    def __iter__(self):
        try:
            while True:
                obj = self.queue.get()
                if obj is _DONE:
                    return
                if isinstance(obj, _Failure):
                    raise obj.exc
                yield obj
        finally:
            self.close()

    def close(self):
        self._stop.set()


def prefetch(items, depth: int):
    return iter(Prefetcher(items, depth))


class ShowerDataset:
    """Epoch-wise iterator of :class:`GlobalBatch` from events or a record file.

    With ``cache`` the events are decoded once and held in memory;
    otherwise a record file is re-read every epoch.
    """

    def __init__(self, source, batch_size: int, shuffle_buffer: int = 64, seed: int = 0,
                 prefetch_depth: int = 0, drop_last: bool = True, cache: bool = True):
        self.source = source
        self.batch_size = batch_size
        self.shuffle_buffer = shuffle_buffer
        self.seed = seed
        self.prefetch_depth = prefetch_depth
        self.drop_last = drop_last
        self._events = None
        if not isinstance(source, (str, Path)):
            self._events = list(source)
        elif cache:
            self._events = list(read_records(source))

    def _items(self):
        return self._events if self._events is not None else read_records(self.source)

    def epoch(self, index: int = 0):
        batcher = ShuffleBatcher(self._items(), self.shuffle_buffer, self.batch_size, self.seed,
                                 self.drop_last, epoch=index)
        batches = (GlobalBatch(*events_to_arrays(b)) for b in batcher)
        return prefetch(batches, self.prefetch_depth) if self.prefetch_depth > 0 else batches

    def repeat(self, start_epoch: int = 0):
        e = start_epoch
        while True:
            yield from self.epoch(e)
            e += 1
