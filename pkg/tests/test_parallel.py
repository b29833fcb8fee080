import threading

import numpy as np
import pytest

from cloudgan.parallel import (
    Collective, ReplicaError, ReplicaGroup, ShardError, naive_allreduce, ring_allreduce, run_sync_step,
    shard_batch, shard_slices,
)


def mean_oracle(per_replica):
    """Element-wise mean by explicit accumulation in float64."""
    out = []
    for j in range(len(per_replica[0])):
        acc = np.zeros_like(per_replica[0][j], dtype=np.float64)
        for grads in per_replica:
            acc = acc + grads[j]
        out.append(acc / len(per_replica))
    return out


@pytest.mark.parametrize("B,R,size,dropped", [(96, 4, 24, 0), (10, 4, 2, 2), (7, 1, 7, 0)])
def test_shard_slices(B, R, size, dropped):
    slices, d = shard_slices(B, R)
    assert d == dropped and len(slices) == R
    assert all(s.stop - s.start == size for s in slices)
    assert slices[0].start == 0 and all(a.stop == b.start for a, b in zip(slices, slices[1:]))


def test_shard_batch_identity_and_errors():
    x = np.arange(12.0).reshape(6, 2)
    sb = shard_batch(x, 1)
    assert len(sb.shards) == 1 and np.array_equal(sb.shards[0], x) and sb.dropped == 0
    with pytest.raises(ShardError):
        shard_slices(3, 4)


def test_allreduce_small_examples():
    for fn in (ring_allreduce, naive_allreduce):
        out = fn([[np.array([1.0, 2.0])], [np.array([3.0, 4.0])]])
        assert np.array_equal(out[0], [2.0, 3.0])
        v = [np.array([1.5, -2.0, 7.0])]
        assert np.array_equal(fn([v])[0], v[0])


def test_ring_matches_naive_non_divisible():
    rng = np.random.default_rng(0)
    per = [[rng.normal(size=7)] for _ in range(5)]
    assert np.max(np.abs(ring_allreduce(per)[0] - naive_allreduce(per)[0])) <= 1e-12
    assert np.max(np.abs(ring_allreduce(per)[0] - mean_oracle(per)[0])) <= 1e-12


def test_ring_matches_naive_random_trials():
    rng = np.random.default_rng(1)
    for _ in range(100):
        R = int(rng.integers(1, 17))
        shapes = [tuple(rng.integers(1, 6, size=int(rng.integers(1, 4)))) for _ in range(int(rng.integers(1, 4)))]
        per = [[rng.normal(size=s) for s in shapes] for _ in range(R)]
        ring, naive = ring_allreduce(per), naive_allreduce(per)
        for a, b, c in zip(ring, naive, mean_oracle(per)):
            assert a.shape == b.shape
            assert np.max(np.abs(a - b)) <= 1e-12 and np.max(np.abs(a - c)) <= 1e-12


def test_allreduce_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        ring_allreduce([[np.zeros(3)], [np.zeros(4)]])
    with pytest.raises(ValueError):
        naive_allreduce([[np.zeros(3)], [np.zeros(3), np.zeros(1)]])


@pytest.mark.parametrize("deterministic", [True, False])
def test_collective_sum(deterministic):
    n = 4
    coll = Collective(n, deterministic)
    out = [None] * n
    vals = [np.full(3, float(r + 1)) for r in range(n)]

    def work(r):
        out[r] = coll.sum(r, vals[r])

    threads = [threading.Thread(target=work, args=(r,)) for r in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for o in out:
        assert np.array_equal(o, np.full(3, 10.0))


def _replica_closure(g):
    def closure(coll, rank):
        return rank, [g[rank].copy()]
    return closure


@pytest.mark.parametrize("R", [1, 2, 4])
def test_sync_step_averages_and_keeps_replicas_equal(R):
    rng = np.random.default_rng(R)
    grads = [rng.normal(size=5) for _ in range(R)]
    params = [np.zeros(5) for _ in range(R)]

    def applier(r):
        def apply(avg):
            params[r] -= 0.1 * avg[0]
        return apply

    with ReplicaGroup(R) as group:
        res = run_sync_step(group, [_replica_closure(grads)] * R, [applier(r) for r in range(R)])
    assert res.results == list(range(R))
    expected = -0.1 * mean_oracle([[g] for g in grads])[0]
    for p in params:
        assert np.array_equal(p, params[0])
        np.testing.assert_allclose(p, expected, rtol=0, atol=1e-15)


def test_sync_step_same_gradient_gives_same_average():
    g = np.array([0.25, -1.0, 3.0])
    with ReplicaGroup(4) as group:
        res = run_sync_step(group, [lambda c, r: (None, [g.copy()])] * 4)
    assert np.array_equal(res.grads[0], g)


def test_sync_step_surfaces_replica_error():
    def closure(coll, rank):
        if rank == 2:
            raise ArithmeticError("boom")
        coll.sum(rank, np.ones(1))
        return None, [np.ones(1)]

    with ReplicaGroup(4) as group, pytest.raises(ReplicaError) as info:
        run_sync_step(group, [closure] * 4)
    assert info.value.rank == 2 and isinstance(info.value.cause, ArithmeticError)


def test_replica_group_validation():
    with pytest.raises(ValueError):
        ReplicaGroup(0)
    with pytest.raises(ValueError):
        ReplicaGroup(4, algorithm="tree")
