import math

import pytest

from distheap.batches import EntryShare
from distheap.overlay import (
    LEFT,
    MIDDLE,
    RIGHT,
    CycleTopology,
    VirtualId,
    tree_aggregate,
    tree_broadcast,
)


def two_node_topo():
    # middle labels 0.4 and 0.6 give the sorted cycle
    # 0.2 (l0), 0.3 (l1), 0.4 (m0), 0.6 (m1), 0.7 (r0), 0.8 (r1)
    return CycleTopology(2, 0, {0: 0.4, 1: 0.6})


def test_hand_sorted_labels():
    topo = two_node_topo()
    labels = [topo.label(v) for v in topo.order]
    assert labels == [0.2, 0.3, 0.4, 0.6, 0.7, 0.8]


def test_three_virtual_nodes_per_real_node():
    for n in (2, 5, 17):
        topo = CycleTopology.build(n, seed=3)
        assert len(topo.order) == 3 * n
        for v in range(n):
            kinds = {vid.kind for vid in topo.order if vid.owner == v}
            assert kinds == {LEFT, MIDDLE, RIGHT}


def test_two_node_tree_shape():
    # the bold tree over six virtual nodes: root l(u), chain through l(v),
    # middles hang off lefts, rights off middles
    topo = two_node_topo()
    l0, l1 = VirtualId(0, LEFT), VirtualId(1, LEFT)
    m0, m1 = VirtualId(0, MIDDLE), VirtualId(1, MIDDLE)
    r0, r1 = VirtualId(0, RIGHT), VirtualId(1, RIGHT)
    assert topo.root == l0
    assert topo.parent[l0] is None
    assert topo.parent[l1] == l0
    assert topo.parent[m0] == l0
    assert topo.parent[m1] == l1
    assert topo.parent[r0] == m0
    assert topo.parent[r1] == m1
    assert set(topo.children[l0]) == {l1, m0}
    assert topo.children[l1] == [m1]
    assert topo.children[m0] == [r0]
    assert topo.children[m1] == [r1]


def test_cycle_consistency():
    topo = CycleTopology.build(9, seed=5)
    for vid in topo.order:
        assert topo.succ(topo.pred(vid)) == vid
        assert topo.pred(topo.succ(vid)) == vid


def test_parent_strictly_decreases_label():
    topo = CycleTopology.build(23, seed=8)
    for vid, parent in topo.parent.items():
        if parent is not None:
            assert topo.label(parent) < topo.label(vid)


def test_tree_mutual_consistency_and_child_bound():
    topo = CycleTopology.build(31, seed=2)
    for vid in topo.order:
        kids = topo.children[vid]
        assert len(kids) <= 2
        for child in kids:
            assert topo.parent[child] == vid
        if topo.parent[vid] is not None:
            assert vid in topo.children[topo.parent[vid]]
    roots = [v for v in topo.order if topo.parent[v] is None]
    assert roots == [topo.root]


def test_right_nodes_are_leaves():
    topo = CycleTopology.build(12, seed=4)
    for vid in topo.order:
        if vid.kind == RIGHT:
            assert topo.children[vid] == []


def test_responsibility_partition():
    topo = CycleTopology.build(7, seed=11)
    # keys on a fine grid map to exactly one virtual node, the predecessor
    for i in range(1000):
        key = i / 1000.0
        vid = topo.responsible(key)
        lab = topo.label(vid)
        succ = topo.succ(vid)
        if lab <= topo.label(succ):
            assert lab <= key < topo.label(succ) or vid == topo.order[-1]
        else:  # wrap arc
            assert key >= lab or key < topo.label(succ)


def test_key_at_own_label_is_length_zero_route():
    topo = CycleTopology.build(6, seed=13)
    vid = topo.order[3]
    path = topo.route(vid, topo.label(vid))
    assert path == [vid]


def test_route_terminates_at_predecessor():
    topo = CycleTopology(2, 0, {0: 0.5, 1: 0.2})
    # labels: 0.1, 0.25, 0.5, 0.6, 0.75, 0.85 -> key 0.3 belongs to label 0.25
    start = topo.order[-1]
    path = topo.route(start, 0.3)
    assert math.isclose(topo.label(path[-1]), 0.25)


def test_route_exhaustive_small():
    for n in (2, 4, 9):
        topo = CycleTopology.build(n, seed=21)
        keys = [i / 257.0 for i in range(257)] + [topo.label(v) for v in topo.order]
        for start in topo.order:
            for key in keys:
                path = topo.route(start, key)
                assert path[-1] == topo.responsible(key)


def test_route_length_grows_affinely_in_log_n():
    import random

    means = {}
    for n in (16, 32, 64, 128, 256):
        topo = CycleTopology.build(n, seed=31)
        rng = random.Random(7)
        lengths = []
        for _ in range(200):
            start = topo.order[rng.randrange(len(topo.order))]
            key = rng.random()
            lengths.append(len(topo.route(start, key)) - 1)
        means[n] = sum(lengths) / len(lengths)
    # monotone-ish growth, and bounded by a small multiple of log2 n
    assert means[256] > means[16]
    for n, mean in means.items():
        assert mean <= 4 * math.log2(n) + 8


def test_tree_height_logarithmic():
    # measured envelope: max height stays within 8*log2(n) across seeds and
    # scales (the mean sits near 5.6*log2(n) at n=4096 and the growth per
    # doubling is flat, i.e. height is logarithmic)
    maxima = {}
    for n in (16, 64, 256):
        heights = []
        for seed in range(30):
            topo = CycleTopology.build(n, seed)
            heights.append(topo.height())
        maxima[n] = max(heights)
        assert maxima[n] <= 8 * math.log2(n)
    per_doubling = (maxima[256] - maxima[16]) / 4
    assert per_doubling <= 10


def test_counting_aggregation_n2():
    topo = two_node_topo()
    values = {vid: 1 for vid in topo.order}
    total = tree_aggregate(topo, values, sum)
    assert total == 6


def test_min_max_aggregation_matches_scan():
    import random

    topo = CycleTopology.build(10, seed=17)
    rng = random.Random(3)
    values = {vid: (rng.randint(0, 1000), rng.randint(0, 1000)) for vid in topo.order}

    def combine(parts):
        los, his = zip(*parts)
        return (min(los), max(his))

    got = tree_aggregate(topo, values, combine)
    assert got == (
        min(v[0] for v in values.values()),
        max(v[1] for v in values.values()),
    )


def test_scalar_broadcast_reaches_everyone():
    topo = CycleTopology.build(5, seed=23)
    shares = tree_broadcast(topo, "hello", lambda vid, val, kids: (val, [val] * len(kids)))
    assert all(v == "hello" for v in shares.values())
    assert len(shares) == 15


def test_interval_broadcast_by_counts():
    # a parent holding [1,4] with own count 1 and child counts 1, 2 splits
    # into own [1,1], first child [2,2], second child [3,4]
    topo = two_node_topo()
    counts = {vid: 0 for vid in topo.order}
    root = topo.root
    kids = topo.children[root]  # [l1, m0] by label
    counts[root] = 1
    counts[kids[0]] = 1
    counts[kids[1]] = 2

    def split(vid, interval, children):
        lo, hi = interval
        own = (lo, lo + counts[vid] - 1)
        cursor = lo + counts[vid]
        out = []
        for child in children:
            subtree = counts[child] + sum(
                counts[g] for g in topo.children[child]
            ) + sum(counts[gg] for g in topo.children[child] for gg in topo.children[g])
            out.append((cursor, cursor + subtree - 1))
            cursor += subtree
        return own, out

    shares = tree_broadcast(topo, (1, 4), split)
    assert shares[root] == (1, 1)
    assert shares[kids[0]][0] == 2
    assert shares[kids[1]] == (3, 4)


def test_empty_interval_broadcast():
    topo = two_node_topo()
    shares = tree_broadcast(
        topo, (1, 0), lambda vid, val, kids: ((1, 0), [(1, 0)] * len(kids))
    )
    assert all(hi < lo for lo, hi in shares.values())


def test_collision_redraw(monkeypatch):
    import distheap.overlay as ov

    calls = []
    real = ov.hash_unit

    def forced(tag, inputs, seed):
        calls.append(inputs)
        node, attempt = inputs
        if node == 1 and attempt == 0:
            return real(tag, (0, 0), seed)  # force a collision with node 0's label
        return real(tag, inputs, seed)

    monkeypatch.setattr(ov, "hash_unit", forced)
    topo = ov.CycleTopology.build(3, seed=77)
    assert len({topo.label(v) for v in topo.order}) == 9
    assert (1, 1) in calls  # node 1 re-drew


def test_dump_schema():
    topo = CycleTopology.build(3, seed=1)
    d = topo.dump()
    assert d["n"] == 3
    assert len(d["virtual_nodes"]) == 9
    assert len(d["tree_edges"]) == 8  # spanning tree over 9 nodes
