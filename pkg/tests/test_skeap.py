import pytest

from distheap.batches import DELETE, INSERT
from distheap.consistency import (
    BOTTOM,
    check_heap_consistency,
    check_local_consistency,
    check_serializable,
)
from distheap.experiments import run_skeap
from distheap.sim import ASYNC, SYNC


def test_single_issuer_insert_then_delete():
    res = run_skeap(
        n=2,
        seed=1,
        priorities=2,
        epochs=2,
        script={0: [(INSERT, 1), (DELETE, None)]},
    )
    recs = {(r.node, r.seq): r for r in res.records}
    ins = recs[(0, 1)]
    dele = recs[(0, 2)]
    assert dele.returned == ins.element
    assert ins.assigned == dele.assigned
    assert res.ok


def test_delete_on_empty_heap_returns_bottom():
    res = run_skeap(n=2, seed=2, priorities=2, epochs=1, script={1: [(DELETE, None)]})
    (rec,) = res.records
    assert rec.returned == BOTTOM
    assert rec.assigned == BOTTOM
    assert res.ok


def test_three_node_mixed_scenario():
    # per-node buffers chosen so the combined batch is ((4,1),3)
    script = {
        0: [(INSERT, 1), (DELETE, None), (DELETE, None)],
        1: [(INSERT, 1)],
        2: [(INSERT, 1), (INSERT, 1), (INSERT, 2), (DELETE, None)],
    }
    res = run_skeap(n=3, seed=3, priorities=2, epochs=2, script=script)
    assert len(res.records) == 8
    assert res.ok, res.verdict.violation
    # every delete that returned an element got a priority-1 element
    # (three p1 inserts are available for the three deletes)
    for rec in res.records:
        if rec.kind == DELETE:
            assert rec.returned != BOTTOM
            assert rec.returned.priority == 1
    # exactly one p1 insert and the p2 insert stay stored
    matched = {r.returned.ident for r in res.records if r.kind == DELETE}
    unmatched = [
        r for r in res.records if r.kind == INSERT and r.element.ident not in matched
    ]
    assert sorted(r.element.priority for r in unmatched) == [1, 2]


def test_position_uniqueness_across_epochs():
    res = run_skeap(n=4, seed=7, priorities=3, lam=2, epochs=4, mode=SYNC)
    ins_keys = [r.assigned for r in res.records if r.kind == INSERT]
    assert len(ins_keys) == len(set(ins_keys))
    del_keys = [
        r.assigned for r in res.records if r.kind == DELETE and r.assigned != BOTTOM
    ]
    assert len(del_keys) == len(set(del_keys))
    # matching bijectivity: matched deletes consume exactly their insert's pair
    ins_by_pair = {
        r.assigned: r.element for r in res.records if r.kind == INSERT
    }
    for rec in res.records:
        if rec.kind == DELETE and rec.assigned != BOTTOM:
            assert ins_by_pair[rec.assigned] == rec.returned


def test_count_conservation_per_run():
    res = run_skeap(n=4, seed=11, priorities=2, lam=3, epochs=3)
    inserts = [r for r in res.records if r.kind == INSERT]
    deletes = [r for r in res.records if r.kind == DELETE]
    matched = [r for r in deletes if r.returned != BOTTOM]
    bottoms = [r for r in deletes if r.returned == BOTTOM]
    assert len(matched) + len(bottoms) == len(deletes)
    assert len(matched) <= len(inserts)


def test_serial_indices_unique_and_dense_enough():
    res = run_skeap(n=3, seed=5, priorities=2, lam=2, epochs=3)
    serials = [r.serial_index for r in res.records]
    assert len(serials) == len(set(serials))


@pytest.mark.parametrize("seed", range(6))
def test_sync_random_workloads_pass_all_checks(seed):
    res = run_skeap(n=5, seed=seed, priorities=3, lam=2, epochs=3, mode=SYNC)
    assert res.records, "expected completed requests"
    ok, why = check_serializable(res.records)
    assert ok, why
    ok, why = check_local_consistency(res.records)
    assert ok, why
    ok, why = check_heap_consistency(res.records)
    assert ok, why


@pytest.mark.parametrize("schedule_seed", range(8))
def test_async_adversarial_schedules_pass_all_checks(schedule_seed):
    res = run_skeap(
        n=4,
        seed=100 + schedule_seed,
        priorities=2,
        lam=2,
        epochs=3,
        mode=ASYNC,
        schedule_seed=schedule_seed,
    )
    assert res.ok, res.verdict.violation


def test_async_same_seeds_identical_records():
    def run():
        res = run_skeap(
            n=4, seed=42, priorities=2, lam=2, epochs=3, mode=ASYNC, schedule_seed=9
        )
        return [r.to_json() for r in res.records]

    assert run() == run()


def test_metrics_shape():
    res = run_skeap(n=3, seed=1, priorities=2, lam=1, epochs=2)
    m = res.metrics
    assert m["rounds"] > 0
    assert m["messages_sent"] == m["messages_delivered"]
    assert m["max_message_bits"] > 0
    assert len(m["per_round"]) == m["rounds"]
