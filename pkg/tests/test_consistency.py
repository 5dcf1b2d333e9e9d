import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distheap.consistency import (
    BOTTOM,
    DELETE,
    INSERT,
    OperationRecord,
    brute_force_order,
    check_heap_consistency,
    check_local_consistency,
    check_serializable,
    make_verdict,
    read_records,
    record_from_json,
    sequential_oracle,
    write_records,
)
from distheap.sim import Element


def history_from_ops(ops, node_of=None, seq_of=None):
    """Build records from (kind, element) ops executed by the oracle."""
    results, _ = sequential_oracle(ops)
    records = []
    seqs = {}
    for i, ((kind, element), res) in enumerate(zip(ops, results)):
        node = node_of(i) if node_of else (element.origin if element else 0)
        seqs[node] = seqs.get(node, 0) + 1
        records.append(
            OperationRecord(
                node=node,
                seq=seq_of(i) if seq_of else seqs[node],
                kind=kind,
                element=element,
                serial_index=i,
                returned=res,
            )
        )
    return records


def test_oracle_minimum_selection():
    e1 = Element(2, 0, 1)
    e2 = Element(1, 0, 2)
    results, matching = sequential_oracle([(INSERT, e1), (INSERT, e2), (DELETE, None)])
    assert results == [None, None, e2]
    assert matching == {((0, 2), 2)}


def test_oracle_empty_returns_bottom():
    results, matching = sequential_oracle([(DELETE, None)])
    assert results == [BOTTOM]
    assert matching == set()


def test_oracle_refill_sequence():
    a = Element(1, 0, 1)
    b = Element(1, 0, 2)
    ops = [(INSERT, a), (DELETE, None), (DELETE, None), (INSERT, b), (DELETE, None)]
    results, _ = sequential_oracle(ops)
    assert results == [None, a, BOTTOM, None, b]


def test_oracle_history_passes_all_checks():
    rng = random.Random(4)
    ops = []
    seq = 0
    for _ in range(40):
        if rng.random() < 0.6:
            seq += 1
            ops.append((INSERT, Element(rng.randint(1, 3), rng.randrange(3), seq)))
        else:
            ops.append((DELETE, None))
    hist = history_from_ops(ops, node_of=lambda i: i % 3, seq_of=lambda i: i)
    ok, why = check_serializable(hist)
    assert ok, why
    ok, why = check_local_consistency(hist)
    assert ok, why
    ok, why = check_heap_consistency(hist)
    assert ok, why


def test_swapped_returns_fail_serializable():
    a = Element(1, 0, 1)
    b = Element(2, 1, 1)
    ops = [(INSERT, a), (INSERT, b), (DELETE, None), (DELETE, None)]
    hist = history_from_ops(ops, node_of=lambda i: i % 2, seq_of=lambda i: i)
    # swap the two delete outcomes: now the first delete returns the
    # larger-priority element while the smaller is available
    hist[2].returned, hist[3].returned = hist[3].returned, hist[2].returned
    ok, why = check_serializable(hist)
    assert not ok
    assert "priority" in why


def test_unavailable_return_fails():
    a = Element(1, 0, 1)
    hist = [
        OperationRecord(0, 1, DELETE, serial_index=0, returned=a),
        OperationRecord(0, 2, INSERT, element=a, serial_index=1),
    ]
    ok, why = check_serializable(hist)
    assert not ok


def test_bottom_with_elements_available_fails():
    a = Element(1, 0, 1)
    hist = [
        OperationRecord(0, 1, INSERT, element=a, serial_index=0),
        OperationRecord(1, 1, DELETE, serial_index=1, returned=BOTTOM),
    ]
    ok, why = check_serializable(hist)
    assert not ok
    assert "empty return" in why


def test_empty_history_passes():
    assert check_serializable([]) == (True, None)
    assert check_local_consistency([]) == (True, None)
    assert check_heap_consistency([]) == (True, None)


def test_local_consistency_single_node_in_order():
    a = Element(1, 0, 1)
    hist = [
        OperationRecord(0, 1, INSERT, element=a, serial_index=5),
        OperationRecord(0, 2, DELETE, serial_index=9, returned=a),
    ]
    assert check_local_consistency(hist)[0]


def test_local_consistency_transposed_fails():
    a = Element(1, 0, 2)
    hist = [
        OperationRecord(0, 2, INSERT, element=a, serial_index=1),
        OperationRecord(0, 1, DELETE, serial_index=2, returned=BOTTOM),
    ]
    ok, why = check_local_consistency(hist)
    assert not ok


def test_heap_property1_insert_after_delete_fails():
    a = Element(1, 0, 1)
    hist = [
        OperationRecord(1, 1, DELETE, serial_index=0, returned=a),
        OperationRecord(0, 1, INSERT, element=a, serial_index=1),
    ]
    ok, why = check_heap_consistency(hist)
    assert not ok
    assert "after its delete" in why


def test_heap_property2_bottom_inside_pair_fails():
    a = Element(1, 0, 1)
    hist = [
        OperationRecord(0, 1, INSERT, element=a, serial_index=0),
        OperationRecord(1, 1, DELETE, serial_index=1, returned=BOTTOM),
        OperationRecord(2, 1, DELETE, serial_index=2, returned=a),
    ]
    ok, why = check_heap_consistency(hist)
    assert not ok
    assert "between matched pair" in why


def test_heap_property3_smaller_unmatched_insert_fails():
    small = Element(1, 0, 1)
    big = Element(5, 1, 1)
    hist = [
        OperationRecord(0, 1, INSERT, element=small, serial_index=0),
        OperationRecord(1, 1, INSERT, element=big, serial_index=1),
        OperationRecord(2, 1, DELETE, serial_index=2, returned=big),
    ]
    ok, why = check_heap_consistency(hist)
    assert not ok
    assert "unmatched insert" in why


def test_heap_consistency_allows_equal_priority_any_order():
    x = Element(3, 0, 1)
    y = Element(3, 1, 1)
    # the delete returns y while x (same priority) is available: fine
    hist = [
        OperationRecord(0, 1, INSERT, element=x, serial_index=0),
        OperationRecord(1, 1, INSERT, element=y, serial_index=1),
        OperationRecord(2, 1, DELETE, serial_index=2, returned=y),
    ]
    assert check_heap_consistency(hist)[0]
    assert check_serializable(hist)[0]


def test_brute_force_finds_order_for_shuffled_serializable_history():
    a = Element(1, 0, 1)
    b = Element(2, 1, 1)
    hist = [
        OperationRecord(0, 1, INSERT, element=a, serial_index=3),
        OperationRecord(1, 1, DELETE, serial_index=1, returned=a),
        OperationRecord(0, 2, INSERT, element=b, serial_index=2),
        OperationRecord(1, 2, DELETE, serial_index=0, returned=b),
    ]
    # as recorded the order is invalid (delete before its insert)
    assert not check_serializable(hist)[0]
    found = brute_force_order(hist)
    assert found is not None
    assert check_serializable(found)[0]
    assert check_heap_consistency(found)[0]


def test_brute_force_none_for_corrupted_matching():
    a = Element(5, 0, 1)
    # one element returned by two different deletes: no order can explain it
    hist = [
        OperationRecord(0, 1, INSERT, element=a, serial_index=0),
        OperationRecord(2, 1, DELETE, serial_index=1, returned=a),
        OperationRecord(2, 2, DELETE, serial_index=2, returned=a),
    ]
    assert brute_force_order(hist) is None
    # and a delete returning an element nobody inserted
    ghost = [OperationRecord(0, 1, DELETE, serial_index=0, returned=Element(1, 9, 9))]
    assert brute_force_order(ghost) is None


def test_brute_force_empty_history():
    assert brute_force_order([]) == []


def test_verdict_roundtrip_json(tmp_path):
    a = Element(1, 0, 1)
    hist = [
        OperationRecord(0, 1, INSERT, element=a, assigned=(1, 1), serial_index=0),
        OperationRecord(1, 1, DELETE, assigned=(1, 1), serial_index=1, returned=a),
    ]
    path = tmp_path / "records.jsonl"
    write_records(path, hist)
    loaded = read_records(path)
    assert [r.to_json() for r in loaded] == [r.to_json() for r in hist]
    verdict = make_verdict(loaded)
    assert verdict.serializable and verdict.heap_consistent and verdict.locally_consistent


@st.composite
def random_history(draw):
    n_ops = draw(st.integers(1, 8))
    ops = []
    elements = []
    seqs = {}
    for i in range(n_ops):
        node = draw(st.integers(0, 2))
        seqs[node] = seqs.get(node, 0) + 1
        if draw(st.booleans()):
            e = Element(draw(st.integers(1, 3)), node, seqs[node])
            elements.append(e)
            ops.append(OperationRecord(node, seqs[node], INSERT, element=e, serial_index=i))
        else:
            ops.append(OperationRecord(node, seqs[node], DELETE, serial_index=i))
    # fill delete outcomes arbitrarily: element or bottom (possibly invalid)
    used = set()
    for rec in ops:
        if rec.kind == DELETE:
            pick = draw(st.integers(0, len(elements)))
            if pick == 0 or elements[pick - 1].ident in used:
                rec.returned = BOTTOM
            else:
                rec.returned = elements[pick - 1]
                used.add(elements[pick - 1].ident)
    return ops


@given(random_history())
@settings(max_examples=120, deadline=None)
def test_brute_force_agrees_with_checker(hist):
    found = brute_force_order(hist)
    if found is not None:
        ok, why = check_serializable(found)
        assert ok, why
        assert check_heap_consistency(found)[0]
    else:
        # spot check: a few random orders must also fail
        rng = random.Random(0)
        for _ in range(5):
            shuffled = list(hist)
            rng.shuffle(shuffled)
            for i, rec in enumerate(shuffled):
                rec.serial_index = i
            assert not check_serializable(shuffled)[0]
