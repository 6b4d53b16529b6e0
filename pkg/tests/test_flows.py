from itertools import product

import numpy as np
import pytest

from loctimes.errors import ExplosionGuardError
from loctimes.flows import enumerate_balanced_flows, flow_table


def brute_force_flows(support, max_total):
    """Independent oracle: filter every candidate count vector."""
    out = []
    for counts in product(range(max_total + 1), repeat=len(support)):
        if sum(counts) > max_total:
            continue
        net = {}
        for (x, y), n in zip(support, counts):
            net[x] = net.get(x, 0) + n
            net[y] = net.get(y, 0) - n
        if all(v == 0 for v in net.values()):
            out.append(counts)
    return sorted(out)


@pytest.mark.parametrize(
    "support,max_total,expected_count",
    [
        ([(1, 2), (2, 1)], 2, 2),       # zero flow and one round trip
        ([(1, 2), (2, 1)], 0, 1),       # zero flow only
        ([(0, 1), (1, 0), (1, 2), (2, 1)], 2, 3),  # path: two back-and-forths
    ],
)
def test_known_flow_counts(support, max_total, expected_count):
    flows = enumerate_balanced_flows(support, max_total)
    assert len(flows) == expected_count


@pytest.mark.parametrize(
    "support,max_total",
    [
        ([(1, 2), (2, 1)], 5),
        ([(0, 1), (1, 0), (1, 2), (2, 1)], 6),
        ([(0, 1), (1, 2), (2, 0)], 7),                       # directed 3-cycle
        ([(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)], 5),
        ([(0, 1), (1, 2), (2, 3), (3, 0)], 8),               # directed 4-cycle
    ],
)
def test_matches_brute_force(support, max_total):
    flows = enumerate_balanced_flows(support, max_total)
    got = sorted(tuple(f.counts[e] for e in support) for f in flows)
    assert got == brute_force_flows(support, max_total)


def test_enumeration_order_is_lexicographic_and_deterministic():
    support = [(0, 1), (1, 0), (1, 2), (2, 1)]
    first = enumerate_balanced_flows(support, 6)
    second = enumerate_balanced_flows(support, 6)
    rows = [tuple(f.counts[e] for e in support) for f in first]
    assert rows == [tuple(f.counts[e] for e in support) for f in second]
    assert rows == sorted(rows)


def test_balance_and_degree_fields():
    support = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2)]
    for f in enumerate_balanced_flows(support, 5):
        outs = {}
        ins = {}
        for (x, y), n in f.counts.items():
            outs[x] = outs.get(x, 0) + n
            ins[y] = ins.get(y, 0) + n
        for x in f.degree:
            assert outs.get(x, 0) == ins.get(x, 0)
            assert f.degree[x] == outs.get(x, 0) + ins.get(x, 0)


def test_explosion_guard():
    support = [(i, j) for i in range(4) for j in range(4) if i != j]
    with pytest.raises(ExplosionGuardError):
        enumerate_balanced_flows(support, 40, cap=1000)


def test_flow_table_packs_out_degrees():
    table = flow_table(((0, 1), (1, 0)), 2, 4)
    # flows are (k, k); out-degree of node 0 is k
    for row, deg in zip(table.counts, table.out_degree):
        assert row[0] == row[1]
        assert deg[0] == row[0] and deg[1] == row[1]
    assert table.totals.tolist() == (table.counts.sum(axis=1)).tolist()


def test_loop_edges_rejected():
    with pytest.raises(ValueError):
        enumerate_balanced_flows([(1, 1)], 2)
