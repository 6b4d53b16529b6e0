"""Enumeration of balanced nonnegative integer flows on a directed support.

A balanced flow assigns a count n_e >= 0 to every directed support edge so
that in-degree equals out-degree at every node.  These index the terms of the
torus-integral power series: a monomial survives the circle averages exactly
when its multi-index is balanced.

Enumeration sweeps the edges once, extending all partial assignments in
lockstep (numpy arrays, no per-flow Python work).  Edges are visited in a
node-closing order: all edges incident to the lowest node first, then the
rest incident to the next node, and so on, so each node's balance constraint
prunes as early as possible; a remaining-budget bound on the positive
imbalance prunes the rest.  The resulting table order is a pure function of
the support, so repeated evaluations reduce in the same order, and tables are
memoized per (support, max_total) for reuse across derivative subsets.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .errors import ExplosionGuardError

DEFAULT_FLOW_CAP = 2_000_000


@dataclass(frozen=True)
class FlowTable:
    """All balanced flows on one support, packed for vectorized evaluation."""

    edges: Tuple[Tuple[int, int], ...]   # directed edges as node-position pairs
    n_nodes: int
    counts: np.ndarray                   # (F, E) int64, one row per flow
    out_degree: np.ndarray               # (F, n_nodes) int64, row sums per tail node
    log_count_factorials: np.ndarray     # (F,) sum_e log(n_e!)
    totals: np.ndarray                   # (F,) total edge count per flow

    @property
    def n_flows(self) -> int:
        return self.counts.shape[0]


def _closing_order(edges: Sequence[Tuple[int, int]], n_nodes: int) -> List[int]:
    """Visit all edges at the lowest-indexed open node, then the next, ..."""
    remaining = list(range(len(edges)))
    order: List[int] = []
    for v in range(n_nodes):
        mine = [k for k in remaining if v in edges[k]]
        mine.sort(key=lambda k: edges[k])
        order.extend(mine)
        remaining = [k for k in remaining if v not in edges[k]]
    order.extend(sorted(remaining, key=lambda k: edges[k]))
    return order


def _enumerate(edges, n_nodes, max_total, cap) -> np.ndarray:
    m = len(edges)
    if m == 0:
        return np.zeros((1, 0), dtype=np.int64)
    order = _closing_order(edges, n_nodes)
    last_touch = {}
    for pos, k in enumerate(order):
        i, j = edges[k]
        last_touch[i] = pos
        last_touch[j] = pos

    # partial assignments: counts over visited edges, imbalance per node, used total
    counts = np.zeros((1, 0), dtype=np.int32)
    imbalance = np.zeros((1, n_nodes), dtype=np.int32)
    used = np.zeros(1, dtype=np.int32)

    for pos, k in enumerate(order):
        i, j = edges[k]
        reps = max_total - used + 1
        if int(reps.sum()) > 4 * cap:
            # guard the expansion allocation itself, not just the result
            raise ExplosionGuardError(
                f"balanced-flow expansion would exceed {4 * cap} rows; "
                f"shrink the support or max_total"
            )
        rows = np.repeat(np.arange(counts.shape[0]), reps)
        offsets = (np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
                   ).astype(np.int32)
        counts = np.concatenate([counts[rows], offsets[:, None]], axis=1)
        imbalance = imbalance[rows].copy()
        imbalance[:, i] += offsets
        imbalance[:, j] -= offsets
        used = used[rows] + offsets

        # each later edge unit cancels at most one unit of positive imbalance
        keep = np.maximum(imbalance, 0).sum(axis=1) <= max_total - used
        if last_touch[i] == pos:
            keep &= imbalance[:, i] == 0
        if last_touch[j] == pos:
            keep &= imbalance[:, j] == 0
        counts, imbalance, used = counts[keep], imbalance[keep], used[keep]
        if counts.shape[0] > cap:
            raise ExplosionGuardError(
                f"more than {cap} balanced-flow prefixes; shrink the support "
                f"or max_total"
            )

    # scatter visited-order columns back to the caller's edge order
    full = np.zeros((counts.shape[0], m), dtype=np.int64)
    for pos, k in enumerate(order):
        full[:, k] = counts[:, pos]
    return full


@lru_cache(maxsize=128)
def flow_table(
    edges: Tuple[Tuple[int, int], ...],
    n_nodes: int,
    max_total: int,
    cap: int = DEFAULT_FLOW_CAP,
) -> FlowTable:
    """Balanced flows with total count <= max_total on the given support."""
    if max_total < 0:
        raise ValueError("max_total must be >= 0")
    counts = _enumerate(tuple(edges), n_nodes, max_total, cap)
    out_degree = np.zeros((counts.shape[0], n_nodes), dtype=np.int64)
    for k, (i, _) in enumerate(edges):
        out_degree[:, i] += counts[:, k]
    return FlowTable(
        edges=tuple(edges),
        n_nodes=n_nodes,
        counts=counts,
        out_degree=out_degree,
        log_count_factorials=gammaln(counts + 1.0).sum(axis=1),
        totals=counts.sum(axis=1),
    )


@dataclass
class BalancedFlow:
    """One term of the torus-integral series: edge counts plus node degrees."""

    counts: dict     # (x, y) -> n_xy over distinct ordered state pairs
    degree: dict     # x -> sum_y (n_xy + n_yx)


def enumerate_balanced_flows(
    support: Sequence[Tuple], max_total: int, cap: int = DEFAULT_FLOW_CAP
) -> List[BalancedFlow]:
    """All balanced flows on ``support`` with total count <= ``max_total``,
    in lexicographic order of the count vector over the given edge order.

    ``support`` is a sequence of ordered (from, to) pairs of distinct states.
    """
    support = list(support)
    for (x, y) in support:
        if x == y:
            raise ValueError(f"support contains a loop edge {(x, y)!r}")
    if len(set(support)) != len(support):
        raise ValueError("support contains repeated edges")
    nodes = []
    for (x, y) in support:
        for s in (x, y):
            if s not in nodes:
                nodes.append(s)
    pos = {s: i for i, s in enumerate(nodes)}
    edge_positions = tuple((pos[x], pos[y]) for (x, y) in support)
    table = flow_table(edge_positions, len(nodes), max_total, cap)
    rows = sorted(tuple(int(v) for v in row) for row in table.counts)
    out = []
    for row in rows:
        counts = {support[k]: row[k] for k in range(len(support))}
        degree = {s: 0 for s in nodes}
        for (x, y), n in counts.items():
            degree[x] += n
            degree[y] += n
        out.append(BalancedFlow(counts=counts, degree=degree))
    return out
