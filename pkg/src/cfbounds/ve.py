"""Exact inference by variable elimination with the min-fill ordering.

This is the baseline engine and the correctness oracle for the circuit
runtime: factors are multiplied and summed out one variable at a time, the
next variable to eliminate being the one whose removal adds the fewest
fill-in edges to the (moralized) interaction graph, ties broken by lowest
variable id. Probabilities stay in linear space; only the dataset
log-likelihood accumulates in logs.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, ZeroProbabilityRecord
from .factors import Factor, multiply_all
from .model import Cpt, Fscm, Pscm, induced_bn


def moralize(cpts: Sequence[Cpt]) -> dict[int, set[int]]:
    """Undirected interaction graph: each CPT family becomes a clique."""
    graph: dict[int, set[int]] = {}
    for cpt in cpts:
        family = (*cpt.parents, cpt.child)
        for v in family:
            graph.setdefault(v, set())
        for a in family:
            for b in family:
                if a != b:
                    graph[a].add(b)
    return graph


def moral_graph_of_pscm(pscm: Pscm) -> dict[int, set[int]]:
    graph: dict[int, set[int]] = {v.id: set() for v in pscm.variables}
    for eq in pscm.equations:
        family = (*eq.inputs, eq.child)
        for a in family:
            for b in family:
                if a != b:
                    graph[a].add(b)
    return graph


def min_fill_order(graph: Mapping[int, set[int]], eliminate: set[int] | None = None) -> list[int]:
    """Elimination order over ``eliminate`` (default: every node).

    At each step the candidate adding the fewest fill-in edges among its
    remaining neighbors is chosen; ties break toward the lowest id. Nodes
    outside ``eliminate`` still participate in fill counts — they just never
    get eliminated.
    """
    adj = {v: set(ns) for v, ns in graph.items()}
    for v, ns in list(adj.items()):
        for u in ns:
            adj.setdefault(u, set()).add(v)
    remaining = set(adj) if eliminate is None else set(eliminate)
    order: list[int] = []
    while remaining:
        best, best_fill = None, None
        for v in sorted(remaining):
            fill = _fill_count(adj, v)
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        ns = adj[best]
        for a in ns:
            adj[a] |= ns - {a}
            adj[a].discard(best)
        del adj[best]
        remaining.discard(best)
        order.append(best)
    return order


def _fill_count(adj: Mapping[int, set[int]], v: int) -> int:
    ns = sorted(adj[v])
    return sum(
        1
        for i, a in enumerate(ns)
        for b in ns[i + 1:]
        if b not in adj[a]
    )


def _cpt_factor(cpt: Cpt) -> Factor:
    family = (*cpt.parents, cpt.child)
    perm = np.argsort(family, kind="stable")
    scope = tuple(family[i] for i in perm)
    return Factor(scope, np.transpose(cpt.values, perm))


class VeEngine:
    """Reusable elimination engine over a fixed set of CPTs.

    Base factors and the moral graph are prepared once; each query reduces
    private copies by its evidence, eliminates everything outside the target
    set, and returns the unnormalized joint plus the evidence probability.
    Stateless across calls, so instances are safe to share.
    """

    def __init__(self, model: Fscm | Sequence[Cpt]):
        cpts = induced_bn(model) if isinstance(model, Fscm) else list(model)
        self._factors = [_cpt_factor(c) for c in cpts]
        self._graph = moralize(cpts)
        self._order_cache: dict[frozenset[int], list[int]] = {}

    def query(self, targets: Sequence[int], evidence: Mapping[int, int] | None = None) -> tuple[Factor, float]:
        """Unnormalized joint over ``targets`` with ``evidence`` applied, and
        the normalizer P(evidence). A zero normalizer means the posterior is
        undefined; it is returned as-is for the caller to handle."""
        evidence = dict(evidence or {})
        target_set = frozenset(int(t) for t in targets)
        key = target_set
        if key not in self._order_cache:
            self._order_cache[key] = min_fill_order(self._graph, set(self._graph) - target_set)
        factors = [f.reduce(evidence) if any(v in f.scope for v in evidence) else f
                   for f in self._factors]
        for vid in self._order_cache[key]:
            bucket = [f for f in factors if vid in f.scope]
            if not bucket:
                continue
            factors = [f for f in factors if vid not in f.scope]
            factors.append(multiply_all(bucket).marginalize(vid))
        result = multiply_all(factors)
        return result, result.total()


def query(model: Fscm | Sequence[Cpt], targets: Sequence[int],
          evidence: Mapping[int, int] | None = None) -> tuple[Factor, float]:
    """One-shot convenience wrapper around :class:`VeEngine`."""
    return VeEngine(model).query(targets, evidence)


def log_likelihood(fscm: Fscm, dataset: Dataset) -> float:
    """Sum over records of count times the log evidence probability.

    Raises :class:`ZeroProbabilityRecord` naming the first record the model
    assigns zero probability.
    """
    engine = VeEngine(fscm)
    endo = sorted(fscm.pscm.endogenous_ids)
    total = 0.0
    for record, count in dataset.records:
        _, p = engine.query((), dict(zip(endo, record)))
        if p <= 0.0:
            raise ZeroProbabilityRecord(record)
        total += count * float(np.log(p))
    return total
