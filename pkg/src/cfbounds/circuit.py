"""Symbolic arithmetic-circuit compilation of a model's network polynomial.

The joint PMF of a discrete model can be written as a multilinear polynomial:
a sum over all joint configurations of the product of each variable's CPT
entry and state indicator. Compilation factors this polynomial into a DAG of
sum and product nodes whose size tracks the model's structure rather than its
joint domain, so that every subsequent query costs one traversal.

The compiler here replays variable elimination (min-fill order) on factors
whose cells hold circuit-node references instead of numbers: multiplying two
factors emits product nodes cell by cell, summing a variable out emits sum
nodes. Two compressions fall out of this construction:

* graph structure — elimination itself moves sums inside products;
* determinism — endogenous CPT entries are known 0/1 constants, so a 0 cell
  deletes its term and a 1 cell is absorbed without emitting a leaf.

Exogenous probabilities are *not* baked in: each (exogenous variable, state)
pair becomes a parameter leaf, a named slot to be bound at evaluation time.
One compilation therefore serves every model that shares the equations and
differs only in the exogenous PMFs.

``compile_unfolded`` disables the determinism folding (0/1 entries become
constant leaves, nothing is deleted or absorbed) and exists as a size
comparison baseline; it evaluates identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import ModelError, Pscm, validate
from .ve import min_fill_order, moral_graph_of_pscm

SUM = 0
PRODUCT = 1
INDICATOR = 2
PARAM = 3
CONSTANT = 4

_KIND_LETTER = {SUM: "S", PRODUCT: "P", INDICATOR: "I", PARAM: "T", CONSTANT: "C"}

# cell sentinels used during folded construction only; never stored in the arena
_ZERO = -1
_ONE = -2


class CircuitError(ValueError):
    pass


class SymbolicCircuit:
    """Compiled network polynomial with parameter slots.

    Nodes live in an arena indexed by id; children always precede parents.
    ``param_slots[k]`` names the (exogenous variable, state) pair bound by
    position ``k`` of a binding vector; ``param_index`` and
    ``indicator_index`` locate the corresponding leaves.
    """

    def __init__(self, kind, children, leaf_var, leaf_state, const_val,
                 root, var_cards, exo_ids, param_slots):
        self.kind = np.asarray(kind, dtype=np.int8)
        n = len(self.kind)
        sizes = [len(c) for c in children]
        self.child_off = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(sizes, out=self.child_off[1:])
        self.child_flat = np.fromiter(
            (c for cs in children for c in cs), dtype=np.int64, count=self.child_off[-1]
        )
        self.leaf_var = np.asarray(leaf_var, dtype=np.int64)
        self.leaf_state = np.asarray(leaf_state, dtype=np.int64)
        self.const_val = np.asarray(const_val, dtype=np.float64)
        self.root = int(root)
        self.var_cards = tuple(int(c) for c in var_cards)
        self.exo_ids = tuple(int(u) for u in exo_ids)
        self.param_slots = tuple((int(u), int(s)) for u, s in param_slots)
        self.param_index = {
            self.param_slots[int(self.leaf_state[i])]: int(i)
            for i in np.flatnonzero(self.kind == PARAM)
        }
        self.indicator_index = {
            (int(self.leaf_var[i]), int(self.leaf_state[i])): int(i)
            for i in np.flatnonzero(self.kind == INDICATOR)
        }
        for i in range(n):
            lo, hi = self.child_off[i], self.child_off[i + 1]
            if hi > lo and self.child_flat[lo:hi].max() >= i:
                raise CircuitError(f"node {i} has a child with a higher id; arena is not topological")

    @property
    def n_nodes(self) -> int:
        return len(self.kind)

    def children_of(self, i: int) -> np.ndarray:
        return self.child_flat[self.child_off[i]:self.child_off[i + 1]]


@dataclass
class CircuitStats:
    node_count: int
    arc_count: int
    param_count: int
    depth: int


def stats(c: SymbolicCircuit) -> CircuitStats:
    """Size metrics; ``arc_count`` is the sum of child-list lengths."""
    dist = np.zeros(c.n_nodes, dtype=np.int64)
    for i in range(c.n_nodes):
        ch = c.children_of(i)
        if len(ch):
            dist[i] = 1 + dist[ch].max()
    return CircuitStats(
        node_count=c.n_nodes,
        arc_count=int(c.child_off[-1]),
        param_count=int((c.kind == PARAM).sum()),
        depth=int(dist[c.root]),
    )


# ---------------------------------------------------------------------------
# construction


class _Builder:
    def __init__(self, fold: bool):
        self.fold = fold
        self.kind: list[int] = []
        self.children: list[tuple[int, ...]] = []
        self.leaf_var: list[int] = []
        self.leaf_state: list[int] = []
        self.const_val: list[float] = []
        self.memo: dict = {}

    def _new(self, kind: int, children: tuple[int, ...], var=-1, state=-1, value=0.0) -> int:
        i = len(self.kind)
        self.kind.append(kind)
        self.children.append(children)
        self.leaf_var.append(var)
        self.leaf_state.append(state)
        self.const_val.append(value)
        return i

    def indicator(self, var: int, state: int) -> int:
        key = (INDICATOR, var, state)
        if key not in self.memo:
            self.memo[key] = self._new(INDICATOR, (), var=var, state=state)
        return self.memo[key]

    def param(self, slot: int) -> int:
        key = (PARAM, slot)
        if key not in self.memo:
            self.memo[key] = self._new(PARAM, (), state=slot)
        return self.memo[key]

    def const(self, value: float) -> int:
        key = (CONSTANT, value)
        if key not in self.memo:
            self.memo[key] = self._new(CONSTANT, (), value=value)
        return self.memo[key]

    def product(self, ids: Iterable[int]) -> int:
        ids = tuple(int(i) for i in ids)
        if self.fold:
            if _ZERO in ids:
                return _ZERO
            ids = tuple(i for i in ids if i != _ONE)
            if not ids:
                return _ONE
        if len(ids) == 1:
            return ids[0]
        key = (PRODUCT, ids)
        if key not in self.memo:
            self.memo[key] = self._new(PRODUCT, ids)
        return self.memo[key]

    def sum(self, ids: Iterable[int]) -> int:
        ids = tuple(int(i) for i in ids)
        if self.fold:
            ids = tuple(i for i in ids if i != _ZERO)
            if not ids:
                return _ZERO
        if len(ids) == 1:
            return ids[0]
        ids = tuple(sorted(ids))  # sums deduplicate as multisets
        key = (SUM, ids)
        if key not in self.memo:
            self.memo[key] = self._new(SUM, ids)
        return self.memo[key]


@dataclass(frozen=True)
class _SymFactor:
    """Factor whose cells are circuit-node ids (or fold sentinels)."""

    scope: tuple[int, ...]
    cells: np.ndarray  # int64, shape = scope cardinalities


def _sym_multiply(b: _Builder, fa: _SymFactor, fb: _SymFactor) -> _SymFactor:
    union = tuple(sorted(set(fa.scope) | set(fb.scope)))

    def expand(f: _SymFactor) -> np.ndarray:
        shape = [f.cells.shape[f.scope.index(v)] if v in f.scope else 1 for v in union]
        return f.cells.reshape(shape)

    a, bb = expand(fa), expand(fb)
    shape = tuple(max(x, y) for x, y in zip(a.shape, bb.shape))
    a = np.broadcast_to(a, shape).reshape(-1)
    bb = np.broadcast_to(bb, shape).reshape(-1)
    out = np.fromiter(
        (b.product((a[i], bb[i])) for i in range(a.size)), dtype=np.int64, count=a.size
    )
    return _SymFactor(union, out.reshape(shape))


def _sym_marginalize(b: _Builder, f: _SymFactor, vid: int) -> _SymFactor:
    i = f.scope.index(vid)
    moved = np.moveaxis(f.cells, i, -1)
    rows = moved.reshape(-1, moved.shape[-1])
    out = np.fromiter(
        (b.sum(tuple(row)) for row in rows), dtype=np.int64, count=rows.shape[0]
    )
    scope = f.scope[:i] + f.scope[i + 1:]
    return _SymFactor(scope, out.reshape(moved.shape[:-1]))


def _compile(pscm: Pscm, fold: bool) -> SymbolicCircuit:
    violations = validate(pscm)
    if violations:
        raise ModelError(f"cannot compile an invalid model: {violations[0].message}")

    b = _Builder(fold)
    exo = pscm.exogenous_ids
    slots = [(u, s) for u in exo for s in range(pscm.cardinality(u))]
    slot_id = {pair: k for k, pair in enumerate(slots)}

    # indicator leaves exist for every variable and state, parameters for
    # every exogenous state, all created upfront in deterministic id order
    for v in pscm.variables:
        for s in range(v.cardinality):
            b.indicator(v.id, s)
    for pair in slots:
        b.param(slot_id[pair])

    factors: list[_SymFactor] = []
    for u in exo:
        cells = np.fromiter(
            (b.product((b.param(slot_id[(u, s)]), b.indicator(u, s)))
             for s in range(pscm.cardinality(u))),
            dtype=np.int64, count=pscm.cardinality(u),
        )
        factors.append(_SymFactor((u,), cells))
    for v in pscm.endogenous_ids:
        eq = pscm.equation_for(v)
        scope = tuple(sorted(set(eq.inputs) | {v}))
        axis_of = {vid: k for k, vid in enumerate(scope)}
        shape = tuple(pscm.cardinality(vid) for vid in scope)
        cells = np.empty(shape, dtype=np.int64)
        for cfg in np.ndindex(shape):
            child_state = cfg[axis_of[v]]
            mapped = int(eq.table[tuple(cfg[axis_of[i]] for i in eq.inputs)])
            lam = b.indicator(v, child_state)
            if fold:
                cells[cfg] = lam if mapped == child_state else _ZERO
            else:
                cells[cfg] = b.product((b.const(1.0 if mapped == child_state else 0.0), lam))
        factors.append(_SymFactor(scope, cells))

    order = min_fill_order(moral_graph_of_pscm(pscm))
    for vid in order:
        bucket = [f for f in factors if vid in f.scope]
        factors = [f for f in factors if vid not in f.scope]
        combined = bucket[0]
        for f in bucket[1:]:
            combined = _sym_multiply(b, combined, f)
        factors.append(_sym_marginalize(b, combined, vid))

    root = b.product(tuple(int(f.cells) for f in factors))
    if root == _ZERO:
        raise CircuitError("model admits no configuration; polynomial is identically zero")
    if root == _ONE:
        root = b.const(1.0)

    return SymbolicCircuit(
        kind=b.kind, children=b.children, leaf_var=b.leaf_var,
        leaf_state=b.leaf_state, const_val=b.const_val, root=root,
        var_cards=[v.cardinality for v in pscm.variables],
        exo_ids=exo, param_slots=slots,
    )


def compile_circuit(pscm: Pscm) -> SymbolicCircuit:
    """Compile with determinism folding: endogenous 0 entries delete their
    terms, 1 entries are absorbed, and no endogenous probability leaf is
    ever emitted."""
    return _compile(pscm, fold=True)


def compile_unfolded(pscm: Pscm) -> SymbolicCircuit:
    """Comparison baseline: endogenous 0/1 entries become constant leaves and
    nothing is deleted or absorbed. Evaluates identically to
    :func:`compile_circuit`, only bigger."""
    return _compile(pscm, fold=False)


# ---------------------------------------------------------------------------
# text dump (debugging / golden tests)


def dump_circuit(c: SymbolicCircuit) -> str:
    """Line-oriented text form: one node per line, ``ROOT <id>`` last."""
    lines = []
    for i in range(c.n_nodes):
        k = int(c.kind[i])
        if k in (SUM, PRODUCT):
            ch = " ".join(str(int(x)) for x in c.children_of(i))
            lines.append(f"{i} {_KIND_LETTER[k]} {ch}")
        elif k == INDICATOR:
            lines.append(f"{i} I {int(c.leaf_var[i])} {int(c.leaf_state[i])}")
        elif k == PARAM:
            lines.append(f"{i} T {int(c.leaf_state[i])}")
        else:
            lines.append(f"{i} C {c.const_val[i]!r}")
    lines.append(f"ROOT {c.root}")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> SymbolicCircuit:
    """Rebuild a circuit from its text dump.

    Variable cardinalities are inferred from the indicator leaves; which
    variables are exogenous is not recorded in the dump, so the parsed
    circuit supports evaluation but not exogenous-posterior extraction.
    """
    kind, children, leaf_var, leaf_state, const_val = [], [], [], [], []
    root = None
    letter_kind = {v: k for k, v in _KIND_LETTER.items()}
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "ROOT":
            root = int(parts[1])
            continue
        i, letter = int(parts[0]), parts[1]
        if i != len(kind):
            raise CircuitError(f"node ids must be dense and in order; got {i}")
        k = letter_kind.get(letter)
        if k is None:
            raise CircuitError(f"unknown node letter {letter!r}")
        kind.append(k)
        if k in (SUM, PRODUCT):
            children.append(tuple(int(x) for x in parts[2:]))
            leaf_var.append(-1); leaf_state.append(-1); const_val.append(0.0)
        elif k == INDICATOR:
            children.append(())
            leaf_var.append(int(parts[2])); leaf_state.append(int(parts[3])); const_val.append(0.0)
        elif k == PARAM:
            children.append(())
            leaf_var.append(-1); leaf_state.append(int(parts[2])); const_val.append(0.0)
        else:
            children.append(())
            leaf_var.append(-1); leaf_state.append(-1); const_val.append(float(parts[2]))
    if root is None:
        raise CircuitError("dump has no ROOT line")

    cards: dict[int, int] = {}
    for v, s, k in zip(leaf_var, leaf_state, kind):
        if k == INDICATOR:
            cards[v] = max(cards.get(v, 0), s + 1)
    n_var = max(cards) + 1 if cards else 0
    var_cards = [cards.get(v, 2) for v in range(n_var)]
    n_slots = 1 + max((s for s, k in zip(leaf_state, kind) if k == PARAM), default=-1)
    return SymbolicCircuit(
        kind=kind, children=children, leaf_var=leaf_var, leaf_state=leaf_state,
        const_val=const_val, root=root, var_cards=var_cards, exo_ids=(),
        param_slots=[(-1, s) for s in range(n_slots)],
    )
