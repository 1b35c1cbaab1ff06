"""Evaluation of compiled circuits under concrete parameter bindings.

A binding assigns one probability to every parameter slot. Queries
instantiate the indicator leaves (1 where consistent with the evidence,
0 where contradicted, 1 everywhere for unevidenced variables) and run a
single bottom-up sweep; the root then holds the evidence probability.

Because the circuit computes a polynomial that is multilinear in every
indicator, the partial derivative of the root with respect to the indicator
of (U, u), taken at an all-ones instantiation of U, equals the joint
probability of U=u with the evidence. One extra top-down sweep therefore
yields those joints for *all* exogenous states at once — the workhorse of
the EM iteration, which needs exactly these quantities per record.

Both sweeps are vectorized over a batch of evidence columns: node values
are (n_nodes, batch) arrays and the per-level reductions run as segmented
numpy operations over a precomputed schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .circuit import CONSTANT, INDICATOR, PARAM, PRODUCT, SUM, SymbolicCircuit
from .data import ZeroProbabilityRecord


class BindingError(ValueError):
    pass


THETA_FLOOR = 1e-300  # below this an evidence probability is treated as zero


def make_binding(circuit: SymbolicCircuit, exo_pmfs: Mapping[int, Sequence[float]]) -> np.ndarray:
    """Dense slot->probability vector from per-variable PMFs, validated."""
    values = np.empty(len(circuit.param_slots))
    for uid in circuit.exo_ids:
        if uid not in exo_pmfs:
            raise BindingError(f"no PMF bound for exogenous variable {uid}")
        pmf = np.asarray(exo_pmfs[uid], dtype=np.float64)
        if pmf.shape != (circuit.var_cards[uid],):
            raise BindingError(f"PMF for variable {uid} has wrong length")
        if np.any(pmf < 0) or abs(float(pmf.sum()) - 1.0) > 1e-12:
            raise BindingError(f"values bound for variable {uid} do not form a PMF")
        lo, hi = _prep(circuit).slot_span[uid]
        values[lo:hi] = pmf
    return values


def binding_pmfs(circuit: SymbolicCircuit, binding: np.ndarray) -> dict[int, np.ndarray]:
    """Invert :func:`make_binding`: per-exogenous-variable PMF views."""
    out = {}
    for uid in circuit.exo_ids:
        lo, hi = _prep(circuit).slot_span[uid]
        out[uid] = np.array(binding[lo:hi])
    return out


class EvalScratch:
    """Reusable upward/downward value buffers for one worker."""

    def __init__(self, circuit: SymbolicCircuit, width: int):
        self.up = np.empty((circuit.n_nodes, width))
        self.down = np.empty((circuit.n_nodes, width))

    @property
    def width(self) -> int:
        return self.up.shape[1]


def indicator_matrix(circuit: SymbolicCircuit, assignments: Sequence[Mapping[int, int]]) -> np.ndarray:
    """Indicator leaf values, one column per partial assignment."""
    p = _prep(circuit)
    out = np.ones((len(p.ind_nodes), len(assignments)))
    for col, asg in enumerate(assignments):
        for vid, state in asg.items():
            rows = p.ind_rows_of_var.get(int(vid))
            if rows is None:
                continue  # variable has no surviving indicator use; nothing to set
            if not 0 <= state < len(rows):
                raise BindingError(f"evidence state {state} out of range for variable {vid}")
            out[rows, col] = 0.0
            out[rows[state], col] = 1.0
    return out


def evaluate(circuit: SymbolicCircuit, binding: np.ndarray,
             evidence: Mapping[int, int] | None = None,
             scratch: EvalScratch | None = None) -> float:
    """Evidence probability: one bottom-up sweep."""
    ind = indicator_matrix(circuit, [evidence or {}])
    scratch = _fit_scratch(circuit, scratch, 1)
    values = _upward(circuit, binding, ind, scratch)
    return float(values[circuit.root, 0])


def joint_with_each_exogenous(
    circuit: SymbolicCircuit, binding: np.ndarray, record: Mapping[int, int],
    scratch: EvalScratch | None = None,
) -> tuple[float, dict[int, np.ndarray]]:
    """Evidence probability of a full endogenous record plus, for every
    exogenous variable U and state u, the joint probability of (U=u, record),
    all from one upward and one downward sweep."""
    p = _prep(circuit)
    endo = [v for v in range(len(circuit.var_cards)) if v not in set(circuit.exo_ids)]
    missing = [v for v in endo if v not in record]
    if missing:
        raise BindingError(f"record must assign every endogenous variable; missing {missing}")
    ind = indicator_matrix(circuit, [record])
    scratch = _fit_scratch(circuit, scratch, 1)
    up = _upward(circuit, binding, ind, scratch)
    theta_v = float(up[circuit.root, 0])
    if theta_v < THETA_FLOOR:
        ordered = tuple(record[v] for v in sorted(record))
        raise ZeroProbabilityRecord(ordered, "posterior undefined for this record")
    down = _downward(circuit, scratch)
    joints = {}
    for uid in circuit.exo_ids:
        rows = p.slot_ind_nodes_of_var[uid]
        joints[uid] = down[rows, 0] * up[rows, 0]
    return theta_v, joints


def exo_joint_batch(circuit: SymbolicCircuit, binding: np.ndarray,
                    ind: np.ndarray, scratch: EvalScratch) -> tuple[np.ndarray, np.ndarray]:
    """Batched core for EM: per-column evidence probabilities (batch,) and
    the slot-aligned joint matrix (n_slots, batch)."""
    p = _prep(circuit)
    up = _upward(circuit, binding, ind, scratch)
    down = _downward(circuit, scratch)
    roots = up[circuit.root].copy()
    joint = down[p.slot_ind_nodes] * up[p.slot_ind_nodes]
    return roots, joint


# ---------------------------------------------------------------------------
# prepared schedule


@dataclass
class _Group:
    kind: int
    nodes: np.ndarray       # node ids in this (level, kind) group
    sizes: np.ndarray       # child count per node
    starts: np.ndarray      # reduceat segment starts into cflat
    cflat: np.ndarray       # concatenated child ids
    perm: np.ndarray        # sorts cflat for the scatter-add
    seg_starts: np.ndarray  # segment starts of equal children after perm
    uniq: np.ndarray        # distinct child ids, aligned with seg_starts


@dataclass
class _Prepared:
    ind_nodes: np.ndarray
    ind_rows_of_var: dict[int, np.ndarray]
    slot_ind_nodes: np.ndarray
    slot_ind_nodes_of_var: dict[int, np.ndarray]
    param_nodes: np.ndarray
    param_slots_of_nodes: np.ndarray
    const_nodes: np.ndarray
    const_vals: np.ndarray
    slot_span: dict[int, tuple[int, int]]
    groups: list[_Group]


def _prep(circuit: SymbolicCircuit) -> _Prepared:
    cached = getattr(circuit, "_prepared", None)
    if cached is not None:
        return cached

    kind = circuit.kind
    ind_nodes = np.flatnonzero(kind == INDICATOR)
    row_of_ind_node = {int(n): i for i, n in enumerate(ind_nodes)}
    ind_rows_of_var: dict[int, np.ndarray] = {}
    for vid in range(len(circuit.var_cards)):
        rows = [
            row_of_ind_node[circuit.indicator_index[(vid, s)]]
            for s in range(circuit.var_cards[vid])
            if (vid, s) in circuit.indicator_index
        ]
        if rows:
            ind_rows_of_var[vid] = np.asarray(rows, dtype=np.int64)

    slot_ind_nodes = np.asarray(
        [circuit.indicator_index[pair] for pair in circuit.param_slots], dtype=np.int64
    ) if circuit.param_slots and circuit.param_slots[0][0] >= 0 else np.empty(0, dtype=np.int64)
    slot_ind_nodes_of_var = {}
    slot_span = {}
    pos = 0
    for uid in circuit.exo_ids:
        card = circuit.var_cards[uid]
        slot_span[uid] = (pos, pos + card)
        if len(slot_ind_nodes):
            slot_ind_nodes_of_var[uid] = slot_ind_nodes[pos:pos + card]
        pos += card

    param_nodes = np.flatnonzero(kind == PARAM)
    param_slots_of_nodes = circuit.leaf_state[param_nodes]
    const_nodes = np.flatnonzero(kind == CONSTANT)
    const_vals = circuit.const_val[const_nodes]

    level = np.zeros(circuit.n_nodes, dtype=np.int64)
    for i in range(circuit.n_nodes):
        ch = circuit.children_of(i)
        if len(ch):
            level[i] = 1 + level[ch].max()

    groups = []
    for lv in range(1, int(level.max()) + 1 if circuit.n_nodes else 0):
        for k in (SUM, PRODUCT):
            nodes = np.flatnonzero((level == lv) & (kind == k))
            if not len(nodes):
                continue
            sizes = circuit.child_off[nodes + 1] - circuit.child_off[nodes]
            cflat = np.concatenate([circuit.children_of(i) for i in nodes])
            starts = np.zeros(len(nodes), dtype=np.int64)
            np.cumsum(sizes[:-1], out=starts[1:])
            perm = np.argsort(cflat, kind="stable")
            sorted_children = cflat[perm]
            seg_starts = np.flatnonzero(
                np.concatenate(([True], sorted_children[1:] != sorted_children[:-1]))
            )
            uniq = sorted_children[seg_starts]
            groups.append(_Group(k, nodes, sizes, starts, cflat, perm, seg_starts, uniq))

    prepared = _Prepared(
        ind_nodes=ind_nodes, ind_rows_of_var=ind_rows_of_var,
        slot_ind_nodes=slot_ind_nodes, slot_ind_nodes_of_var=slot_ind_nodes_of_var,
        param_nodes=param_nodes, param_slots_of_nodes=param_slots_of_nodes,
        const_nodes=const_nodes, const_vals=const_vals,
        slot_span=slot_span, groups=groups,
    )
    circuit._prepared = prepared
    return prepared


def _fit_scratch(circuit: SymbolicCircuit, scratch: EvalScratch | None, width: int) -> EvalScratch:
    if scratch is None or scratch.width != width or scratch.up.shape[0] != circuit.n_nodes:
        return EvalScratch(circuit, width)
    return scratch


# ---------------------------------------------------------------------------
# sweeps


def _upward(circuit: SymbolicCircuit, binding: np.ndarray,
            ind: np.ndarray, scratch: EvalScratch) -> np.ndarray:
    p = _prep(circuit)
    if len(binding) != len(circuit.param_slots):
        raise BindingError(
            f"binding covers {len(binding)} of {len(circuit.param_slots)} parameter slots"
        )
    values = scratch.up
    if len(p.const_nodes):
        values[p.const_nodes] = p.const_vals[:, None]
    if len(p.param_nodes):
        values[p.param_nodes] = np.asarray(binding)[p.param_slots_of_nodes][:, None]
    values[p.ind_nodes] = ind
    for g in p.groups:
        gathered = values[g.cflat]
        if g.kind == SUM:
            agg = np.add.reduceat(gathered, g.starts, axis=0)
        else:
            agg = np.multiply.reduceat(gathered, g.starts, axis=0)
        values[g.nodes] = agg
    return values


def _downward(circuit: SymbolicCircuit, scratch: EvalScratch) -> np.ndarray:
    """Partial derivatives of the root with respect to every node value."""
    p = _prep(circuit)
    values, deriv = scratch.up, scratch.down
    deriv[:] = 0.0
    deriv[circuit.root] = 1.0
    for g in reversed(p.groups):
        dn_rep = np.repeat(deriv[g.nodes], g.sizes, axis=0)
        if g.kind == SUM:
            contrib = dn_rep
        else:
            gathered = values[g.cflat]
            zero = gathered == 0.0
            safe = np.where(zero, 1.0, gathered)
            prod_nz = np.multiply.reduceat(safe, g.starts, axis=0)
            zero_count = np.add.reduceat(zero.astype(np.float64), g.starts, axis=0)
            prod_rep = np.repeat(prod_nz, g.sizes, axis=0)
            zc_rep = np.repeat(zero_count, g.sizes, axis=0)
            # product of the *other* children: exact when no zero sibling,
            # prod of nonzero siblings when this child is the only zero
            part = np.where(
                zc_rep == 0.0, prod_rep / safe,
                np.where((zc_rep == 1.0) & zero, prod_rep, 0.0),
            )
            contrib = part * dn_rep
        cs = contrib[g.perm]
        seg = np.add.reduceat(cs, g.seg_starts, axis=0)
        deriv[g.uniq] += seg
    return deriv
