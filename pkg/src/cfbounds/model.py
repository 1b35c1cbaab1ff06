"""Discrete structural causal models with latent exogenous roots.

A model couples two variable layers. Exogenous variables are latent roots
that carry all randomness; endogenous variables are observed and each one is
fixed deterministically by a structural equation over its parents. Without
distributions on the exogenous roots the object is "partially specified"
(:class:`Pscm`); adding one marginal PMF per exogenous variable makes it a
fully specified model (:class:`Fscm`), which is just a Bayesian network whose
non-root CPTs are degenerate (0/1).

This module holds the data model plus the graph surgery everything else is
built on: validation, CPT views, interventions (replacing an equation by a
constant), multi-world counterfactual expansion, and the decomposition into
confounded components (maximal groups of variables linked through
exogenous-to-endogenous arcs only).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np

if TYPE_CHECKING:
    from .data import Dataset

ENDOGENOUS = "endogenous"
EXOGENOUS = "exogenous"


class ModelError(ValueError):
    """A model object is structurally incoherent and cannot be built."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    cardinality: int
    kind: str  # ENDOGENOUS or EXOGENOUS

    def __post_init__(self):
        if self.kind not in (ENDOGENOUS, EXOGENOUS):
            raise ModelError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if self.cardinality < 1:
            raise ModelError(f"variable {self.name!r}: cardinality must be positive")

    @property
    def is_exogenous(self) -> bool:
        return self.kind == EXOGENOUS


@dataclass(frozen=True)
class StructuralEquation:
    """Deterministic assignment of one endogenous variable from its inputs.

    ``table`` maps every joint configuration of ``inputs`` to a state of
    ``child``: its shape equals the input cardinalities, with the last input
    varying fastest in the flattened C-order layout. An intervention is the
    special case ``inputs=()`` with a scalar table.
    """

    child: int
    inputs: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))
        tab = _freeze(np.asarray(self.table, dtype=np.int64))
        if tab.ndim != len(self.inputs):
            raise ModelError(
                f"equation for variable {self.child}: table has {tab.ndim} axes "
                f"but {len(self.inputs)} inputs"
            )
        object.__setattr__(self, "table", tab)

    def output(self, assignment: Mapping[int, int]) -> int:
        """Child state under a (total) assignment of the inputs."""
        return int(self.table[tuple(assignment[v] for v in self.inputs)])


@dataclass(frozen=True)
class Pscm:
    """Partially specified model: equations and graph, no exogenous PMFs.

    Construction enforces only referential integrity (dense ids, unique
    names, in-range references); semantic invariants such as acyclicity and
    surjectivity are checked by :func:`validate`, which reports violations
    as data instead of raising.
    """

    variables: tuple[Variable, ...]
    equations: tuple[StructuralEquation, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "equations", tuple(self.equations))
        n = len(self.variables)
        for i, v in enumerate(self.variables):
            if v.id != i:
                raise ModelError(f"variable ids must be dense 0..{n - 1}; got {v.id} at position {i}")
        names = [v.name for v in self.variables]
        if len(set(names)) != n:
            dup = sorted({x for x in names if names.count(x) > 1})
            raise ModelError(f"duplicate variable names: {dup}")
        for eq in self.equations:
            for ref in (eq.child, *eq.inputs):
                if not 0 <= ref < n:
                    raise ModelError(f"equation for variable {eq.child} references unknown id {ref}")

    # -- lookups ----------------------------------------------------------

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def by_name(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def cardinality(self, vid: int) -> int:
        return self.variables[vid].cardinality

    @property
    def exogenous_ids(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.variables if v.kind == EXOGENOUS)

    @property
    def endogenous_ids(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.variables if v.kind == ENDOGENOUS)

    def equation_for(self, vid: int) -> StructuralEquation:
        for eq in self.equations:
            if eq.child == vid:
                return eq
        raise KeyError(f"variable {vid} has no equation")

    def parents_of(self, vid: int) -> tuple[int, ...]:
        for eq in self.equations:
            if eq.child == vid:
                return eq.inputs
        return ()

    def arcs(self) -> list[tuple[int, int]]:
        """All (parent, child) arcs induced by the equations."""
        return [(p, eq.child) for eq in self.equations for p in eq.inputs]

    def topological_order(self) -> list[int]:
        """Variable ids, parents before children; raises on a cycle."""
        order = _toposort(self.n_variables, self.arcs())
        if order is None:
            raise ModelError("graph contains a cycle")
        return order


@dataclass(frozen=True)
class Fscm:
    """Fully specified model: a Pscm plus one marginal PMF per exogenous root."""

    pscm: Pscm
    exo_pmfs: dict[int, np.ndarray]

    def __post_init__(self):
        pmfs = {}
        exo = set(self.pscm.exogenous_ids)
        if set(self.exo_pmfs) != exo:
            raise ModelError("exo_pmfs keys must be exactly the exogenous variable ids")
        for uid, pmf in self.exo_pmfs.items():
            arr = _freeze(np.asarray(pmf, dtype=np.float64))
            if arr.shape != (self.pscm.cardinality(uid),):
                raise ModelError(f"PMF for variable {uid} has wrong length")
            if np.any(arr < 0):
                raise ModelError(f"PMF for variable {uid} has negative entries")
            if abs(float(arr.sum()) - 1.0) > 1e-12:
                raise ModelError(f"PMF for variable {uid} sums to {arr.sum()!r}, not 1")
            pmfs[uid] = arr
        object.__setattr__(self, "exo_pmfs", pmfs)


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table, shape ``(*parent_cards, child_card)``."""

    child: int
    parents: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        vals = _freeze(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", vals)
        rows = vals.reshape(-1, vals.shape[-1])
        if not np.allclose(rows.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ModelError(f"CPT for variable {self.child}: conditional PMFs must sum to 1")


@dataclass(frozen=True)
class CComponent:
    """Maximal variable group connected via exogenous-to-endogenous arcs only.

    ``boundary_parents`` are the endogenous direct parents of members that sit
    outside the component.
    """

    exogenous: frozenset[int]
    members: frozenset[int]
    boundary_parents: frozenset[int]


@dataclass(frozen=True)
class WorldSpec:
    """One hypothetical world: forced states plus observed states."""

    interventions: dict[int, int] = field(default_factory=dict)
    observations: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class CounterfactualQuery:
    """Target probability of one variable state in one world, given all
    worlds' observations and interventions."""

    worlds: tuple[WorldSpec, ...]
    target: tuple[int, int, int]  # (world index, variable id, state)

    def __post_init__(self):
        object.__setattr__(self, "worlds", tuple(self.worlds))
        object.__setattr__(self, "target", tuple(int(x) for x in self.target))


@dataclass(frozen=True)
class Violation:
    rule: str
    variable: int | None
    message: str


# ---------------------------------------------------------------------------
# validation


def validate(pscm: Pscm) -> list[Violation]:
    """Check the semantic invariants; an empty list means the model is valid.

    Violations are returned as data (rule name, offending variable, message)
    rather than raised, so callers can report all problems at once.
    """
    out: list[Violation] = []
    for v in pscm.variables:
        if v.cardinality < 2:
            out.append(Violation("cardinality", v.id, f"variable {v.name!r} has cardinality {v.cardinality} < 2"))

    seen: dict[int, int] = {}
    for eq in pscm.equations:
        child = pscm.variables[eq.child]
        if child.kind == EXOGENOUS:
            out.append(Violation("exogenous-child", eq.child, f"exogenous variable {child.name!r} has an equation (incoming arcs)"))
            continue
        seen[eq.child] = seen.get(eq.child, 0) + 1
        expected = tuple(pscm.cardinality(i) for i in eq.inputs)
        if eq.table.shape != expected:
            out.append(Violation("table-shape", eq.child, f"table shape {eq.table.shape} does not cover input cardinalities {expected}"))
            continue
        card = child.cardinality
        if eq.table.size and (eq.table.min() < 0 or eq.table.max() >= card):
            out.append(Violation("table-range", eq.child, f"table maps outside the child domain 0..{card - 1}"))
            continue
        # Constant maps from empty input are intervention artifacts and exempt
        # from surjectivity; a constant map over real inputs is flagged.
        if eq.inputs and len(np.unique(eq.table)) < card:
            missing = sorted(set(range(card)) - set(np.unique(eq.table).tolist()))
            out.append(Violation("surjectivity", eq.child, f"equation never produces states {missing} of {child.name!r}"))

    for v in pscm.variables:
        if v.kind == ENDOGENOUS:
            count = seen.get(v.id, 0)
            if count == 0:
                out.append(Violation("missing-equation", v.id, f"endogenous variable {v.name!r} has no equation"))
            elif count > 1:
                out.append(Violation("duplicate-equation", v.id, f"endogenous variable {v.name!r} has {count} equations"))

    if _toposort(pscm.n_variables, pscm.arcs()) is None:
        on_cycle = _some_cycle_vertex(pscm.n_variables, pscm.arcs())
        out.append(Violation("cycle", on_cycle, "induced graph contains a directed cycle"))
    return out


def _toposort(n: int, arcs: Iterable[tuple[int, int]]) -> list[int] | None:
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    indeg = [0] * n
    for p, c in arcs:
        children[p].append(c)
        indeg[c] += 1
    heap = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    return order if len(order) == n else None


def _some_cycle_vertex(n: int, arcs: Iterable[tuple[int, int]]) -> int | None:
    arcs = list(arcs)
    order = _toposort(n, arcs) or []
    stuck = set(range(n)) - set(order)
    return min(stuck) if stuck else None


# ---------------------------------------------------------------------------
# CPT views


def se_to_cpt(eq: StructuralEquation, child_cardinality: int) -> Cpt:
    """Degenerate CPT of an equation: entry 1 where the table maps the
    parent configuration to the child state, 0 elsewhere."""
    values = np.zeros(eq.table.shape + (child_cardinality,))
    flat = values.reshape(-1, child_cardinality)
    flat[np.arange(flat.shape[0]), eq.table.reshape(-1)] = 1.0
    return Cpt(child=eq.child, parents=eq.inputs, values=values)


def induced_bn(fscm: Fscm) -> list[Cpt]:
    """One CPT per variable, in id order: marginal PMFs on exogenous roots,
    degenerate tables elsewhere. The product of all entries along a joint
    configuration is that configuration's probability."""
    out = []
    for v in fscm.pscm.variables:
        if v.kind == EXOGENOUS:
            out.append(Cpt(child=v.id, parents=(), values=fscm.exo_pmfs[v.id]))
        else:
            out.append(se_to_cpt(fscm.pscm.equation_for(v.id), v.cardinality))
    return out


# ---------------------------------------------------------------------------
# surgery


def intervene(pscm: Pscm, assignments: Mapping[int, int]) -> Pscm:
    """Force variables to fixed states by replacing their equations with
    constant maps; incoming arcs disappear with the replaced inputs."""
    for vid, state in assignments.items():
        var = pscm.variables[vid]
        if var.kind == EXOGENOUS:
            raise ModelError("exogenous intervention unsupported")
        if not 0 <= state < var.cardinality:
            raise ModelError(f"state {state} out of range for variable {var.name!r}")
    new_eqs = []
    for eq in pscm.equations:
        if eq.child in assignments:
            new_eqs.append(StructuralEquation(eq.child, (), np.int64(assignments[eq.child])))
        else:
            new_eqs.append(eq)
    return Pscm(pscm.variables, tuple(new_eqs))


def validate_query(pscm: Pscm, query: CounterfactualQuery) -> None:
    """Raise ModelError unless the query is well formed against the model."""
    if not query.worlds:
        raise ModelError("query must name at least one world")
    for w, world in enumerate(query.worlds):
        both = set(world.interventions) & set(world.observations)
        if both:
            raise ModelError(f"world {w}: variables {sorted(both)} both intervened and observed")
        for vid, state in list(world.interventions.items()) + list(world.observations.items()):
            var = pscm.variables[vid]
            if var.kind != ENDOGENOUS:
                raise ModelError(f"world {w}: variable {var.name!r} is not endogenous")
            if not 0 <= state < var.cardinality:
                raise ModelError(f"world {w}: state {state} out of range for {var.name!r}")
    w, vid, state = query.target
    if not 0 <= w < len(query.worlds):
        raise ModelError(f"target world {w} out of range")
    var = pscm.variables[vid]
    if var.kind != ENDOGENOUS:
        raise ModelError(f"target variable {var.name!r} is not endogenous")
    if not 0 <= state < var.cardinality:
        raise ModelError(f"target state {state} out of range for {var.name!r}")


def build_twin(pscm: Pscm, query: CounterfactualQuery) -> tuple[Pscm, dict[tuple[int, int], int]]:
    """Multi-world expansion for counterfactual evaluation.

    Every world gets its own copy of each endogenous variable and equation;
    all copies share the single set of exogenous roots. Each world's
    interventions are applied to its own copies. Observations are not baked
    into the graph; they become evidence at query time.

    Returns the expanded model and a relabeling ``(world, original id) ->
    new id`` (exogenous ids map identically for every world).
    """
    validate_query(pscm, query)
    n_worlds = len(query.worlds)
    exo = pscm.exogenous_ids
    endo = pscm.endogenous_ids

    new_vars: list[Variable] = []
    relabel: dict[tuple[int, int], int] = {}
    for uid in exo:
        new_id = len(new_vars)
        v = pscm.variables[uid]
        new_vars.append(Variable(new_id, v.name, v.cardinality, EXOGENOUS))
        for w in range(n_worlds):
            relabel[(w, uid)] = new_id
    for w in range(n_worlds):
        for vid in endo:
            new_id = len(new_vars)
            v = pscm.variables[vid]
            name = v.name if n_worlds == 1 else f"{v.name}@{w}"
            new_vars.append(Variable(new_id, name, v.cardinality, ENDOGENOUS))
            relabel[(w, vid)] = new_id

    new_eqs = []
    for w in range(n_worlds):
        for vid in endo:
            eq = pscm.equation_for(vid)
            new_eqs.append(StructuralEquation(
                relabel[(w, vid)],
                tuple(relabel[(w, i)] for i in eq.inputs),
                eq.table,
            ))
    twin = Pscm(tuple(new_vars), tuple(new_eqs))

    surgery = {}
    for w, world in enumerate(query.worlds):
        for vid, state in world.interventions.items():
            surgery[relabel[(w, vid)]] = state
    if surgery:
        twin = intervene(twin, surgery)
    return twin, relabel


# ---------------------------------------------------------------------------
# confounded components


def c_components(pscm: Pscm) -> list[CComponent]:
    """Partition the variables into confounded components.

    Two variables share a component iff they are connected by an undirected
    path that uses exogenous-to-endogenous arcs only. Endogenous variables
    with no exogenous parent form singleton components with an empty
    exogenous set. Output is ordered by smallest member id.
    """
    parent = list(range(pscm.n_variables))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    exo = set(pscm.exogenous_ids)
    for eq in pscm.equations:
        for i in eq.inputs:
            if i in exo:
                union(i, eq.child)

    groups: dict[int, list[int]] = {}
    for v in range(pscm.n_variables):
        groups.setdefault(find(v), []).append(v)

    comps = []
    for ids in groups.values():
        members = frozenset(v for v in ids if v not in exo)
        exo_part = frozenset(v for v in ids if v in exo)
        boundary = frozenset(
            p for m in members for p in pscm.parents_of(m)
            if p not in exo and p not in members
        )
        comps.append(CComponent(exo_part, members, boundary))

    def key(c: CComponent) -> int:
        return min(c.members) if c.members else pscm.n_variables + min(c.exogenous)

    return sorted(comps, key=key)


def component_submodel(pscm: Pscm, comp: CComponent, dataset: "Dataset") -> tuple[Pscm, "Dataset"]:
    """Restrict the model to one component plus its direct parents.

    The sub-model keeps the component's exogenous and member variables with
    their original equations. Each boundary parent stays endogenous (it is
    observed in every record) but loses its original equation: it becomes a
    root fed by a fresh uniform-prior exogenous variable through an identity
    equation. Because boundary values are fixed by the data, their uniform
    priors only shift every record's likelihood by the same constant and
    leave the component's exogenous posteriors untouched.

    The dataset is projected onto the sub-model's endogenous variables
    (members plus boundary), with counts re-aggregated.
    """
    sub, sub_data, _, _ = _component_submodel_full(pscm, comp, dataset)
    return sub, sub_data


def _component_submodel_full(
    pscm: Pscm, comp: CComponent, dataset: "Dataset"
) -> tuple[Pscm, "Dataset", dict[int, int], tuple[int, ...]]:
    """component_submodel plus the bookkeeping the EM orchestrator needs:
    original-exogenous-id -> sub-model-id map and the uniform-prior ids."""
    base_ids = sorted(comp.exogenous | comp.members | comp.boundary_parents)
    id_map = {orig: i for i, orig in enumerate(base_ids)}
    new_vars = [
        Variable(id_map[orig], pscm.variables[orig].name,
                 pscm.variables[orig].cardinality, pscm.variables[orig].kind)
        for orig in base_ids
    ]
    prior_of: dict[int, int] = {}
    for orig in sorted(comp.boundary_parents):
        nid = len(new_vars)
        v = pscm.variables[orig]
        new_vars.append(Variable(nid, f"{v.name}~prior", v.cardinality, EXOGENOUS))
        prior_of[orig] = nid

    eqs = [
        StructuralEquation(
            id_map[orig],
            tuple(id_map[i] for i in pscm.equation_for(orig).inputs),
            pscm.equation_for(orig).table,
        )
        for orig in sorted(comp.members)
    ]
    eqs += [
        StructuralEquation(id_map[orig], (prior_of[orig],), np.arange(pscm.cardinality(orig)))
        for orig in sorted(comp.boundary_parents)
    ]
    sub = Pscm(tuple(new_vars), tuple(eqs))

    orig_endo = sorted(pscm.endogenous_ids)
    col_of = {vid: i for i, vid in enumerate(orig_endo)}
    keep = sorted(comp.members | comp.boundary_parents)
    sub_data = dataset.project([col_of[v] for v in keep])
    exo_map = {orig: id_map[orig] for orig in comp.exogenous}
    return sub, sub_data, exo_map, tuple(sorted(prior_of.values()))
