import numpy as np
import pytest

import oracles
from cfbounds.data import Dataset
from cfbounds.model import (
    ENDOGENOUS,
    EXOGENOUS,
    Fscm,
    ModelError,
    Pscm,
    StructuralEquation,
    Variable,
    build_twin,
    c_components,
    component_submodel,
    CounterfactualQuery,
    induced_bn,
    intervene,
    se_to_cpt,
    validate,
    WorldSpec,
)
from cfbounds.ve import query
from conftest import CHAIN_PMFS, pair_model, shared_root_model


class TestConstruction:
    def test_ids_must_be_dense(self):
        with pytest.raises(ModelError, match="dense"):
            Pscm((Variable(1, "X", 2, EXOGENOUS),), ())

    def test_names_must_be_unique(self):
        with pytest.raises(ModelError, match="duplicate"):
            Pscm((Variable(0, "X", 2, EXOGENOUS), Variable(1, "X", 2, ENDOGENOUS)), ())

    def test_unknown_reference(self):
        vs = (Variable(0, "U", 2, EXOGENOUS), Variable(1, "V", 2, ENDOGENOUS))
        with pytest.raises(ModelError, match="unknown id"):
            Pscm(vs, (StructuralEquation(1, (5,), np.array([0, 1])),))

    def test_fscm_pmf_checks(self, chain_pair):
        with pytest.raises(ModelError, match="sums to"):
            Fscm(chain_pair, {0: np.array([0.5, 0.4]), 1: np.array([0.25] * 4)})
        with pytest.raises(ModelError, match="negative"):
            Fscm(chain_pair, {0: np.array([1.5, -0.5]), 1: np.array([0.25] * 4)})


class TestValidate:
    def test_valid_model_has_no_violations(self, chain_pair):
        assert validate(chain_pair) == []

    def test_cycle(self):
        vs = (Variable(0, "A", 2, ENDOGENOUS), Variable(1, "B", 2, ENDOGENOUS))
        eqs = (
            StructuralEquation(0, (1,), np.array([0, 1])),
            StructuralEquation(1, (0,), np.array([1, 0])),
        )
        rules = [v.rule for v in validate(Pscm(vs, eqs))]
        assert "cycle" in rules

    def test_constant_map_over_inputs_is_not_surjective(self):
        vs = (Variable(0, "U", 2, EXOGENOUS), Variable(1, "V", 2, ENDOGENOUS))
        eqs = (StructuralEquation(1, (0,), np.array([0, 0])),)
        violations = validate(Pscm(vs, eqs))
        assert [v.rule for v in violations] == ["surjectivity"]
        assert violations[0].variable == 1

    def test_intervention_constant_is_exempt(self, chain_pair):
        surged = intervene(chain_pair, {2: 0})
        assert validate(surged) == []

    def test_missing_equation(self):
        vs = (Variable(0, "U", 2, EXOGENOUS), Variable(1, "V", 2, ENDOGENOUS))
        assert [v.rule for v in validate(Pscm(vs, ()))] == ["missing-equation"]

    def test_exogenous_child(self):
        vs = (Variable(0, "U", 2, EXOGENOUS), Variable(1, "V", 2, ENDOGENOUS))
        eqs = (
            StructuralEquation(0, (1,), np.array([0, 1])),
            StructuralEquation(1, (), np.int64(0)),
        )
        rules = [v.rule for v in validate(Pscm(vs, eqs))]
        assert "exogenous-child" in rules

    def test_table_shape_and_range(self):
        vs = (Variable(0, "U", 3, EXOGENOUS), Variable(1, "V", 2, ENDOGENOUS))
        bad_shape = Pscm(vs, (StructuralEquation(1, (0,), np.array([0, 1])),))
        assert [v.rule for v in validate(bad_shape)] == ["table-shape"]
        bad_range = Pscm(vs, (StructuralEquation(1, (0,), np.array([0, 1, 7])),))
        assert [v.rule for v in validate(bad_range)] == ["table-range"]

    def test_small_cardinality(self):
        vs = (Variable(0, "U", 1, EXOGENOUS),)
        assert [v.rule for v in validate(Pscm(vs, ()))] == ["cardinality"]


class TestCptViews:
    def test_identity_equation_gives_identity_cpt(self, chain_pair):
        cpt = se_to_cpt(chain_pair.equation_for(2), 2)
        assert np.array_equal(cpt.values, np.eye(2))

    def test_case_map_cpt(self, chain_pair):
        cpt = se_to_cpt(chain_pair.equation_for(3), 2)
        assert cpt.values.shape == (2, 4, 2)
        # response per (V1, U2): constant 0, copy V1, negate V1, constant 1
        for v1 in range(2):
            expected = [0, v1, 1 - v1, 1]
            for u2, v2 in enumerate(expected):
                assert cpt.values[v1, u2, v2] == 1.0

    def test_degenerate_rows(self, chain_pair):
        for vid in chain_pair.endogenous_ids:
            cpt = se_to_cpt(chain_pair.equation_for(vid), chain_pair.cardinality(vid))
            rows = cpt.values.reshape(-1, cpt.values.shape[-1])
            assert np.array_equal(rows.sum(axis=1), np.ones(len(rows)))
            assert set(np.unique(cpt.values)) <= {0.0, 1.0}

    def test_induced_bn(self, chain_pair_fscm):
        cpts = induced_bn(chain_pair_fscm)
        assert [c.child for c in cpts] == [0, 1, 2, 3]
        assert np.array_equal(cpts[0].values, CHAIN_PMFS[0])
        assert np.array_equal(cpts[1].values, CHAIN_PMFS[1])
        assert set(np.unique(cpts[2].values)) <= {0.0, 1.0}

    def test_marginalized_conditionals_match_two_variable_bn(self, chain_pair_fscm):
        # the exogenous-summed endogenous view: P(V2 | V1=0) and P(V2 | V1=1)
        f0, n0 = query(chain_pair_fscm, (3,), {2: 0})
        f1, n1 = query(chain_pair_fscm, (3,), {2: 1})
        assert np.allclose(f0.values / n0, [0.2, 0.8], atol=1e-12)
        assert np.allclose(f1.values / n1, [0.3, 0.7], atol=1e-12)

    def test_single_root_identity(self):
        fscm = Fscm(pair_model(3), {0: np.array([0.2, 0.3, 0.5])})
        f, n = query(fscm, (1,), {})
        assert np.allclose(f.values / n, [0.2, 0.3, 0.5], atol=1e-12)


class TestIntervene:
    def test_surgery_replaces_equation(self, chain_pair):
        surged = intervene(chain_pair, {2: 0})
        eq = surged.equation_for(2)
        assert eq.inputs == ()
        assert int(eq.table) == 0
        assert surged.parents_of(2) == ()

    def test_idempotent(self, chain_pair):
        once = intervene(chain_pair, {2: 0})
        twice = intervene(once, {2: 0})
        assert np.array_equal(once.equation_for(2).table, twice.equation_for(2).table)
        assert once.equation_for(2).inputs == twice.equation_for(2).inputs

    def test_downstream_query(self, chain_pair):
        surged = intervene(chain_pair, {2: 0})
        f, n = query(Fscm(surged, CHAIN_PMFS), (3,), {})
        assert np.allclose(f.values / n, [0.20, 0.80], atol=1e-12)

    def test_exogenous_intervention_rejected(self, chain_pair):
        with pytest.raises(ModelError, match="exogenous intervention unsupported"):
            intervene(chain_pair, {0: 1})

    def test_surgery_soundness_exact(self, chain_pair):
        surged = intervene(chain_pair, {2: 1})
        f, n = query(Fscm(surged, CHAIN_PMFS), (2,), {})
        assert float(f.values[1] / n) == 1.0


class TestTwin:
    def query_two_worlds(self):
        return CounterfactualQuery(
            worlds=(WorldSpec(observations={2: 1, 3: 1}), WorldSpec(interventions={2: 0})),
            target=(1, 3, 1),
        )

    def test_structure(self, chain_pair):
        twin, relabel = build_twin(chain_pair, self.query_two_worlds())
        assert len(twin.exogenous_ids) == 2
        assert len(twin.endogenous_ids) == 4
        # both copies of V1 hang off the single U1 (unless severed by surgery)
        v1_w0 = relabel[(0, 2)]
        assert twin.parents_of(v1_w0) == (relabel[(0, 0)],)
        v1_w1 = relabel[(1, 2)]
        assert twin.parents_of(v1_w1) == ()  # intervened in world 1

    def test_single_world_no_ops_is_isomorphic(self, chain_pair):
        q = CounterfactualQuery(worlds=(WorldSpec(),), target=(0, 3, 1))
        twin, relabel = build_twin(chain_pair, q)
        assert twin.n_variables == chain_pair.n_variables
        assert sorted(twin.arcs()) == sorted(
            (relabel[(0, p)], relabel[(0, c)]) for p, c in chain_pair.arcs()
        )

    def test_twin_consistency(self, chain_pair):
        q = CounterfactualQuery(worlds=(WorldSpec(), WorldSpec()), target=(0, 3, 1))
        twin, relabel = build_twin(chain_pair, q)
        pmfs = {relabel[(0, u)]: CHAIN_PMFS[u] for u in (0, 1)}
        fscm = Fscm(twin, pmfs)
        base = Fscm(chain_pair, CHAIN_PMFS)
        for vid in chain_pair.endogenous_ids:
            for state in range(chain_pair.cardinality(vid)):
                p0 = query(fscm, (), {relabel[(0, vid)]: state})[1]
                p1 = query(fscm, (), {relabel[(1, vid)]: state})[1]
                p = query(base, (), {vid: state})[1]
                assert abs(p0 - p) <= 1e-12
                assert abs(p1 - p) <= 1e-12

    def test_posterior_then_surgery_value(self, chain_pair_fscm):
        value = oracles.counterfactual_value(
            chain_pair_fscm,
            (WorldSpec(observations={2: 1, 3: 1}), WorldSpec(interventions={2: 0})),
            (1, 3, 1),
        )
        assert abs(value - 11 / 14) < 1e-12


class TestComponents:
    def test_chain_pair_components(self, chain_pair):
        comps = c_components(chain_pair)
        assert len(comps) == 2
        assert comps[0].exogenous == {0}
        assert comps[0].members == {2}
        assert comps[0].boundary_parents == frozenset()
        assert comps[1].exogenous == {1}
        assert comps[1].members == {3}
        assert comps[1].boundary_parents == {2}

    def test_shared_root_single_component(self):
        comps = c_components(shared_root_model())
        assert len(comps) == 1
        assert comps[0].members == {1, 2}

    def test_disjoint_pairs(self):
        vs, eqs = [], []
        k = 4
        for i in range(k):
            vs.append(Variable(i, f"U{i}", 2, EXOGENOUS))
        for i in range(k):
            vs.append(Variable(k + i, f"V{i}", 2, ENDOGENOUS))
            eqs.append(StructuralEquation(k + i, (i,), np.array([0, 1])))
        comps = c_components(Pscm(tuple(vs), tuple(eqs)))
        assert len(comps) == k

    def test_partition(self, chain_pair):
        comps = c_components(chain_pair)
        exo = [u for c in comps for u in c.exogenous]
        endo = [v for c in comps for v in c.members]
        assert sorted(exo) == sorted(chain_pair.exogenous_ids)
        assert sorted(endo) == sorted(chain_pair.endogenous_ids)

    def test_submodel_keeps_equation_and_boundary(self, chain_pair):
        data = Dataset.from_rows([(1, 1), (1, 1), (0, 0), (0, 0), (0, 0)])
        comp = c_components(chain_pair)[1]
        sub, sub_data = component_submodel(chain_pair, comp, data)
        names = {v.name for v in sub.variables}
        assert {"U2", "V1", "V2"} <= names
        assert validate(sub) == []
        # V2's equation survives unchanged
        v2 = sub.by_name("V2")
        eq = sub.equation_for(v2.id)
        assert np.array_equal(eq.table, chain_pair.equation_for(3).table)
        # V1 is a root of the retained structure: its only parent is the
        # uniform stand-in prior, and its original equation is gone
        v1 = sub.by_name("V1")
        (parent,) = sub.parents_of(v1.id)
        assert sub.variables[parent].name == "V1~prior"
        assert sub.variables[parent].kind == EXOGENOUS
        # projected data keeps boundary and member columns, re-aggregated
        assert sub_data.records == (((0, 0), 3), ((1, 1), 2))

    def test_submodel_without_boundary_is_the_component(self):
        model = shared_root_model()
        data = Dataset.from_rows([(0, 0), (1, 1)])
        comp = c_components(model)[0]
        sub, sub_data = component_submodel(model, comp, data)
        assert {v.name for v in sub.variables} == {"U", "A", "B"}
        assert sub_data.records == data.records

    def test_projection_arithmetic(self, chain_pair):
        data = Dataset.from_records([((1, 1), 3), ((0, 0), 2)])
        comp = c_components(chain_pair)[0]  # members {V1}, no boundary
        _, sub_data = component_submodel(chain_pair, comp, data)
        assert sub_data.records == (((0,), 2), ((1,), 3))


def component_factor(fscm, comp, record_by_id) -> float:
    """Marginal of the component's members with the boundary clamped at its
    record values, computed by enumerating the component's own roots only
    (members never depend on anything outside members/boundary/own roots)."""
    import itertools

    pscm = fscm.pscm
    exo = sorted(comp.exogenous)
    topo = pscm.topological_order()
    q = 0.0
    for cfg in itertools.product(*[range(pscm.cardinality(u)) for u in exo]):
        weight = 1.0
        for u, s in zip(exo, cfg):
            weight *= float(fscm.exo_pmfs[u][s])
        assign = dict(zip(exo, cfg))
        assign.update({v: record_by_id[v] for v in comp.boundary_parents})
        ok = True
        for vid in topo:
            if vid not in comp.members:
                continue
            value = pscm.equation_for(vid).output(assign)
            assign[vid] = value
            if value != record_by_id[vid]:
                ok = False
                break
        if ok:
            q += weight
    return q


class TestTianFactorization:
    @pytest.mark.parametrize("seed", range(6))
    def test_product_of_component_factors(self, seed):
        from cfbounds.generate import GenConfig, generate_pscm, random_fscm

        rng = np.random.default_rng(seed)
        cfg = GenConfig(endogenous_range=(2, 4), exogenous_range=(1, 3),
                        exo_cardinality_range=(2, 4), edge_probability=0.5, seed=seed)
        pscm = generate_pscm(cfg, rng)
        assert pscm.n_variables <= 10
        fscm = random_fscm(pscm, rng)
        marginal = oracles.endo_marginal(fscm)
        comps = c_components(pscm)
        endo = sorted(pscm.endogenous_ids)
        for record, p in marginal.items():
            by_id = dict(zip(endo, record))
            product = 1.0
            for comp in comps:
                product *= component_factor(fscm, comp, by_id)
            assert abs(product - p) < 1e-10
