import math

import numpy as np
import pytest

import oracles
from cfbounds.circuit import compile_circuit
from cfbounds.data import Dataset
from cfbounds.em import (
    EmConfig,
    EmError,
    QueryUndefined,
    bound_query,
    bruteforce_bounds,
    em_multi_run,
    em_run,
    em_step,
    query_value,
    run_rng,
    sample_initialization,
)
from cfbounds.generate import GenConfig, generate_pscm, random_fscm, sample_dataset
from cfbounds.model import (
    CounterfactualQuery,
    ENDOGENOUS,
    EXOGENOUS,
    Fscm,
    Pscm,
    StructuralEquation,
    Variable,
    WorldSpec,
    c_components,
    component_submodel,
)
from cfbounds.ve import query
from conftest import CHAIN_PMFS, chain_pair_model, pair_model, shared_root_model


def chain_dataset(n=200, seed=3):
    fscm = Fscm(chain_pair_model(), CHAIN_PMFS)
    return sample_dataset(fscm, n, np.random.default_rng(seed))


class TestInitialization:
    def test_deterministic(self, chain_pair):
        a = sample_initialization(chain_pair, np.random.default_rng(11))
        b = sample_initialization(chain_pair, np.random.default_rng(11))
        for u in chain_pair.exogenous_ids:
            assert np.array_equal(a[u], b[u])

    def test_simplex_membership(self, chain_pair):
        rng = np.random.default_rng(5)
        for _ in range(200):
            pmfs = sample_initialization(chain_pair, rng)
            for pmf in pmfs.values():
                assert abs(pmf.sum() - 1.0) <= 1e-12
                assert pmf.min() > 0

    def test_flat_mean(self):
        pscm = pair_model(4)
        rng = np.random.default_rng(7)
        total = np.zeros(4)
        n = 100_000
        for _ in range(n):
            total += sample_initialization(pscm, rng)[0]
        assert np.allclose(total / n, 0.25, atol=0.01)


class TestEmStep:
    def test_worked_update(self, chain_pair):
        circuit = compile_circuit(chain_pair)
        data = Dataset.from_rows([(1, 1)])
        new, loglik = em_step(circuit, CHAIN_PMFS, data)
        assert np.allclose(new[0], [0.0, 1.0], atol=1e-12)
        assert np.allclose(new[1], [0.0, 3 / 14, 0.0, 11 / 14], atol=1e-12)
        assert abs(loglik - math.log(0.63)) < 1e-12

    def test_matches_enumeration_update(self):
        rng = np.random.default_rng(31)
        cfg = GenConfig(endogenous_range=(2, 3), exogenous_range=(2, 3),
                        exo_cardinality_range=(2, 4), edge_probability=0.5, seed=31)
        pscm = generate_pscm(cfg, rng)
        fscm = random_fscm(pscm, rng)
        data = sample_dataset(fscm, 40, rng)
        circuit = compile_circuit(pscm)
        new, _ = em_step(circuit, fscm.exo_pmfs, data)
        expected = oracles.mean_update(fscm, list(data.records))
        for u in pscm.exogenous_ids:
            assert np.allclose(new[u], expected[u], atol=1e-10)

    def test_fixed_point_is_stationary(self):
        pscm = pair_model(3)
        circuit = compile_circuit(pscm)
        data = Dataset.from_records([((0,), 2), ((1,), 3), ((2,), 5)])
        start = {0: np.array([0.3, 0.3, 0.4])}
        once, _ = em_step(circuit, start, data)
        assert np.allclose(once[0], [0.2, 0.3, 0.5], atol=1e-12)
        twice, _ = em_step(circuit, once, data)
        assert np.allclose(twice[0], once[0], atol=1e-12)

    def test_counts_equal_exploded_rows(self, chain_pair):
        circuit = compile_circuit(chain_pair)
        compact = Dataset.from_records([((1, 1), 2), ((0, 0), 1)])
        exploded = Dataset.from_rows([(1, 1), (0, 0), (1, 1)])
        assert compact.records == exploded.records
        a, la = em_step(circuit, CHAIN_PMFS, compact)
        b, lb = em_step(circuit, CHAIN_PMFS, exploded)
        assert la == lb
        for u in chain_pair.exogenous_ids:
            assert np.array_equal(a[u], b[u])

    def test_update_subset_freezes_the_rest(self, chain_pair):
        circuit = compile_circuit(chain_pair)
        data = Dataset.from_rows([(1, 1)])
        new, _ = em_step(circuit, CHAIN_PMFS, data, update=(1,))
        assert np.array_equal(new[0], CHAIN_PMFS[0])
        assert np.allclose(new[1], [0.0, 3 / 14, 0.0, 11 / 14], atol=1e-12)


class TestEmRun:
    def test_perfectly_fittable_record(self, chain_pair):
        data = Dataset.from_rows([(1, 1)])
        init = sample_initialization(chain_pair, np.random.default_rng(2))
        result = em_run(chain_pair, data, init,
                        EmConfig(runs=1, max_iterations=50, rel_tolerance=1e-12))
        assert result.termination == "converged"
        assert abs(result.final_loglik) < 1e-9
        assert np.allclose(result.final_pmfs[0], [0.0, 1.0], atol=1e-12)
        assert result.final_pmfs[1][0] + result.final_pmfs[1][2] < 1e-12

    def test_infinite_tolerance_stops_after_one_iteration(self, chain_pair):
        data = chain_dataset(50)
        init = sample_initialization(chain_pair, np.random.default_rng(4))
        result = em_run(chain_pair, data, init,
                        EmConfig(runs=1, max_iterations=50, rel_tolerance=math.inf))
        assert result.iterations == 1
        assert result.termination == "converged"

    def test_trace_monotone(self):
        rng = np.random.default_rng(17)
        for seed in range(5):
            cfg = GenConfig(endogenous_range=(2, 4), exogenous_range=(2, 3),
                            exo_cardinality_range=(2, 5), edge_probability=0.5, seed=seed)
            pscm = generate_pscm(cfg, rng)
            data = sample_dataset(random_fscm(pscm, rng), 60, rng)
            for run in range(10):
                init = sample_initialization(pscm, run_rng(seed, run))
                result = em_run(pscm, data, init,
                                EmConfig(runs=1, max_iterations=40, rel_tolerance=1e-10))
                trace = result.trace
                assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))

    def test_engines_agree(self, chain_pair):
        data = chain_dataset(120)
        init = sample_initialization(chain_pair, np.random.default_rng(9))
        cfg = EmConfig(runs=1, max_iterations=40, rel_tolerance=1e-10)
        circuit_run = em_run(chain_pair, data, init, cfg, engine="circuit")
        ve_run = em_run(chain_pair, data, init, cfg, engine="ve")
        rel = abs(circuit_run.final_loglik - ve_run.final_loglik) / abs(ve_run.final_loglik)
        assert rel < 1e-6
        for u in chain_pair.exogenous_ids:
            assert np.allclose(circuit_run.final_pmfs[u], ve_run.final_pmfs[u], atol=1e-9)

    def test_circuit_loglik_matches_elimination_loglik(self, chain_pair):
        from cfbounds.ve import log_likelihood

        data = chain_dataset(120)
        circuit = compile_circuit(chain_pair)
        rng = np.random.default_rng(23)
        for _ in range(5):
            pmfs = sample_initialization(chain_pair, rng)
            _, from_circuit = em_step(circuit, pmfs, data)
            from_ve = log_likelihood(Fscm(chain_pair, pmfs), data)
            assert abs(from_circuit - from_ve) < 1e-9


class TestEmMultiRun:
    def test_modes_bit_identical(self, chain_pair):
        data = chain_dataset(80)
        results = {}
        for mode in ("none", "runs", "components", "both"):
            cfg = EmConfig(runs=3, max_iterations=25, rel_tolerance=1e-10,
                           seed=7, parallelism=mode)
            results[mode] = em_multi_run(chain_pair, data, cfg)
        base = results["none"]
        for mode, runs in results.items():
            for a, b in zip(base, runs):
                assert a.trace == b.trace
                assert a.termination == b.termination
                for u in a.final_pmfs:
                    assert np.array_equal(a.final_pmfs[u], b.final_pmfs[u])

    def test_single_component_equals_whole_model(self):
        pscm = shared_root_model()
        fscm = Fscm(pscm, {0: np.array([0.1, 0.2, 0.3, 0.4])})
        data = sample_dataset(fscm, 100, np.random.default_rng(1))
        cfg = EmConfig(runs=2, max_iterations=30, rel_tolerance=1e-10,
                       seed=5, parallelism="components")
        multi = em_multi_run(pscm, data, cfg)
        for r, result in enumerate(multi):
            init = sample_initialization(pscm, run_rng(cfg.seed, r))
            solo = em_run(pscm, data, init, cfg)
            assert np.array_equal(result.final_pmfs[0], solo.final_pmfs[0])
            assert result.trace == solo.trace

    def test_component_posterior_matches_whole_model(self, chain_pair):
        # the confounded component's root posterior is invariant to whether the
        # EM sees the whole model or just the component with its boundary
        data = chain_dataset(150)
        cfg = EmConfig(runs=1, max_iterations=40, rel_tolerance=1e-11)
        init = sample_initialization(chain_pair, run_rng(3, 0))
        whole = em_run(chain_pair, data, init, cfg)

        comp = c_components(chain_pair)[1]
        sub, sub_data = component_submodel(chain_pair, comp, data)
        u2 = sub.by_name("U2").id
        prior = sub.by_name("V1~prior").id
        sub_init = {u2: init[1], prior: np.full(2, 0.5)}
        part = em_run(sub, sub_data, sub_init, cfg, update=(u2,))
        assert np.allclose(part.final_pmfs[u2], whole.final_pmfs[1], atol=1e-9)

    def test_seed_prefix_nesting(self, chain_pair):
        data = chain_dataset(60)
        small = em_multi_run(chain_pair, data,
                             EmConfig(runs=3, max_iterations=15, rel_tolerance=1e-9, seed=21))
        large = em_multi_run(chain_pair, data,
                             EmConfig(runs=6, max_iterations=15, rel_tolerance=1e-9, seed=21))
        for a, b in zip(small, large):
            assert a.trace == b.trace

    def test_degenerate_record_reported_per_run(self):
        # a copy equation with no root of its own makes (0, 1) impossible
        vs = (
            Variable(0, "U", 2, EXOGENOUS),
            Variable(1, "A", 2, ENDOGENOUS),
            Variable(2, "B", 2, ENDOGENOUS),
        )
        eqs = (
            StructuralEquation(1, (0,), np.array([0, 1])),
            StructuralEquation(2, (1,), np.array([0, 1])),
        )
        pscm = Pscm(vs, eqs)
        data = Dataset.from_rows([(0, 0), (0, 1)])
        runs = em_multi_run(pscm, data, EmConfig(runs=3, max_iterations=10, rel_tolerance=1e-9))
        assert len(runs) == 3
        for result in runs:
            assert result.termination == "degenerate_record"
            assert result.degenerate_record is not None


class TestQueryValue:
    def two_world_query(self):
        return CounterfactualQuery(
            worlds=(WorldSpec(observations={2: 1, 3: 1}), WorldSpec(interventions={2: 0})),
            target=(1, 3, 1),
        )

    def test_worked_value(self, chain_pair_fscm):
        assert abs(query_value(chain_pair_fscm, self.two_world_query()) - 11 / 14) < 1e-12

    def test_single_world_reduces_to_conditional(self, chain_pair_fscm):
        q = CounterfactualQuery(worlds=(WorldSpec(observations={2: 1}),), target=(0, 3, 1))
        value = query_value(chain_pair_fscm, q)
        f, n = query(chain_pair_fscm, (3,), {2: 1})
        assert abs(value - f.values[1] / n) < 1e-12

    def test_intervened_target_is_certain(self, chain_pair_fscm):
        q = CounterfactualQuery(worlds=(WorldSpec(interventions={2: 0}),), target=(0, 2, 0))
        assert query_value(chain_pair_fscm, q) == 1.0

    def test_enumeration_agreement(self, chain_pair_fscm):
        q = self.two_world_query()
        direct = oracles.counterfactual_value(chain_pair_fscm, q.worlds, q.target)
        assert abs(query_value(chain_pair_fscm, q) - direct) < 1e-12

    def test_impossible_observation_is_undefined(self, chain_pair):
        fscm = Fscm(chain_pair, {0: np.array([1.0, 0.0]), 1: CHAIN_PMFS[1]})
        q = CounterfactualQuery(worlds=(WorldSpec(observations={2: 1}),), target=(0, 3, 1))
        with pytest.raises(QueryUndefined):
            query_value(fscm, q)


class TestBounds:
    def interventional_query(self):
        return CounterfactualQuery(worlds=(WorldSpec(interventions={2: 0}),), target=(0, 3, 1))

    def test_single_run_collapses(self, chain_pair):
        data = chain_dataset(100)
        result = bound_query(chain_pair, data, self.interventional_query(),
                             EmConfig(runs=1, max_iterations=30, rel_tolerance=1e-9, seed=2))
        assert result.lower == result.upper == result.per_run_values[0]

    def test_more_runs_never_shrink(self, chain_pair):
        data = chain_dataset(100)
        q = self.interventional_query()
        narrow = bound_query(chain_pair, data, q,
                             EmConfig(runs=4, max_iterations=25, rel_tolerance=1e-9, seed=13))
        wide = bound_query(chain_pair, data, q,
                           EmConfig(runs=12, max_iterations=25, rel_tolerance=1e-9, seed=13))
        assert wide.lower <= narrow.lower
        assert wide.upper >= narrow.upper

    def test_bounds_sanity(self, chain_pair):
        data = chain_dataset(100)
        result = bound_query(chain_pair, data, self.interventional_query(),
                             EmConfig(runs=8, max_iterations=25, rel_tolerance=1e-9, seed=3))
        assert 0.0 <= result.lower <= result.upper <= 1.0
        for value in result.per_run_values:
            assert value is not None
            assert result.lower <= value <= result.upper

    def test_reproducible(self, chain_pair):
        data = chain_dataset(100)
        cfg = EmConfig(runs=5, max_iterations=20, rel_tolerance=1e-9, seed=4)
        a = bound_query(chain_pair, data, self.interventional_query(), cfg)
        b = bound_query(chain_pair, data, self.interventional_query(), cfg)
        assert a.per_run_values == b.per_run_values
        assert (a.lower, a.upper) == (b.lower, b.upper)

    def test_all_runs_failing_is_an_error(self):
        vs = (
            Variable(0, "U", 2, EXOGENOUS),
            Variable(1, "A", 2, ENDOGENOUS),
            Variable(2, "B", 2, ENDOGENOUS),
        )
        eqs = (
            StructuralEquation(1, (0,), np.array([0, 1])),
            StructuralEquation(2, (1,), np.array([0, 1])),
        )
        pscm = Pscm(vs, eqs)
        data = Dataset.from_rows([(0, 1)])
        q = CounterfactualQuery(worlds=(WorldSpec(),), target=(0, 1, 0))
        with pytest.raises(EmError, match="no valid runs"):
            bound_query(pscm, data, q, EmConfig(runs=2, max_iterations=5, rel_tolerance=1e-9))


class TestBruteforce:
    def test_identifiable_query_collapses(self):
        pscm = pair_model(2)
        fscm = Fscm(pscm, {0: np.array([0.3, 0.7])})
        data = sample_dataset(fscm, 2000, np.random.default_rng(8))
        q = CounterfactualQuery(worlds=(WorldSpec(),), target=(0, 1, 1))
        lower, upper = bruteforce_bounds(pscm, data, q, grid_steps=50)
        assert upper - lower <= 2 * 0.02 + 2 / 50 + 1e-9

    def test_grid_refinement_bound(self):
        pscm = pair_model(2)
        fscm = Fscm(pscm, {0: np.array([0.3, 0.7])})
        data = sample_dataset(fscm, 2000, np.random.default_rng(8))
        q = CounterfactualQuery(worlds=(WorldSpec(),), target=(0, 1, 1))
        lo1, up1 = bruteforce_bounds(pscm, data, q, grid_steps=50)
        lo2, up2 = bruteforce_bounds(pscm, data, q, grid_steps=100)
        assert lo1 - lo2 <= 1 / 50 + 1e-12 and lo2 <= lo1 + 1e-12
        assert up2 - up1 <= 1 / 50 + 1e-12 and up2 >= up1 - 1e-12

    def test_em_interval_contained(self, chain_pair):
        fscm = Fscm(chain_pair, CHAIN_PMFS)
        data = sample_dataset(fscm, 1500, np.random.default_rng(14))
        q = CounterfactualQuery(worlds=(WorldSpec(interventions={2: 0}),), target=(0, 3, 1))
        result = bound_query(chain_pair, data, q,
                             EmConfig(runs=12, max_iterations=150, rel_tolerance=1e-10, seed=6))
        lower, upper = bruteforce_bounds(chain_pair, data, q, grid_steps=50)
        assert result.lower >= lower - 0.02
        assert result.upper <= upper + 0.02

    def test_infeasible_data_reports_closest_fit(self):
        pscm = pair_model(2)
        # records claim a near-deterministic variable; force infeasibility with
        # an impossible tolerance by clamping the grid coarsely
        data = Dataset.from_records([((0,), 1), ((1,), 999)])
        q = CounterfactualQuery(worlds=(WorldSpec(),), target=(0, 1, 1))
        with pytest.raises(EmError, match="closest fit"):
            bruteforce_bounds(pscm, data, q, grid_steps=2, feasibility_tol=1e-4)

    def test_dimension_guard(self):
        pscm = pair_model(9)
        data = Dataset.from_rows([(0,)])
        q = CounterfactualQuery(worlds=(WorldSpec(),), target=(0, 1, 0))
        with pytest.raises(EmError, match="free parameters"):
            bruteforce_bounds(pscm, data, q, grid_steps=10)
