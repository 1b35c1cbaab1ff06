"""Interval bounds on counterfactual queries by multi-start EM.

A dataset of endogenous observations rarely pins down the exogenous PMFs;
it only constrains them. Each EM run starts from a random point on the
product of probability simplexes and climbs the dataset likelihood with the
closed-form update

    theta_U  <-  |D|^-1  *  sum over records v of  count(v) * P(U | v),

which needs, per record, the evidence probability and the joint probability
of every exogenous state with the record — exactly what one upward plus one
downward circuit sweep produces. Evaluating the query on every run's fitted
model and spanning the min/max yields an inner approximation of the true
bounds.

The model is always decomposed into confounded components before running:
each component's exogenous posteriors depend only on the component's own
sub-model (its boundary parents are observed in every record, so their
uniform stand-in priors cancel), the per-component EM problems are
independent, and the reported per-run trace is the exact whole-model
log-likelihood reassembled from the component traces. The ``parallelism``
mode therefore only chooses which of the independent (run, component) tasks
execute concurrently — results are bit-identical across modes.

Engines: ``circuit`` evaluates on the compiled symbolic circuit, rebound
each iteration; ``ve`` answers the same per-record queries by variable
elimination, one elimination per exogenous variable per record.
"""

from __future__ import annotations

import itertools
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .circuit import SymbolicCircuit, compile_circuit
from .circuit_eval import (
    EvalScratch,
    THETA_FLOOR,
    binding_pmfs,
    evaluate,
    exo_joint_batch,
    indicator_matrix,
    make_binding,
    _prep,
)
from .data import Dataset, ZeroProbabilityRecord
from .factors import Factor, multiply_all
from .model import (
    CounterfactualQuery,
    Fscm,
    Pscm,
    _component_submodel_full,
    build_twin,
    c_components,
    intervene,
    se_to_cpt,
    validate_query,
)
from .ve import _cpt_factor, min_fill_order, moralize

PARALLELISM_MODES = ("none", "runs", "components", "both")
ENGINES = ("circuit", "ve")

_MASK64 = (1 << 64) - 1


class EmError(RuntimeError):
    pass


class QueryUndefined(RuntimeError):
    """The run's fitted model gives the query's observations zero probability."""


@dataclass(frozen=True)
class EmConfig:
    runs: int = 200
    max_iterations: int = 500
    rel_tolerance: float = 1e-7
    seed: int = 0
    parallelism: str = "none"

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rel_tolerance < 0:
            raise ValueError("rel_tolerance must be >= 0")
        if self.parallelism not in PARALLELISM_MODES:
            raise ValueError(f"parallelism must be one of {PARALLELISM_MODES}")


@dataclass(frozen=True)
class EmRunResult:
    final_pmfs: dict[int, np.ndarray]
    trace: tuple[float, ...]
    termination: str  # converged | max_iterations | degenerate_record
    degenerate_record: tuple[int, ...] | None = None

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def final_loglik(self) -> float:
        return self.trace[-1] if self.trace else float("-inf")


@dataclass(frozen=True)
class BoundsResult:
    query: CounterfactualQuery
    per_run_values: tuple[float | None, ...]  # None where the run was excluded
    lower: float
    upper: float
    run_results: tuple[EmRunResult, ...] = ()
    notes: dict[int, str] = field(default_factory=dict)
    compile_ms: float = 0.0
    em_ms: float = 0.0


# ---------------------------------------------------------------------------
# initialization


def sample_initialization(pscm: Pscm, rng: np.random.Generator) -> dict[int, np.ndarray]:
    """One strictly positive PMF per exogenous variable, drawn uniformly from
    its simplex (flat Dirichlet), in ascending variable-id order."""
    return {u: rng.dirichlet(np.ones(pscm.cardinality(u))) for u in pscm.exogenous_ids}


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Per-run generator; run r of a batch is seeded as seed XOR r."""
    return np.random.default_rng((seed ^ run_index) & _MASK64)


# ---------------------------------------------------------------------------
# one EM step / run, circuit engine


class _CircuitEmCtx:
    """Everything reusable across iterations: circuit, per-record indicator
    columns, counts, and which parameter slots the update may move."""

    def __init__(self, circuit: SymbolicCircuit, dataset: Dataset, update: Sequence[int] | None):
        self.circuit = circuit
        endo = sorted(set(range(len(circuit.var_cards))) - set(circuit.exo_ids))
        self.records = [rec for rec, _ in dataset.records]
        self.ind = indicator_matrix(circuit, [dict(zip(endo, rec)) for rec in self.records])
        self.counts = np.array([c for _, c in dataset.records], dtype=np.float64)
        self.weights = self.counts / self.counts.sum()
        uids = circuit.exo_ids if update is None else tuple(update)
        self.update_spans = [_prep(circuit).slot_span[u] for u in uids]

    def width(self) -> int:
        return self.ind.shape[1]


def _em_update_circuit(ctx: _CircuitEmCtx, binding: np.ndarray,
                       scratch: EvalScratch) -> tuple[np.ndarray, float]:
    roots, joint = exo_joint_batch(ctx.circuit, binding, ctx.ind, scratch)
    if roots.min() < THETA_FLOOR:
        bad = int(np.argmin(roots))
        raise ZeroProbabilityRecord(ctx.records[bad], "EM aborted")
    posteriors = joint / roots[None, :]
    averaged = posteriors @ ctx.weights
    out = binding.copy()
    for lo, hi in ctx.update_spans:
        out[lo:hi] = averaged[lo:hi] / averaged[lo:hi].sum()
    loglik = float(ctx.counts @ np.log(roots))
    return out, loglik


def em_step(circuit: SymbolicCircuit, exo_pmfs: Mapping[int, np.ndarray], dataset: Dataset,
            update: Sequence[int] | None = None) -> tuple[dict[int, np.ndarray], float]:
    """One EM update on a compiled circuit.

    Returns the next exogenous PMFs (normalized) and the dataset
    log-likelihood at the *input* parameters. Raises
    :class:`ZeroProbabilityRecord` if any record's evidence probability
    falls below the floor.
    """
    ctx = _CircuitEmCtx(circuit, dataset, update)
    binding = make_binding(circuit, exo_pmfs)
    new_binding, loglik = _em_update_circuit(ctx, binding, EvalScratch(circuit, ctx.width()))
    return binding_pmfs(circuit, new_binding), loglik


# ---------------------------------------------------------------------------
# one EM step / run, variable-elimination engine


class _VeEmCtx:
    """Per-record elimination queries against the current exogenous PMFs.

    Endogenous factors and elimination orders are static across iterations;
    only the root factors change with the parameters.
    """

    def __init__(self, pscm: Pscm, dataset: Dataset, update: Sequence[int] | None):
        self.pscm = pscm
        self.exo_ids = pscm.exogenous_ids
        self.update_uids = tuple(self.exo_ids if update is None else update)
        endo = sorted(pscm.endogenous_ids)
        self.records = [rec for rec, _ in dataset.records]
        self.evidence = [dict(zip(endo, rec)) for rec in self.records]
        self.counts = np.array([c for _, c in dataset.records], dtype=np.float64)
        self.weights = self.counts / self.counts.sum()
        cpts = [se_to_cpt(pscm.equation_for(v), pscm.cardinality(v)) for v in endo]
        self.endo_factors = [_cpt_factor(c) for c in cpts]
        graph = moralize(cpts)
        for u in self.exo_ids:
            graph.setdefault(u, set())
        self.orders = {
            u: min_fill_order(graph, set(graph) - {u}) for u in self.update_uids
        }
        self.order_all = min_fill_order(graph)

    def step(self, pmfs: dict[int, np.ndarray]) -> tuple[dict[int, np.ndarray], float]:
        base = [Factor((u,), pmfs[u]) for u in self.exo_ids] + self.endo_factors
        loglik = 0.0
        sums = {u: np.zeros(len(pmfs[u])) for u in self.update_uids}
        for rec_i, evidence in enumerate(self.evidence):
            reduced = [f.reduce(evidence) if any(v in f.scope for v in evidence) else f
                       for f in base]
            joints = {u: _eliminate_to(reduced, self.orders[u]) for u in self.update_uids}
            if joints:
                theta_v = float(next(iter(joints.values())).sum())
            else:  # nothing to update; still need the record likelihood
                theta_v = float(_eliminate_to(reduced, self.order_all))
            if theta_v < THETA_FLOOR:
                raise ZeroProbabilityRecord(self.records[rec_i], "EM aborted")
            for u in self.update_uids:
                sums[u] += self.weights[rec_i] * (joints[u] / theta_v)
            loglik += self.counts[rec_i] * math.log(theta_v)
        new = dict(pmfs)
        for u in self.update_uids:
            new[u] = sums[u] / sums[u].sum()
        return new, loglik


def _eliminate_to(factors: list[Factor], order: list[int]) -> np.ndarray:
    pool = list(factors)
    for vid in order:
        bucket = [f for f in pool if vid in f.scope]
        if not bucket:
            continue
        pool = [f for f in pool if vid not in f.scope]
        pool.append(multiply_all(bucket).marginalize(vid))
    return multiply_all(pool).values


# ---------------------------------------------------------------------------
# the iteration loop


def _em_loop(step, theta, config: EmConfig):
    trace: list[float] = []
    prev = None
    termination = "max_iterations"
    degenerate = None
    for _ in range(config.max_iterations):
        try:
            theta_next, loglik = step(theta)
        except ZeroProbabilityRecord as exc:
            termination = "degenerate_record"
            degenerate = exc.record
            break
        trace.append(loglik)
        theta = theta_next
        improvement = math.inf if prev is None else loglik - prev
        scale = 1.0 if prev is None else max(abs(prev), 1e-12)
        if improvement <= config.rel_tolerance * scale:
            termination = "converged"
            break
        prev = loglik
    return theta, tuple(trace), termination, degenerate


def em_run(pscm: Pscm, dataset: Dataset, init: Mapping[int, np.ndarray], config: EmConfig,
           engine: str = "circuit", update: Sequence[int] | None = None) -> EmRunResult:
    """A single EM run on the given model (no component decomposition).

    ``init`` maps every exogenous variable id to a starting PMF. With the
    circuit engine the model is compiled once before the loop and rebound
    each iteration. ``update`` optionally restricts which exogenous PMFs
    the M-step may move (the others stay at their initial values).
    """
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    if engine == "circuit":
        circuit = compile_circuit(pscm)
        ctx = _CircuitEmCtx(circuit, dataset, update)
        scratch = EvalScratch(circuit, ctx.width())
        binding = make_binding(circuit, init)
        final, trace, termination, degenerate = _em_loop(
            lambda b: _em_update_circuit(ctx, b, scratch), binding, config
        )
        final_pmfs = binding_pmfs(circuit, final)
    else:
        ctx = _VeEmCtx(pscm, dataset, update)
        init_pmfs = {u: np.asarray(init[u], dtype=np.float64) for u in pscm.exogenous_ids}
        final_pmfs, trace, termination, degenerate = _em_loop(ctx.step, init_pmfs, config)
        final_pmfs = {u: np.asarray(p) for u, p in final_pmfs.items()}
    return EmRunResult(final_pmfs, trace, termination, degenerate)


# ---------------------------------------------------------------------------
# multi-run orchestration over components


@dataclass
class _ComponentTask:
    exo_map: dict[int, int]          # original uid -> sub-model uid
    update_uids: tuple[int, ...]     # sub-model uids the EM may move
    prior_pmfs: dict[int, np.ndarray]  # frozen uniform stand-ins for boundary roots
    correction: float                # restores the whole-model log-likelihood
    engine: str
    circuit: SymbolicCircuit | None = None
    circuit_ctx: _CircuitEmCtx | None = None
    ve_ctx: _VeEmCtx | None = None


def _prepare_tasks(pscm: Pscm, dataset: Dataset, engine: str) -> tuple[list[_ComponentTask], float]:
    tasks = []
    compile_ms = 0.0
    for comp in c_components(pscm):
        sub, sub_data, exo_map, prior_ids = _component_submodel_full(pscm, comp, dataset)
        correction = dataset.total * sum(
            math.log(pscm.cardinality(b)) for b in comp.boundary_parents
        )
        priors = {
            p: np.full(sub.cardinality(p), 1.0 / sub.cardinality(p)) for p in prior_ids
        }
        update = tuple(sorted(exo_map.values()))
        task = _ComponentTask(exo_map=exo_map, update_uids=update,
                              prior_pmfs=priors, correction=correction, engine=engine)
        if engine == "circuit":
            t0 = time.perf_counter()
            task.circuit = compile_circuit(sub)
            compile_ms += (time.perf_counter() - t0) * 1e3
            task.circuit_ctx = _CircuitEmCtx(task.circuit, sub_data, update)
        else:
            task.ve_ctx = _VeEmCtx(sub, sub_data, update)
        tasks.append(task)
    return tasks, compile_ms


def _run_component(task: _ComponentTask, init_sub: dict[int, np.ndarray], config: EmConfig):
    """One component, one run. Returns (original-id PMFs, trace, termination,
    degenerate record)."""
    full_init = {**task.prior_pmfs, **init_sub}
    if task.engine == "circuit":
        ctx = task.circuit_ctx
        scratch = EvalScratch(task.circuit, ctx.width())
        binding = make_binding(task.circuit, full_init)
        final, trace, termination, degenerate = _em_loop(
            lambda b: _em_update_circuit(ctx, b, scratch), binding, config
        )
        sub_pmfs = binding_pmfs(task.circuit, final)
    else:
        final, trace, termination, degenerate = _em_loop(task.ve_ctx.step, full_init, config)
        sub_pmfs = final
    orig_pmfs = {orig: np.asarray(sub_pmfs[sub]) for orig, sub in task.exo_map.items()}
    return orig_pmfs, trace, termination, degenerate


_POOL = None


def _warmup(i: int) -> int:
    return i


def _get_pool():
    """Persistent worker pool, booted once per process and reused by every
    parallel call, so that timed regions measure task execution rather than
    process startup. Workers are daemonic: they never block interpreter exit
    (benchmark cells run whole parallel calls inside short-lived children)."""
    global _POOL
    if _POOL is None:
        width = os.cpu_count() or 1
        _POOL = multiprocessing.get_context("fork").Pool(processes=width)
        _POOL.map(_warmup, range(width))
    return _POOL


def _worker_chunk(payload):
    """Self-contained unit of parallel work: run the listed (run, component)
    cells against the shipped component contexts."""
    config, tasks, items = payload
    return [(r, j, _run_component(tasks[local], init, config))
            for r, j, local, init in items]


def _assemble_run(parts, tasks: list[_ComponentTask]) -> EmRunResult:
    final: dict[int, np.ndarray] = {}
    traces = []
    terminations = []
    degenerate = None
    for (pmfs, trace, termination, degen), _task in zip(parts, tasks):
        final.update(pmfs)
        traces.append(trace)
        terminations.append(termination)
        if degen is not None and degenerate is None:
            degenerate = degen
    correction = sum(t.correction for t in tasks)
    if "degenerate_record" in terminations:
        length = min(len(t) for t in traces)
        termination = "degenerate_record"
    else:
        length = max(len(t) for t in traces)
        termination = "max_iterations" if "max_iterations" in terminations else "converged"
    combined = tuple(
        sum(tr[min(i, len(tr) - 1)] for tr in traces) + correction for i in range(length)
    )
    return EmRunResult(final, combined, termination, degenerate)


def em_multi_run_timed(pscm: Pscm, dataset: Dataset, config: EmConfig,
                       engine: str = "circuit") -> tuple[list[EmRunResult], float, float]:
    """Multi-start EM; returns (results ordered by run index, compile ms, EM ms)."""
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}")
    tasks, compile_ms = _prepare_tasks(pscm, dataset, engine)

    # initializations are drawn upfront, in run order, over the whole model's
    # exogenous variables — identical regardless of execution mode
    inits = []
    for r in range(config.runs):
        whole = sample_initialization(pscm, run_rng(config.seed, r))
        inits.append([
            {sub: whole[orig] for orig, sub in task.exo_map.items()} for task in tasks
        ])

    pool = _get_pool() if config.parallelism != "none" and tasks else None
    t0 = time.perf_counter()
    parts = _execute(tasks, inits, config, pool)
    em_ms = (time.perf_counter() - t0) * 1e3
    results = [_assemble_run(parts[r], tasks) for r in range(config.runs)]
    return results, compile_ms, em_ms


def em_multi_run(pscm: Pscm, dataset: Dataset, config: EmConfig,
                 engine: str = "circuit") -> list[EmRunResult]:
    return em_multi_run_timed(pscm, dataset, config, engine)[0]


def _execute(tasks, inits, config: EmConfig, pool):
    """Run every (run, component) cell under the configured scheduling.

    Parallel modes split the cells into self-contained chunks: per component
    for ``components`` (the natural grain), contiguous run blocks otherwise.
    Assembly is by cell index, so results do not depend on scheduling.
    """
    runs, n_comp = config.runs, len(tasks)
    parts: list[list] = [[None] * n_comp for _ in range(runs)]
    mode = config.parallelism
    if mode == "none" or n_comp == 0 or pool is None:
        for r in range(runs):
            for j, task in enumerate(tasks):
                parts[r][j] = _run_component(task, inits[r][j], config)
        return parts

    width = os.cpu_count() or 1
    payloads = []
    if mode == "components":
        for j in range(n_comp):
            items = [(r, j, 0, inits[r][j]) for r in range(runs)]
            payloads.append((config, [tasks[j]], items))
    elif mode == "runs":
        for block in _run_aligned_blocks(runs, n_comp, width):
            items = [(r, j, j, inits[r][j]) for r, j in block]
            payloads.append((config, tasks, items))
    else:  # both: interleave cells freely
        cells = [(r, j) for r in range(runs) for j in range(n_comp)]
        for ids in np.array_split(np.arange(len(cells)), min(width, len(cells))):
            items = [(cells[i][0], cells[i][1], cells[i][1],
                      inits[cells[i][0]][cells[i][1]]) for i in ids]
            if items:
                payloads.append((config, tasks, items))

    for out in pool.map(_worker_chunk, payloads, chunksize=1):
        for r, j, result in out:
            parts[r][j] = result
    return parts


def _run_aligned_blocks(runs: int, n_comp: int, width: int) -> list[list[tuple[int, int]]]:
    """Whole runs per chunk: run-level parallelism never splits a run."""
    blocks = []
    for ids in np.array_split(np.arange(runs), min(width, runs)):
        if len(ids):
            blocks.append([(int(r), j) for r in ids for j in range(n_comp)])
    return blocks


# ---------------------------------------------------------------------------
# query evaluation and bounds


class CounterfactualEvaluator:
    """Twin-model circuit compiled once per query structure; each run's PMFs
    are rebound for evaluation. The query value is the conditional
    probability of the target given all observations, computed as a ratio of
    two evidence evaluations (joint over evidence)."""

    def __init__(self, pscm: Pscm, query: CounterfactualQuery):
        validate_query(pscm, query)
        self.query = query
        twin, relabel = build_twin(pscm, query)
        self.circuit = compile_circuit(twin)
        obs: dict[int, int] = {}
        for w, world in enumerate(query.worlds):
            for vid, state in world.observations.items():
                obs[relabel[(w, vid)]] = state
        tw, tvid, tstate = query.target
        tnew = relabel[(tw, tvid)]
        self._contradictory = tnew in obs and obs[tnew] != tstate
        self._evidence = obs
        self._joint_evidence = {**obs, tnew: tstate}
        self._exo_relabel = {u: relabel[(0, u)] for u in pscm.exogenous_ids}
        self._scratch = EvalScratch(self.circuit, 1)

    def value(self, exo_pmfs: Mapping[int, np.ndarray]) -> float:
        binding = make_binding(
            self.circuit, {new: exo_pmfs[orig] for orig, new in self._exo_relabel.items()}
        )
        p_obs = evaluate(self.circuit, binding, self._evidence, self._scratch)
        if p_obs < THETA_FLOOR:
            raise QueryUndefined("observation probability is zero under this model")
        if self._contradictory:
            return 0.0
        p_joint = evaluate(self.circuit, binding, self._joint_evidence, self._scratch)
        return min(max(p_joint / p_obs, 0.0), 1.0)


def query_value(fscm: Fscm, query: CounterfactualQuery) -> float:
    """Counterfactual query value on a single fully specified model."""
    return CounterfactualEvaluator(fscm.pscm, query).value(fscm.exo_pmfs)


def bound_query(pscm: Pscm, dataset: Dataset, query: CounterfactualQuery, config: EmConfig,
                engine: str = "circuit") -> BoundsResult:
    """Inner bounds: min and max of the query value over all EM runs.

    Runs that abort on a degenerate record, or whose fitted model gives the
    observations zero probability, are excluded from the interval and noted.
    """
    results, compile_ms, em_ms = em_multi_run_timed(pscm, dataset, config, engine)
    t0 = time.perf_counter()
    evaluator = CounterfactualEvaluator(pscm, query)
    compile_ms += (time.perf_counter() - t0) * 1e3
    values: list[float | None] = []
    notes: dict[int, str] = {}
    for i, run in enumerate(results):
        if run.termination == "degenerate_record":
            values.append(None)
            notes[i] = "run aborted on a zero-probability record"
            continue
        try:
            values.append(evaluator.value(run.final_pmfs))
        except QueryUndefined:
            values.append(None)
            notes[i] = "observation probability is zero under this run"
    defined = [v for v in values if v is not None]
    if not defined:
        raise EmError("no valid runs")
    return BoundsResult(
        query=query, per_run_values=tuple(values),
        lower=min(defined), upper=max(defined),
        run_results=tuple(results), notes=notes,
        compile_ms=compile_ms, em_ms=em_ms,
    )


# ---------------------------------------------------------------------------
# brute-force oracle


def _simplex_grid(steps: int, parts: int) -> np.ndarray:
    """All PMFs with entries that are multiples of 1/steps, in lexicographic
    order: the evaluation grid of one exogenous simplex."""
    if parts == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(steps + parts - 1), parts - 1):
        prev = -1
        counts = []
        for b in (*bars, steps + parts - 1):
            counts.append(b - prev - 1)
            prev = b
        rows.append(counts)
    return np.asarray(rows, dtype=np.float64) / steps


def bruteforce_bounds(pscm: Pscm, dataset: Dataset, query: CounterfactualQuery,
                      grid_steps: int, feasibility_tol: float = 0.02) -> tuple[float, float]:
    """Grid-enumeration oracle for the bounds.

    Walks every exogenous PMF combination on a simplex grid, keeps the
    combinations whose induced endogenous distribution matches the dataset's
    empirical distribution within an L-infinity tolerance, and returns the
    min/max query value over the kept points (computed by direct enumeration
    of the exogenous configurations — no circuits, no elimination).
    """
    validate_query(pscm, query)
    exo = pscm.exogenous_ids
    free = sum(pscm.cardinality(u) - 1 for u in exo)
    if free > 6:
        raise EmError(f"grid enumeration supports at most 6 free parameters, model has {free}")

    cards = [pscm.cardinality(u) for u in exo]
    cfgs = list(itertools.product(*[range(c) for c in cards]))
    n_cfg = len(cfgs)
    order = pscm.topological_order()
    endo_sorted = sorted(pscm.endogenous_ids)

    def endo_outcome(exo_assign: dict[int, int]) -> dict[int, int]:
        assign = dict(exo_assign)
        for vid in order:
            if vid not in assign:
                assign[vid] = pscm.equation_for(vid).output(assign)
        return assign

    factual = []
    for cfg in cfgs:
        assign = endo_outcome(dict(zip(exo, cfg)))
        factual.append(tuple(assign[v] for v in endo_sorted))

    outcomes = sorted(set(factual) | {rec for rec, _ in dataset.records})
    out_index = {rec: i for i, rec in enumerate(outcomes)}
    A = np.zeros((len(outcomes), n_cfg))
    for j, rec in enumerate(factual):
        A[out_index[rec], j] = 1.0
    empirical = np.zeros(len(outcomes))
    for rec, count in dataset.records:
        empirical[out_index[rec]] = count / dataset.total

    obs_ok = np.ones(n_cfg)
    target_ok = np.ones(n_cfg)
    tw, tvid, tstate = query.target
    for w, world in enumerate(query.worlds):
        world_model = intervene(pscm, world.interventions) if world.interventions else pscm
        world_order = world_model.topological_order()
        for j, cfg in enumerate(cfgs):
            assign = dict(zip(exo, cfg))
            for vid in world_order:
                if vid not in assign:
                    assign[vid] = world_model.equation_for(vid).output(assign)
            for vid, state in world.observations.items():
                if assign[vid] != state:
                    obs_ok[j] = 0.0
                    break
            if w == tw and assign[tvid] != tstate:
                target_ok[j] = 0.0
    target_and_obs = obs_ok * target_ok

    grids = [_simplex_grid(grid_steps, c) for c in cards]
    sizes = [len(g) for g in grids]
    total = int(np.prod(sizes)) if sizes else 1

    lower, upper = math.inf, -math.inf
    closest = math.inf
    chunk = max(1, min(total, 200_000 // max(1, n_cfg)))
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total))
        # decode mixed-radix grid indices, first exogenous variable slowest,
        # then chain outer products into joint weights over the configurations
        digits = []
        rem = ids.copy()
        for size in reversed(sizes):
            digits.append(rem % size)
            rem //= size
        digits.reverse()
        weights = np.ones((len(ids), 1))
        for g, d in zip(grids, digits):
            block = g[d]  # (chunk, cardinality)
            weights = (weights[:, :, None] * block[:, None, :]).reshape(len(ids), -1)
        dist = weights @ A.T
        gaps = np.abs(dist - empirical[None, :]).max(axis=1)
        closest = min(closest, float(gaps.min()))
        feasible = gaps <= feasibility_tol
        if not feasible.any():
            continue
        w_feas = weights[feasible]
        denom = w_feas @ obs_ok
        numer = w_feas @ target_and_obs
        ok = denom > 0
        if ok.any():
            vals = numer[ok] / denom[ok]
            lower = min(lower, float(vals.min()))
            upper = max(upper, float(vals.max()))

    if not math.isfinite(lower):
        raise EmError(
            f"no feasible grid point within L-inf tolerance {feasibility_tol}; "
            f"closest fit missed by {closest:.4f}"
        )
    return lower, upper
