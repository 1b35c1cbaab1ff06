"""Random model and dataset generation for the benchmark suite.

Models follow the benchmark recipe: binary endogenous variables wired into a
DAG by Erdős–Rényi sampling over a random topological order, each endogenous
variable fed by exactly one exogenous parent, exogenous variables optionally
shared by two children (which is what creates multi-node confounded
components), and equation tables drawn uniformly among the surjective ones.
Datasets come from ancestral sampling of a randomly parameterized compatible
model. Everything is a pure function of the generator state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import ENDOGENOUS, EXOGENOUS, Fscm, Pscm, StructuralEquation, Variable, validate


@dataclass(frozen=True)
class GenConfig:
    endogenous_range: tuple[int, int] = (3, 7)
    exogenous_range: tuple[int, int] = (2, 5)
    edge_probability: float = 0.4
    exo_cardinality_range: tuple[int, int] = (3, 32)
    dataset_size_range: tuple[int, int] = (1000, 5000)
    seed: int = 0
    exogenous_sharing: bool = True

    def __post_init__(self):
        for name in ("endogenous_range", "exogenous_range",
                     "exo_cardinality_range", "dataset_size_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: ({lo}, {hi})")
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ValueError("edge_probability must be in [0, 1]")


def generate_pscm(cfg: GenConfig, rng: np.random.Generator) -> Pscm:
    """One random model; always passes :func:`cfbounds.model.validate`."""
    n_endo = int(rng.integers(cfg.endogenous_range[0], cfg.endogenous_range[1] + 1))
    if cfg.exogenous_sharing:
        want = int(rng.integers(cfg.exogenous_range[0], cfg.exogenous_range[1] + 1))
        n_exo = min(max(want, (n_endo + 1) // 2), n_endo)
    else:
        n_exo = n_endo
    cards = rng.integers(cfg.exo_cardinality_range[0], cfg.exo_cardinality_range[1] + 1,
                         size=n_exo)

    # one exogenous parent per endogenous variable; an exogenous variable may
    # serve at most two children
    slots = np.concatenate([
        np.arange(n_exo),
        rng.choice(n_exo, size=n_endo - n_exo, replace=False) if n_endo > n_exo
        else np.empty(0, dtype=np.int64),
    ])
    slots = slots[rng.permutation(n_endo)]

    topo = rng.permutation(n_endo)
    coin = rng.random((n_endo, n_endo))

    variables = [Variable(u, f"U{u}", int(cards[u]), EXOGENOUS) for u in range(n_exo)]
    variables += [Variable(n_exo + k, f"V{k}", 2, ENDOGENOUS) for k in range(n_endo)]

    endo_parents: dict[int, list[int]] = {k: [] for k in range(n_endo)}
    for i in range(n_endo):
        for j in range(i + 1, n_endo):
            if coin[i, j] < cfg.edge_probability:
                endo_parents[int(topo[j])].append(int(topo[i]))

    equations = []
    for k in range(n_endo):
        child = n_exo + k
        inputs = tuple(sorted([n_exo + p for p in endo_parents[k]] + [int(slots[k])]))
        shape = tuple(variables[i].cardinality for i in inputs)
        while True:
            table = rng.integers(0, 2, size=shape)
            if table.min() == 0 and table.max() == 1:  # surjective onto {0, 1}
                break
        equations.append(StructuralEquation(child, inputs, table))

    pscm = Pscm(tuple(variables), tuple(equations))
    assert not validate(pscm)
    return pscm


def random_fscm(pscm: Pscm, rng: np.random.Generator) -> Fscm:
    """Attach flat-Dirichlet exogenous PMFs; used to sample compatible data."""
    pmfs = {u: rng.dirichlet(np.ones(pscm.cardinality(u))) for u in pscm.exogenous_ids}
    return Fscm(pscm, pmfs)


def sample_dataset(fscm: Fscm, n: int, rng: np.random.Generator) -> Dataset:
    """Ancestral sampling, projected to the endogenous variables, deduplicated."""
    pscm = fscm.pscm
    cols: dict[int, np.ndarray] = {}
    for u in pscm.exogenous_ids:
        cols[u] = rng.choice(pscm.cardinality(u), size=n, p=fscm.exo_pmfs[u])
    for vid in pscm.topological_order():
        if vid in cols:
            continue
        eq = pscm.equation_for(vid)
        cols[vid] = eq.table[tuple(cols[i] for i in eq.inputs)]
    endo = sorted(pscm.endogenous_ids)
    if n == 0:
        return Dataset(())
    rows = np.stack([cols[v] for v in endo], axis=1)
    return Dataset.from_rows(rows.tolist())


def generate_instances(cfg: GenConfig, count: int) -> list[tuple[Pscm, Dataset]]:
    """Models paired with datasets sampled from a random compatible model,
    all deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    for _ in range(count):
        pscm = generate_pscm(cfg, rng)
        fscm = random_fscm(pscm, rng)
        n = int(rng.integers(cfg.dataset_size_range[0], cfg.dataset_size_range[1] + 1))
        out.append((pscm, sample_dataset(fscm, n, rng)))
    return out
