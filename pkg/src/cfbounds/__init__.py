"""Counterfactual probability bounds for discrete structural causal models.

The pipeline: declare a model (:mod:`cfbounds.model`), compile its network
polynomial once into a parameterized arithmetic circuit
(:mod:`cfbounds.circuit`), fit the latent exogenous PMFs to observed data by
multi-start EM, and span the fitted models' query values into an interval
(:mod:`cfbounds.em`). A variable-elimination engine (:mod:`cfbounds.ve`)
serves as the baseline and correctness oracle, and :mod:`cfbounds.bench`
compares the two engines' EM wall times.
"""

from .data import DataError, Dataset, ZeroProbabilityRecord
from .model import (
    ENDOGENOUS,
    EXOGENOUS,
    CComponent,
    CounterfactualQuery,
    Cpt,
    Fscm,
    ModelError,
    Pscm,
    StructuralEquation,
    Variable,
    Violation,
    WorldSpec,
    build_twin,
    c_components,
    component_submodel,
    induced_bn,
    intervene,
    se_to_cpt,
    validate,
    validate_query,
)
from .factors import Factor, FactorError
from .ve import VeEngine, log_likelihood, min_fill_order, moralize, query
from .circuit import (
    CircuitError,
    CircuitStats,
    SymbolicCircuit,
    compile_circuit,
    compile_unfolded,
    dump_circuit,
    parse_circuit,
    stats,
)
from .circuit_eval import (
    BindingError,
    EvalScratch,
    binding_pmfs,
    evaluate,
    joint_with_each_exogenous,
    make_binding,
)
from .em import (
    BoundsResult,
    CounterfactualEvaluator,
    EmConfig,
    EmError,
    EmRunResult,
    QueryUndefined,
    bound_query,
    bruteforce_bounds,
    em_multi_run,
    em_run,
    em_step,
    query_value,
    sample_initialization,
)

__version__ = "0.1.0"
