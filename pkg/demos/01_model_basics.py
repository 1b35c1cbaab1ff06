"""Build a small causal model, query it, and perform surgery on it.

The running example: two observed (endogenous) variables V1 -> V2, each
driven by its own latent root. U1 is a biased coin that V1 copies. U2 has
four states selecting how V2 responds to V1: always 0, copy, negate,
always 1. Because U2 couples V2's behaviour across both values of V1, the
model is confounded and interesting counterfactual questions about it are
only partially identifiable.
"""

import numpy as np

from cfbounds import (
    ENDOGENOUS,
    EXOGENOUS,
    Fscm,
    Pscm,
    StructuralEquation,
    Variable,
    c_components,
    induced_bn,
    intervene,
    query,
    se_to_cpt,
    validate,
)

variables = (
    Variable(0, "U1", 2, EXOGENOUS),
    Variable(1, "U2", 4, EXOGENOUS),
    Variable(2, "V1", 2, ENDOGENOUS),
    Variable(3, "V2", 2, ENDOGENOUS),
)
v2_response = np.array([
    [0, 0, 1, 1],   # V1 = 0: U2 picks 0, 0, 1, 1
    [0, 1, 0, 1],   # V1 = 1: U2 picks 0, 1, 0, 1
])
pscm = Pscm(variables, (
    StructuralEquation(2, (0,), np.array([0, 1])),
    StructuralEquation(3, (2, 1), v2_response),
))
print("violations:", validate(pscm))

# equations induce degenerate (0/1) conditional tables
cpt = se_to_cpt(pscm.equation_for(2), 2)
print("V1's CPT given U1 (an identity matrix):")
print(cpt.values)

# attach marginals for the roots: now it's a fully specified model / BN
fscm = Fscm(pscm, {0: np.array([0.1, 0.9]), 1: np.array([0.05, 0.15, 0.25, 0.55])})
print("BN has", len(induced_bn(fscm)), "CPTs")

factor, normalizer = query(fscm, targets=(3,), evidence={})
print("P(V2):", factor.values)

factor, normalizer = query(fscm, targets=(1,), evidence={2: 1, 3: 1})
print("P(U2 | V1=1, V2=1):", factor.values / normalizer, " evidence prob:", normalizer)

# intervention surgery replaces V1's equation with the constant 0
surged = intervene(pscm, {2: 0})
factor, normalizer = query(Fscm(surged, fscm.exo_pmfs), targets=(3,), evidence={})
print("P(V2 | do(V1=0)):", factor.values / normalizer)

# confounded components: the units of decomposition and parallelism
for comp in c_components(pscm):
    print("component:", sorted(comp.exogenous), "->", sorted(comp.members),
          "boundary:", sorted(comp.boundary_parents))
