import numpy as np
import pytest

from cfbounds.model import (
    ENDOGENOUS,
    EXOGENOUS,
    Fscm,
    Pscm,
    StructuralEquation,
    Variable,
)


def chain_pair_model() -> Pscm:
    """Two endogenous variables in a chain, each with its own exogenous root.

    V1 copies its binary root U1. V2 responds to V1 according to which of the
    four unary boolean maps U2 selects: constant 0, identity, negation,
    constant 1. The second component is confounded: U2 couples V2's response
    across both values of V1.
    """
    variables = (
        Variable(0, "U1", 2, EXOGENOUS),
        Variable(1, "U2", 4, EXOGENOUS),
        Variable(2, "V1", 2, ENDOGENOUS),
        Variable(3, "V2", 2, ENDOGENOUS),
    )
    v2_table = np.array([[0, 0, 1, 1],
                         [0, 1, 0, 1]])  # rows: V1 value; cols: U2 state
    equations = (
        StructuralEquation(2, (0,), np.array([0, 1])),
        StructuralEquation(3, (2, 1), v2_table),
    )
    return Pscm(variables, equations)


CHAIN_PMFS = {0: np.array([0.1, 0.9]), 1: np.array([0.05, 0.15, 0.25, 0.55])}


@pytest.fixture
def chain_pair() -> Pscm:
    return chain_pair_model()


@pytest.fixture
def chain_pair_fscm(chain_pair) -> Fscm:
    return Fscm(chain_pair, {u: pmf.copy() for u, pmf in CHAIN_PMFS.items()})


def pair_model(card: int = 2) -> Pscm:
    """Minimal one-root model: a single endogenous copy of one exogenous."""
    variables = (
        Variable(0, "U", card, EXOGENOUS),
        Variable(1, "V", card, ENDOGENOUS),
    )
    return Pscm(variables, (StructuralEquation(1, (0,), np.arange(card)),))


def shared_root_model() -> Pscm:
    """One 4-state root driving two binary children: a single confounded
    component with no boundary."""
    variables = (
        Variable(0, "U", 4, EXOGENOUS),
        Variable(1, "A", 2, ENDOGENOUS),
        Variable(2, "B", 2, ENDOGENOUS),
    )
    equations = (
        StructuralEquation(1, (0,), np.array([0, 0, 1, 1])),
        StructuralEquation(2, (0,), np.array([0, 1, 0, 1])),
    )
    return Pscm(variables, equations)
