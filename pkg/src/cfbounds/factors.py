"""Dense factor tables over discrete variables.

A factor holds a nonnegative array indexed by the joint states of its scope.
The scope is kept sorted by variable id and the array is laid out in C order,
so the last scope variable varies fastest in the flattened view. Products
broadcast over the union scope; marginalization sums an axis out; reduction
zeroes the rows inconsistent with evidence without dropping the variable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


class FactorError(ValueError):
    pass


@dataclass(frozen=True)
class Factor:
    scope: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        if list(scope) != sorted(set(scope)):
            raise FactorError(f"scope must be strictly increasing variable ids, got {scope}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != len(scope):
            raise FactorError(f"values have {vals.ndim} axes for a {len(scope)}-variable scope")
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "values", vals)

    def cardinality(self, vid: int) -> int:
        return self.values.shape[self.scope.index(vid)]

    def multiply(self, other: "Factor") -> "Factor":
        union = sorted(set(self.scope) | set(other.scope))
        for v in set(self.scope) & set(other.scope):
            if self.cardinality(v) != other.cardinality(v):
                raise FactorError(f"variable {v}: cardinality mismatch "
                                  f"{self.cardinality(v)} vs {other.cardinality(v)}")
        a = _expand(self, union)
        b = _expand(other, union)
        return Factor(tuple(union), a * b)

    def marginalize(self, vid: int) -> "Factor":
        """Sum a variable out; a variable absent from the scope is a no-op."""
        if vid not in self.scope:
            return self
        i = self.scope.index(vid)
        return Factor(self.scope[:i] + self.scope[i + 1:], self.values.sum(axis=i))

    def reduce(self, evidence: Mapping[int, int]) -> "Factor":
        """Zero out the entries inconsistent with the evidence. Scope is kept."""
        vals = self.values
        for vid, state in evidence.items():
            if vid not in self.scope:
                continue
            i = self.scope.index(vid)
            if not 0 <= state < vals.shape[i]:
                raise FactorError(f"evidence state {state} out of range for variable {vid}")
            mask = np.zeros(vals.shape[i])
            mask[state] = 1.0
            shape = [1] * vals.ndim
            shape[i] = vals.shape[i]
            vals = vals * mask.reshape(shape)
        return Factor(self.scope, vals)

    def total(self) -> float:
        return float(self.values.sum())


def _expand(f: Factor, union: list[int]) -> np.ndarray:
    shape = [f.cardinality(v) if v in f.scope else 1 for v in union]
    return f.values.reshape(shape)


def multiply_all(factors: list[Factor]) -> Factor:
    if not factors:
        return Factor((), np.float64(1.0))
    out = factors[0]
    for f in factors[1:]:
        out = out.multiply(f)
    return out
