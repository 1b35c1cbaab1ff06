"""Observation datasets: deduplicated endogenous records with multiplicities.

A record assigns a state to every endogenous variable of its model, listed
in ascending variable-id order. Records are stored deduplicated and sorted,
so a dataset built from exploded rows and one built from pre-counted records
are indistinguishable objects — downstream numerics see the exact same
summation order either way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class DataError(ValueError):
    pass


class ZeroProbabilityRecord(Exception):
    """An observed record has (numerically) zero probability under the model."""

    def __init__(self, record: tuple[int, ...], context: str = ""):
        self.record = tuple(int(s) for s in record)
        msg = f"record {self.record} has zero probability"
        super().__init__(f"{msg} ({context})" if context else msg)


@dataclass(frozen=True)
class Dataset:
    """Distinct records with counts; ``total`` is the number of observations."""

    records: tuple[tuple[tuple[int, ...], int], ...]

    def __post_init__(self):
        recs = tuple((tuple(int(s) for s in r), int(c)) for r, c in self.records)
        if any(c < 1 for _, c in recs):
            raise DataError("record counts must be >= 1")
        keys = [r for r, _ in recs]
        if len(set(keys)) != len(keys):
            raise DataError("records must be pairwise distinct; use from_rows to aggregate")
        if sorted(keys) != keys:
            raise DataError("records must be sorted; use from_rows or from_records")
        object.__setattr__(self, "records", recs)

    @staticmethod
    def from_rows(rows: Iterable[Sequence[int]]) -> "Dataset":
        """Aggregate raw observation rows into sorted (record, count) pairs."""
        counts: dict[tuple[int, ...], int] = {}
        for row in rows:
            key = tuple(int(s) for s in row)
            counts[key] = counts.get(key, 0) + 1
        return Dataset(tuple(sorted(counts.items())))

    @staticmethod
    def from_records(records: Iterable[tuple[Sequence[int], int]]) -> "Dataset":
        """Aggregate possibly-unsorted (record, count) pairs."""
        counts: dict[tuple[int, ...], int] = {}
        for row, c in records:
            key = tuple(int(s) for s in row)
            counts[key] = counts.get(key, 0) + int(c)
        return Dataset(tuple(sorted(counts.items())))

    @property
    def total(self) -> int:
        return sum(c for _, c in self.records)

    def rows(self) -> list[tuple[int, ...]]:
        """Explode back to one row per observation."""
        return [r for r, c in self.records for _ in range(c)]

    def project(self, columns: Sequence[int]) -> "Dataset":
        """Keep the given column positions (in the given order), re-aggregating counts."""
        return Dataset.from_records(
            (tuple(rec[i] for i in columns), c) for rec, c in self.records
        )
