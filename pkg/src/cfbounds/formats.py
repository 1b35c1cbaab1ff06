"""On-disk formats: model JSON, dataset CSV, query JSON, results/report JSON.

Model files reference variables by name; ids are assigned by position in the
``variables`` array. Equation tables are flat row-major lists of child-state
indices with the last input varying fastest. The presence of ``exo_pmfs``
(name -> probability list) turns a model file into a fully specified one.

Dataset files are plain CSV: the header holds the endogenous variable names,
then one row of state indices per observation (pre-deduplication; the loader
aggregates).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from .data import Dataset
from .em import BoundsResult
from .model import (
    CounterfactualQuery,
    Fscm,
    Pscm,
    StructuralEquation,
    Variable,
    WorldSpec,
)

_KINDS = ("endogenous", "exogenous")


class FormatError(ValueError):
    """A file does not match its format; names the file and first bad field."""

    def __init__(self, path, field: str, message: str):
        self.path = str(path)
        self.field = field
        super().__init__(f"{path}: field {field!r}: {message}")


# ---------------------------------------------------------------------------
# model JSON


def model_to_json(model: Pscm | Fscm) -> dict[str, Any]:
    pscm = model.pscm if isinstance(model, Fscm) else model
    doc: dict[str, Any] = {
        "variables": [
            {"name": v.name, "cardinality": v.cardinality, "kind": v.kind}
            for v in pscm.variables
        ],
        "equations": [
            {
                "child": pscm.variables[eq.child].name,
                "inputs": [pscm.variables[i].name for i in eq.inputs],
                "table": [int(x) for x in eq.table.reshape(-1)],
            }
            for eq in pscm.equations
        ],
    }
    if isinstance(model, Fscm):
        doc["exo_pmfs"] = {
            pscm.variables[u].name: [float(p) for p in pmf]
            for u, pmf in sorted(model.exo_pmfs.items())
        }
    return doc


def model_from_json(doc: dict[str, Any], path="<memory>") -> Pscm | Fscm:
    if not isinstance(doc.get("variables"), list) or not doc["variables"]:
        raise FormatError(path, "variables", "must be a non-empty array")
    variables = []
    for i, spec in enumerate(doc["variables"]):
        for key in ("name", "cardinality", "kind"):
            if key not in spec:
                raise FormatError(path, f"variables[{i}].{key}", "missing")
        if spec["kind"] not in _KINDS:
            raise FormatError(path, f"variables[{i}].kind", f"must be one of {_KINDS}")
        variables.append(Variable(i, str(spec["name"]), int(spec["cardinality"]), spec["kind"]))
    ids = {v.name: v.id for v in variables}
    if len(ids) != len(variables):
        raise FormatError(path, "variables", "names must be unique")

    equations = []
    for i, spec in enumerate(doc.get("equations", [])):
        for key in ("child", "inputs", "table"):
            if key not in spec:
                raise FormatError(path, f"equations[{i}].{key}", "missing")
        if spec["child"] not in ids:
            raise FormatError(path, f"equations[{i}].child", f"unknown variable {spec['child']!r}")
        inputs = []
        for name in spec["inputs"]:
            if name not in ids:
                raise FormatError(path, f"equations[{i}].inputs", f"unknown variable {name!r}")
            inputs.append(ids[name])
        shape = tuple(variables[j].cardinality for j in inputs)
        table = np.asarray(spec["table"], dtype=np.int64)
        expected = int(np.prod(shape)) if shape else 1
        if table.size != expected:
            raise FormatError(path, f"equations[{i}].table",
                              f"has {table.size} entries, input domain needs {expected}")
        equations.append(StructuralEquation(ids[spec["child"]], tuple(inputs), table.reshape(shape)))

    pscm = Pscm(tuple(variables), tuple(equations))
    if "exo_pmfs" not in doc:
        return pscm
    pmfs = {}
    for name, values in doc["exo_pmfs"].items():
        if name not in ids:
            raise FormatError(path, f"exo_pmfs.{name}", "unknown variable")
        pmfs[ids[name]] = np.asarray(values, dtype=np.float64)
    exo = set(pscm.exogenous_ids)
    if set(pmfs) != exo:
        missing = sorted(pscm.variables[u].name for u in exo - set(pmfs))
        raise FormatError(path, "exo_pmfs", f"missing PMFs for {missing}")
    return Fscm(pscm, pmfs)


def save_model(model: Pscm | Fscm, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), indent=2) + "\n")


def load_model(path) -> Pscm | Fscm:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(path, "<document>", f"not valid JSON: {exc}") from exc
    return model_from_json(doc, path)


# ---------------------------------------------------------------------------
# dataset CSV


def save_dataset(dataset: Dataset, pscm: Pscm, path) -> None:
    endo = sorted(pscm.endogenous_ids)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([pscm.variables[v].name for v in endo])
        for row in dataset.rows():
            writer.writerow(row)


def load_dataset(path, pscm: Pscm) -> Dataset:
    endo = sorted(pscm.endogenous_ids)
    names = {pscm.variables[v].name: k for k, v in enumerate(endo)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(path, "<header>", "file is empty") from None
        if sorted(header) != sorted(names):
            raise FormatError(path, "<header>",
                              f"columns {header} do not match the endogenous variables")
        perm = [header.index(pscm.variables[v].name) for v in endo]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                states = [int(row[i]) for i in perm]
            except (ValueError, IndexError):
                raise FormatError(path, f"<row {lineno}>", f"bad record {row}") from None
            for k, s in enumerate(states):
                card = pscm.cardinality(endo[k])
                if not 0 <= s < card:
                    raise FormatError(path, f"<row {lineno}>",
                                      f"state {s} out of range for {pscm.variables[endo[k]].name}")
            rows.append(states)
    return Dataset.from_rows(rows)


# ---------------------------------------------------------------------------
# query JSON


def query_to_json(query: CounterfactualQuery, pscm: Pscm) -> dict[str, Any]:
    name = lambda vid: pscm.variables[vid].name
    return {
        "worlds": [
            {
                "interventions": {name(v): s for v, s in sorted(w.interventions.items())},
                "observations": {name(v): s for v, s in sorted(w.observations.items())},
            }
            for w in query.worlds
        ],
        "target": {
            "world": query.target[0],
            "variable": name(query.target[1]),
            "state": query.target[2],
        },
    }


def query_from_json(doc: dict[str, Any], pscm: Pscm, path="<memory>") -> CounterfactualQuery:
    ids = {v.name: v.id for v in pscm.variables}

    def resolve(mapping, field):
        out = {}
        for name, state in (mapping or {}).items():
            if name not in ids:
                raise FormatError(path, f"{field}.{name}", "unknown variable")
            out[ids[name]] = int(state)
        return out

    if "worlds" not in doc or not doc["worlds"]:
        raise FormatError(path, "worlds", "must be a non-empty array")
    worlds = tuple(
        WorldSpec(
            interventions=resolve(w.get("interventions"), f"worlds[{i}].interventions"),
            observations=resolve(w.get("observations"), f"worlds[{i}].observations"),
        )
        for i, w in enumerate(doc["worlds"])
    )
    tgt = doc.get("target")
    if not isinstance(tgt, dict):
        raise FormatError(path, "target", "missing or not an object")
    for key in ("world", "variable", "state"):
        if key not in tgt:
            raise FormatError(path, f"target.{key}", "missing")
    if tgt["variable"] not in ids:
        raise FormatError(path, "target.variable", f"unknown variable {tgt['variable']!r}")
    return CounterfactualQuery(
        worlds=worlds, target=(int(tgt["world"]), ids[tgt["variable"]], int(tgt["state"]))
    )


def load_query(path, pscm: Pscm) -> CounterfactualQuery:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(path, "<document>", f"not valid JSON: {exc}") from exc
    return query_from_json(doc, pscm, path)


def save_query(query: CounterfactualQuery, pscm: Pscm, path) -> None:
    Path(path).write_text(json.dumps(query_to_json(query, pscm), indent=2) + "\n")


# ---------------------------------------------------------------------------
# bounds results JSON


def bounds_to_json(result: BoundsResult, pscm: Pscm, include_timing: bool = True) -> dict[str, Any]:
    doc = {
        "query": query_to_json(result.query, pscm),
        "runs": len(result.per_run_values),
        "per_run_values": [None if v is None else float(v) for v in result.per_run_values],
        "lower": float(result.lower),
        "upper": float(result.upper),
        "termination": [r.termination for r in result.run_results],
        "iterations": [r.iterations for r in result.run_results],
        "final_loglik": [r.final_loglik for r in result.run_results],
        "notes": {str(i): msg for i, msg in sorted(result.notes.items())},
    }
    if include_timing:
        # wall-clock fields; everything above is deterministic in the config
        doc["compile_ms"] = result.compile_ms
        doc["em_ms"] = result.em_ms
    return doc


def save_bounds(result: BoundsResult, pscm: Pscm, path, include_timing: bool = True) -> None:
    Path(path).write_text(
        json.dumps(bounds_to_json(result, pscm, include_timing), indent=2) + "\n"
    )
