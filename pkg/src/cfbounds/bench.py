"""Four-way EM timing comparison: elimination vs circuit, sequential vs parallel.

Method names:

* ``BNC`` — variable elimination on the component sub-models, sequential;
  the baseline every ratio is taken against.
* ``BNP`` — the same, with component tasks executed in parallel.
* ``ACC`` — EM queries answered on the compiled symbolic circuits, sequential.
* ``ACP`` — the circuit method with component-level parallelism.

All four run the identical EM orchestration and produce numerically matching
trajectories for the same seed; only the engine and the scheduling differ.
Reported wall time covers the EM iterations alone — compilation is a one-off
cost listed separately. Each (model, method) cell runs in its own process
group so a per-model timeout can kill it cleanly; timed-out cells are
censored: reported, but excluded from ratio statistics.
"""

from __future__ import annotations

import json
import multiprocessing as mp
import os
import signal
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .data import Dataset
from .em import EmConfig, em_multi_run_timed
from .model import Pscm

METHOD_SPEC: dict[str, tuple[str, str]] = {
    "BNC": ("ve", "none"),
    "BNP": ("ve", "components"),
    "ACC": ("circuit", "none"),
    "ACP": ("circuit", "components"),
}


@dataclass(frozen=True)
class BenchEntry:
    model: str
    method: str
    wall_ms: float | None          # EM wall time; None when timed out
    compile_ms: float | None
    ratio_vs_bnc: float | None
    timeout: bool
    final_logliks: tuple[float, ...] = ()


@dataclass(frozen=True)
class BenchReport:
    entries: tuple[BenchEntry, ...]
    totals_ms: dict[str, float]
    quartiles: dict[str, dict[str, float]]
    timeouts: dict[str, int]

    def for_method(self, method: str) -> list[BenchEntry]:
        return [e for e in self.entries if e.method == method]


def _bench_child(conn, pscm, dataset, config, engine):
    os.setsid()  # own process group, so a timeout can kill nested workers too
    try:
        results, compile_ms, em_ms = em_multi_run_timed(pscm, dataset, config, engine)
        conn.send(("ok", em_ms, compile_ms, tuple(r.final_loglik for r in results)))
    except Exception as exc:  # surfaced in the parent
        conn.send(("error", repr(exc)))
    finally:
        conn.close()


def _run_cell_isolated(pscm, dataset, config, engine, timeout_s):
    parent, child = mp.Pipe(duplex=False)
    proc = mp.Process(target=_bench_child, args=(child, pscm, dataset, config, engine))
    proc.start()
    child.close()
    if parent.poll(timeout_s):
        msg = parent.recv()
        proc.join()
        if msg[0] == "error":
            raise RuntimeError(f"benchmark cell failed: {msg[1]}")
        return msg[1], msg[2], msg[3]
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except ProcessLookupError:
        pass
    proc.join()
    return None


def run_benchmark(
    instances: Sequence[tuple[str, Pscm, Dataset]],
    methods: Sequence[str],
    config: EmConfig,
    timeout_s: float = 900.0,
    isolate: bool = True,
) -> BenchReport:
    """Time every requested method on every (model, dataset) pair.

    ``config.parallelism`` is ignored; each method dictates its own engine and
    scheduling. With ``isolate`` each cell runs in a separate process so the
    timeout can be enforced; timings themselves are always measured inside
    ``em_multi_run_timed`` and exclude the isolation overhead.
    """
    methods = [m.upper() for m in methods]
    unknown = [m for m in methods if m not in METHOD_SPEC]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; expected subset of {sorted(METHOD_SPEC)}")

    entries: list[BenchEntry] = []
    for name, pscm, dataset in instances:
        per_model: dict[str, BenchEntry] = {}
        for method in methods:
            engine, parallelism = METHOD_SPEC[method]
            cell_cfg = EmConfig(
                runs=config.runs, max_iterations=config.max_iterations,
                rel_tolerance=config.rel_tolerance, seed=config.seed,
                parallelism=parallelism,
            )
            if isolate:
                out = _run_cell_isolated(pscm, dataset, cell_cfg, engine, timeout_s)
            else:
                results, compile_ms, em_ms = em_multi_run_timed(pscm, dataset, cell_cfg, engine)
                out = (em_ms, compile_ms, tuple(r.final_loglik for r in results))
            if out is None:
                per_model[method] = BenchEntry(name, method, None, None, None, True)
            else:
                em_ms, compile_ms, logliks = out
                per_model[method] = BenchEntry(name, method, em_ms, compile_ms, None, False, logliks)

        bnc = per_model.get("BNC")
        for method in methods:
            e = per_model[method]
            ratio = None
            if bnc is not None and not bnc.timeout and not e.timeout:
                ratio = e.wall_ms / bnc.wall_ms
            entries.append(BenchEntry(e.model, e.method, e.wall_ms, e.compile_ms,
                                      ratio, e.timeout, e.final_logliks))

    totals = {
        m: float(sum(e.wall_ms for e in entries if e.method == m and not e.timeout))
        for m in methods
    }
    quartiles = {}
    for m in methods:
        ratios = [e.ratio_vs_bnc for e in entries if e.method == m and e.ratio_vs_bnc is not None]
        if ratios:
            q1, med, q3 = np.percentile(ratios, [25, 50, 75])
            quartiles[m] = {"q1": float(q1), "median": float(med), "q3": float(q3)}
    timeouts = {m: sum(1 for e in entries if e.method == m and e.timeout) for m in methods}
    return BenchReport(tuple(entries), totals, quartiles, timeouts)


def report_to_json(report: BenchReport) -> dict[str, Any]:
    return {
        "entries": [
            {
                "model": e.model,
                "method": e.method,
                "wall_ms": e.wall_ms,
                "ratio_vs_bnc": e.ratio_vs_bnc,
                "timeout": e.timeout,
                "compile_ms": e.compile_ms,
            }
            for e in report.entries
        ],
        "totals_ms": report.totals_ms,
        "quartiles": report.quartiles,
        "timeouts": report.timeouts,
    }


def save_report(report: BenchReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_json(report), indent=2) + "\n")
