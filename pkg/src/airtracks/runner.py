"""Embarrassingly parallel task execution with per-task accounting.

Stages produce independent work units (hour files, leaf directories,
archives). The pool runs them under one of three strategies:

- static-uniform: tasks pre-assigned round-robin to workers, no stealing;
  kept for comparison runs because its imbalance is a known limitation.
- dynamic-queue: workers pull the next task from a shared queue (default).
- size-sorted-dynamic: dynamic queue fed largest size hint first, which
  is the classic longest-processing-time greedy.

Task bodies share no mutable state except the terrain cache; one failure
never aborts sibling tasks. Counts are a function of the task alone, so
they are identical across strategies and worker counts.
"""

from __future__ import annotations

import queue
import statistics
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

STRATEGIES = ("static-uniform", "dynamic-queue", "size-sorted-dynamic")


class TaskSkipped(Exception):
    """Raised by a task body to mark its input as absent but tolerable."""


@dataclass(frozen=True)
class TaskSpec:
    stage: str
    input_ref: str
    size_hint: int | None = None


@dataclass
class TaskResult:
    spec: TaskSpec
    elapsed: float
    counts: dict[str, int]
    outcome: str  # ok | skipped | failed
    error: str | None = None


def plan(stage: str, inputs: Iterable[str | Path], size_hints: Mapping[str, int] | None = None) -> list[TaskSpec]:
    """One task per input unit, deterministically ordered."""
    refs = sorted(str(i) for i in inputs)
    seen = set()
    specs = []
    for ref in refs:
        if ref in seen:
            raise ValueError(f"duplicate task input: {ref}")
        seen.add(ref)
        hint = size_hints.get(ref) if size_hints else None
        specs.append(TaskSpec(stage, ref, hint))
    return specs


def execute(
    specs: Sequence[TaskSpec],
    task_fn: Callable[[TaskSpec], dict[str, int]],
    workers: int = 1,
    strategy: str = "dynamic-queue",
) -> list[TaskResult]:
    """Run every task exactly once; failures are isolated per task.

    Results come back aligned with the plan order regardless of strategy.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    results: list[TaskResult | None] = [None] * len(specs)
    if not specs:
        return []

    def run_one(i: int) -> None:
        spec = specs[i]
        t0 = time.perf_counter()
        try:
            counts = task_fn(spec) or {}
            outcome, error = "ok", None
        except TaskSkipped as exc:
            counts, outcome, error = {}, "skipped", str(exc)
        except Exception as exc:  # noqa: BLE001 - failure isolation is the contract
            counts, outcome, error = {}, "failed", f"{type(exc).__name__}: {exc}"
        results[i] = TaskResult(spec, time.perf_counter() - t0, dict(counts), outcome, error)

    if strategy == "static-uniform":
        def worker_static(w: int) -> None:
            for i in range(w, len(specs), workers):
                run_one(i)

        threads = [threading.Thread(target=worker_static, args=(w,)) for w in range(workers)]
    else:
        order = list(range(len(specs)))
        if strategy == "size-sorted-dynamic":
            order.sort(key=lambda i: (-(specs[i].size_hint or 0), i))
        q: queue.SimpleQueue[int] = queue.SimpleQueue()
        for i in order:
            q.put(i)

        def worker_dynamic() -> None:
            while True:
                try:
                    i = q.get_nowait()
                except queue.Empty:
                    return
                run_one(i)

        threads = [threading.Thread(target=worker_dynamic) for _ in range(workers)]

    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r is not None for r in results)
    return results  # type: ignore[return-value]


def simulate_makespan(durations: Sequence[float], workers: int, strategy: str) -> float:
    """Deterministic makespan model for the three assignment policies."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not durations:
        return 0.0
    if strategy == "static-uniform":
        return max(sum(durations[w::workers]) for w in range(workers))
    order = list(durations)
    if strategy == "size-sorted-dynamic":
        order.sort(reverse=True)
    free = [0.0] * workers
    for d in order:
        w = free.index(min(free))
        free[w] += d
    return max(free)


@dataclass
class RunReport:
    n_tasks: int
    ok: int
    skipped: int
    failed: int
    elapsed_mean: float
    elapsed_median: float
    elapsed_min: float
    elapsed_max: float
    totals: dict[str, int] = field(default_factory=dict)


def summarize(results: Sequence[TaskResult]) -> RunReport:
    """Exact order statistics of elapsed times plus count totals."""
    if not results:
        raise ValueError("cannot summarize an empty result set")
    elapsed = [r.elapsed for r in results]
    totals: dict[str, int] = {}
    for r in results:
        for k, v in r.counts.items():
            totals[k] = totals.get(k, 0) + v
    return RunReport(
        n_tasks=len(results),
        ok=sum(1 for r in results if r.outcome == "ok"),
        skipped=sum(1 for r in results if r.outcome == "skipped"),
        failed=sum(1 for r in results if r.outcome == "failed"),
        elapsed_mean=statistics.fmean(elapsed),
        elapsed_median=statistics.median(elapsed),
        elapsed_min=min(elapsed),
        elapsed_max=max(elapsed),
        totals=totals,
    )


def format_report(report: RunReport, results: Sequence[TaskResult]) -> str:
    """Human-readable run table."""
    lines = [
        f"tasks: {report.n_tasks}  ok: {report.ok}  skipped: {report.skipped}  failed: {report.failed}",
        (
            f"elapsed s: mean {report.elapsed_mean:.2f}  median {report.elapsed_median:.2f}  "
            f"min {report.elapsed_min:.2f}  max {report.elapsed_max:.2f}"
        ),
    ]
    if report.totals:
        lines.append("totals: " + "  ".join(f"{k}={v}" for k, v in sorted(report.totals.items())))
    lines.append("")
    lines.append(f"{'stage':<10} {'outcome':<8} {'elapsed':>9}  input")
    for r in results:
        lines.append(f"{r.spec.stage:<10} {r.outcome:<8} {r.elapsed:>9.3f}  {r.spec.input_ref}")
        if r.error:
            lines.append(f"{'':<10} {'':<8} {'':>9}  ! {r.error}")
    return "\n".join(lines) + "\n"


def write_machine_report(results: Sequence[TaskResult], path: Path | str) -> None:
    """One tab-separated row per task: stage, input, elapsed, outcome, counts."""
    rows = []
    for r in results:
        counts = ",".join(f"{k}={v}" for k, v in sorted(r.counts.items()))
        rows.append(
            "\t".join(
                [r.spec.stage, r.spec.input_ref, f"{r.elapsed:.6f}", r.outcome, counts, r.error or ""]
            )
        )
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""))


def read_machine_report(path: Path | str) -> list[TaskResult]:
    results = []
    for line in Path(path).read_text().splitlines():
        stage, input_ref, elapsed, outcome, counts_text, error = line.split("\t")
        counts = {}
        if counts_text:
            for pair in counts_text.split(","):
                k, v = pair.split("=")
                counts[k] = int(v)
        results.append(
            TaskResult(TaskSpec(stage, input_ref), float(elapsed), counts, outcome, error or None)
        )
    return results
