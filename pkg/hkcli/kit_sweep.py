"""
A module for termination-time sweeps: simulate a family of instances over a range of n, check every run and
collect one CSV row per run.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import pandas
from click import secho
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from hkcli.kit_dynamics import default_max_steps, simulate
from hkcli.kit_generators import InstanceKind, InstanceSpec, generate
from hkcli.kit_invariants import ViolationReport, run_suite
from hkcli.kit_lyapunov import annotate
from hkcli.kit_phases import decompose, phase_counts
from hkcli.utils import Rational


CSV_COLUMNS = ["n", "seed", "T", "I", "D", "S", "L0", "min_dec_ratio", "ms"]


class SweepAbortedError(RuntimeError):
    """
    Raised when a run of a sweep exceeds its step budget or, without `keep_going`, violates a check.
    """

    def __init__(self, message: str, truncated: bool = False):
        super().__init__(message)
        self.truncated = truncated


class SweepConfig(BaseModel):
    """
    A sweep over n = n_min, n_min + n_step, ..., n_max with `repetitions` seeds per n.

    The template instance provides every parameter except n and the seed. Seeds are `seed_base + r` for
    r = 0..repetitions-1.
    """

    template: InstanceSpec
    n_min: int = Field(ge=1)
    n_max: int = Field(ge=1)
    n_step: int = Field(default=1, ge=1)
    repetitions: int = Field(default=1, ge=1)
    seed_base: int = 0
    max_steps: int | None = Field(default=None, ge=0)
    out: Path | None = None
    keep_going: bool = False
    workers: int = Field(default=1, ge=1)
    timing: bool = True

    @model_validator(mode="after")
    def _check_range(self) -> SweepConfig:
        if self.n_min > self.n_max:
            raise ValueError(f"n_min ({self.n_min}) must not exceed n_max ({self.n_max})")
        fixed_sizes = self.template.kind == InstanceKind.TWO_CLUSTER and self.template.sizes is not None
        if fixed_sizes and self.n_min != self.n_max:
            raise ValueError("explicit two_cluster block sizes fix n; drop them to split every n into halves")
        return self

    def instances(self) -> list[InstanceSpec]:
        return [
            self.template.with_n(n, seed=self.seed_base + r)
            for n in range(self.n_min, self.n_max + 1, self.n_step)
            for r in range(self.repetitions)
        ]


class SweepRow(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    seed: int
    T: int
    I: int  # noqa: E741
    D: int
    S: int
    L0: Rational
    min_dec_ratio: Rational | None = None
    ms: float = 0.0


class InstanceOutcome(BaseModel):
    """
    Result of one run. `row` is None when the run was truncated.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    seed: int
    row: SweepRow | None = None
    violations: list[ViolationReport] = Field(default_factory=list)


def run_instance(spec: InstanceSpec, max_steps: int | None = None, timing: bool = True) -> InstanceOutcome:
    """
    Generates, simulates, annotates, decomposes and checks a single instance.

    Module-level so that it can be shipped to worker processes.
    """
    profile = generate(spec)
    started = time.perf_counter()
    trajectory, result = simulate(profile, max_steps=max_steps)
    if result.truncated:
        return InstanceOutcome(n=profile.n, seed=spec.seed)

    trajectory = annotate(trajectory)
    decomposition = decompose(trajectory)
    suite = run_suite(trajectory, decomposition)
    elapsed_ms = (time.perf_counter() - started) * 1000.0

    counts = phase_counts(decomposition)
    row = SweepRow(
        n=profile.n,
        seed=spec.seed,
        T=result.T,
        I=counts["I"],
        D=counts["D"],
        S=counts["S"],
        L0=trajectory.analyses[0].L,
        min_dec_ratio=suite.min_decrement_ratio,
        ms=round(elapsed_ms, 3) if timing else 0.0,
    )
    return InstanceOutcome(n=profile.n, seed=spec.seed, row=row, violations=suite.violations)


def _run_one(args: tuple[InstanceSpec, int | None, bool]) -> InstanceOutcome:
    return run_instance(*args)


def run_sweep(config: SweepConfig) -> tuple[list[SweepRow], list[InstanceOutcome]]:
    """
    Runs every instance of the sweep, in parallel when `config.workers > 1`.

    Returns:
    tuple[list[SweepRow], list[InstanceOutcome]]: Rows ordered by (n, seed), and the outcomes that had violations.

    Raises:
        SweepAbortedError: If a run is truncated, or violates a check while `keep_going` is off.
    """
    specs = config.instances()
    tasks = [(spec, config.max_steps, config.timing) for spec in specs]

    rows: list[SweepRow] = []
    failed: list[InstanceOutcome] = []

    executor = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        outcomes = executor.map(_run_one, tasks) if executor is not None else map(_run_one, tasks)
        for outcome in tqdm(outcomes, total=len(tasks), desc="Sweeping", unit="run"):
            if outcome.row is None:
                budget = config.max_steps if config.max_steps is not None else default_max_steps(outcome.n)
                raise SweepAbortedError(
                    f"run n={outcome.n} seed={outcome.seed} did not terminate within {budget} steps", truncated=True
                )
            if outcome.violations:
                failed.append(outcome)
                first = outcome.violations[0]
                secho(
                    f"Run n={outcome.n} seed={outcome.seed}: {len(outcome.violations)} violation(s), "
                    f"first {first.check_id} at t={first.t}.",
                    fg="yellow",
                    err=True,
                )
                if not config.keep_going:
                    raise SweepAbortedError(f"run n={outcome.n} seed={outcome.seed} violated {first.check_id}")
            rows.append(outcome.row)
    finally:
        if executor is not None:
            executor.shutdown(cancel_futures=True)

    rows.sort(key=lambda row: (row.n, row.seed))
    return rows, failed


def to_frame(rows: list[SweepRow]) -> pandas.DataFrame:
    records = [row.model_dump(mode="json") for row in rows]
    return pandas.DataFrame.from_records(records, columns=CSV_COLUMNS)


def write_csv(rows: list[SweepRow], path: Path) -> None:
    to_frame(rows).to_csv(path, index=False)


def summarize(rows: list[SweepRow]) -> pandas.DataFrame:
    """
    Per-n summary: run count, mean and max T, and the 3n^3 + n budget.
    """
    frame = to_frame(rows)
    summary = frame.groupby("n").agg(
        runs=("seed", "count"),
        T_mean=("T", "mean"),
        T_max=("T", "max"),
        D_max=("D", "max"),
    )
    summary["budget"] = [default_max_steps(n) for n in summary.index]
    return summary
