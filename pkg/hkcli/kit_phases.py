"""
A module for decomposing HK trajectories into phases separated by leftmost-cluster splits.

When the leftmost cluster of the active agents ends up more than epsilon away from everything else, it never moves
again. The run is then split into phases: phase k covers the steps [T_{k-1}, T_k) over the agents that are still
active, and the agents frozen at T_k are excluded from every later phase.
"""

from __future__ import annotations

from fractions import Fraction

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from hkcli.kit_dynamics import Trajectory
from hkcli.kit_invariants import CheckSuiteResult, ViolationReport
from hkcli.kit_lyapunov import StepAnalysis, StepClass, active_diameter, leftmost_cluster
from hkcli.utils import Rational


class PhaseRecord(BaseModel):
    """
    Ledger of one phase.

    Attributes:
    k (int): 1-based phase number.
    start (int): T_{k-1}, the first time of the phase.
    end (int): T_k. Equal to the termination time T for the last phase.
    agent_lo, agent_hi (int): The agents active during the phase.
    n_k (int): Number of active agents.
    nu_k_end (int): nu_k(T_k), computed over the phase's agents.
    I_k, D_k, S_k (list[int]): The steps of the phase, by class.
    frozen_lo, frozen_hi (int | None): Agents frozen at `end`; None for the last phase.
    frozen_values (list[Fraction]): Distinct opinions of the frozen agents.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    k: int
    start: int
    end: int
    agent_lo: int
    agent_hi: int
    n_k: int
    nu_k_end: int

    L_start: Rational  # noqa: N815
    diameter_start: Rational

    I_k: list[int] = Field(default_factory=list)  # noqa: N815
    D_k: list[int] = Field(default_factory=list)  # noqa: N815
    S_k: list[int] = Field(default_factory=list)  # noqa: N815

    frozen_lo: int | None = None
    frozen_hi: int | None = None
    frozen_values: list[Rational] = Field(default_factory=list)

    @property
    def duration(self) -> int:
        return self.end - self.start

    @property
    def frozen_count(self) -> int:
        return 0 if self.frozen_lo is None else self.frozen_hi - self.frozen_lo + 1


class PhaseDecomposition(BaseModel):
    """
    Phases of a terminated trajectory.

    Attributes:
    S (list[int]): Splitting times T_1 < T_2 < ..., each at least 1.
    initial_frozen (int): Number of agents already isolated on the left at t = 0.
    interior_splits (list[tuple[int, int]]): (t, i) pairs recording when the gap between active agents i and i + 1
        first exceeded epsilon while another cluster was still to their left. Diagnostics only.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    T: int
    epsilon: Rational
    S: list[int] = Field(default_factory=list)
    phases: list[PhaseRecord] = Field(default_factory=list)
    initial_frozen: int = 0
    interior_splits: list[tuple[int, int]] = Field(default_factory=list)

    _trajectory: Trajectory | None = PrivateAttr(default=None)

    @property
    def trajectory(self) -> Trajectory:
        """
        The trajectory the phases were computed from. Not serialized.
        """
        if self._trajectory is None:
            raise ValueError("decomposition is not bound to a trajectory")
        return self._trajectory

    def bind(self, trajectory: Trajectory) -> PhaseDecomposition:
        self._trajectory = trajectory
        return self

    def to_report(self) -> dict:
        return self.model_dump(mode="json")


def detect_split(analysis: StepAnalysis) -> bool:
    """
    True iff the analyzed step left the leftmost active cluster more than epsilon away from the other active agents.
    """
    return analysis.d_next is not None and analysis.d_next > analysis.epsilon


def _interior_splits(trajectory: Trajectory) -> list[tuple[int, int]]:
    first_seen: dict[int, int] = {}
    for profile, analysis in zip(trajectory.profiles, trajectory.analyses, strict=True):
        x = profile.opinions
        for i in range(analysis.lo + analysis.U_size, profile.n - 1):
            if i not in first_seen and x[i + 1] - x[i] > profile.epsilon:
                first_seen[i] = analysis.t
    return sorted((t, i) for i, t in first_seen.items())


def decompose(trajectory: Trajectory) -> PhaseDecomposition:
    """
    Splits an annotated, terminated trajectory into phases.

    A new phase starts at every time at which the active range moves right, i.e. at every time one or more leftmost
    clusters were found isolated. Clusters isolated at the same instant are frozen together.

    Raises:
        ValueError: If the trajectory is truncated or not annotated.
    """
    if trajectory.truncated:
        raise ValueError("cannot decompose a truncated trajectory")
    if not trajectory.is_annotated:
        raise ValueError("trajectory must be annotated before it can be decomposed")

    analyses = trajectory.analyses
    profiles = trajectory.profiles
    n = trajectory.n
    T = trajectory.T  # noqa: N806

    boundaries = [t for t in range(1, T + 1) if analyses[t].lo > analyses[t - 1].lo]
    starts = [0, *boundaries]
    ends = [*boundaries, T]

    phases = []
    for k, (start, end) in enumerate(zip(starts, ends, strict=True), start=1):
        lo = analyses[start].lo
        steps = [analyses[t] for t in range(start, end)]

        record = {
            "k": k,
            "start": start,
            "end": end,
            "agent_lo": lo,
            "agent_hi": n - 1,
            "n_k": n - lo,
            "L_start": analyses[start].L,
            "diameter_start": active_diameter(profiles[start], lo),
            "I_k": [a.t for a in steps if a.step_class == StepClass.I],
            "D_k": [a.t for a in steps if a.step_class == StepClass.D],
            "S_k": [a.t for a in steps if a.step_class == StepClass.S],
        }
        if k < len(starts):
            frozen_hi = analyses[end].lo - 1
            record["nu_k_end"] = leftmost_cluster(profiles[end], lo)[1]
            record["frozen_lo"] = lo
            record["frozen_hi"] = frozen_hi
            record["frozen_values"] = sorted(set(profiles[end].opinions[lo : frozen_hi + 1]))
        else:
            record["nu_k_end"] = analyses[T].nu
        phases.append(PhaseRecord(**record))

    return PhaseDecomposition(
        n=n,
        T=T,
        epsilon=trajectory.epsilon,
        S=boundaries,
        phases=phases,
        initial_frozen=analyses[0].lo,
        interior_splits=_interior_splits(trajectory),
    ).bind(trajectory)


def _first_moved(trajectory: Trajectory, since: int, lo: int, hi: int) -> ViolationReport | None:
    reference = trajectory.profiles[since].opinions[lo : hi + 1]
    for profile in trajectory.profiles[since + 1 :]:
        if profile.opinions[lo : hi + 1] != reference:
            moved = next(i for i in range(lo, hi + 1) if profile.opinions[i] != reference[i - lo])
            return ViolationReport(
                check_id="frozen",
                t=profile.time,
                lhs=profile.opinions[moved],
                rhs=reference[moved - lo],
                message=f"frozen agent {moved} moved after t={since}",
            )
    return None


def _first_touching(trajectory: Trajectory, since: int, hi: int) -> ViolationReport | None:
    eps = trajectory.epsilon
    for profile in trajectory.profiles[since:]:
        gap = profile.opinions[hi + 1] - profile.opinions[hi]
        if not gap > eps:
            return ViolationReport(
                check_id="isolation",
                t=profile.time,
                lhs=gap,
                rhs=eps,
                message=f"agents {hi} and {hi + 1} are within epsilon after freezing",
            )
    return None


def _with_phase(report: ViolationReport | None, k: int) -> ViolationReport | None:
    return None if report is None else report.model_copy(update={"phase": k})


def phase_budget_check(decomposition: PhaseDecomposition) -> CheckSuiteResult:
    """
    Checks the per-phase step budgets, the frozen-cluster invariants and the combined bound over all phases.
    """
    result = CheckSuiteResult()
    trajectory = decomposition.trajectory
    n = decomposition.n

    def violation(check_id: str, phase: PhaseRecord, lhs, rhs, message: str) -> ViolationReport:
        return ViolationReport(check_id=check_id, t=phase.start, lhs=lhs, rhs=rhs, phase=phase.k, message=message)

    if decomposition.initial_frozen > 0:
        hi = decomposition.initial_frozen - 1
        result.record("frozen", _with_phase(_first_moved(trajectory, 0, 0, hi), 0))
        result.record("isolation", _with_phase(_first_touching(trajectory, 0, hi), 0))

    frozen_before = decomposition.initial_frozen
    for phase in decomposition.phases:
        nu = phase.nu_k_end
        n_k = phase.n_k

        bound = (3 * n_k**2 + 1) * nu
        result.record(
            "phase-duration",
            None
            if phase.duration <= bound
            else violation("phase-duration", phase, phase.duration, bound, "T_k - T_{k-1} > (3 n_k^2 + 1) nu_k"),
        )

        bound = 3 * nu * n_k**2
        result.record(
            "phase-D",
            None
            if len(phase.D_k) <= bound
            else violation("phase-D", phase, len(phase.D_k), bound, "|D_k| > 3 nu_k n_k^2"),
        )

        merges = len(phase.I_k) + len(phase.S_k)
        result.record(
            "phase-I",
            None if merges <= nu else violation("phase-I", phase, merges, nu, "|I_k| + |S_k| > nu_k"),
        )

        expected = n - frozen_before
        result.record(
            "phase-count",
            None
            if n_k == expected
            else violation("phase-count", phase, n_k, expected, "n_k does not match the agents left active"),
        )

        if phase.frozen_lo is not None:
            moved = _first_moved(trajectory, phase.end, phase.frozen_lo, phase.frozen_hi)
            result.record("frozen", _with_phase(moved, phase.k))
            result.record("isolation", _with_phase(_first_touching(trajectory, phase.end, phase.frozen_hi), phase.k))
            frozen_before += phase.frozen_count

    # The leftmost cluster of each phase at its end is a disjoint set of agents.
    isolated = sum(phase.nu_k_end - 1 for phase in decomposition.phases)
    result.record(
        "isolated-points",
        None
        if isolated <= n
        else ViolationReport(
            check_id="isolated-points", t=decomposition.T, lhs=isolated, rhs=n, message="sum of |U_k(T_k)| > n"
        ),
    )

    total = sum(phase.duration for phase in decomposition.phases)
    bound = n * (3 * n**2 + 1)
    report = None
    if total != decomposition.T:
        report = ViolationReport(
            check_id="theorem1-phases",
            t=decomposition.T,
            lhs=total,
            rhs=decomposition.T,
            message="phase durations do not add up to T",
        )
    elif decomposition.T > bound:
        report = ViolationReport(
            check_id="theorem1-phases", t=decomposition.T, lhs=decomposition.T, rhs=bound, message="T > n (3n^2 + 1)"
        )
    result.record("theorem1-phases", report)
    return result


def phase_counts(decomposition: PhaseDecomposition) -> dict[str, int]:
    """
    Total |I|, |D| and |S| over all phases.
    """
    return {
        "I": sum(len(p.I_k) for p in decomposition.phases),
        "D": sum(len(p.D_k) for p in decomposition.phases),
        "S": sum(len(p.S_k) for p in decomposition.phases),
    }


def frozen_value_set(decomposition: PhaseDecomposition) -> list[Fraction]:
    """
    All opinions held by frozen clusters, in the order the clusters froze.
    """
    return [value for phase in decomposition.phases for value in phase.frozen_values]
