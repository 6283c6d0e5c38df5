"""
A module for machine-checking the inequalities behind the O(n^3) termination bound, one step at a time.

Each `check_*` function returns a `ViolationReport` when the inequality fails and None when it holds or does not
apply. Comparisons are exact: no tolerance is used anywhere in this module, so checks must only be run on exact
(rational) trajectories.

Step-wise checks are evaluated on the active agents `lo..n-1` (see `kit_lyapunov`), with `n_phase = n - lo`.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from fractions import Fraction
from typing import TYPE_CHECKING

from pydantic import BaseModel, ConfigDict, Field

from hkcli.kit_dynamics import (
    DynamicsMismatchError,
    Opinion,
    OpinionProfile,
    Trajectory,
    default_max_steps,
    is_terminated,
    neighbors,
    step,
)
from hkcli.kit_lyapunov import (
    StepAnalysis,
    StepClass,
    active_diameter,
    annotate,
    leftmost_cluster,
    lyapunov_value,
)
from hkcli.utils import Rational, parse_rational


if TYPE_CHECKING:
    from hkcli.kit_phases import PhaseDecomposition, PhaseRecord


class ViolationReport(BaseModel):
    """
    A failed comparison `lhs <op> rhs`, with the exact values that were compared.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    check_id: str
    t: int
    lhs: Rational
    rhs: Rational

    phase: int | None = None
    step_class: str | None = None

    message: str = ""


class CheckSuiteResult(BaseModel):
    """
    Aggregated outcome of a batch of checks.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    checks_run: int = 0
    violations: list[ViolationReport] = Field(default_factory=list)

    # Number of times each check id was evaluated.
    counters: dict[str, int] = Field(default_factory=dict)

    # Smallest observed D-step decrement in units of eps / (3 n_phase). Diagnostic only.
    min_decrement_ratio: Rational | None = None

    @property
    def passed(self) -> bool:
        return not self.violations

    def record(self, check_id: str, report: ViolationReport | None) -> None:
        self.checks_run += 1
        self.counters[check_id] = self.counters.get(check_id, 0) + 1
        if report is not None:
            self.violations.append(report)

    def observe_decrement_ratio(self, ratio: Fraction) -> None:
        if self.min_decrement_ratio is None or ratio < self.min_decrement_ratio:
            self.min_decrement_ratio = ratio

    def merge(self, other: CheckSuiteResult) -> None:
        self.checks_run += other.checks_run
        self.violations.extend(other.violations)
        self.counters = dict(Counter(self.counters) + Counter(other.counters))
        if other.min_decrement_ratio is not None:
            self.observe_decrement_ratio(other.min_decrement_ratio)

    def canonicalize(self) -> None:
        """
        Orders violations by (t, check_id) so that reports do not depend on evaluation order.
        """
        self.violations.sort(key=lambda v: (v.t, v.check_id, v.phase or 0))
        self.counters = dict(sorted(self.counters.items()))

    def to_report(self) -> dict:
        return {
            "checks_run": self.checks_run,
            "violations": [v.model_dump(mode="json") for v in self.violations],
        }


def _violation(
    check_id: str,
    t: int,
    lhs: Opinion,
    rhs: Opinion,
    message: str,
    phase: int | None = None,
    step_class: StepClass | str | None = None,
) -> ViolationReport:
    return ViolationReport(
        check_id=check_id,
        t=t,
        lhs=lhs,
        rhs=rhs,
        phase=phase,
        step_class=None if step_class is None else str(step_class),
        message=message,
    )


# ---
# Profile-level checks
# ---


def check_order(opinions: Sequence[Opinion], t: int, **context) -> ViolationReport | None:
    """
    Opinions must be non-decreasing (order preservation).
    """
    for i in range(len(opinions) - 1):
        if opinions[i] > opinions[i + 1]:
            return _violation(
                "order", t, opinions[i], opinions[i + 1], f"x[{i}] > x[{i + 1}]: agent order not preserved", **context
            )
    return None


def check_extremes(x_t: OpinionProfile, x_next: OpinionProfile, **context) -> ViolationReport | None:
    """
    The maximum opinion never grows and the minimum never shrinks.
    """
    if x_next.max > x_t.max:
        return _violation("extremes", x_t.time, x_next.max, x_t.max, "maximum opinion increased", **context)
    if x_next.min < x_t.min:
        return _violation("extremes", x_t.time, x_t.min, x_next.min, "minimum opinion decreased", **context)
    return None


def check_lemma2(x_t: OpinionProfile, x_next: OpinionProfile, lo: int = 0, **context) -> ViolationReport | None:
    """
    U(t) is contained in U(t + 1). Both sets are prefixes of the active range, so this is |U(t)| <= |U(t + 1)|.
    """
    u_size, _ = leftmost_cluster(x_t, lo)
    u_size_next, _ = leftmost_cluster(x_next, lo)
    if u_size_next < u_size:
        return _violation(
            "lemma2", x_t.time, u_size, u_size_next, "leftmost cluster lost agents (|U(t)| > |U(t+1)|)", **context
        )
    return None


def check_cluster_coincide(
    x_t: OpinionProfile, x_next: OpinionProfile, lo: int = 0, **context
) -> ViolationReport | None:
    """
    All agents of U(t) share the same neighbors, hence the same opinion at t + 1.
    """
    u_size, _ = leftmost_cluster(x_t, lo)
    first = x_next.opinions[lo]
    last = x_next.opinions[lo + u_size - 1]
    if first != last:
        return _violation("cluster-coincide", x_t.time, last, first, "agents of U(t) disagree at t+1", **context)
    return None


def check_equal_stay_equal(x_t: OpinionProfile, x_next: OpinionProfile, **context) -> ViolationReport | None:
    """
    Agents that agree at t have the same neighbors and agree at t + 1. Equal opinions are adjacent in sorted order.
    """
    x, y = x_t.opinions, x_next.opinions
    for i in range(len(x) - 1):
        if x[i] == x[i + 1] and y[i] != y[i + 1]:
            return _violation(
                "equal-stay-equal", x_t.time, y[i + 1], y[i], f"x[{i}] = x[{i + 1}] at t but not at t+1", **context
            )
    return None


# ---
# Lyapunov-level checks
# ---


def check_lyapunov_nonneg(analysis: StepAnalysis, **context) -> ViolationReport | None:
    if analysis.L < 0:
        return _violation("L-nonneg", analysis.t, analysis.L, 0, "Lyapunov value is negative", **context)
    return None


def check_x_tilde(x_t: OpinionProfile, analysis: StepAnalysis, **context) -> ViolationReport | None:
    """
    If M(t) is non-empty, the mean of its opinions is at least x_nu(t).
    """
    if analysis.m == 0:
        return None
    x_nu = x_t.opinions[analysis.nu_index]
    if analysis.x_tilde < x_nu:
        return _violation("x-tilde", analysis.t, analysis.x_tilde, x_nu, "mean of M(t) is below x_nu(t)", **context)
    return None


def check_initial_bound(x_0: OpinionProfile, lo: int = 0, **context) -> ViolationReport | None:
    """
    L(0) < nu(0) (x_max(0) - x_lo(0)) whenever the active agents hold at least two distinct opinions.
    """
    u_size, nu = leftmost_cluster(x_0, lo)
    if lo + u_size == x_0.n:
        return None
    lhs = lyapunov_value(x_0, lo)
    rhs = nu * active_diameter(x_0, lo)
    if not lhs < rhs:
        return _violation("L0-bound", x_0.time, lhs, rhs, "L(0) >= nu(0) (x_n(0) - x_1(0))", **context)
    return None


def check_eq1(x_t: OpinionProfile, x_next: OpinionProfile, lo: int = 0, **context) -> ViolationReport | None:
    """
    |U(t)| x_1(t) + x_nu(t) <= nu(t) x_1(t + 1).

    Applies while the nu agent is a neighbor of the leftmost cluster (d(t) <= eps) and the active agents have not
    reached consensus.
    """
    x = x_t.opinions
    u_size, nu = leftmost_cluster(x_t, lo)
    if lo + u_size == x_t.n:
        return None
    nu_index = lo + u_size
    if x[nu_index] - x[lo] > x_t.epsilon:
        return None

    lhs = u_size * x[lo] + x[nu_index]
    rhs = nu * x_next.opinions[lo]
    if lhs > rhs:
        return _violation("eq1", x_t.time, lhs, rhs, "|U| x_1(t) + x_nu(t) > nu x_1(t+1)", **context)
    return None


def _merge_step(x_t: OpinionProfile, x_next: OpinionProfile, lo: int) -> tuple[int, Opinion] | None:
    # Returns (nu(t+1) - nu(t), L(t+1) - L(t)) for a step that grows nu, None otherwise.
    u_size, nu = leftmost_cluster(x_t, lo)
    if lo + u_size == x_t.n:
        return None
    _, nu_next = leftmost_cluster(x_next, lo)
    if nu_next <= nu:
        return None
    return nu_next - nu, lyapunov_value(x_next, lo) - lyapunov_value(x_t, lo)


def check_increment_cap(
    x_t: OpinionProfile, x_next: OpinionProfile, lo: int = 0, **context
) -> ViolationReport | None:
    """
    For a step where nu grows: L(t + 1) - L(t) <= [nu(t + 1) - nu(t)] (x_n(t + 1) - x_1(t + 1)).

    When the active diameter at t + 1 is at most n_phase eps, the cap [nu(t + 1) - nu(t)] n_phase eps is checked as
    well (`increment-cap-neps`).
    """
    merge = _merge_step(x_t, x_next, lo)
    if merge is None:
        return None
    delta_nu, delta_lyap = merge

    diameter = active_diameter(x_next, lo)
    cap = delta_nu * diameter
    if delta_lyap > cap:
        return _violation(
            "increment-cap", x_t.time, delta_lyap, cap, "L(t+1) - L(t) > [nu(t+1) - nu(t)] (x_n - x_1)(t+1)", **context
        )

    n_phase = x_t.n - lo
    if diameter <= n_phase * x_t.epsilon:
        cap = delta_nu * n_phase * x_t.epsilon
        if delta_lyap > cap:
            return _violation(
                "increment-cap-neps", x_t.time, delta_lyap, cap, "L(t+1) - L(t) > [nu(t+1) - nu(t)] n eps", **context
            )
    return None


def check_lemma3(x_t: OpinionProfile, lo: int = 0, **context) -> ViolationReport | None:
    """
    For a D-step: N_1(t) is contained in N_nu(t), and N_nu(t) \\ N_1(t) is non-empty.

    Only meaningful for steps that keep nu unchanged; the caller is responsible for applying it to D-steps only.
    """
    x = x_t.opinions
    u_size, _ = leftmost_cluster(x_t, lo)
    if lo + u_size == x_t.n:
        return None
    nu_index = lo + u_size
    if x[nu_index] - x[lo] > x_t.epsilon:
        return None

    n_first = neighbors(x_t, lo)
    n_nu = neighbors(x_t, nu_index)
    if n_first.lo < n_nu.lo or n_first.hi > n_nu.hi:
        return _violation("lemma3", x_t.time, n_first.hi, n_nu.hi, "N_1(t) is not contained in N_nu(t)", **context)

    outside = (n_first.lo - n_nu.lo) + (n_nu.hi - n_first.hi)
    if outside == 0:
        return _violation("lemma3", x_t.time, outside, 1, "N_nu(t) \\ N_1(t) is empty", **context)
    return None


def decrement_floor(epsilon: Fraction, n_phase: int) -> Fraction:
    return epsilon / (3 * n_phase)


def check_decrement_floor(
    x_t: OpinionProfile, x_next: OpinionProfile, lo: int = 0, **context
) -> ViolationReport | None:
    """
    For a step that keeps nu unchanged: L(t) - L(t + 1) >= eps / (3 n_phase).
    """
    u_size, nu = leftmost_cluster(x_t, lo)
    n_phase = x_t.n - lo
    if lo + u_size == x_t.n or n_phase < 2:
        return None
    _, nu_next = leftmost_cluster(x_next, lo)
    if nu_next != nu:
        return None

    decrement = lyapunov_value(x_t, lo) - lyapunov_value(x_next, lo)
    floor = decrement_floor(x_t.epsilon, n_phase)
    if decrement < floor:
        return _violation("decrement-floor", x_t.time, decrement, floor, "L(t) - L(t+1) < eps / (3 n)", **context)
    return None


# ---
# Trajectory-level checks
# ---


def check_total_budget(trajectory: Trajectory, **context) -> ViolationReport | None:
    """
    T <= 3n^3 + n.

    Raises:
        ValueError: If the trajectory was truncated, in which case the budget cannot be assessed.
    """
    if trajectory.truncated:
        raise ValueError("cannot assess the termination budget of a truncated trajectory")
    bound = default_max_steps(trajectory.n)
    if trajectory.T > bound:
        return _violation("theorem1", trajectory.T, trajectory.T, bound, "T > 3n^3 + n", **context)
    return None


def check_phase_sum_bound(trajectory: Trajectory, phase: PhaseRecord) -> ViolationReport | None:
    """
    L_k(T_{k-1}) + sum over I_k of [L(t + 1) - L(t)] <= nu_k(T_k) diam_k(T_{k-1}).
    """
    analyses = trajectory.analyses
    lhs = phase.L_start + sum((analyses[t].L_next - analyses[t].L for t in phase.I_k), Fraction(0))
    rhs = phase.nu_k_end * phase.diameter_start
    if lhs > rhs:
        return _violation(
            "sum-bound", phase.start, lhs, rhs, "L(start) + total increment > nu_k(T_k) diam(start)", phase=phase.k
        )
    return None


def check_singular_sum_bound(trajectory: Trajectory) -> ViolationReport | None:
    """
    For a run that ends in consensus of all agents: L(0) + sum over I of [L(t + 1) - L(t)] <= n^2 eps.
    """
    analyses = trajectory.analyses
    final = analyses[-1]
    if analyses[0].lo != 0 or final.lo != 0 or final.U_size != trajectory.n:
        return None
    lhs = analyses[0].L + sum((analyses[t].L_next - analyses[t].L for t in trajectory.I_set), Fraction(0))
    rhs = trajectory.n**2 * trajectory.epsilon
    if lhs > rhs:
        return _violation("sum-bound", 0, lhs, rhs, "L(0) + total increment > n^2 eps", phase=1)
    return None


def check_telescoping(trajectory: Trajectory, phase: PhaseRecord) -> ViolationReport | None:
    """
    The nu increments of a phase add up to nu_k(T_k) - nu_k(T_{k-1}).
    """
    analyses = trajectory.analyses
    lhs = sum(analyses[t].nu_next - analyses[t].nu for t in (*phase.I_k, *phase.S_k))
    rhs = phase.nu_k_end - analyses[phase.start].nu
    if lhs != rhs:
        return _violation("telescoping", phase.start, lhs, rhs, "nu increments do not telescope", phase=phase.k)
    return None


def run_suite(trajectory: Trajectory, decomposition: PhaseDecomposition | None = None) -> CheckSuiteResult:
    """
    Applies every check at every step where it applies, plus the trajectory- and phase-level budgets.

    Parameters:
    trajectory (Trajectory): A terminated exact trajectory. It is annotated here if it is not yet.
    decomposition (PhaseDecomposition | None): Phase decomposition of the trajectory; computed when omitted.

    Returns:
    CheckSuiteResult: Violations ordered by (t, check_id).
    """
    # pylint: disable=import-outside-toplevel
    from hkcli.kit_phases import decompose, phase_budget_check

    if not trajectory.is_annotated:
        trajectory = annotate(trajectory)
    if decomposition is None:
        decomposition = decompose(trajectory)

    phase_of: dict[int, int] = {}
    for phase in decomposition.phases:
        for t in range(phase.start, max(phase.end, phase.start + 1)):
            phase_of[t] = phase.k

    result = CheckSuiteResult()
    profiles = trajectory.profiles
    for t, analysis in enumerate(trajectory.analyses):
        x_t = profiles[t]
        lo = analysis.lo
        context = {"phase": phase_of.get(t), "step_class": analysis.step_class}

        result.record("L-nonneg", check_lyapunov_nonneg(analysis, **context))
        result.record("x-tilde", check_x_tilde(x_t, analysis, **context))
        if analysis.step_class == StepClass.TERMINAL:
            continue

        x_next = profiles[t + 1]
        result.record("order", check_order(x_next.opinions, t + 1, **context))
        result.record("extremes", check_extremes(x_t, x_next, **context))
        result.record("lemma2", check_lemma2(x_t, x_next, **context))
        if lo > 0:
            result.record("lemma2", check_lemma2(x_t, x_next, lo, **context))
        result.record("cluster-coincide", check_cluster_coincide(x_t, x_next, lo, **context))
        result.record("equal-stay-equal", check_equal_stay_equal(x_t, x_next, **context))
        result.record("eq1", check_eq1(x_t, x_next, lo, **context))

        if analysis.nu_next > analysis.nu:
            result.record("increment-cap", check_increment_cap(x_t, x_next, lo, **context))
        if analysis.step_class == StepClass.D:
            result.record("lemma3", check_lemma3(x_t, lo, **context))
            result.record("decrement-floor", check_decrement_floor(x_t, x_next, lo, **context))
            ratio = (analysis.L - analysis.L_next) / decrement_floor(analysis.epsilon, analysis.n_active)
            result.observe_decrement_ratio(ratio)

    result.record("L0-bound", check_initial_bound(profiles[0], trajectory.analyses[0].lo, phase=1))
    result.record("theorem1", check_total_budget(trajectory))
    for phase in decomposition.phases:
        result.record("sum-bound", check_phase_sum_bound(trajectory, phase))
        result.record("telescoping", check_telescoping(trajectory, phase))
    if len(decomposition.phases) == 1:
        result.record("sum-bound", check_singular_sum_bound(trajectory))

    result.merge(phase_budget_check(decomposition))
    result.canonicalize()
    return result


def replay(records: Sequence[dict], epsilon: Fraction | None = None) -> Trajectory:
    """
    Rebuilds a trajectory from JSON Lines records, checking that every record is the HK successor of the previous one.

    Parameters:
    records (Sequence[dict]): Records {"t", "epsilon", "x"} in time order.
    epsilon (Fraction | None): Confidence bound; overrides the per-record value when given.

    Returns:
    Trajectory: The replayed trajectory, flagged as truncated when the last record is not a fixed point.

    Raises:
        ValueError: If the records are empty or malformed.
        DynamicsMismatchError: If a record is unsorted or is not the successor of the record before it.
    """
    if not records:
        raise ValueError("trajectory is empty")

    profiles: list[OpinionProfile] = []
    for expected_t, record in enumerate(records):
        if "x" not in record or not isinstance(record["x"], list):
            raise ValueError(f"record {expected_t}: missing opinion list 'x'")
        t = record.get("t", expected_t)
        if t != expected_t:
            raise ValueError(f"record {expected_t}: expected t={expected_t}, got {t}")

        eps = epsilon
        if eps is None:
            if "epsilon" not in record:
                raise ValueError(f"record {expected_t}: missing 'epsilon' (pass it explicitly)")
            eps = parse_rational(record["epsilon"])

        opinions = [parse_rational(x) for x in record["x"]]
        if not opinions:
            raise ValueError(f"record {expected_t}: empty opinion list")
        unsorted = check_order(opinions, t)
        if unsorted is not None:
            raise DynamicsMismatchError(f"record t={t}: {unsorted.message}")

        profile = OpinionProfile(epsilon=eps, opinions=tuple(opinions), time=t)
        if profiles:
            prev = profiles[-1]
            if profile.epsilon != prev.epsilon:
                raise DynamicsMismatchError(f"record t={t}: epsilon changed")
            if profile.opinions == prev.opinions:
                raise DynamicsMismatchError(f"record t={t}: trajectory continues past its fixed point")
            if step(prev).opinions != profile.opinions:
                raise DynamicsMismatchError(f"record t={t} is not the successor of record t={prev.time}")
        profiles.append(profile)

    return Trajectory(profiles=tuple(profiles), truncated=not is_terminated(profiles[-1]))
