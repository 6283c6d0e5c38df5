"""
A module for computing the linear Lyapunov function of scalar HK dynamics and its auxiliary quantities.

All quantities are computed over the *active* agents `lo..n-1`. Agents below `lo` belong to leftmost clusters that
have split off from the rest (see `kit_phases`); they never move again and are excluded from the accounting. With
`lo = 0` every quantity is the global one.

Notation (0-based indices into the sorted profile):
- U(t): the agents sharing the minimum active opinion, i.e. `lo..lo+|U|-1`.
- nu(t) = |U(t)| + 1. The agent at index `lo + |U|` is the smallest agent at the second-leftmost opinion.
- L(t) = |U| (x_max - x_lo) + (x_max - x_nu), and 0 when all active agents agree.
- M(t): agents of N_lo(t) other than U(t) and the nu agent; m = |M|, x_tilde their mean.
- d(t) = x_nu - x_lo.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, replace
from enum import StrEnum

from hkcli.kit_dynamics import (
    DynamicsMismatchError,
    Opinion,
    OpinionProfile,
    Trajectory,
    neighbors,
    step,
)
from hkcli.utils import format_rational


class StepClass(StrEnum):
    """
    Classification of a step t -> t + 1.
    """

    # nu grows: at least one agent merges into the leftmost cluster.
    I = "I"  # noqa: E741
    # nu stays: the Lyapunov function must drop by at least eps / (3 n).
    D = "D"
    # The step separates the leftmost cluster from everything else by more than eps.
    S = "S"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class StepAnalysis:
    """
    Instrumentation record of the profile at time `t` and of the step to `t + 1`.

    The `*_next` fields are evaluated on x(t + 1) over the same active agents as x(t), which is what the step-wise
    inequalities compare against. They are None for the terminal record.
    """

    t: int
    epsilon: Opinion
    lo: int
    n_active: int

    U_size: int  # noqa: N815
    nu: int
    L: Opinion
    M_set: tuple[int, ...]  # noqa: N815
    m: int
    x_tilde: Opinion | None
    d: Opinion | None
    witness_q: int | None
    step_class: StepClass

    U_size_next: int | None = None  # noqa: N815
    nu_next: int | None = None
    L_next: Opinion | None = None
    d_next: Opinion | None = None

    @property
    def nu_index(self) -> int | None:
        """
        Index of the nu agent, or None when all active agents agree.
        """
        return None if self.d is None else self.lo + self.U_size


def _check_lo(profile: OpinionProfile, lo: int) -> None:
    if not 0 <= lo < profile.n:
        raise IndexError(f"active range start {lo} out of range for {profile.n} agents")


def leftmost_cluster(profile: OpinionProfile, lo: int = 0) -> tuple[int, int]:
    """
    Returns (|U|, nu) for the active agents `lo..n-1`.

    Examples (lo = 0):
    (0, 0, 1, 2) -> (2, 3)
    (c, c, c) -> (3, 4)
    """
    _check_lo(profile, lo)
    x = profile.opinions
    u_size = bisect_right(x, x[lo], lo) - lo
    return u_size, u_size + 1


def second_gap(profile: OpinionProfile, lo: int = 0) -> Opinion | None:
    """
    Returns d = x_nu - x_lo, or None when every active agent shares one opinion.
    """
    u_size, _ = leftmost_cluster(profile, lo)
    if lo + u_size == profile.n:
        return None
    return profile.opinions[lo + u_size] - profile.opinions[lo]


def lyapunov_value(profile: OpinionProfile, lo: int = 0) -> Opinion:
    """
    Returns L = |U| (x_max - x_lo) + (x_max - x_nu) over the active agents, or 0 at consensus.
    """
    u_size, _ = leftmost_cluster(profile, lo)
    x = profile.opinions
    if lo + u_size == profile.n:
        return x[lo] - x[lo]  # zero of the profile's number type
    x_max = x[-1]
    return u_size * (x_max - x[lo]) + (x_max - x[lo + u_size])


def active_diameter(profile: OpinionProfile, lo: int = 0) -> Opinion:
    _check_lo(profile, lo)
    return profile.opinions[-1] - profile.opinions[lo]


def is_split(profile: OpinionProfile, lo: int = 0) -> bool:
    """
    True iff the leftmost active cluster is more than epsilon away from every other active agent.

    The test is strict: a gap of exactly epsilon keeps the clusters neighbors.
    """
    d = second_gap(profile, lo)
    return d is not None and d > profile.epsilon


def peel_isolated(profile: OpinionProfile, lo: int = 0) -> int:
    """
    Advances `lo` past every isolated leftmost cluster, one cluster after another.

    An isolated cluster only averages with itself, so it never moves again. A consensus active set is never peeled.
    """
    while is_split(profile, lo):
        u_size, _ = leftmost_cluster(profile, lo)
        lo += u_size
    return lo


def _smallest_outside(outer_lo: int, outer_hi: int, inner_lo: int, inner_hi: int) -> int | None:
    # Smallest index of [outer_lo, outer_hi] \ [inner_lo, inner_hi].
    if outer_lo < inner_lo:
        return outer_lo
    if outer_hi > inner_hi:
        return max(outer_lo, inner_hi + 1)
    return None


def analyze_step(
    x_t: OpinionProfile,
    x_next: OpinionProfile | None = None,
    lo: int = 0,
    verify_successor: bool = True,
) -> StepAnalysis:
    """
    Computes the instrumentation record of the step x_t -> x_next over the active agents `lo..n-1`.

    The step is classified as S when it leaves the leftmost cluster more than epsilon away from the other active
    agents (this takes precedence), as I when nu grows, and as D otherwise. Passing `x_next=None` produces the
    terminal record.

    Raises:
        DynamicsMismatchError: If `verify_successor` is set and x_next is not step(x_t).
    """
    if x_next is not None and verify_successor:
        expected = step(x_t)
        if x_next.epsilon != x_t.epsilon or x_next.opinions != expected.opinions:
            raise DynamicsMismatchError(
                f"profile at t={x_next.time} is not the successor of the profile at t={x_t.time}"
            )

    x = x_t.opinions
    eps = x_t.epsilon
    u_size, nu = leftmost_cluster(x_t, lo)
    lyap = lyapunov_value(x_t, lo)

    d = None
    m_set: tuple[int, ...] = ()
    x_tilde = None
    witness_q = None
    if lo + u_size < x_t.n:
        nu_index = lo + u_size
        d = x[nu_index] - x[lo]

        n_first = neighbors(x_t, lo)
        n_nu = neighbors(x_t, nu_index)
        m_set = tuple(range(nu_index + 1, n_first.hi + 1))
        if m_set:
            x_tilde = sum(x[i] for i in m_set) / len(m_set)
        witness_q = _smallest_outside(n_nu.lo, n_nu.hi, n_first.lo, n_first.hi)

    if x_next is None:
        return StepAnalysis(
            t=x_t.time,
            epsilon=eps,
            lo=lo,
            n_active=x_t.n - lo,
            U_size=u_size,
            nu=nu,
            L=lyap,
            M_set=m_set,
            m=len(m_set),
            x_tilde=x_tilde,
            d=d,
            witness_q=witness_q,
            step_class=StepClass.TERMINAL,
        )

    u_size_next, nu_next = leftmost_cluster(x_next, lo)
    d_next = second_gap(x_next, lo)
    if d_next is not None and d_next > eps:
        step_class = StepClass.S
    elif nu_next > nu:
        step_class = StepClass.I
    else:
        step_class = StepClass.D

    return StepAnalysis(
        t=x_t.time,
        epsilon=eps,
        lo=lo,
        n_active=x_t.n - lo,
        U_size=u_size,
        nu=nu,
        L=lyap,
        M_set=m_set,
        m=len(m_set),
        x_tilde=x_tilde,
        d=d,
        witness_q=witness_q,
        step_class=step_class,
        U_size_next=u_size_next,
        nu_next=nu_next,
        L_next=lyapunov_value(x_next, lo),
        d_next=d_next,
    )


def annotate(trajectory: Trajectory) -> Trajectory:
    """
    Analyzes every step of a terminated trajectory and partitions the steps into I, D and S.

    Isolated leftmost clusters are peeled off at every time instance before the step is analyzed, so a step is
    always analyzed over the agents that are still interacting.

    Raises:
        ValueError: If the trajectory was truncated before termination.
    """
    if trajectory.truncated:
        raise ValueError("cannot annotate a truncated trajectory")

    profiles = trajectory.profiles
    analyses = []
    lo = 0
    for t, x_t in enumerate(profiles):
        lo = peel_isolated(x_t, lo)
        x_next = profiles[t + 1] if t + 1 < len(profiles) else None
        analyses.append(analyze_step(x_t, x_next, lo=lo, verify_successor=False))

    def steps_of(step_class: StepClass) -> frozenset[int]:
        return frozenset(a.t for a in analyses if a.step_class == step_class)

    return replace(
        trajectory,
        analyses=tuple(analyses),
        I_set=steps_of(StepClass.I),
        D_set=steps_of(StepClass.D),
        S_set=steps_of(StepClass.S),
    )


def _optional(value: Opinion | None) -> str | None:
    return None if value is None else format_rational(value)


def annotated_records(trajectory: Trajectory) -> list[dict]:
    """
    Flattens an annotated trajectory into JSON-ready records, one per time instance.
    """
    records = []
    for profile, analysis in zip(trajectory.profiles, trajectory.analyses, strict=True):
        records.append(
            {
                "t": analysis.t,
                "x": [format_rational(x) for x in profile.opinions],
                "lo": analysis.lo,
                "U_size": analysis.U_size,
                "nu": analysis.nu,
                "L": format_rational(analysis.L),
                "m": analysis.m,
                "d": _optional(analysis.d),
                "class": str(analysis.step_class),
            }
        )
    return records
