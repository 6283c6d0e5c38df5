"""
A module for evolving scalar Hegselmann-Krause dynamics.

Every agent holds a scalar opinion and, at each step, moves to the average opinion of all agents within the
confidence bound `epsilon` of itself (itself included). Opinions are kept as exact `Fraction`s so that
termination, i.e. x(t + 1) == x(t), can be decided exactly. A float mode exists for speed comparisons only.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate

from hkcli.utils import format_rational


Opinion = Fraction | float


class DynamicsMismatchError(ValueError):
    """
    Raised when a profile is not the HK successor of the profile before it.
    """


@dataclass(frozen=True)
class OpinionProfile:
    """
    The opinions of all agents at one time instance, sorted in non-decreasing order.

    Attributes:
    epsilon (Fraction): Confidence bound, in opinion units.
    opinions (tuple): Opinions x_0(t) <= ... <= x_{n-1}(t).
    time (int): Time index t.
    """

    epsilon: Opinion
    opinions: tuple[Opinion, ...]
    time: int = 0

    def __post_init__(self):
        # Plain ints are promoted so that integer profiles stay in exact mode.
        if isinstance(self.epsilon, int) and not isinstance(self.epsilon, bool):
            object.__setattr__(self, "epsilon", Fraction(self.epsilon))
        object.__setattr__(
            self,
            "opinions",
            tuple(Fraction(x) if isinstance(x, int) and not isinstance(x, bool) else x for x in self.opinions),
        )

        if len(self.opinions) == 0:
            raise ValueError("profile must contain at least one opinion")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {format_rational(self.epsilon)}")
        if self.time < 0:
            raise ValueError(f"time must be non-negative, got {self.time}")
        for i in range(len(self.opinions) - 1):
            if self.opinions[i] > self.opinions[i + 1]:
                raise ValueError(f"opinions must be sorted: x[{i}] > x[{i + 1}]")

    @property
    def n(self) -> int:
        return len(self.opinions)

    @property
    def min(self) -> Opinion:
        return self.opinions[0]

    @property
    def max(self) -> Opinion:
        return self.opinions[-1]

    @property
    def diameter(self) -> Opinion:
        return self.opinions[-1] - self.opinions[0]

    @property
    def is_exact(self) -> bool:
        return isinstance(self.epsilon, Fraction) and all(isinstance(x, Fraction) for x in self.opinions)

    def with_opinions(self, opinions: tuple[Opinion, ...], time: int | None = None) -> OpinionProfile:
        return OpinionProfile(
            epsilon=self.epsilon,
            opinions=opinions,
            time=self.time if time is None else time,
        )


@dataclass(frozen=True)
class NeighborInterval:
    """
    Neighbor set N_i(t) of an agent, as an inclusive index range into the sorted profile.
    """

    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, index: int) -> bool:
        return self.lo <= index <= self.hi


@dataclass(frozen=True)
class TerminationResult:
    """
    Outcome of a simulation.

    Attributes:
    T (int): Termination time, or the number of steps taken when truncated.
    steady_state (OpinionProfile): x(T).
    truncated (bool): True iff no fixed point was reached within the step budget.
    """

    T: int  # noqa: N815
    steady_state: OpinionProfile
    truncated: bool


@dataclass(frozen=True)
class Trajectory:
    """
    Profiles x(0), ..., x(T) of one run. `analyses` and the step sets are filled by `kit_lyapunov.annotate`.
    """

    profiles: tuple[OpinionProfile, ...]
    truncated: bool = False

    # Per-time instrumentation records, t = 0..T (empty until annotated).
    analyses: tuple = ()

    # Partition of the steps {0, ..., T - 1} into merge (I), decrease (D) and split (S) steps.
    I_set: frozenset[int] = field(default_factory=frozenset)  # noqa: N815
    D_set: frozenset[int] = field(default_factory=frozenset)  # noqa: N815
    S_set: frozenset[int] = field(default_factory=frozenset)  # noqa: N815

    @property
    def T(self) -> int:  # noqa: N802
        return len(self.profiles) - 1

    @property
    def n(self) -> int:
        return self.profiles[0].n

    @property
    def epsilon(self) -> Opinion:
        return self.profiles[0].epsilon

    @property
    def is_annotated(self) -> bool:
        return len(self.analyses) == len(self.profiles)


def default_max_steps(n: int) -> int:
    """
    The termination budget 3n^3 + n. Every exact simulation must finish within it.
    """
    return 3 * n**3 + n


def neighbors(profile: OpinionProfile, i: int) -> NeighborInterval:
    """
    Returns the neighbor interval of agent `i`: every j with |x_j - x_i| <= epsilon.

    Since the profile is sorted, the neighbors form a contiguous range that always contains `i`.

    Raises:
        IndexError: If `i` is not an agent index.
    """
    if not 0 <= i < profile.n:
        raise IndexError(f"agent index {i} out of range for {profile.n} agents")

    x = profile.opinions
    lo = bisect_left(x, x[i] - profile.epsilon, 0, i)
    hi = bisect_right(x, x[i] + profile.epsilon, i) - 1
    return NeighborInterval(lo=lo, hi=hi)


def all_neighbors(profile: OpinionProfile) -> list[NeighborInterval]:
    """
    Computes the neighbor intervals of all agents in a single two-pointer sweep.

    Both interval ends are non-decreasing in the agent index, so each pointer only moves forward and the whole
    sweep takes O(n) comparisons.
    """
    x = profile.opinions
    eps = profile.epsilon
    n = profile.n

    res = []
    lo = 0
    hi = 0
    for i in range(n):
        while x[i] - x[lo] > eps:
            lo += 1
        hi = max(hi, i)
        while hi + 1 < n and x[hi + 1] - x[i] <= eps:
            hi += 1
        res.append(NeighborInterval(lo=lo, hi=hi))
    return res


def naive_neighbors(profile: OpinionProfile) -> list[NeighborInterval]:
    """
    O(n^2) pairwise neighbor computation. Used as an oracle for `all_neighbors`.
    """
    x = profile.opinions
    res = []
    for i in range(profile.n):
        members = [j for j in range(profile.n) if abs(x[j] - x[i]) <= profile.epsilon]
        res.append(NeighborInterval(lo=min(members), hi=max(members)))
    return res


def step(profile: OpinionProfile) -> OpinionProfile:
    """
    Performs one synchronous HK update.

    In exact mode the neighbor sums come from prefix sums, so a step costs O(n) rational additions. The result is
    checked to be sorted: order preservation is a property of the dynamics, so a failure here is a bug.
    """
    intervals = all_neighbors(profile)
    x = profile.opinions

    if profile.is_exact:
        prefix = [Fraction(0), *accumulate(x)]
        opinions = tuple((prefix[nb.hi + 1] - prefix[nb.lo]) / nb.size for nb in intervals)
        for i in range(len(opinions) - 1):
            if opinions[i] > opinions[i + 1]:
                raise AssertionError(f"unexpected: order not preserved at t={profile.time + 1}, agent {i}")
    else:
        # Float mode: correctly rounded window sums. Rounding can swap near-equal neighbors, so re-sort.
        opinions = tuple(sorted(math.fsum(x[nb.lo : nb.hi + 1]) / nb.size for nb in intervals))

    return profile.with_opinions(opinions, time=profile.time + 1)


def _same_opinions(a: OpinionProfile, b: OpinionProfile, tolerance: float | None) -> bool:
    if tolerance is None:
        return a.opinions == b.opinions
    return all(abs(u - v) <= tolerance for u, v in zip(a.opinions, b.opinions, strict=True))


def is_terminated(profile: OpinionProfile, tolerance: float | None = None) -> bool:
    """
    True iff one more step leaves every opinion unchanged (within `tolerance` in float mode).
    """
    return _same_opinions(profile, step(profile), tolerance)


def simulate(
    initial: OpinionProfile,
    max_steps: int | None = None,
    tolerance: float | None = None,
) -> tuple[Trajectory, TerminationResult]:
    """
    Iterates the dynamics from `initial` until a fixed point or until `max_steps` steps were taken.

    Parameters:
    initial (OpinionProfile): x(0). Its `time` is reset to 0.
    max_steps (int | None): Step budget. Defaults to 3n^3 + n.
    tolerance (float | None): Equality tolerance for float mode. Must be None for exact profiles.

    Returns:
    tuple[Trajectory, TerminationResult]: Profiles x(0), ..., x(T) and the termination summary. When the budget is
    exhausted the trajectory ends at x(max_steps) and the result is flagged as truncated.
    """
    if max_steps is None:
        max_steps = default_max_steps(initial.n)
    if max_steps < 0:
        raise ValueError(f"max_steps must be non-negative, got {max_steps}")
    if tolerance is not None and not tolerance >= 0:
        raise ValueError(f"tolerance must be non-negative, got {tolerance}")

    cur = initial if initial.time == 0 else initial.with_opinions(initial.opinions, time=0)
    profiles = [cur]
    truncated = False
    while True:
        nxt = step(cur)
        if _same_opinions(cur, nxt, tolerance):
            break
        if cur.time == max_steps:
            truncated = True
            break
        profiles.append(nxt)
        cur = nxt

    trajectory = Trajectory(profiles=tuple(profiles), truncated=truncated)
    result = TerminationResult(T=cur.time, steady_state=cur, truncated=truncated)
    return trajectory, result


def to_float(profile: OpinionProfile) -> OpinionProfile:
    return OpinionProfile(
        epsilon=float(profile.epsilon),
        opinions=tuple(float(x) for x in profile.opinions),
        time=profile.time,
    )


def scale(profile: OpinionProfile, c: Fraction) -> OpinionProfile:
    """
    Returns (c * x, c * epsilon). `c` must be positive to keep the profile sorted.
    """
    if c <= 0:
        raise ValueError("scale factor must be positive")
    return OpinionProfile(
        epsilon=profile.epsilon * c,
        opinions=tuple(x * c for x in profile.opinions),
        time=profile.time,
    )


def translate(profile: OpinionProfile, c: Fraction) -> OpinionProfile:
    return profile.with_opinions(tuple(x + c for x in profile.opinions))


def trajectory_records(trajectory: Trajectory) -> list[dict]:
    """
    One JSON Lines record per time instance: {"t": t, "epsilon": "p/q", "x": ["p/q", ...]}.
    """
    epsilon = format_rational(trajectory.epsilon)
    return [
        {"t": profile.time, "epsilon": epsilon, "x": [format_rational(x) for x in profile.opinions]}
        for profile in trajectory.profiles
    ]
