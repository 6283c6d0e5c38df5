"""
A module for building initial opinion profiles, either from a parametric family or from a JSON file.
"""

from __future__ import annotations

import json
import os
import random
from enum import StrEnum
from fractions import Fraction
from pathlib import Path
from typing import TextIO

from click import secho
from pydantic import BaseModel, ConfigDict, Field, model_validator

from hkcli import constants
from hkcli.kit_dynamics import OpinionProfile
from hkcli.utils import Rational, format_rational, parse_rational


class InstanceKind(StrEnum):
    UNIFORM_RANDOM = "uniform_random"
    EQUIDISTANT = "equidistant"
    TWO_CLUSTER = "two_cluster"
    DUMBBELL = "dumbbell"
    FROM_FILE = "from_file"


class InstanceSpec(BaseModel):
    """
    Parameters of an instance family.

    `spacing` and `gap` default to epsilon. `sizes` gives the block sizes (a, b) of `two_cluster` and `dumbbell`.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: InstanceKind
    n: int | None = Field(default=None, ge=1)
    epsilon: Rational = Fraction(1)
    spacing: Rational | None = None
    gap: Rational | None = None
    sizes: tuple[int, int] | None = None
    base: Rational = Fraction(0)
    seed: int = 0
    max_denominator: int = Field(default=constants.DEFAULT_MAX_DENOMINATOR, ge=1)
    path: Path | None = None

    @model_validator(mode="after")
    def _check_parameters(self) -> InstanceSpec:
        if self.kind == InstanceKind.FROM_FILE:
            if self.path is None:
                raise ValueError("from_file instances need a path")
            return self

        if self.n is None:
            raise ValueError(f"{self.kind} instances need n")
        if self.kind == InstanceKind.DUMBBELL and self.n < 2:
            raise ValueError("dumbbell instances need at least two agents")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {format_rational(self.epsilon)}")
        if self.spacing is not None and self.spacing < 0:
            raise ValueError("spacing must be non-negative")
        if self.gap is not None and self.gap < 0:
            raise ValueError("gap must be non-negative")
        if self.sizes is not None:
            a, b = self.sizes
            if a < 1 or b < 1:
                raise ValueError("block sizes must be positive")
            if self.kind == InstanceKind.TWO_CLUSTER and a + b != self.n:
                raise ValueError(f"block sizes {a} + {b} do not add up to n={self.n}")
            if self.kind == InstanceKind.DUMBBELL and a + b > self.n:
                raise ValueError(f"block sizes {a} + {b} exceed n={self.n}")
        return self

    def with_n(self, n: int, seed: int | None = None) -> InstanceSpec:
        """
        Returns a copy for another n (and seed). Default block sizes are recomputed for the new n.
        """
        update = {"n": n}
        if seed is not None:
            update["seed"] = seed
        return InstanceSpec.model_validate(self.model_dump() | update)


def _block_sizes(spec: InstanceSpec) -> tuple[int, int]:
    if spec.sizes is not None:
        return spec.sizes
    if spec.kind == InstanceKind.TWO_CLUSTER:
        return spec.n - spec.n // 2, spec.n // 2
    # Dumbbell: a quarter of the agents in each bell, the rest on the bridge.
    bell = max(1, spec.n // 4)
    return bell, bell


def _uniform_random(spec: InstanceSpec) -> list[Fraction]:
    rng = random.Random(spec.seed)
    width = spec.n * spec.epsilon
    opinions = []
    for _ in range(spec.n):
        q = rng.randint(1, spec.max_denominator)
        k = rng.randint(0, q)
        opinions.append(spec.base + width * Fraction(k, q))
    return sorted(opinions)


def _equidistant(spec: InstanceSpec) -> list[Fraction]:
    spacing = spec.epsilon if spec.spacing is None else spec.spacing
    return [spec.base + i * spacing for i in range(spec.n)]


def _two_cluster(spec: InstanceSpec) -> list[Fraction]:
    a, b = _block_sizes(spec)
    gap = spec.epsilon if spec.gap is None else spec.gap
    return [spec.base] * a + [spec.base + gap] * b


def _dumbbell(spec: InstanceSpec) -> list[Fraction]:
    a, b = _block_sizes(spec)
    spacing = spec.epsilon if spec.spacing is None else spec.spacing
    bridge = spec.n - a - b
    # The bridge occupies base + spacing, ..., base + bridge * spacing; the right bell sits one spacing further.
    right = spec.base + (bridge + 1) * spacing
    return [spec.base] * a + [spec.base + i * spacing for i in range(1, bridge + 1)] + [right] * b


def generate(spec: InstanceSpec) -> OpinionProfile:
    """
    Builds the initial profile x(0) of an instance family.

    Random instances are reproducible: the same InstanceSpec (seed included) always produces the same profile.
    """
    if spec.kind == InstanceKind.FROM_FILE:
        return ingest(spec.path)

    builders = {
        InstanceKind.UNIFORM_RANDOM: _uniform_random,
        InstanceKind.EQUIDISTANT: _equidistant,
        InstanceKind.TWO_CLUSTER: _two_cluster,
        InstanceKind.DUMBBELL: _dumbbell,
    }
    opinions = builders[spec.kind](spec)
    return OpinionProfile(epsilon=spec.epsilon, opinions=tuple(opinions))


def _parse_document(data: object, source: str) -> OpinionProfile:
    if not isinstance(data, dict):
        raise ValueError(f"{source}: expected a json object with 'epsilon' and 'opinions'")
    if "epsilon" not in data or "opinions" not in data:
        raise ValueError(f"{source}: missing 'epsilon' or 'opinions'")
    if not isinstance(data["opinions"], list):
        raise ValueError(f"{source}: 'opinions' must be a list")

    epsilon = parse_rational(data["epsilon"])
    if not epsilon > 0:
        raise ValueError(f"{source}: epsilon must be positive, got {format_rational(epsilon)}")
    opinions = [parse_rational(x) for x in data["opinions"]]
    if not opinions:
        raise ValueError(f"{source}: 'opinions' must not be empty")

    ordered = sorted(opinions)
    if ordered != opinions:
        secho(f"Warning: opinions in {source} were not sorted and have been reordered.", fg="yellow", err=True)
    return OpinionProfile(epsilon=epsilon, opinions=tuple(ordered))


def ingest(source: Path | str | TextIO) -> OpinionProfile:
    """
    Reads `{"epsilon": ..., "opinions": [...]}` into an exact profile.

    Values may be "p/q" strings, integers or decimals; decimals are read exactly ("0.1" is 1/10). Unsorted opinions
    are sorted, with a warning.

    Raises:
        ValueError: If the document is malformed, epsilon is not positive or the opinion list is empty.
    """
    if isinstance(source, str | Path):
        name = str(source)
        with open(source, encoding="utf-8") as file:
            text = file.read()
    else:
        name = getattr(source, "name", "<stream>")
        text = source.read()

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"{name}: invalid json ({e.msg})") from e
    return _parse_document(data, name)


def emit(profile: OpinionProfile) -> dict:
    """
    The JSON document `ingest` reads back into the same profile.
    """
    return {
        "epsilon": format_rational(profile.epsilon),
        "opinions": [format_rational(x) for x in profile.opinions],
    }


def dump(profile: OpinionProfile, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(emit(profile), file)
        file.write("\n")


def resolve_max_denominator(flag: int | None, configured: int) -> int:
    """
    Picks the denominator cap: command-line flag, then the HK_MAX_DENOM environment variable, then the config.
    """
    if flag is not None:
        return flag
    env_value = os.getenv(constants.ENV_MAX_DENOM)
    if env_value:
        try:
            return int(env_value)
        except ValueError as e:
            raise ValueError(f"{constants.ENV_MAX_DENOM} must be an integer, got {env_value!r}") from e
    return configured
