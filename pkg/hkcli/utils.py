"""
The `utils` module contains helpers shared across the kit modules: exact rational parsing and formatting,
JSON Lines I/O, config serialization and duration formatting.
"""

import json
from collections.abc import Iterable
from datetime import timedelta
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any

import toml
from pydantic import BeforeValidator, PlainSerializer


def parse_rational(value: Any) -> Fraction:
    """
    Parses a value into an exact rational number.

    Accepted inputs are "p/q" strings, integer strings, finite decimal strings (e.g. "0.1" becomes exactly 1/10),
    ints and Fractions. JSON floats are routed through their shortest decimal representation so that `0.1` read
    from a JSON number also becomes 1/10 instead of the binary float nearest to it.

    Args:
        value (Any): The value to parse.

    Returns:
        Fraction: The parsed rational.

    Raises:
        ValueError: If the value is not a finite rational literal.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"malformed rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        value = repr(value)
    if not isinstance(value, str):
        raise ValueError(f"malformed rational: {value!r}")

    try:
        return Fraction(value.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"malformed rational: {value!r}") from e


def format_rational(value: Fraction | float | int) -> str:
    """
    Formats a rational as "p/q" (or "p" for integers). Floats are written with `repr`.
    """
    if isinstance(value, float):
        return repr(value)
    return str(value)


# Rational field for pydantic models: parsed exactly on input, written back as a string.
Rational = Annotated[
    Fraction,
    BeforeValidator(parse_rational),
    PlainSerializer(format_rational, return_type=str),
]


def read_jsonl(path: Path) -> list[dict]:
    """
    Reads a JSON Lines file. Blank lines are skipped.

    Raises:
        ValueError: If a line is not a JSON object.
    """
    records = []
    with open(path, encoding="utf-8") as file:
        for line_num, line in enumerate(file, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"line {line_num}: invalid json ({e.msg})") from e
            if not isinstance(record, dict):
                raise ValueError(f"line {line_num}: expected a json object")
            records.append(record)
    return records


def write_jsonl(path: Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as file:
        for record in records:
            file.write(json.dumps(record))
            file.write("\n")


def toml_dumps_with_newline(data: dict) -> str:
    toml_str = toml.dumps(data)
    if not toml_str.endswith("\n"):
        toml_str += "\n"
    return toml_str


def format_duration_from_ms(value: float) -> str:
    """
    Formats a duration given in milliseconds into 'H:MM:SS.mmm' or 'M:SS.mmm'.

    Examples:
    >>> format_duration_from_ms(61_500)
    '1:01.500'

    >>> format_duration_from_ms(3_661_000)
    '1:01:01.000'
    """
    time_delta = timedelta(milliseconds=value)
    hours, remainder = divmod(time_delta.seconds, 3600)
    minutes, seconds = divmod(remainder, 60)
    millis = time_delta.microseconds // 1000
    if hours > 0:
        return f"{hours}:{minutes:02d}:{seconds:02d}.{millis:03d}"
    return f"{minutes}:{seconds:02d}.{millis:03d}"
