"""
afd-explorer - Quantity Parsing

Scenario files may spell sizes and rates with units. Capacities use binary
prefixes when written as KiB/MiB/GiB, bandwidths and FLOP rates use decimal
prefixes. Plain numbers pass through untouched.
"""
import re
from typing import Annotated

from pydantic import BeforeValidator

_QUANTITY = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*([A-Za-z/]*)\s*$")

_BYTE_UNITS = {
    "": 1,
    "b": 1,
    "kb": 1e3,
    "mb": 1e6,
    "gb": 1e9,
    "tb": 1e12,
    "kib": 2**10,
    "mib": 2**20,
    "gib": 2**30,
    "tib": 2**40,
}

_FLOP_UNITS = {
    "": 1,
    "flops": 1,
    "kflops": 1e3,
    "mflops": 1e6,
    "gflops": 1e9,
    "tflops": 1e12,
    "pflops": 1e15,
}

_TIME_UNITS = {
    "": 1,
    "s": 1,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
}


def _parse(value, units: dict[str, float], strip_rate: bool = False):
    if not isinstance(value, str):
        return value
    match = _QUANTITY.match(value)
    if not match:
        raise ValueError(f"cannot parse quantity {value!r}")
    number, unit = match.groups()
    unit = unit.lower()
    if strip_rate and unit.endswith("/s"):
        unit = unit[:-2]
    if unit not in units:
        raise ValueError(f"unknown unit {unit!r} in {value!r}")
    return float(number) * units[unit]


def parse_bytes(value):
    return _parse(value, _BYTE_UNITS)


def parse_bandwidth(value):
    return _parse(value, _BYTE_UNITS, strip_rate=True)


def parse_flops(value):
    return _parse(value, _FLOP_UNITS)


def parse_seconds(value):
    return _parse(value, _TIME_UNITS)


ByteSize = Annotated[float, BeforeValidator(parse_bytes)]
Bandwidth = Annotated[float, BeforeValidator(parse_bandwidth)]
FlopRate = Annotated[float, BeforeValidator(parse_flops)]
Seconds = Annotated[float, BeforeValidator(parse_seconds)]
