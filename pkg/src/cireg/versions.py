"""Ordering for dotted version strings.

Real resource metadata mixes styles: kernel releases like ``3.10.0-1160``,
scheduler builds like ``20.11.8``, package tags like ``2021b`` or ``1.1-rc1``.
The comparison here is deliberately simple and total: split on ``.`` and
``-``, compare segment pairs numerically when both sides are pure digits and
bytewise otherwise, and let a strict prefix order first.
"""

from __future__ import annotations

import re

from .errors import FormatError

_SPLIT = re.compile(r"[.-]")

LESS = -1
EQUAL = 0
GREATER = 1


def split_segments(version: str) -> list[str]:
    """Split a version string into its comparison segments.

    Raises FormatError for the empty string; any other string is accepted.
    """
    if not isinstance(version, str) or version == "":
        raise FormatError("version string must be non-empty")
    return _SPLIT.split(version)


def _is_digits(segment: str) -> bool:
    # str.isdigit alone admits unicode digits; the numeric rule is ASCII only.
    return segment.isascii() and segment.isdigit() and segment != ""


def _compare_segment(a: str, b: str) -> int:
    if a == b:
        return EQUAL
    if _is_digits(a) and _is_digits(b):
        ia, ib = int(a), int(b)
        if ia == ib:
            return EQUAL
        return LESS if ia < ib else GREATER
    # Bytewise comparison; UTF-8 byte order equals code point order.
    return LESS if a < b else GREATER


def compare_versions(a: str, b: str) -> int:
    """Return -1, 0 or 1 ordering two version strings.

    The order is total: every pair of non-empty strings compares. Distinct
    strings may compare equal when digit segments differ only in leading
    zeros ("1.01" vs "1.1").
    """
    seg_a = split_segments(a)
    seg_b = split_segments(b)
    for x, y in zip(seg_a, seg_b):
        outcome = _compare_segment(x, y)
        if outcome != EQUAL:
            return outcome
    if len(seg_a) == len(seg_b):
        return EQUAL
    return LESS if len(seg_a) < len(seg_b) else GREATER
