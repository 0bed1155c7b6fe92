"""Dotted-path resolution over parsed JSON documents.

Paths address nested object keys ("operating_system.kernel_version") and
traverse lists implicitly with existential fan-out: resolving
"software.packages.name" yields the name of every package. Consumers decide
what a set of leaves means for their operator.
"""

from __future__ import annotations

import re
from typing import Any

PATH_RE = re.compile(r"[a-z0-9_]+(\.[a-z0-9_]+)*\Z")


def is_valid_path(path: str) -> bool:
    return isinstance(path, str) and PATH_RE.match(path) is not None


def resolve_path(doc: Any, path: str) -> list[Any]:
    """Return every value the dotted path reaches in the document.

    Lists encountered mid-path fan out over their elements; a terminal list
    is flattened one level so its elements are the leaves. An unreachable
    path yields an empty list. JSON null is treated as absent.
    """
    return resolve_segments(doc, path.split("."))


def resolve_segments(doc: Any, segments: list[str] | tuple[str, ...]) -> list[Any]:
    """resolve_path over an already-split path; saves the split in hot loops."""
    # Most paths never meet a list, so descend plain dicts directly and only
    # fall back to the fan-out walk from the first list encountered.
    node = doc
    for index, segment in enumerate(segments):
        if isinstance(node, dict):
            node = node.get(segment)
            if node is None:
                return []
        elif isinstance(node, list):
            return _fan_out([node], segments[index:])
        else:
            return []
    if isinstance(node, list):
        return [v for v in node if v is not None]
    return [node]


def _fan_out(values: list[Any], segments: list[str] | tuple[str, ...]) -> list[Any]:
    for segment in segments:
        next_values: list[Any] = []
        for value in values:
            items = value if isinstance(value, list) else [value]
            for item in items:
                if isinstance(item, dict):
                    child = item.get(segment)
                    if child is not None:
                        next_values.append(child)
        values = next_values
        if not values:
            return []
    leaves: list[Any] = []
    for value in values:
        if isinstance(value, list):
            leaves.extend(v for v in value if v is not None)
        else:
            leaves.append(value)
    return leaves
