import os
import time
from collections.abc import Iterable, Iterator, Mapping
from contextlib import contextmanager
from copy import deepcopy
from typing import Any

from circular_pat.ansi_colors import ColorCodes
from circular_pat.logging import get_logger

logger = get_logger(__name__)


def merge_dicts(dict1: dict[str, Any], dict2: dict[str, Any]) -> dict[str, Any]:
    """Merge two dictionaries. Values of dict2 take precedence, dict1 fills in what is missing

    :param dict1: The base dictionary
    :param dict2: Another dictionary
    """

    def merge(a: Any, b: Any):
        if isinstance(b, dict):
            for k, v in b.items():
                if k in a:
                    merge(a[k], v)
                else:
                    a[k] = v
        return a

    return merge(deepcopy(dict2), deepcopy(dict1))


def unflatten_dotted(flat: Mapping[str, Any]) -> dict[str, Any]:
    """Convert flat dotted keys into a nested dictionary

    Example:
    >>> unflatten_dotted({"grid.counts": [8, 8, 8], "geometry": {"kind": "plane"}})
    {'grid': {'counts': [8, 8, 8]}, 'geometry': {'kind': 'plane'}}
    """
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        if isinstance(value, Mapping):
            value = unflatten_dotted(value)
        *parents, leaf = str(key).split(".")
        node = nested
        for parent in parents:
            node = node.setdefault(parent, {})
            if not isinstance(node, dict):
                raise ValueError(f"Key '{key}' conflicts with a scalar value at '{parent}'")
        if isinstance(value, dict) and isinstance(node.get(leaf), dict):
            node[leaf] = merge_dicts(node[leaf], value)
        else:
            node[leaf] = value
    return nested


def flatten_dotted(nested: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Inverse of unflatten_dotted()"""
    flat: dict[str, Any] = {}
    for key, value in nested.items():
        full_key = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten_dotted(value, prefix=f"{full_key}."))
        else:
            flat[full_key] = value
    return flat


def list_items(obj: Iterable[Any], style: str = "-", indent: int = 0) -> str:
    """List items as string value

    :param obj: Objects to list
    :param style: Style of the bullet
    :param indent: indentation level
    """
    return "\n".join(f"{' ' * indent}{style} {x}" for x in obj)


def log_section(string: str, color_code: str = ColorCodes.GREEN, sub_section: bool = False):
    """Log given string as a styled section

    :param string: String to log as a section
    :param color_code: ANSI color code
    :param sub_section: Log as a sub-section
    """
    try:
        terminal_size_col = min(os.get_terminal_size().columns, 120)
    except OSError:
        terminal_size_col = 100

    if sub_section:
        filler = "-" * max(int((terminal_size_col - (len(string) + 2)) / 2), 3)
        logger.info(f"{filler} {string} {filler}", color_code=color_code)
    else:
        section = "#" * terminal_size_col
        filler = " " * max(terminal_size_col - (len(string) + 4), 0)
        logger.info(f"\n{section}\n# {string}{filler} #\n{section}", color_code=color_code)


@contextmanager
def timed(stage: str, timings: dict[str, float] | None = None) -> Iterator[dict[str, float]]:
    """Measure the wall time of the block in milliseconds

    The yielded dictionary receives "wall_ms" when the block exits; it is also stored as timings[stage] when timings
    is given.

    Example:
    >>> with timed("invert") as t:
    ...     pass
    >>> t["wall_ms"] >= 0
    True
    """
    start = time.perf_counter()
    elapsed: dict[str, float] = {}
    try:
        yield elapsed
    finally:
        elapsed["wall_ms"] = (time.perf_counter() - start) * 1e3
        if timings is not None:
            timings[stage] = elapsed["wall_ms"]
        logger.debug(f"Finished in {elapsed['wall_ms']:.1f} ms", stage=stage)
