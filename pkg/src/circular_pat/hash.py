import hashlib
from collections.abc import Collection, Mapping
from typing import Any

import numpy as np
from numpy.typing import ArrayLike


class HashableDict(dict):
    """A hashable dictionary"""

    def __hash__(self) -> int:
        return hash(frozenset((k, freeze(v)) for k, v in self.items()))


def freeze(obj: Any) -> Any:
    """Recursively convert an object to be immutable and hashable

    :param obj: Any object
    """
    if isinstance(obj, HashableDict):
        return type(obj)({k: freeze(v) for k, v in obj.items()})
    elif isinstance(obj, tuple):
        return type(obj)(freeze(x) for x in obj)
    elif isinstance(obj, Mapping):
        return HashableDict({k: freeze(v) for k, v in obj.items()})
    elif isinstance(obj, Collection) and not isinstance(obj, str | bytes):
        return tuple(freeze(x) for x in obj)
    else:
        return obj


def config_fingerprint(obj: Any) -> str:
    """A short, run-independent fingerprint of a configuration-like object

    Unlike hash(), the value does not depend on PYTHONHASHSEED, so it can be written into manifests and compared
    across runs.

    :param obj: Any object made of mappings, collections and scalars
    """
    text = repr(_canonical(freeze(obj)))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _canonical(obj: Any) -> Any:
    if isinstance(obj, Mapping):
        return tuple(sorted((str(k), _canonical(v)) for k, v in obj.items()))
    if isinstance(obj, tuple):
        return tuple(_canonical(x) for x in obj)
    return obj


def payload_bytes(values: ArrayLike) -> bytes:
    """Row-major little-endian f64 bytes of an array"""
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def payload_checksum(values: ArrayLike | bytes) -> str:
    """sha256 hex digest of a volume payload (little-endian f64, last axis fastest)

    :param values: Array, or payload bytes as stored in a volume file
    """
    data = values if isinstance(values, bytes | bytearray) else payload_bytes(values)
    return hashlib.sha256(data).hexdigest()
