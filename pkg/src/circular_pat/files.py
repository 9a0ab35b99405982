"""Volume files, manifests and metrics

Volume file layout (RVL1), all numbers little-endian:

    b"RVL1" | u32 rank | u32 dims[rank] | f64 axis_start[rank] | f64 axis_step[rank] | f64 payload

The payload is row-major with the last axis fastest.
"""

from __future__ import annotations

import csv
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from numpy.typing import ArrayLike, NDArray

from circular_pat.core import UniformAxis
from circular_pat.exceptions import ChecksumError, VolumeFormatError
from circular_pat.hash import payload_bytes, payload_checksum
from circular_pat.logging import get_logger

logger = get_logger(__name__)

MAGIC = b"RVL1"
CHECKSUM_KEY = "sha256"
METRICS_COLUMNS = ("stage", "name", "value", "units", "wall_ms")


@dataclass(frozen=True)
class Volume:
    values: NDArray[np.float64]
    starts: tuple[float, ...]
    steps: tuple[float, ...]

    @classmethod
    def from_axes(cls, values: ArrayLike, axes: Sequence[UniformAxis]) -> Volume:
        return cls(np.asarray(values, dtype=float), tuple(a.start for a in axes), tuple(a.step for a in axes))

    @property
    def axes(self) -> tuple[UniformAxis, ...]:
        return tuple(UniformAxis(s, d, n) for s, d, n in zip(self.starts, self.steps, self.values.shape))

    @property
    def checksum(self) -> str:
        return payload_checksum(self.values)


def encode_volume(values: ArrayLike, starts: Sequence[float], steps: Sequence[float]) -> bytes:
    """Serialize a volume into RVL1 bytes"""
    arr = np.asarray(values, dtype=np.float64)
    rank = arr.ndim
    if len(starts) != rank or len(steps) != rank:
        raise VolumeFormatError(f"Expected {rank} axis starts and steps, got {len(starts)} and {len(steps)}")
    header = (
        MAGIC
        + np.array([rank], dtype="<u4").tobytes()
        + np.array(arr.shape, dtype="<u4").tobytes()
        + np.array(starts, dtype="<f8").tobytes()
        + np.array(steps, dtype="<f8").tobytes()
    )
    return header + payload_bytes(arr)


def decode_volume(data: bytes) -> Volume:
    """Parse RVL1 bytes

    :raises VolumeFormatError: Bad magic, truncated header or payload, or trailing bytes
    """
    if data[:4] != MAGIC:
        raise VolumeFormatError(f"Bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 8:
        raise VolumeFormatError("Truncated header")
    rank = int(np.frombuffer(data, dtype="<u4", count=1, offset=4)[0])
    header_size = 8 + 4 * rank + 16 * rank
    if len(data) < header_size:
        raise VolumeFormatError("Truncated header")
    dims = tuple(int(n) for n in np.frombuffer(data, dtype="<u4", count=rank, offset=8))
    starts = tuple(float(x) for x in np.frombuffer(data, dtype="<f8", count=rank, offset=8 + 4 * rank))
    steps = tuple(float(x) for x in np.frombuffer(data, dtype="<f8", count=rank, offset=8 + 12 * rank))
    expected = header_size + 8 * int(np.prod(dims, dtype=np.int64))
    if len(data) != expected:
        raise VolumeFormatError(f"Payload size mismatch: {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f8", offset=header_size).reshape(dims).astype(np.float64)
    return Volume(values, starts, steps)


def write_volume(path: str | Path, values: ArrayLike, starts: Sequence[float], steps: Sequence[float]) -> str:
    """Write an RVL1 volume file

    :return: sha256 of the payload
    """
    arr = np.asarray(values, dtype=np.float64)
    Path(path).write_bytes(encode_volume(arr, starts, steps))
    logger.debug(f"Wrote {arr.shape} volume to {path}")
    return payload_checksum(arr)


def read_volume(path: str | Path) -> Volume:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise VolumeFormatError(f"Volume file not found: {path}") from e
    return decode_volume(data)


def _render(value: Any) -> str:
    if isinstance(value, str):
        return value
    text = yaml.safe_dump(value, default_flow_style=True, width=float("inf")).strip()
    return text.removesuffix("...").strip()


def write_manifest(path: str | Path, entries: Mapping[str, Any], checksum: str) -> None:
    """Write key=value lines, closed by the payload checksum

    :param path: Manifest file path
    :param entries: Flat mapping of manifest entries
    :param checksum: sha256 of the payload the manifest describes
    """
    lines = [f"{key}={_render(value)}" for key, value in entries.items() if key != CHECKSUM_KEY]
    lines.append(f"{CHECKSUM_KEY}={checksum}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path, verify_against: str | Path | ArrayLike | None = None) -> dict[str, Any]:
    """Read a manifest back into a flat dictionary

    :param path: Manifest file path
    :param verify_against: A volume file or array whose payload checksum must match the manifest
    :raises ChecksumError: The checksum does not match
    """
    manifest: dict[str, Any] = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise VolumeFormatError(f"{path}:{n}: expected key=value")
        key, raw = line.split("=", 1)
        manifest[key] = raw if key == CHECKSUM_KEY else yaml.safe_load(raw) if raw else ""
    if verify_against is not None:
        if isinstance(verify_against, str | Path):
            actual = read_volume(verify_against).checksum
        else:
            actual = payload_checksum(verify_against)
        if manifest.get(CHECKSUM_KEY) != actual:
            raise ChecksumError(f"Checksum mismatch for {path}: manifest {manifest.get(CHECKSUM_KEY)}, data {actual}")
    return manifest


class MetricsWriter:
    """Append rows stage,name,value,units,wall_ms to a CSV file, writing the header once

    Usage:
        with MetricsWriter(out_dir / "metrics.csv") as metrics:
            metrics.write("invert", "rel_l2_error", 0.04, "1", 1234.5)
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._file = None
        self._writer = None

    def __enter__(self) -> MetricsWriter:
        new = not self.path.exists() or self.path.stat().st_size == 0
        self._file = open(self.path, "a", newline="")
        self._writer = csv.writer(self._file)
        if new:
            self._writer.writerow(METRICS_COLUMNS)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self._file.close()
        self._file = self._writer = None

    def write(self, stage: str, name: str, value: float, units: str = "", wall_ms: float = 0.0):
        if self._writer is None:
            raise RuntimeError("MetricsWriter must be used as a context manager")
        self._writer.writerow([stage, name, repr(float(value)), units, f"{wall_ms:.3f}"])
        logger.info(f"{name} = {value:.6g} {units}".rstrip(), stage=stage)


def read_metrics(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
