"""Binary field dumps, JSON reports and CSV tables written into a run directory"""
import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from services.errors import FieldFormatError
from services.grid import ScalarField, make_grid

logger = logging.getLogger(__name__)

MAGIC = b"SBPF"
VERSION = 1
HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u4"), ("half_length", "<f8")])
VALUE_DTYPE = np.dtype("<f8")

TRACE_HEADER = ["iter", "total", "kinetic_potential", "nonlocal", "nonlinear", "residual", "t", "s"]
KERNEL_HEADER = ["epsilon", "maxwell_truncated", "bp_truncated", "bp_increment"]

PathLike = Union[str, Path]


def dump_field(field: ScalarField, path: PathLike) -> Path:
    """Write the SBPF header followed by N^3 little-endian doubles in row-major order"""
    path = Path(path)
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = VERSION
    header["n"] = field.grid.points_per_axis
    header["half_length"] = field.grid.half_length
    with open(path, "wb") as handle:
        handle.write(header.tobytes())
        handle.write(np.ascontiguousarray(field.values, dtype=VALUE_DTYPE).tobytes())
    logger.debug(f"Field dumped to {path}")
    return path


def load_field(path: PathLike) -> ScalarField:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER_DTYPE.itemsize:
        raise FieldFormatError(f"{path}: file shorter than the {HEADER_DTYPE.itemsize}-byte header")
    header = np.frombuffer(data, dtype=HEADER_DTYPE, count=1)[0]
    if bytes(header["magic"]) != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {bytes(header['magic'])!r}")
    if int(header["version"]) != VERSION:
        raise FieldFormatError(f"{path}: unsupported version {int(header['version'])}")
    n = int(header["n"])
    expected = HEADER_DTYPE.itemsize + VALUE_DTYPE.itemsize * n ** 3
    if len(data) != expected:
        raise FieldFormatError(f"{path}: expected {expected} bytes for N={n}, found {len(data)}")
    grid = make_grid(float(header["half_length"]), n)
    values = np.frombuffer(data, dtype=VALUE_DTYPE, offset=HEADER_DTYPE.itemsize).reshape(grid.shape)
    return ScalarField(grid, values)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json(document: dict) -> str:
    return json.dumps(document, indent=2, sort_keys=True, default=_json_default)


def write_report(document: dict, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(to_json(document) + "\n", encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path


def _write_rows(header: list, rows: Iterable, target) -> None:
    if hasattr(target, "write"):
        writer = csv.writer(target)
        writer.writerow(header)
        writer.writerows(rows)
        return
    with open(target, "w", newline="", encoding="utf-8") as handle:
        _write_rows(header, rows, handle)


def write_trace_csv(rows: Iterable, target) -> None:
    """Energy trace: one row per accepted step"""
    _write_rows(TRACE_HEADER, (row.to_row() for row in rows), target)


def write_kernel_csv(rows: Iterable, target) -> None:
    _write_rows(KERNEL_HEADER, (row.to_row() for row in rows), target)


def make_run_directory(root: PathLike, seed: int, now: datetime = None) -> Path:
    """Create <root>/<timestamp>_seed<seed>"""
    stamp = (now or datetime.now()).strftime("%Y%m%dT%H%M%S")
    directory = Path(root) / f"{stamp}_seed{seed}"
    directory.mkdir(parents=True, exist_ok=True)
    return directory
