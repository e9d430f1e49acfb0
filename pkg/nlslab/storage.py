"""Run directory persistence: .nlsf field snapshots, provenance-stamped CSVs, JSON summaries.

.nlsf layout (little-endian):
    b"NLSF" | u32 version | u32 d | u32 N[d] | f64 L[d] | f64 t | (f64 re, f64 im) * prod(N), row-major
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from structlog import get_logger

from nlslab.config import settings
from nlslab.errors import GridError, OutputError, SnapshotFormatError
from nlslab.grid import Field, Grid
from nlslab.groundstate import GroundState

logger = get_logger(__name__)

MAGIC = b"NLSF"
FORMAT_VERSION = 1
CSV_FORMAT = "%.17g"

PathLike = Union[str, Path]


def encode_snapshot(field: Field) -> bytes:
    grid = field.grid
    header = [
        MAGIC,
        np.array([FORMAT_VERSION, grid.dim, *grid.n_points], dtype="<u4").tobytes(),
        np.array([*grid.half_length, field.time], dtype="<f8").tobytes(),
    ]
    body = np.ascontiguousarray(field.values, dtype="<c16").tobytes()
    return b"".join(header) + body


def decode_snapshot(payload: bytes, label: str = "snapshot") -> Field:
    if payload[:4] != MAGIC:
        raise SnapshotFormatError("Bad magic; not an .nlsf snapshot", {"magic": payload[:4].hex()})
    if len(payload) < 12:
        raise SnapshotFormatError("Truncated header", {"size": len(payload)})
    version, dim = np.frombuffer(payload, dtype="<u4", count=2, offset=4)
    if version != FORMAT_VERSION:
        raise SnapshotFormatError(
            f"Unsupported snapshot version {int(version)}", {"version": int(version), "supported": FORMAT_VERSION}
        )
    if dim not in (1, 2):
        raise SnapshotFormatError("Unsupported dimension", {"dim": int(dim)})
    dim = int(dim)
    offset = 12
    header_size = offset + 4 * dim + 8 * dim + 8
    if len(payload) < header_size:
        raise SnapshotFormatError("Truncated header", {"size": len(payload), "header_size": header_size})
    n_points = tuple(int(n) for n in np.frombuffer(payload, dtype="<u4", count=dim, offset=offset))
    offset += 4 * dim
    floats = np.frombuffer(payload, dtype="<f8", count=dim + 1, offset=offset)
    offset += 8 * (dim + 1)
    expected = offset + 16 * int(np.prod(n_points))
    if len(payload) != expected:
        raise SnapshotFormatError(
            "Payload size does not match the header", {"size": len(payload), "expected": expected}
        )
    try:
        grid = Grid(n_points, tuple(float(length) for length in floats[:dim]))
    except GridError as exc:
        raise SnapshotFormatError(f"Invalid grid in header: {exc.message}", exc.details) from exc
    values = np.frombuffer(payload, dtype="<c16", offset=offset).reshape(n_points)
    return Field(grid, values, float(floats[dim]), label=label)


def provenance_line(config_hash: Optional[str]) -> str:
    return f"nlslab {settings.app_version} config_sha256={config_hash or 'none'}"


class RunStorage:
    """One run directory; every artifact carries the config hash."""

    def __init__(self, root: PathLike, config_hash: Optional[str] = None):
        self.root = Path(root)
        self.config_hash = config_hash
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"Cannot create run directory {self.root}", {"error": str(exc)}) from exc

    def _path(self, name: str, suffix: str, subdir: Optional[str] = None) -> Path:
        directory = self.root / subdir if subdir else self.root
        directory.mkdir(parents=True, exist_ok=True)
        return directory / f"{name}{suffix}"

    def write_snapshot(self, field: Field, name: Optional[str] = None) -> Path:
        path = self._path(name or f"u_t{field.time:+.6f}", ".nlsf", "snapshots")
        try:
            path.write_bytes(encode_snapshot(field))
        except OSError as exc:
            raise OutputError(f"Failed to write snapshot {path}", {"error": str(exc)}) from exc
        logger.debug("Snapshot written", path=str(path), t=field.time)
        return path

    def write_csv(self, name: str, columns: Sequence[str], rows: np.ndarray) -> Path:
        path = self._path(name, ".csv")
        data = np.atleast_2d(np.asarray(rows, dtype=float))
        if data.size and data.shape[1] != len(columns):
            raise OutputError(
                "Row width does not match the header",
                {"columns": len(columns), "width": int(data.shape[1]), "name": name},
            )
        header = provenance_line(self.config_hash) + "\n" + ",".join(columns)
        try:
            np.savetxt(path, data.reshape(-1, len(columns)), fmt=CSV_FORMAT, delimiter=",", header=header, comments="# ")
        except OSError as exc:
            raise OutputError(f"Failed to write {path}", {"error": str(exc)}) from exc
        logger.info("CSV written", path=str(path), rows=int(data.shape[0]) if data.size else 0)
        return path

    def write_profile(self, gs: GroundState, name: Optional[str] = None, samples: int = 2001) -> Path:
        r, q = gs.profile_table(samples)
        return self.write_csv(name or f"profile_omega{gs.omega:g}", ["r", "Q"], np.column_stack([r, q]))

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self._path(name, ".json")
        document = {"provenance": provenance_line(self.config_hash), **payload}
        try:
            path.write_text(json.dumps(_jsonable(document), indent=2, sort_keys=True))
        except OSError as exc:
            raise OutputError(f"Failed to write {path}", {"error": str(exc)}) from exc
        return path


def read_snapshot(path: PathLike) -> Field:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise OutputError(f"Cannot read snapshot {path}", {"error": str(exc)}) from exc
    return decode_snapshot(payload, label=path.stem)


def read_csv(path: PathLike) -> Dict[str, Any]:
    """Parse a run CSV back into its provenance line, column names and data."""
    lines = Path(path).read_text().splitlines()
    provenance = lines[0].lstrip("# ").strip()
    columns = lines[1].lstrip("# ").strip().split(",")
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return {"provenance": provenance, "columns": columns, "data": data}


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value
