"""
File Handler Utility.
Binary field files and run directories (CSV tables, JSON reports, manifest).
"""

import hashlib
import json
import struct
import uuid
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from m4nls.config.settings import settings
from m4nls.models.schemas import RunManifest
from m4nls.services.spectral_core import Field, make_grid
from m4nls.utils.errors import FieldFormatError
from m4nls.utils.logger import logger


# ===========================================
# Field files
# ===========================================

MAGIC = b"M4NL"
FORMAT_VERSION = 1
# magic, version, dim, dtype (0 real, 1 complex), reserved, n per axis, box length
HEADER = struct.Struct("<4sIBBHId")
DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def save_field(path: Union[str, Path], field: Field) -> Path:
    """
    Write a field as header + little-endian float64 payload (complex interleaved), row-major.

    Args:
        path: Destination file
        field: Field to store

    Returns:
        Path written
    """
    path = Path(path)
    grid = field.grid
    code = 1 if field.is_complex else 0
    header = HEADER.pack(MAGIC, FORMAT_VERSION, grid.dim, code, 0, grid.n, float(grid.L))
    payload = np.ascontiguousarray(field.values, dtype=DTYPES[code]).tobytes(order="C")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)
    logger.debug(f"Saved field ({grid.dim}D, n={grid.n}, L={grid.L}) to {path}")
    return path


def load_field(path: Union[str, Path]) -> Field:
    """
    Read a field file written by save_field.

    Raises:
        FieldFormatError: bad magic, version mismatch, unknown dtype or truncated payload
        FileNotFoundError: missing file
    """
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()

    if len(data) < HEADER.size:
        raise FieldFormatError(f"truncated header in {path}: {len(data)} < {HEADER.size} bytes")
    magic, version, dim, code, _, n, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"bad magic {magic!r} in {path}")
    if version != FORMAT_VERSION:
        raise FieldFormatError(f"version mismatch in {path}: {version} != {FORMAT_VERSION}")
    if code not in DTYPES:
        raise FieldFormatError(f"unknown dtype code {code} in {path}")

    try:
        grid = make_grid(dim, n, length)
    except ValueError as e:
        raise FieldFormatError(f"invalid grid in {path}: {e}") from e

    dtype = DTYPES[code]
    expected = grid.points * dtype.itemsize
    payload = data[HEADER.size:]
    if len(payload) < expected:
        raise FieldFormatError(f"truncated payload in {path}: {len(payload)} < {expected} bytes")
    if len(payload) > expected:
        raise FieldFormatError(f"payload of {path} is longer than the header promises")

    values = np.frombuffer(payload, dtype=dtype).reshape(grid.shape)
    return Field(grid, values.astype(dtype.newbyteorder("="), copy=True))


def field_frame(field: Field) -> pd.DataFrame:
    """Tabular view: coordinates plus the real (or real and imaginary) samples."""
    grid = field.grid
    names = ["x"] if grid.dim == 1 else [f"x{i + 1}" for i in range(grid.dim)]
    columns = {name: c.ravel() for name, c in zip(names, grid.coords)}
    if field.is_complex:
        columns["re"] = field.values.real.ravel()
        columns["im"] = field.values.imag.ravel()
    else:
        columns["u"] = field.values.ravel()
    return pd.DataFrame(columns)


def sha256sum(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ===========================================
# Run directory
# ===========================================

class RunDirectory:
    """
    Output directory of one run.
    Every file written through it is recorded and checksummed in the manifest,
    which is written last.
    """

    MANIFEST = "manifest.json"

    def __init__(self, command: str, run_dir: Optional[Union[str, Path]] = None):
        """
        Args:
            command: Subcommand name, used for the default directory name
            run_dir: Explicit directory; defaults to <output_dir>/<command>-<id>
        """
        self.command = command
        self.run_id = uuid.uuid4().hex[:8]
        self.run_dir = Path(run_dir) if run_dir is not None else settings.output_dir / f"{command}-{self.run_id}"
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        return self.run_dir / name

    def _register(self, name: str) -> Path:
        if name not in self.outputs:
            self.outputs.append(name)
        return self.path(name)

    def save_field(self, name: str, field: Field) -> Path:
        return save_field(self._register(name), field)

    def save_table(self, name: str, table: Union[pd.DataFrame, list[dict]]) -> Path:
        """Write a CSV with 17 significant digits and '\\n' line ends."""
        frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(table)
        file_path = self._register(name)
        frame.to_csv(file_path, index=False, float_format="%.17g", lineterminator="\n", encoding="utf-8")
        logger.info(f"Saved table: {len(frame)} rows to {file_path}")
        return file_path

    def save_json(self, name: str, payload: Union[BaseModel, dict[str, Any]]) -> Path:
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        file_path = self._register(name)
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        logger.info(f"Saved report to {file_path}")
        return file_path

    def write_manifest(self, manifest: RunManifest) -> Path:
        """Checksum every registered output and write manifest.json."""
        checksums = {name: sha256sum(self.path(name)) for name in self.outputs if self.path(name).exists()}
        manifest = manifest.model_copy(update={"outputs": checksums})
        file_path = self.path(self.MANIFEST)
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(manifest.model_dump(mode="json"), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info(f"Manifest written: {file_path} ({len(checksums)} outputs, status={manifest.status})")
        return file_path

    @classmethod
    def load_manifest(cls, run_dir: Union[str, Path]) -> RunManifest:
        with open(Path(run_dir) / cls.MANIFEST, "r", encoding="utf-8") as f:
            return RunManifest.model_validate(json.load(f))

    @classmethod
    def verify_manifest(cls, run_dir: Union[str, Path]) -> dict[str, bool]:
        """Recompute checksums; maps each listed output to whether it still matches."""
        run_dir = Path(run_dir)
        manifest = cls.load_manifest(run_dir)
        return {
            name: (run_dir / name).exists() and sha256sum(run_dir / name) == digest
            for name, digest in manifest.outputs.items()
        }
