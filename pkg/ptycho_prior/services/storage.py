"""On-disk containers: diffraction datasets, complex fields, PGM previews and CSV tables."""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ptycho_prior.services.field import FieldError, as_complex_field
from ptycho_prior.services.forward import DiffractionSet
from ptycho_prior.services.scan import ScanError, scan_plan_from_dict

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from ptycho_prior.services.field import ComplexField, RealField
    from ptycho_prior.services.metrics import SweepRow
    from ptycho_prior.services.recon import HistoryRow

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
PATTERNS_NAME = "patterns.bin"
PATTERN_DTYPE = "f64le"
FIELD_DTYPE = "c128le"
PGM_MAXVAL = 65535
HISTORY_HEADER = ("epoch", "E_o", "E_total")
RESIDUAL_HEADER = ("sweep", "E_o")
SWEEP_HEADER = ("overlap", "prior", "ssim_phase", "ssim_magnitude", "final_E_o")


class DatasetFormatError(ValueError):
    """Exception raised when a dataset or field file cannot be decoded."""


def _dump_json(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def write_dataset(dataset: DiffractionSet, directory: str | Path, provenance: dict | None = None) -> Path:
    """Write ``manifest.json`` and ``patterns.bin`` into ``directory``.

    Args:
        dataset (DiffractionSet): Patterns and their scan plan.
        directory (str | Path): Target directory, created if missing.
        provenance (dict | None): Free-form generator settings stored in the manifest.

    Returns:
        Path: The dataset directory.

    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "pattern_dtype": PATTERN_DTYPE,
        "pattern_count": len(dataset),
        "plan": dataset.plan.to_dict(),
        "provenance": provenance or {},
    }
    (directory / MANIFEST_NAME).write_text(_dump_json(manifest), encoding="utf-8")
    (directory / PATTERNS_NAME).write_bytes(np.ascontiguousarray(dataset.patterns, dtype="<f8").tobytes())
    logger.debug("Wrote %d patterns to %s", len(dataset), directory)
    return directory


def read_manifest(directory: str | Path) -> dict:
    """Load and version-check the manifest of a dataset directory."""
    path = Path(directory) / MANIFEST_NAME
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        msg = f"{path} is not valid JSON: {exc}"
        raise DatasetFormatError(msg) from exc
    if not isinstance(manifest, dict):
        msg = f"{path}: expected a JSON object, got {type(manifest).__name__}"
        raise DatasetFormatError(msg)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        msg = f"{path}: unsupported format_version {version!r}, expected {FORMAT_VERSION}"
        raise DatasetFormatError(msg)
    if manifest.get("pattern_dtype") != PATTERN_DTYPE:
        msg = f"{path}: unsupported pattern_dtype {manifest.get('pattern_dtype')!r}"
        raise DatasetFormatError(msg)
    return manifest


def read_dataset(directory: str | Path) -> DiffractionSet:
    """Load a dataset written by :func:`write_dataset`.

    Raises:
        DatasetFormatError: On a version mismatch, a payload of the wrong length, or
            non-finite or negative intensities.

    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    try:
        plan = scan_plan_from_dict(manifest["plan"])
        count = int(manifest["pattern_count"])
    except (KeyError, TypeError, ScanError) as exc:
        msg = f"{directory / MANIFEST_NAME}: invalid plan: {exc}"
        raise DatasetFormatError(msg) from exc
    if count != len(plan):
        msg = f"pattern_count {count} does not match {len(plan)} scan positions"
        raise DatasetFormatError(msg)

    payload = (directory / PATTERNS_NAME).read_bytes()
    rows, cols = plan.probe_shape
    expected = count * rows * cols * 8
    if len(payload) != expected:
        msg = f"{directory / PATTERNS_NAME} has {len(payload)} bytes, expected {expected}"
        raise DatasetFormatError(msg)

    patterns = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(count, rows, cols)
    if not np.all(np.isfinite(patterns)):
        msg = f"{directory / PATTERNS_NAME} contains non-finite intensities"
        raise DatasetFormatError(msg)
    try:
        return DiffractionSet(plan, patterns)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc


def write_field(field: ComplexField, path: str | Path) -> Path:
    """Write a complex field as a one-line JSON header followed by interleaved little-endian re/im."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(field)
    if values.ndim != 2:  # noqa: PLR2004
        msg = f"a field must be two-dimensional, got shape {values.shape}"
        raise ValueError(msg)
    header = {"format_version": FORMAT_VERSION, "rows": values.shape[0], "cols": values.shape[1], "dtype": FIELD_DTYPE}
    with path.open("wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        f.write(np.ascontiguousarray(values, dtype="<c16").tobytes())
    return path


def read_field(path: str | Path) -> ComplexField:
    """Load a field written by :func:`write_field`.

    Raises:
        DatasetFormatError: If the header is malformed or disagrees with the payload length,
            or if the payload holds NaN or Inf samples.

    """
    path = Path(path)
    with path.open("rb") as f:
        line = f.readline()
        payload = f.read()
    try:
        header = json.loads(line)
        rows, cols = int(header["rows"]), int(header["cols"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        msg = f"{path}: malformed field header"
        raise DatasetFormatError(msg) from exc
    if header.get("dtype") != FIELD_DTYPE:
        msg = f"{path}: unsupported dtype {header.get('dtype')!r}"
        raise DatasetFormatError(msg)
    expected = rows * cols * 16
    if rows < 1 or cols < 1 or len(payload) != expected:
        msg = f"{path}: header says {rows}x{cols} ({expected} bytes) but payload has {len(payload)} bytes"
        raise DatasetFormatError(msg)
    try:
        return as_complex_field(np.frombuffer(payload, dtype="<c16").astype(np.complex128).reshape(rows, cols))
    except FieldError as exc:
        msg = f"{path}: {exc}"
        raise DatasetFormatError(msg) from exc


def export_image(
    channel: RealField,
    path: str | Path,
    value_range: tuple[float, float] | None = None,
) -> Path:
    """Write a real channel as a 16-bit binary PGM.

    Args:
        channel (RealField): Values to render.
        path (str | Path): Output file.
        value_range (tuple[float, float] | None): Fixed ``(low, high)`` mapped to
            ``(0, 65535)``; the channel's own min and max when None. A degenerate
            range renders mid-gray.

    Returns:
        Path: The written file.

    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(channel, dtype=np.float64)
    low, high = value_range if value_range is not None else (float(values.min()), float(values.max()))
    if high > low:
        scaled = np.clip((values - low) / (high - low), 0.0, 1.0)
    else:
        scaled = np.full(values.shape, 0.5)
    pixels = np.floor(scaled * PGM_MAXVAL + 0.5).astype(">u2")
    rows, cols = values.shape
    with path.open("wb") as f:
        f.write(f"P5\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii"))
        f.write(pixels.tobytes())
    return path


def _write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_history_csv(history: Sequence[HistoryRow], path: str | Path) -> Path:
    """Write the per-epoch energies of a reconstruction."""
    return _write_rows(path, HISTORY_HEADER, ((row.epoch, row.data, row.total) for row in history))


def write_residual_csv(residuals: Sequence[float], path: str | Path) -> Path:
    """Write the per-sweep data fidelity of an ePIE run."""
    return _write_rows(path, RESIDUAL_HEADER, enumerate(residuals, start=1))


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path, *, with_patterns: bool = False) -> Path:
    """Write SSIM rows, optionally prefixed by the number of patterns used."""
    header = ("patterns", *SWEEP_HEADER) if with_patterns else SWEEP_HEADER

    def cells(row: SweepRow) -> tuple:
        values = (row.overlap, row.prior, row.ssim_phase, row.ssim_magnitude, row.final_e_o)
        return (row.patterns, *values) if with_patterns else values

    return _write_rows(path, header, (cells(row) for row in rows))
