"""Probe-position plans: raster grids, Fermat spirals, uniform thinning and overlap ratios."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import KDTree

logger = logging.getLogger(__name__)

GOLDEN_ANGLE_DEG = 137.508
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
SPACING_TOLERANCE = 0.15


class ScanError(ValueError):
    """Exception raised when a scan plan cannot be built or is invalid."""


@dataclass(frozen=True)
class ScanPlan:
    """Ordered top-left probe-window offsets inside an object grid."""

    positions: tuple[tuple[int, int], ...]
    probe_shape: tuple[int, int]
    object_shape: tuple[int, int]
    geometry: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        """Check the bounds and uniqueness invariants."""
        max_row = self.object_shape[0] - self.probe_shape[0]
        max_col = self.object_shape[1] - self.probe_shape[1]
        if max_row < 0 or max_col < 0:
            msg = f"probe {self.probe_shape} is larger than object {self.object_shape}"
            raise ScanError(msg)
        for row, col in self.positions:
            if not (0 <= row <= max_row and 0 <= col <= max_col):
                msg = f"position ({row}, {col}) puts the probe window outside the object"
                raise ScanError(msg)
        if len(set(self.positions)) != len(self.positions):
            msg = "scan positions must be unique"
            raise ScanError(msg)

    def __len__(self) -> int:
        """Return the number of probe positions."""
        return len(self.positions)

    def to_dict(self) -> dict:
        """Serialize the plan for a dataset manifest."""
        return {
            "object_rows": self.object_shape[0],
            "object_cols": self.object_shape[1],
            "probe_rows": self.probe_shape[0],
            "probe_cols": self.probe_shape[1],
            "positions": [list(p) for p in self.positions],
            "geometry": dict(self.geometry),
        }


def scan_plan_from_dict(data: dict) -> ScanPlan:
    """Rebuild a plan written by :meth:`ScanPlan.to_dict`."""
    return ScanPlan(
        positions=tuple((int(r), int(c)) for r, c in data["positions"]),
        probe_shape=(int(data["probe_rows"]), int(data["probe_cols"])),
        object_shape=(int(data["object_rows"]), int(data["object_cols"])),
        geometry=dict(data.get("geometry", {})),
    )


def _as_shape(size: int | tuple[int, int]) -> tuple[int, int]:
    if isinstance(size, int):
        return (size, size)
    return (int(size[0]), int(size[1]))


def raster_plan(
    object_size: int | tuple[int, int],
    probe_size: int | tuple[int, int],
    step: int,
) -> ScanPlan:
    """Build a row-major grid of positions spaced ``step`` pixels apart.

    Args:
        object_size (int | tuple[int, int]): Object grid size (square when an int).
        probe_size (int | tuple[int, int]): Probe window size (square when an int).
        step (int): Grid spacing in pixels, at least 1.

    Returns:
        ScanPlan: ``floor((object - probe) / step) + 1`` positions per axis.

    Raises:
        ScanError: If the step is below 1 or the probe is larger than the object.

    """
    object_shape = _as_shape(object_size)
    probe_shape = _as_shape(probe_size)
    if step < 1:
        msg = f"step must be at least 1 pixel, got {step}"
        raise ScanError(msg)
    if probe_shape[0] > object_shape[0] or probe_shape[1] > object_shape[1]:
        msg = f"probe {probe_shape} is larger than object {object_shape}"
        raise ScanError(msg)

    rows = range(0, object_shape[0] - probe_shape[0] + 1, step)
    cols = range(0, object_shape[1] - probe_shape[1] + 1, step)
    positions = tuple((r, c) for r in rows for c in cols)
    logger.debug("Raster plan: %d x %d positions, step %d", len(rows), len(cols), step)
    return ScanPlan(positions, probe_shape, object_shape, geometry={"kind": "raster", "step": step})


def overlap_ratio(step: float, probe_sigma: float) -> float:
    """Return ``max(0, 1 - step / FWHM)`` for a Gaussian probe magnitude of width ``probe_sigma``.

    Raises:
        ScanError: If the step is negative or the sigma is not positive.

    """
    if step < 0:
        msg = f"step must be nonnegative, got {step}"
        raise ScanError(msg)
    if probe_sigma <= 0:
        msg = f"probe_sigma must be positive, got {probe_sigma}"
        raise ScanError(msg)
    return max(0.0, 1.0 - step / (FWHM_PER_SIGMA * probe_sigma))


def step_for_overlap(overlap: float, probe_sigma: float) -> int:
    """Return the integer step whose overlap ratio is closest to ``overlap``."""
    return max(1, round((1.0 - overlap) * FWHM_PER_SIGMA * probe_sigma))


def _spiral(n_points: int, radial: float) -> np.ndarray:
    n = np.arange(n_points, dtype=np.float64)
    theta = n * math.radians(GOLDEN_ANGLE_DEG)
    radius = radial * np.sqrt(n)
    return np.stack([radius * np.sin(theta), radius * np.cos(theta)], axis=1)


def _mean_nearest_neighbour(points: np.ndarray) -> float:
    distances, _ = KDTree(points).query(points, k=2)
    return float(distances[:, 1].mean())


def fermat_plan(  # noqa: PLR0913
    n_points: int,
    spacing: float,
    center: tuple[int, int] | None,
    object_size: int | tuple[int, int],
    probe_size: int | tuple[int, int],
) -> ScanPlan:
    """Build a Fermat-spiral plan with golden-angle increments and ``sqrt(n)`` radii.

    The radial constant is scaled so the mean nearest-neighbour distance of the
    unrounded spiral equals ``spacing``. Points are rounded, clipped to the valid
    box and de-duplicated in spiral order. A warning is logged when clipping moves the
    realized mean spacing more than 15% away from ``spacing``.

    Args:
        n_points (int): Number of spiral points, at least 1.
        spacing (float): Target mean nearest-neighbour distance in pixels.
        center (tuple[int, int] | None): Spiral origin as a window offset; the middle
            of the valid box when None.
        object_size (int | tuple[int, int]): Object grid size.
        probe_size (int | tuple[int, int]): Probe window size.

    Returns:
        ScanPlan: The spiral plan.

    Raises:
        ScanError: If fewer than half the points survive clipping and de-duplication.

    """
    object_shape = _as_shape(object_size)
    probe_shape = _as_shape(probe_size)
    if n_points < 1:
        msg = f"n_points must be at least 1, got {n_points}"
        raise ScanError(msg)
    max_row = object_shape[0] - probe_shape[0]
    max_col = object_shape[1] - probe_shape[1]
    if max_row < 0 or max_col < 0:
        msg = f"probe {probe_shape} is larger than object {object_shape}"
        raise ScanError(msg)
    if center is None:
        center = (max_row // 2, max_col // 2)

    unit = _spiral(n_points, 1.0)
    radial = spacing / _mean_nearest_neighbour(unit) if n_points > 1 else 0.0
    offsets = unit * radial

    rounded_rows = np.floor(center[0] + offsets[:, 0] + 0.5)
    rounded_cols = np.floor(center[1] + offsets[:, 1] + 0.5)
    rows = np.clip(rounded_rows, 0, max_row).astype(int)
    cols = np.clip(rounded_cols, 0, max_col).astype(int)
    clipped = bool(np.any(rows != rounded_rows) or np.any(cols != rounded_cols))
    positions = tuple(dict.fromkeys(zip(rows.tolist(), cols.tolist(), strict=True)))

    if len(positions) < n_points / 2:
        msg = f"only {len(positions)} of {n_points} spiral points remain inside the object"
        raise ScanError(msg)
    if len(positions) < n_points:
        logger.info("Fermat plan kept %d of %d points after clipping", len(positions), n_points)
    if clipped and len(positions) > 1:
        realized = _mean_nearest_neighbour(np.asarray(positions, dtype=np.float64))
        if abs(realized - spacing) > SPACING_TOLERANCE * spacing:
            logger.warning(
                "Fermat plan mean spacing is %.2f px, requested %.2f px; the object is too small for the spiral",
                realized,
                spacing,
            )

    geometry = {"kind": "fermat", "n_points": n_points, "spacing": spacing, "center": list(center)}
    return ScanPlan(positions, probe_shape, object_shape, geometry=geometry)


def thin_plan(plan: ScanPlan, keep: int) -> ScanPlan:
    """Keep ``keep`` positions spread uniformly over the plan's index range.

    Indices ``round(j * (len(plan) - 1) / (keep - 1))`` are kept, so the first and
    last positions always survive.

    Raises:
        ScanError: If ``keep`` is outside ``[1, len(plan)]``.

    """
    total = len(plan)
    if not 1 <= keep <= total:
        msg = f"keep must be between 1 and {total}, got {keep}"
        raise ScanError(msg)
    if keep == 1:
        indices = [0]
    else:
        indices = [math.floor(j * (total - 1) / (keep - 1) + 0.5) for j in range(keep)]
    positions = tuple(plan.positions[i] for i in indices)
    geometry = {**plan.geometry, "thinned_from": total}
    return ScanPlan(positions, plan.probe_shape, plan.object_shape, geometry=geometry)


def coverage_mask(plan: ScanPlan) -> np.ndarray:
    """Return a boolean object-sized mask of pixels inside at least one probe window."""
    mask = np.zeros(plan.object_shape, dtype=bool)
    pr, pc = plan.probe_shape
    for row, col in plan.positions:
        mask[row : row + pr, col : col + pc] = True
    return mask


def mean_spacing(plan: ScanPlan) -> float:
    """Mean nearest-neighbour distance between plan positions in pixels (0 for a single position)."""
    if len(plan) < 2:  # noqa: PLR2004
        return 0.0
    return _mean_nearest_neighbour(np.asarray(plan.positions, dtype=np.float64))


def plan_overlap(plan: ScanPlan, probe_sigma: float) -> float:
    """Overlap ratio of a plan: from the grid step for rasters, from the mean spacing otherwise."""
    if plan.geometry.get("kind") == "raster":
        return overlap_ratio(plan.geometry["step"], probe_sigma)
    return overlap_ratio(mean_spacing(plan), probe_sigma)
