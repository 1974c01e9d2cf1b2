"""Gauge-aware comparison of reconstructions against ground truth."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.ndimage import binary_erosion
from skimage.metrics import structural_similarity

from ptycho_prior.services.field import split
from ptycho_prior.services.scan import coverage_mask

if TYPE_CHECKING:
    from ptycho_prior.services.field import ComplexField, RealField
    from ptycho_prior.services.scan import ScanPlan

logger = logging.getLogger(__name__)

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
EPS_ALIGN = 1e-30


@dataclass(frozen=True)
class SweepRow:
    """One point of an SSIM-versus-overlap table."""

    overlap: float
    prior: str
    ssim_phase: float
    ssim_magnitude: float
    final_e_o: float
    patterns: int = 0

    def __post_init__(self) -> None:
        """Check the overlap range; NaN marks an unknown overlap."""
        if not (math.isnan(self.overlap) or 0.0 <= self.overlap <= 1.0):
            msg = f"overlap must be in [0, 1], got {self.overlap}"
            raise ValueError(msg)


def _check_mask(mask: np.ndarray | None, shape: tuple[int, ...]) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        msg = f"mask of shape {mask.shape} does not match fields of shape {shape}"
        raise ValueError(msg)
    return mask


def align(est: ComplexField, ref: ComplexField, mask: np.ndarray | None = None) -> ComplexField:
    """Scale ``est`` by the complex factor that best matches ``ref`` in the least-squares sense.

    Args:
        est (ComplexField): Estimate to rescale.
        ref (ComplexField): Reference field.
        mask (np.ndarray | None): Pixels that enter the fit; all of them when None.

    Raises:
        ValueError: If the shapes differ.

    """
    if est.shape != ref.shape:
        msg = f"cannot align fields of shapes {est.shape} and {ref.shape}"
        raise ValueError(msg)
    mask = _check_mask(mask, est.shape)
    est_in, ref_in = est[mask], ref[mask]
    factor = np.sum(ref_in * np.conj(est_in)) / (np.sum(np.abs(est_in) ** 2) + EPS_ALIGN)
    return est * factor


def ssim(a: RealField, b: RealField, mask: np.ndarray | None = None) -> float:
    """Mean SSIM over 7x7 uniform windows with the dynamic range taken from ``b``.

    With a mask only windows lying entirely inside it are averaged and the dynamic
    range is taken over the masked pixels of ``b``. Without one this is the plain
    mean over every full window.

    Args:
        a (RealField): Test image.
        b (RealField): Reference image; ``L = max(b) - min(b)``.
        mask (np.ndarray | None): Pixels that may enter a window; all of them when None.

    Returns:
        float: The mean structural similarity.

    Raises:
        ValueError: If the shapes differ, no full window fits (inside the mask), or
            ``b`` is constant while ``a`` differs from it.

    """
    if a.shape != b.shape:
        msg = f"cannot compare images of shapes {a.shape} and {b.shape}"
        raise ValueError(msg)
    mask = _check_mask(mask, a.shape)
    if not mask.any():
        msg = "mask selects no pixels"
        raise ValueError(msg)
    data_range = float(np.max(b[mask]) - np.min(b[mask]))
    if data_range == 0:
        if np.array_equal(a[mask], b[mask]):
            return 1.0
        msg = "reference image is constant, SSIM dynamic range is zero"
        raise ValueError(msg)
    if min(a.shape) < SSIM_WINDOW:
        msg = f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}"
        raise ValueError(msg)
    # window centres whose 7x7 neighbourhood stays inside the mask and the image
    centres = binary_erosion(mask, structure=np.ones((SSIM_WINDOW, SSIM_WINDOW), dtype=bool), border_value=0)
    if not centres.any():
        msg = f"no {SSIM_WINDOW}x{SSIM_WINDOW} window fits inside the mask"
        raise ValueError(msg)
    _, similarity = structural_similarity(
        np.asarray(a, dtype=np.float64),
        np.asarray(b, dtype=np.float64),
        win_size=SSIM_WINDOW,
        gaussian_weights=False,
        use_sample_covariance=False,
        data_range=data_range,
        K1=SSIM_K1,
        K2=SSIM_K2,
        full=True,
    )
    return float(similarity[centres].mean())


def _covered_box(mask: np.ndarray) -> tuple[slice, slice]:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


def evaluate(
    object_est: ComplexField,
    object_ref: ComplexField,
    plan: ScanPlan | None = None,
) -> tuple[float, float]:
    """Compare an estimate to the reference after removing the global phase and scale.

    Args:
        object_est (ComplexField): Reconstructed object.
        object_ref (ComplexField): Ground-truth object.
        plan (ScanPlan | None): Scan plan; when given, only illuminated pixels enter the
            alignment and the SSIM windows, which matters for plans whose coverage
            does not fill its bounding box.

    Returns:
        tuple[float, float]: ``(ssim_phase, ssim_magnitude)``.

    """
    if object_est.shape != object_ref.shape:
        msg = f"cannot evaluate fields of shapes {object_est.shape} and {object_ref.shape}"
        raise ValueError(msg)
    mask = None
    if plan is not None and len(plan) > 0:
        covered = coverage_mask(plan)
        box = _covered_box(covered)
        object_est = object_est[box]
        object_ref = object_ref[box]
        mask = covered[box]

    est_magnitude, est_phase = split(align(object_est, object_ref, mask))
    ref_magnitude, ref_phase = split(object_ref)
    scores = ssim(est_phase, ref_phase, mask), ssim(est_magnitude, ref_magnitude, mask)
    logger.debug("SSIM phase %.4f magnitude %.4f", *scores)
    return scores
