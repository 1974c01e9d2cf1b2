"""Complex and real 2-D fields: unitary FFTs, Fresnel propagation and finite differences."""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np
from scipy import fft

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    ComplexField = NDArray[np.complex128]
    RealField = NDArray[np.float64]

logger = logging.getLogger(__name__)


class FieldError(ValueError):
    """Exception raised when an array is not a valid 2-D field."""


def _check_shape(values: np.ndarray, kind: str) -> None:
    if values.ndim != 2:  # noqa: PLR2004
        msg = f"{kind} field must be 2-D, got shape {values.shape}"
        raise FieldError(msg)
    if values.shape[0] < 1 or values.shape[1] < 1:
        msg = f"{kind} field must have positive dimensions, got {values.shape}"
        raise FieldError(msg)
    if not np.all(np.isfinite(values)):
        msg = f"{kind} field contains NaN or Inf samples"
        raise FieldError(msg)


def as_complex_field(values: ArrayLike) -> ComplexField:
    """Validate and convert samples into a complex double-precision field.

    Args:
        values (ArrayLike): Samples in row-major layout.

    Returns:
        ComplexField: A ``complex128`` array of shape (rows, cols).

    Raises:
        FieldError: If the samples are not 2-D, empty or not finite.

    """
    field = np.asarray(values, dtype=np.complex128)
    _check_shape(field, "complex")
    return field


def as_real_field(values: ArrayLike, *, nonnegative: bool = False) -> RealField:
    """Validate and convert samples into a real double-precision field.

    Args:
        values (ArrayLike): Samples in row-major layout.
        nonnegative (bool): Require every sample to be >= 0 (intensities, magnitudes).

    Returns:
        RealField: A ``float64`` array of shape (rows, cols).

    Raises:
        FieldError: If the samples are not 2-D, empty, not finite or negative when forbidden.

    """
    field = np.asarray(values, dtype=np.float64)
    _check_shape(field, "real")
    if nonnegative and np.any(field < 0):
        msg = f"real field has negative samples (min {field.min()!r})"
        raise FieldError(msg)
    return field


def fft2(f: np.ndarray, workers: int = 1) -> np.ndarray:
    """Unitary 2-D DFT over the last two axes, so stacks of fields transform in one call."""
    return fft.fft2(f, norm="ortho", workers=workers)


def ifft2(f: np.ndarray, workers: int = 1) -> np.ndarray:
    """Inverse of :func:`fft2` under the same unitary normalization."""
    return fft.ifft2(f, norm="ortho", workers=workers)


def fresnel_propagate(
    f: ComplexField,
    distance: float,
    wavelength: float,
    pixel_pitch: float,
    workers: int = 1,
) -> ComplexField:
    """Propagate a field by the paraxial transfer-function method.

    The spectrum is multiplied by ``exp(-i*pi*wavelength*distance*(u**2 + v**2))`` with
    ``(u, v)`` the FFT frequencies in cycles per length. The transfer function is a pure
    phase, so the field energy is conserved.

    Args:
        f (ComplexField): The field to propagate.
        distance (float): Propagation distance, any sign, same length unit as the others.
        wavelength (float): Wavelength, must be positive.
        pixel_pitch (float): Sample spacing, must be positive.
        workers (int): FFT worker threads.

    Returns:
        ComplexField: The propagated field.

    Raises:
        FieldError: If the wavelength or pixel pitch is not positive.

    """
    if wavelength <= 0:
        msg = f"wavelength must be positive, got {wavelength!r}"
        raise FieldError(msg)
    if pixel_pitch <= 0:
        msg = f"pixel_pitch must be positive, got {pixel_pitch!r}"
        raise FieldError(msg)
    if distance == 0:
        return np.array(f, dtype=np.complex128, copy=True)

    rows, cols = f.shape[-2:]
    u = fft.fftfreq(rows, d=pixel_pitch)
    v = fft.fftfreq(cols, d=pixel_pitch)
    transfer = np.exp(-1j * np.pi * wavelength * distance * (u[:, None] ** 2 + v[None, :] ** 2))
    logger.debug("Fresnel propagating %sx%s field by %g", rows, cols, distance)
    return ifft2(fft2(f, workers) * transfer, workers)


def grad2(f: RealField) -> tuple[RealField, RealField]:
    """Forward differences with a replicate boundary.

    Args:
        f (RealField): The field to differentiate.

    Returns:
        tuple[RealField, RealField]: ``(gx, gy)``, the differences along columns and
        along rows. The last column of ``gx`` and the last row of ``gy`` are zero.

    """
    gx = np.zeros_like(f, dtype=np.float64)
    gy = np.zeros_like(f, dtype=np.float64)
    gx[..., :, :-1] = f[..., :, 1:] - f[..., :, :-1]
    gy[..., :-1, :] = f[..., 1:, :] - f[..., :-1, :]
    return gx, gy


def grad2_adjoint(px: RealField, py: RealField) -> RealField:
    """Apply the transpose of :func:`grad2` to a pair of gradient-shaped fields.

    Args:
        px (RealField): Field paired with the column differences.
        py (RealField): Field paired with the row differences.

    Returns:
        RealField: ``Dx^T px + Dy^T py``.

    """
    qx = np.array(px, dtype=np.float64, copy=True)
    qy = np.array(py, dtype=np.float64, copy=True)
    # the trailing difference is identically zero, so its weight never reaches the input
    qx[..., :, -1] = 0.0
    qy[..., -1, :] = 0.0

    out = -qx - qy
    out[..., :, 1:] += qx[..., :, :-1]
    out[..., 1:, :] += qy[..., :-1, :]
    return out


def split(f: ComplexField) -> tuple[RealField, RealField]:
    """Split a complex field into magnitude and phase in (-pi, pi]; zero samples get phase 0."""
    magnitude = np.abs(f)
    phase = np.angle(f)
    phase = np.where(phase == -np.pi, np.pi, phase)
    return magnitude, phase


def join(magnitude: RealField, phase: RealField) -> ComplexField:
    """Build a complex field from a nonnegative magnitude and a phase.

    Raises:
        FieldError: If any magnitude sample is negative.

    """
    if np.any(magnitude < 0):
        msg = "magnitude must be nonnegative to join with a phase"
        raise FieldError(msg)
    return magnitude * np.exp(1j * phase)
