"""Regularization energies on the object and probe, their gradients, and the total objective."""
from __future__ import annotations

import enum
import functools
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from ptycho_prior.services.field import grad2, grad2_adjoint, split
from ptycho_prior.services.forward import data_fidelity

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ptycho_prior.services.field import ComplexField, RealField
    from ptycho_prior.services.forward import DiffractionSet

logger = logging.getLogger(__name__)

EPS_TV = 1e-8
EPS_CC = 1e-8
EPS_PROBE = 1e-12
EPS_MAG = 1e-12
STP_TRUNCATE = 3.0
DEFAULT_STP_SIGMA = 1.5


class PriorKind(enum.StrEnum):
    """Image prior applied to the object channels."""

    NONE = "none"
    TV = "tv"
    STP = "stp"


@dataclass(frozen=True)
class PriorWeights:
    """Regularization weights: probe smoothness, cross-channel and the image prior."""

    lambda_pr: float = 0.0
    lambda_cc: float = 0.0
    lambda_x: float = 0.0
    prior_kind: PriorKind = PriorKind.NONE
    stp_sigma: float = DEFAULT_STP_SIGMA

    def __post_init__(self) -> None:
        """Check that every weight is nonnegative and the STP scale is positive."""
        for name in ("lambda_pr", "lambda_cc", "lambda_x"):
            if getattr(self, name) < 0:
                msg = f"{name} must be nonnegative, got {getattr(self, name)}"
                raise ValueError(msg)
        if self.stp_sigma <= 0:
            msg = f"stp_sigma must be positive, got {self.stp_sigma}"
            raise ValueError(msg)
        object.__setattr__(self, "prior_kind", PriorKind(self.prior_kind))


def lambda_x_for_overlap(overlap: float) -> float:
    """Image-prior weight used at a given overlap: 0.005 down to 50% overlap, 0.01 below."""
    return 0.005 if overlap >= 0.5 else 0.01  # noqa: PLR2004


def _smooth_abs(x: np.ndarray, eps: float) -> np.ndarray:
    return np.sqrt(x * x + eps * eps)


def _tv_channel(channel: RealField) -> tuple[float, RealField]:
    gx, gy = grad2(channel)
    norm = np.sqrt(gx * gx + gy * gy + EPS_TV * EPS_TV)
    energy = float(np.sum(norm))
    return energy, grad2_adjoint(gx / norm, gy / norm)


def tv_energy(magnitude: RealField, phase: RealField) -> float:
    """Isotropic total variation of both object channels.

    Each pixel contributes ``sqrt(gx**2 + gy**2 + eps**2)`` with ``eps = 1e-8``, so the energy is
    differentiable everywhere and a flat channel costs ``eps`` per pixel.
    """
    return _tv_channel(magnitude)[0] + _tv_channel(phase)[0]


def tv_gradient(magnitude: RealField, phase: RealField) -> tuple[RealField, RealField]:
    """Gradient of :func:`tv_energy` with respect to the magnitude and phase channels."""
    return _tv_channel(magnitude)[1], _tv_channel(phase)[1]


def _smooth(channel: np.ndarray, sigma: float) -> np.ndarray:
    return gaussian_filter(channel, sigma, mode="nearest", truncate=STP_TRUNCATE)


@functools.lru_cache(maxsize=32)
def _smoothing_column_sums(length: int, sigma: float) -> np.ndarray:
    # column sums of the 1-D replicate-boundary Gaussian operator, i.e. K^T applied to ones
    operator = gaussian_filter1d(np.eye(length), sigma, axis=0, mode="nearest", truncate=STP_TRUNCATE)
    return operator.sum(axis=0)


def structure_tensor(channel: RealField, sigma: float) -> tuple[RealField, RealField, RealField]:
    """Gaussian-smoothed gradient outer product ``(Jxx, Jxy, Jyy)`` of one channel."""
    gx, gy = grad2(channel)
    return _smooth(gx * gx, sigma), _smooth(gx * gy, sigma), _smooth(gy * gy, sigma)


def structure_tensor_eigenvalues(channel: RealField, sigma: float) -> tuple[RealField, RealField]:
    """Closed-form eigenvalues ``(lambda_plus, lambda_minus)`` of the per-pixel structure tensor."""
    if sigma <= 0:
        msg = f"sigma must be positive, got {sigma}"
        raise ValueError(msg)
    jxx, jxy, jyy = structure_tensor(channel, sigma)
    trace = jxx + jyy
    det = jxx * jyy - jxy * jxy
    discriminant = trace * trace - 4.0 * det
    if np.any(discriminant < 0):
        logger.debug("Clamped %d negative structure-tensor discriminants", int(np.sum(discriminant < 0)))
    root = np.sqrt(np.maximum(discriminant, 0.0))
    return 0.5 * (trace + root), 0.5 * (trace - root)


def stp_energy(magnitude: RealField, phase: RealField, sigma: float = DEFAULT_STP_SIGMA) -> float:
    """Structure-tensor prior: mean of ``lambda_plus + lambda_minus`` per channel, summed over channels."""
    total = 0.0
    for channel in (magnitude, phase):
        plus, minus = structure_tensor_eigenvalues(channel, sigma)
        total += float(np.sum(plus + minus) / channel.size)
    return total


def _stp_channel_gradient(channel: RealField, sigma: float) -> RealField:
    # the eigenvalue sum is the trace, so the energy is linear in the squared gradients
    gx, gy = grad2(channel)
    weights = np.outer(
        _smoothing_column_sums(channel.shape[0], float(sigma)),
        _smoothing_column_sums(channel.shape[1], float(sigma)),
    )
    return grad2_adjoint(2.0 * weights * gx, 2.0 * weights * gy) / channel.size


def stp_gradient(
    magnitude: RealField,
    phase: RealField,
    sigma: float = DEFAULT_STP_SIGMA,
) -> tuple[RealField, RealField]:
    """Gradient of :func:`stp_energy` with respect to the magnitude and phase channels."""
    if sigma <= 0:
        msg = f"sigma must be positive, got {sigma}"
        raise ValueError(msg)
    return _stp_channel_gradient(magnitude, sigma), _stp_channel_gradient(phase, sigma)


def _cc_terms(magnitude: RealField, phase: RealField) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    gmx, gmy = grad2(magnitude)
    gpx, gpy = grad2(phase)
    return [
        (gpx * magnitude - gmx * phase, gmx, gpx),
        (gpy * magnitude - gmy * phase, gmy, gpy),
    ]


def cc_energy(magnitude: RealField, phase: RealField) -> float:
    """Cross-channel prior ``|| grad(phase) * magnitude - grad(magnitude) * phase ||_1``.

    Each absolute value is smoothed to ``sqrt(t**2 + eps**2)`` with ``eps = 1e-8``.
    """
    return float(sum(np.sum(_smooth_abs(t, EPS_CC)) for t, _, _ in _cc_terms(magnitude, phase)))


def cc_gradient(magnitude: RealField, phase: RealField) -> tuple[RealField, RealField]:
    """Gradient of :func:`cc_energy` with respect to the magnitude and phase channels."""
    (tx, gmx, gpx), (ty, gmy, gpy) = _cc_terms(magnitude, phase)
    ux = tx / np.sqrt(tx * tx + EPS_CC * EPS_CC)
    uy = ty / np.sqrt(ty * ty + EPS_CC * EPS_CC)
    grad_mag = ux * gpx + uy * gpy - grad2_adjoint(ux * phase, uy * phase)
    grad_phase = grad2_adjoint(ux * magnitude, uy * magnitude) - ux * gmx - uy * gmy
    return grad_mag, grad_phase


def _probe_magnitude(probe: ComplexField) -> RealField:
    return np.sqrt(probe.real**2 + probe.imag**2 + EPS_MAG**2)


def probe_smoothness(probe: ComplexField) -> float:
    """L2 norm of the finite-difference gradient of the probe magnitude."""
    gx, gy = grad2(_probe_magnitude(probe))
    return float(np.sqrt(np.sum(gx * gx) + np.sum(gy * gy) + EPS_PROBE**2))


def probe_smoothness_gradient(probe: ComplexField) -> ComplexField:
    """Gradient of :func:`probe_smoothness` as ``dE/dRe + 1j * dE/dIm``."""
    magnitude = _probe_magnitude(probe)
    gx, gy = grad2(magnitude)
    energy = np.sqrt(np.sum(gx * gx) + np.sum(gy * gy) + EPS_PROBE**2)
    grad_magnitude = grad2_adjoint(gx, gy) / energy
    return grad_magnitude * probe / magnitude


def image_prior_energy(magnitude: RealField, phase: RealField, weights: PriorWeights) -> float:
    """Energy of the image prior selected by ``weights.prior_kind`` (0 for none)."""
    if weights.prior_kind is PriorKind.TV:
        return tv_energy(magnitude, phase)
    if weights.prior_kind is PriorKind.STP:
        return stp_energy(magnitude, phase, weights.stp_sigma)
    return 0.0


def image_prior_gradient(
    magnitude: RealField,
    phase: RealField,
    weights: PriorWeights,
) -> tuple[RealField, RealField]:
    """Gradient of :func:`image_prior_energy`."""
    if weights.prior_kind is PriorKind.TV:
        return tv_gradient(magnitude, phase)
    if weights.prior_kind is PriorKind.STP:
        return stp_gradient(magnitude, phase, weights.stp_sigma)
    return np.zeros_like(magnitude), np.zeros_like(phase)


def objective_terms(  # noqa: PLR0913
    magnitude: RealField,
    phase: RealField,
    probe: ComplexField,
    dataset: DiffractionSet,
    batch: Sequence[int],
    weights: PriorWeights,
    workers: int = 1,
    obj: ComplexField | None = None,
) -> dict[str, float]:
    """Every term of the objective for an object given as magnitude and phase channels.

    ``obj`` may carry the already-joined complex object so the data term is
    evaluated on it directly.

    Returns:
        dict[str, float]: ``data``, ``probe``, ``cc``, ``image`` (unweighted energies)
        and ``total``, the weighted sum.

    """
    if obj is None:
        obj = magnitude * np.exp(1j * phase)
    terms = {
        "data": data_fidelity(obj, probe, dataset, batch, workers),
        "probe": probe_smoothness(probe) if weights.lambda_pr else 0.0,
        "cc": cc_energy(magnitude, phase) if weights.lambda_cc else 0.0,
        "image": image_prior_energy(magnitude, phase, weights) if weights.lambda_x else 0.0,
    }
    terms["total"] = (
        terms["data"]
        + weights.lambda_pr * terms["probe"]
        + weights.lambda_cc * terms["cc"]
        + weights.lambda_x * terms["image"]
    )
    return terms


def total_objective(  # noqa: PLR0913
    object_est: ComplexField,
    probe_est: ComplexField,
    dataset: DiffractionSet,
    batch: Sequence[int],
    weights: PriorWeights,
    workers: int = 1,
) -> float:
    """Data fidelity plus the weighted probe-smoothness, cross-channel and image priors.

    Args:
        object_est (ComplexField): Object estimate; priors act on its magnitude and wrapped phase.
        probe_est (ComplexField): Probe estimate.
        dataset (DiffractionSet): Measured patterns.
        batch (Sequence[int]): Pattern indices, non-empty.
        weights (PriorWeights): Regularization weights and image-prior selection.
        workers (int): FFT worker threads.

    Returns:
        float: ``E_o + lambda_pr * E_pr + lambda_cc * E_cc + lambda_x * E_x``.

    """
    magnitude, phase = split(object_est)
    return objective_terms(magnitude, phase, probe_est, dataset, batch, weights, workers, obj=object_est)["total"]
