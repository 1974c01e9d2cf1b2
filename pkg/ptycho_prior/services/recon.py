"""Gradient engine and Adam minibatch driver for regularized object/probe reconstruction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, NamedTuple

import numpy as np

from ptycho_prior.services.field import fresnel_propagate, ifft2, join
from ptycho_prior.services.forward import data_fidelity_gradient
from ptycho_prior.services.priors import (
    PriorWeights,
    cc_gradient,
    image_prior_gradient,
    objective_terms,
    probe_smoothness_gradient,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ptycho_prior.services.field import ComplexField, RealField
    from ptycho_prior.services.forward import DiffractionSet

logger = logging.getLogger(__name__)

PARAMETERS = ("obj_magnitude", "obj_phase", "probe_re", "probe_im")
OBJECT_PARAMETERS = ("obj_magnitude", "obj_phase")


@dataclass(frozen=True)
class ReconConfig:
    """Optimizer, prior and optics settings of a reconstruction run."""

    weights: PriorWeights = field(default_factory=PriorWeights)
    lr_object: float = 0.1
    lr_probe: float = 0.01
    batch_size: int = 16
    epochs: int = 500
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    fix_probe: bool = False
    defocus: float = 2e-3
    wavelength: float = 1.24e-10
    pixel_pitch: float = 1e-8
    workers: int = 1
    log_every: int = 10

    def __post_init__(self) -> None:
        """Validate every numeric range."""
        checks = {
            "lr_object": self.lr_object > 0,
            "lr_probe": self.lr_probe > 0,
            "batch_size": self.batch_size >= 1,
            "epochs": self.epochs >= 0,
            "beta1": 0 <= self.beta1 < 1,
            "beta2": 0 <= self.beta2 < 1,
            "eps_adam": self.eps_adam > 0,
            "wavelength": self.wavelength > 0,
            "pixel_pitch": self.pixel_pitch > 0,
            "workers": self.workers >= 1,
            "log_every": self.log_every >= 1,
        }
        for name, ok in checks.items():
            if not ok:
                msg = f"{name} is out of range: {getattr(self, name)!r}"
                raise ValueError(msg)


@dataclass(frozen=True, eq=False)
class ReconState:
    """Parameters and Adam moments of a reconstruction."""

    obj_magnitude: RealField
    obj_phase: RealField
    probe_re: RealField
    probe_im: RealField
    first_moments: dict[str, np.ndarray]
    second_moments: dict[str, np.ndarray]
    step_count: int = 0

    @classmethod
    def start(cls, obj_magnitude: RealField, obj_phase: RealField, probe: ComplexField) -> ReconState:
        """Build a state with zeroed moments."""
        params = {
            "obj_magnitude": np.array(obj_magnitude, dtype=np.float64),
            "obj_phase": np.array(obj_phase, dtype=np.float64),
            "probe_re": np.array(probe.real, dtype=np.float64),
            "probe_im": np.array(probe.imag, dtype=np.float64),
        }
        first = {name: np.zeros_like(value) for name, value in params.items()}
        second = {name: np.zeros_like(value) for name, value in params.items()}
        return cls(**params, first_moments=first, second_moments=second)

    @property
    def object(self) -> ComplexField:
        """The object estimate as a complex field."""
        return join(self.obj_magnitude, self.obj_phase)

    @property
    def probe(self) -> ComplexField:
        """The probe estimate as a complex field."""
        return self.probe_re + 1j * self.probe_im


class HistoryRow(NamedTuple):
    """Energies over the full dataset at the end of an epoch."""

    epoch: int
    data: float
    total: float


def init_object(rows: int, cols: int, seed: int) -> tuple[RealField, RealField]:
    """Draw magnitude from U[0.9, 1.0] and phase from U[-0.1, 0.1] per pixel.

    Raises:
        ValueError: If either dimension is not positive.

    """
    if rows < 1 or cols < 1:
        msg = f"object dimensions must be positive, got {rows}x{cols}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    magnitude = rng.uniform(0.9, 1.0, size=(rows, cols))
    phase = rng.uniform(-0.1, 0.1, size=(rows, cols))
    return magnitude, phase


def init_probe(
    dataset: DiffractionSet,
    defocus: float,
    wavelength: float,
    pixel_pitch: float,
    workers: int = 1,
) -> ComplexField:
    """Estimate a starting probe from the mean diffraction amplitude.

    The inverse transform of the mean amplitude is centred in the probe window and
    then Fresnel-propagated by ``defocus``.

    Args:
        dataset (DiffractionSet): Measured patterns, non-empty.
        defocus (float): Propagation distance applied to the estimate.
        wavelength (float): Wavelength, same length unit as ``defocus``.
        pixel_pitch (float): Pixel size, same length unit as ``defocus``.
        workers (int): FFT worker threads.

    Returns:
        ComplexField: The initial probe.

    Raises:
        ValueError: If the dataset has no patterns.

    """
    if len(dataset) == 0:
        msg = "cannot initialize a probe from an empty dataset"
        raise ValueError(msg)
    mean_amplitude = np.sqrt(dataset.patterns).sum(axis=0) / len(dataset)
    probe = np.fft.fftshift(ifft2(mean_amplitude.astype(np.complex128), workers))
    return fresnel_propagate(probe, defocus, wavelength, pixel_pitch, workers)


def gradients(  # noqa: PLR0913
    state: ReconState,
    dataset: DiffractionSet,
    batch: Sequence[int],
    weights: PriorWeights,
    *,
    fix_probe: bool = False,
    workers: int = 1,
) -> dict[str, RealField]:
    """Exact gradients of the total objective with respect to every parameter field.

    Args:
        state (ReconState): Current parameters.
        dataset (DiffractionSet): Measured patterns.
        batch (Sequence[int]): Pattern indices of the minibatch.
        weights (PriorWeights): Regularization weights.
        fix_probe (bool): Report zero probe gradients.
        workers (int): FFT worker threads.

    Returns:
        dict[str, RealField]: One gradient field per name in ``PARAMETERS``.

    """
    magnitude, phase = state.obj_magnitude, state.obj_phase
    unit = np.exp(1j * phase)
    probe = state.probe
    _, grad_obj, grad_probe = data_fidelity_gradient(magnitude * unit, probe, dataset, batch, workers)

    rotated = grad_obj * np.conj(unit)
    grad_mag = rotated.real
    grad_phase = magnitude * rotated.imag

    if weights.lambda_cc:
        cc_mag, cc_phase = cc_gradient(magnitude, phase)
        grad_mag = grad_mag + weights.lambda_cc * cc_mag
        grad_phase = grad_phase + weights.lambda_cc * cc_phase
    if weights.lambda_x:
        x_mag, x_phase = image_prior_gradient(magnitude, phase, weights)
        grad_mag = grad_mag + weights.lambda_x * x_mag
        grad_phase = grad_phase + weights.lambda_x * x_phase

    if fix_probe:
        grad_probe = np.zeros_like(probe)
    elif weights.lambda_pr:
        grad_probe = grad_probe + weights.lambda_pr * probe_smoothness_gradient(probe)

    return {
        "obj_magnitude": grad_mag,
        "obj_phase": grad_phase,
        "probe_re": grad_probe.real.copy(),
        "probe_im": grad_probe.imag.copy(),
    }


def adam_step(state: ReconState, grads: dict[str, RealField], config: ReconConfig) -> ReconState:
    """Apply one bias-corrected Adam update and return the new state.

    Object fields use ``lr_object``, probe fields ``lr_probe``; the object magnitude is
    clamped at zero afterwards.
    """
    step = state.step_count + 1
    correction1 = 1.0 - config.beta1**step
    correction2 = 1.0 - config.beta2**step

    params = {}
    first = {}
    second = {}
    for name in PARAMETERS:
        g = grads[name]
        m = config.beta1 * state.first_moments[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.second_moments[name] + (1.0 - config.beta2) * (g * g)
        lr = config.lr_object if name in OBJECT_PARAMETERS else config.lr_probe
        params[name] = getattr(state, name) - lr * (m / correction1) / (np.sqrt(v / correction2) + config.eps_adam)
        first[name] = m
        second[name] = v

    params["obj_magnitude"] = np.maximum(params["obj_magnitude"], 0.0)
    return replace(state, **params, first_moments=first, second_moments=second, step_count=step)


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    return [order[start : start + batch_size] for start in range(0, len(order), batch_size)]


def reconstruct(
    dataset: DiffractionSet,
    config: ReconConfig,
    probe: ComplexField | None = None,
) -> tuple[ComplexField, ComplexField, list[HistoryRow]]:
    """Jointly estimate the object and probe by minibatch Adam on the total objective.

    Args:
        dataset (DiffractionSet): Measured patterns, non-empty.
        config (ReconConfig): Run settings.
        probe (ComplexField | None): Starting probe; estimated with :func:`init_probe`
            when None.

    Returns:
        tuple[ComplexField, ComplexField, list[HistoryRow]]: Object, probe and the
        per-epoch energies over the full dataset.

    Raises:
        ValueError: If the dataset has no patterns.

    """
    if len(dataset) == 0:
        msg = "cannot reconstruct from an empty dataset"
        raise ValueError(msg)

    magnitude, phase = init_object(*dataset.plan.object_shape, seed=config.seed)
    if probe is None:
        probe = init_probe(dataset, config.defocus, config.wavelength, config.pixel_pitch, config.workers)
    state = ReconState.start(magnitude, phase, probe)
    rng = np.random.default_rng([config.seed, 1])
    everything = list(range(len(dataset)))
    history: list[HistoryRow] = []

    logger.info(
        "Reconstructing %s object from %d patterns: %d epochs, batch %d, prior %s",
        dataset.plan.object_shape,
        len(dataset),
        config.epochs,
        config.batch_size,
        config.weights.prior_kind,
    )
    for epoch in range(1, config.epochs + 1):
        for batch in _batches(rng.permutation(len(dataset)), config.batch_size):
            grads = gradients(
                state, dataset, batch, config.weights, fix_probe=config.fix_probe, workers=config.workers
            )
            state = adam_step(state, grads, config)

        terms = objective_terms(
            state.obj_magnitude, state.obj_phase, state.probe, dataset, everything, config.weights, config.workers
        )
        history.append(HistoryRow(epoch, terms["data"], terms["total"]))
        if epoch % config.log_every == 0 or epoch == config.epochs:
            logger.info("epoch %d: E_o=%.6e E_total=%.6e", epoch, terms["data"], terms["total"])

    return state.object, state.probe, history
