"""Extended ptychographic iterative engine, the prior-free baseline."""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import numpy as np

from ptycho_prior.services.field import fft2, ifft2, join
from ptycho_prior.services.forward import data_fidelity
from ptycho_prior.services.recon import init_object, init_probe

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ptycho_prior.services.field import ComplexField
    from ptycho_prior.services.forward import DiffractionSet

logger = logging.getLogger(__name__)

EPS_EPIE = 1e-12


def _check_step(name: str, value: float) -> None:
    if not 0 < value <= 1:
        msg = f"{name} must be in (0, 1], got {value}"
        raise ValueError(msg)


def modulus_projection(psi: ComplexField, intensity: np.ndarray, workers: int = 1) -> ComplexField:
    """Replace the Fourier magnitude of ``psi`` by ``sqrt(intensity)``, keeping its phase."""
    spectrum = fft2(psi, workers)
    spectrum = np.sqrt(intensity) * spectrum / (np.abs(spectrum) + EPS_EPIE)
    return ifft2(spectrum, workers)


def epie_sweep(  # noqa: PLR0913
    object_est: ComplexField,
    probe_est: ComplexField,
    dataset: DiffractionSet,
    alpha: float,
    beta: float,
    order: Sequence[int],
    workers: int = 1,
) -> tuple[ComplexField, ComplexField]:
    """Visit every position in ``order`` once, updating object and probe after each.

    Args:
        object_est (ComplexField): Current object; not modified.
        probe_est (ComplexField): Current probe; not modified.
        dataset (DiffractionSet): Measured patterns.
        alpha (float): Object step in (0, 1].
        beta (float): Probe step in (0, 1].
        order (Sequence[int]): Pattern indices in visiting order.
        workers (int): FFT worker threads.

    Returns:
        tuple[ComplexField, ComplexField]: Updated object and probe.

    Raises:
        ValueError: If a step is out of range or the probe has no power.

    """
    _check_step("alpha", alpha)
    _check_step("beta", beta)
    obj = np.array(object_est, dtype=np.complex128, copy=True)
    probe = np.array(probe_est, dtype=np.complex128, copy=True)
    pr, pc = probe.shape

    for i in order:
        row, col = dataset.plan.positions[i]
        window = obj[row : row + pr, col : col + pc].copy()
        probe_power = float(np.max(np.abs(probe) ** 2))
        if probe_power < EPS_EPIE:
            msg = "probe has no power left; ePIE cannot divide by max|P|^2"
            raise ValueError(msg)

        psi = probe * window
        correction = modulus_projection(psi, dataset.patterns[i], workers) - psi
        window_power = max(float(np.max(np.abs(window) ** 2)), EPS_EPIE)

        obj[row : row + pr, col : col + pc] += alpha * np.conj(probe) * correction / probe_power
        probe += beta * np.conj(window) * correction / window_power

    return obj, probe


def epie_run(  # noqa: PLR0913
    dataset: DiffractionSet,
    sweeps: int,
    seed: int,
    alpha: float = 1.0,
    beta: float = 1.0,
    *,
    defocus: float = 2e-3,
    wavelength: float = 1.24e-10,
    pixel_pitch: float = 1e-8,
    workers: int = 1,
) -> tuple[ComplexField, ComplexField, list[float]]:
    """Run ePIE from the standard object and probe initialization.

    Each sweep visits every position in a fresh seeded permutation.

    Returns:
        tuple[ComplexField, ComplexField, list[float]]: Object, probe and the mean data
        fidelity over the full dataset after each sweep.

    Raises:
        ValueError: If the dataset is empty or a step is out of range.

    """
    if len(dataset) == 0:
        msg = "cannot run ePIE on an empty dataset"
        raise ValueError(msg)
    _check_step("alpha", alpha)
    _check_step("beta", beta)

    obj = join(*init_object(*dataset.plan.object_shape, seed=seed))
    probe = init_probe(dataset, defocus, wavelength, pixel_pitch, workers)
    rng = np.random.default_rng([seed, 2])
    everything = list(range(len(dataset)))
    residuals: list[float] = []

    for sweep in range(1, sweeps + 1):
        obj, probe = epie_sweep(obj, probe, dataset, alpha, beta, rng.permutation(len(dataset)), workers)
        residuals.append(data_fidelity(obj, probe, dataset, everything, workers))
        logger.debug("ePIE sweep %d: residual %.6e", sweep, residuals[-1])

    if residuals:
        logger.info("ePIE finished %d sweeps, residual %.6e", sweeps, residuals[-1])
    return obj, probe, residuals
